"""Re-derive the Mixed resource table so the mean critical path hits a target.

    python scripts/calibrate_mixed.py --target 0.30 --blocks 10
"""

import argparse
import json

from chiron.workloads import FrequencyTable, calibrate_mixed, default_spec, generate, measure_stats

# cold starting table the shipped default was calibrated from
START = FrequencyTable(((1, 0.5), (4, 0.2), (40, 0.15), (400, 0.1), (4000, 0.05)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", type=float, default=0.30)
    ap.add_argument("--tol", type=float, default=0.01)
    ap.add_argument("--blocks", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    spec = default_spec("mixed", tables={"resource": START}, target_critical_path=args.target,
                        n_blocks=args.blocks, seed=args.seed)
    tuned = calibrate_mixed(spec, tol=args.tol)
    fr = measure_stats(generate(tuned), "mixed").critical_path_fractions
    rows = [[b, round(s, 3)] for b, s in tuned.tables["resource"].rows]
    print(json.dumps({"resource": rows, "mean_critical_path": round(sum(fr) / len(fr), 4),
                      "min": round(min(fr), 4), "max": round(max(fr), 4)}))


if __name__ == "__main__":
    main()
