"""Throughput sweep over workloads, thread counts and signature modes; writes a CSV and prints ratios.

    python scripts/figure4_sweep.py --out results/sweep.csv --reps 5
"""

import argparse
from collections import defaultdict
from pathlib import Path

from chiron.cli import bench, write_bench_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workloads", default="p2p,nft,dex-avg,dex-bursty,mixed")
    ap.add_argument("--threads", default="1,2,4,8")
    ap.add_argument("--sig", default="off,idle")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--txns", type=int, default=1000)
    ap.add_argument("--out", default="results/sweep.csv")
    args = ap.parse_args()
    threads = [int(t) for t in args.threads.split(",")]
    rows, medians = bench(args.workloads.split(","), threads, args.sig.split(","), args.reps, args.txns)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(args.out, rows + medians)

    tps = defaultdict(dict)
    for r in medians:
        tps[(r.workload, r.sig_mode, r.threads)][r.engine] = r.txns_per_s
    print(f"{'workload':<12}{'sig':<6}{'threads':>8}{'blockstm':>12}{'chiron':>12}{'ratio':>8}")
    for (wl, sig, t), d in sorted(tps.items()):
        if "chiron" in d:
            print(f"{wl:<12}{sig:<6}{t:>8}{d['blockstm']:>12.0f}{d['chiron']:>12.0f}{d['chiron'] / d['blockstm']:>8.3f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
