"""Command-line front end: gen, run, bench, syncsim."""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .blockstm import EngineConfig, execute_block_optimistic, sequential_execute
from .guided import run_guided
from .hints import Hint, HintFormatError, extract_hints, load_hints, dump_hints
from .model import Block, WorkloadFormatError, load_blocks, save_blocks, state_digest
from .sigpool import SigMode
from .syncsim import load_config, simulate
from .workloads import WorkloadError, WorkloadKind, default_spec, generate, load_spec, measure_stats

EXIT_OK, EXIT_CONFIG, EXIT_DIGEST = 0, 2, 3
ENGINES = ("seq", "blockstm", "chiron")
CSV_HEADER = ("workload", "engine", "threads", "sig_mode", "txns_per_s", "aborts", "executions", "wall_ms", "seed")


class ConfigError(Exception):
    pass


@dataclass
class BenchRow:
    workload: str
    engine: str
    threads: int
    sig_mode: str
    txns_per_s: float
    aborts: int
    executions: int
    wall_ms: float
    seed: int | str

    def csv_row(self) -> list:
        return [self.workload, self.engine, self.threads, self.sig_mode, f"{self.txns_per_s:.1f}",
                self.aborts, self.executions, f"{self.wall_ms:.3f}", self.seed]


@dataclass
class RunOutcome:
    row: BenchRow
    digest: int
    fallback: bool
    statuses: list


def env_seed() -> int | None:
    raw = os.environ.get("CHIRON_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"CHIRON_SEED={raw!r} is not an integer") from None


def run_chain(blocks: Sequence[Block], engine: str, cfg: EngineConfig,
              hints: Mapping[int, Hint | None] | None = None, self_hint: bool = False,
              workload: str = "", seed: int | str = 0) -> RunOutcome:
    """Run every block in order, threading state through; only engine time is measured."""
    state: dict = {}
    wall = 0.0
    aborts = executions = 0
    fallback = False
    statuses = []
    n_txns = 0
    for block in blocks:
        hint = None
        if engine == "chiron":
            if self_hint:
                hint = extract_hints(execute_block_optimistic(block, state, replace(cfg, sig_verify=SigMode.OFF)),
                                     block.height, "self")
            elif hints is not None:
                hint = hints.get(block.height)
        t0 = time.perf_counter()
        if engine == "seq":
            res = sequential_execute(block, state, cfg.vm, cfg.sig_verify, cfg.sig_rounds)
        elif engine == "blockstm":
            res = execute_block_optimistic(block, state, cfg)
        else:
            res = run_guided(block, state, hint, cfg)
        wall += time.perf_counter() - t0
        aborts += res.metrics.aborts
        executions += res.metrics.executions
        fallback = fallback or res.metrics.fallback
        statuses.extend(s.value for s in res.statuses())
        state = res.final_state
        n_txns += len(block.txns)
    threads = 1 if engine == "seq" else cfg.threads
    row = BenchRow(workload, engine, threads, cfg.sig_verify.name.lower(),
                   n_txns / wall if wall > 0 else 0.0, aborts, executions, wall * 1e3, seed)
    return RunOutcome(row, state_digest(state), fallback, statuses)


def _load_workload(name: str, txns: int, n_blocks: int, seed: int) -> tuple[str, list[Block], int | str]:
    if Path(name).exists():
        return Path(name).stem, load_blocks(name), seed
    try:
        kind = WorkloadKind.parse(name)
    except ValueError:
        raise ConfigError(f"workload {name!r} is neither a file nor a workload kind") from None
    spec = default_spec(kind, txns_per_block=txns, n_blocks=n_blocks, seed=seed)
    return kind.value, generate(spec), seed


# -- subcommands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    spec = load_spec(args.spec)
    seed = env_seed()
    if seed is not None:
        spec = replace(spec, seed=seed)
    blocks = generate(spec)
    save_blocks(args.out, blocks)
    print(json.dumps(measure_stats(blocks, spec.kind, spec.window_txns).summary(), sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    blocks = load_blocks(args.workload)
    cfg = EngineConfig(threads=args.threads, sig_verify=args.sig)
    hints = None
    if args.engine == "chiron":
        if args.hints:
            hints = {h.block_height: h for h in load_hints(args.hints)}
        elif not args.self_hint:
            raise ConfigError("engine chiron needs --hints FILE or --self-hint")
    out = run_chain(blocks, args.engine, cfg, hints, args.self_hint, Path(args.workload).stem, env_seed() or 0)
    oracle = run_chain(blocks, "seq", cfg)
    doc = asdict(out.row)
    doc["digest"] = f"{out.digest:016x}"
    doc["fallback"] = out.fallback
    print(json.dumps(doc, sort_keys=True))
    if out.fallback and args.engine == "chiron":
        print("warning: hint rejected or invalid, block(s) finished on the optimistic engine", file=sys.stderr)
    if out.digest != oracle.digest or out.statuses != oracle.statuses:
        print(f"error: digest {out.digest:016x} differs from sequential {oracle.digest:016x}", file=sys.stderr)
        return EXIT_DIGEST
    return EXIT_OK


def cmd_hints(args) -> int:
    blocks = load_blocks(args.workload)
    state: dict = {}
    hints = []
    cfg = EngineConfig(threads=args.threads)
    for block in blocks:
        res = execute_block_optimistic(block, state, cfg)
        hints.append(extract_hints(res, block.height, args.provider))
        state = res.final_state
    Path(args.out).write_bytes(dump_hints(hints))
    return EXIT_OK


def bench(workloads: Sequence[str], threads: Sequence[int], sig_modes: Sequence[str], reps: int,
          txns: int = 1000, n_blocks: int = 1, seed: int = 1, warmup: bool = True,
          log=None) -> tuple[list[BenchRow], list[BenchRow]]:
    """Returns (per-rep rows, median rows). Raises DigestMismatch on any disagreement."""
    rows: list[BenchRow] = []
    medians: list[BenchRow] = []
    for name in workloads:
        label, blocks, wl_seed = _load_workload(name, txns, n_blocks, seed)
        oracle = run_chain(blocks, "seq", EngineConfig(), workload=label, seed=wl_seed)
        for mode in sig_modes:
            mode_name = SigMode.parse(mode).name.lower()
            configs = [("seq", EngineConfig(1, mode))]
            configs += [(e, EngineConfig(t, mode)) for t in threads for e in ("blockstm", "chiron")]
            samples: dict[tuple[str, int], list[BenchRow]] = {}
            for rep in range(reps + (1 if warmup else 0)):
                for engine, cfg in configs:
                    out = run_chain(blocks, engine, cfg, self_hint=True, workload=label, seed=wl_seed)
                    if out.digest != oracle.digest or out.statuses != oracle.statuses:
                        raise DigestMismatch(f"{label} {engine} threads={cfg.threads} sig={mode_name}: "
                                             f"{out.digest:016x} != {oracle.digest:016x}")
                    if warmup and rep == 0:
                        continue
                    rows.append(out.row)
                    samples.setdefault((engine, cfg.threads), []).append(out.row)
                    if log:
                        log(out.row)
            for (engine, t), rs in samples.items():
                medians.append(BenchRow(label, engine, t, mode_name,
                                        statistics.median(r.txns_per_s for r in rs),
                                        int(statistics.median(r.aborts for r in rs)),
                                        int(statistics.median(r.executions for r in rs)),
                                        statistics.median(r.wall_ms for r in rs), "median"))
    return rows, medians


class DigestMismatch(Exception):
    pass


def write_bench_csv(path, rows: Sequence[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_row())


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("thread counts must be positive")
    return vals


def cmd_bench(args) -> int:
    seed = env_seed() or args.seed
    log = (lambda r: print(json.dumps(asdict(r)), file=sys.stderr)) if args.verbose else None
    try:
        rows, medians = bench(args.workloads.split(","), args.threads, args.sig.split(","), args.reps,
                              args.txns, args.blocks, seed, log=log)
    except DigestMismatch as e:
        print(f"error: digest mismatch: {e}", file=sys.stderr)
        return EXIT_DIGEST
    write_bench_csv(args.out, rows + medians)
    for r in medians:
        print(",".join(str(x) for x in r.csv_row()))
    return EXIT_OK


def cmd_syncsim(args) -> int:
    cfg = load_config(args.config)
    seed = env_seed()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    trace = simulate(cfg)
    Path(args.out).write_text(trace.to_csv())
    summary = {"untrust_events": len(trace.untrust), "checked_blocks": trace.checked_blocks,
               "oracle_mismatches": len(trace.oracle_mismatches)}
    for node in cfg.stragglers:
        lags = trace.start_lags(node)
        if lags:
            summary[f"node{node}_final_lag_s"] = round(lags[-1][1], 6)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_DIGEST if trace.oracle_mismatches else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chiron", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a workload file from a JSON spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="execute a workload file with one engine")
    r.add_argument("--workload", required=True)
    r.add_argument("--engine", choices=ENGINES, required=True)
    r.add_argument("--threads", type=_positive, default=1)
    r.add_argument("--sig", choices=("off", "inline", "idle"), default="off")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--hints")
    src.add_argument("--self-hint", action="store_true")
    r.set_defaults(func=cmd_run)

    h = sub.add_parser("hints", help="execute a workload file and write its hints (JSONL)")
    h.add_argument("--workload", required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--threads", type=_positive, default=1)
    h.add_argument("--provider", default="")
    h.set_defaults(func=cmd_hints)

    b = sub.add_parser("bench", help="throughput sweep, CSV output")
    b.add_argument("--workloads", default="p2p,nft,dex-avg,dex-bursty,mixed",
                   help="comma-separated workload kinds or workload files")
    b.add_argument("--threads", type=_int_list, default=[1, 2, 4, 8])
    b.add_argument("--sig", default="off,idle")
    b.add_argument("--reps", type=_positive, default=5)
    b.add_argument("--txns", type=int, default=1000, help="txns per block for generated workloads")
    b.add_argument("--blocks", type=int, default=1, help="blocks for generated workloads")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--out", required=True)
    b.add_argument("-v", "--verbose", action="store_true")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("syncsim", help="straggler catch-up simulation, CSV trace output")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_syncsim)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, WorkloadError, WorkloadFormatError, HintFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
