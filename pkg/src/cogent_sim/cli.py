"""Command-line front end: ``generate``, ``validate``, ``train``, ``run``, ``sweep``."""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import ConfigError, RunConfig, simulate
from .controller import TrainingError
from .trace import SyntheticSpec, TraceError, generate_synthetic_trace, parse_trace, trace_stats, write_trace

SUMMARY_COLUMNS = ["mean_ms", "p99_ms", "p999_ms", "origin_gbps", "redundancy"]
COUNT_COLUMNS = [
    "n", "hits", "misses", "pseudo_hits", "shielded", "shielded_too_slow", "shielded_no_cpu",
    "two_pronged_fetches", "origin_bytes", "capacity",
]
THREADS_ENV = "COGENT_SIM_THREADS"


class CliError(Exception):
    pass


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    g = p.add_argument_group("config overrides")
    for key in RunConfig.keys():
        g.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, metavar="V")


def _load_config(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return RunConfig.load(args.config, overrides)


# --- generate / validate


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        n_objects=args.objects,
        n_groups=args.groups,
        zipf_alpha=args.alpha,
        variant_alpha=args.variant_alpha,
        mean_interarrival_us=args.interarrival_us,
        n_requests=args.requests,
        seed=args.seed,
        image_fraction=args.image_fraction,
        intra_group_distance=args.intra_distance,
        hamming_threshold=args.threshold,
        origin_latency_us=args.origin_latency_us,
        origin_latency_sigma=args.origin_sigma,
    )
    records = generate_synthetic_trace(spec)
    write_trace(records, args.out)
    print(f"wrote {len(records)} requests to {args.out}")
    return 0


def cmd_validate(args) -> int:
    records = parse_trace(args.trace)
    st = trace_stats(records)
    print(f"ok {args.trace}")
    for name, value in vars(st).items():
        print(f"  {name}: {value}")
    return 0


# --- train


def cmd_train(args) -> int:
    cfg = _load_config(args)
    trace = args.trace or cfg.trace
    if not trace:
        raise CliError("train needs a trace")
    tree, samples = cfg.train_tree(parse_trace(trace))
    tree.save(args.out)
    summary = f"depth {tree.depth}\nleaves {tree.n_leaves}\nsamples {len(samples)}\naccuracy {tree.accuracy(samples)!r}\n"
    Path(str(args.out) + ".summary").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return 0


# --- run


def write_outputs(cfg: RunConfig, report, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_series_csv(out / "series.csv")
    if report.events is not None:
        report.write_events_csv(out / "events.csv")
    (out / "config.resolved").write_text(cfg.dumps(), encoding="utf-8")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if not cfg.trace:
        raise CliError("run needs a trace (--trace or trace = ... in the config)")
    report = simulate(cfg)
    write_outputs(cfg, report, cfg.out_dir)
    print(report.summary_line())
    return 0


# --- sweep


def parse_axis(text: str) -> Tuple[str, List[str]]:
    if "=" not in text:
        raise CliError(f"axis must look like key=v1,v2: {text!r}")
    key, values = text.split("=", 1)
    key = key.strip().replace("-", "_")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise CliError(f"axis {key!r} has no values")
    for v in items:
        RunConfig.coerce(key, v)
    return key, items


def sweep_matrix(base: RunConfig, axes: Sequence[Tuple[str, List[str]]]) -> List[Tuple[Dict[str, str], RunConfig]]:
    """Every combination of axis values, first axis varying slowest."""
    if not axes:
        raise CliError("sweep needs at least one --axis")
    names = [k for k, _ in axes]
    points = []
    for combo in itertools.product(*(v for _, v in axes)):
        point = dict(zip(names, combo))
        changes = {k: RunConfig.coerce(k, v) for k, v in point.items()}
        points.append((point, base.replace(**changes)))
    return points


def summary_row(report) -> Dict[str, str]:
    row = dict(zip(SUMMARY_COLUMNS, report.summary_line().split()))
    for name in COUNT_COLUMNS:
        row[name] = str(getattr(report, name))
    return row


_TRACES: Dict[str, list] = {}


def _sweep_point(cfg: RunConfig) -> Dict[str, str]:
    records = _TRACES.get(cfg.trace)
    if records is None:
        records = _TRACES[cfg.trace] = parse_trace(cfg.trace)
    return summary_row(simulate(cfg, records))


def sweep_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise CliError(f"{THREADS_ENV} must be an integer") from None
    return max(1, n)


def run_sweep(points: Sequence[Tuple[Dict[str, str], RunConfig]], threads: Optional[int] = None) -> List[Dict[str, str]]:
    configs = [cfg for _, cfg in points]
    threads = min(threads or sweep_threads(), len(configs))
    if threads <= 1:
        results = [_sweep_point(cfg) for cfg in configs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_point, configs))
    rows = []
    for (point, cfg), res in zip(points, results):
        row = {"arch": cfg.arch, "policy": cfg.policy, **point}
        row.update(res)
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not cfg.trace:
        raise CliError("sweep needs a trace")
    axes = [parse_axis(a) for a in args.axis or ()]
    points = sweep_matrix(cfg, axes)
    rows = run_sweep(points)
    header = list(rows[0])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cogent-sim", description="Generative-hit edge cache simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic trace")
    g.add_argument("-o", "--out", required=True)
    d = SyntheticSpec()
    g.add_argument("--requests", type=int, default=d.n_requests)
    g.add_argument("--objects", type=int, default=d.n_objects)
    g.add_argument("--groups", type=int, default=d.n_groups)
    g.add_argument("--alpha", type=float, default=d.zipf_alpha)
    g.add_argument("--variant-alpha", type=float, default=d.variant_alpha)
    g.add_argument("--interarrival-us", type=float, default=d.mean_interarrival_us)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--image-fraction", type=float, default=d.image_fraction)
    g.add_argument("--intra-distance", type=int, default=d.intra_group_distance)
    g.add_argument("--threshold", type=int, default=d.hamming_threshold)
    g.add_argument("--origin-latency-us", type=int, default=None)
    g.add_argument("--origin-sigma", type=float, default=d.origin_latency_sigma)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("validate", help="parse a trace and print its statistics")
    v.add_argument("trace")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("train", help="train the reuse predictor on a trace prefix")
    t.add_argument("trace", nargs="?")
    t.add_argument("-o", "--out", required=True)
    _config_flags(t)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="simulate one configuration")
    _config_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="simulate a matrix of configurations")
    s.add_argument("--axis", action="append", metavar="KEY=V1,V2")
    s.add_argument("-o", "--out", required=True)
    _config_flags(s)
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, TraceError, TrainingError, ValueError, OSError) as e:
        print(f"cogent-sim {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
