"""Command-line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 when some filter
diverged in every seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from agsf.augmentation import Proportional
from agsf.errors import ConfigError
from agsf.filters import FilterConfig
from agsf.harness.config import ModelSpec, load_config
from agsf.harness.experiment import filter_rng, resolve_jobs, rho_trace, run_experiment, trajectory_rng
from agsf.harness.report import emit_report, format_number
from agsf.models import simulate

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agsf", description="Augmented Gaussian sum filtering experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="base seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=None, help="parallel seeds (default: $AGSF_JOBS or 1)")

    p = sub.add_parser("simulate", help="simulate one trajectory")
    common(p)
    p.add_argument("--model", choices=("tracking", "switching"), default="tracking")
    p.add_argument("--T", type=int, default=200)
    common(sub.add_parser("run", help="run a config and write a report"), config_required=True)
    common(sub.add_parser("sweep", help="run the config's filter grid"), config_required=True)
    p = sub.add_parser("rho-trace", help="per-step adaptive proportionality on the switching model")
    common(p)
    p.add_argument("--T", type=int, default=200)
    return parser


def _simulate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.config is not None:
        cfg = load_config(args.config)
        model, T = cfg.build_model(), cfg.T
    else:
        model, T = ModelSpec(args.model).build(args.T), args.T
    traj = simulate(model, T, trajectory_rng(seed, 0))
    args.out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        path = args.out / f"trajectory_seed{seed}.csv"
        traj.to_csv(path)
    else:
        path = args.out / f"trajectory_seed{seed}.jsonl"
        traj.to_jsonl(path)
    print(path)
    return EXIT_OK


def _run(args, sweep: bool) -> int:
    cfg = load_config(args.config, use_sweep=sweep, seed_override=args.seed)
    records = run_experiment(cfg, jobs=resolve_jobs(args.jobs))
    args.out.mkdir(parents=True, exist_ok=True)
    path = emit_report(records, args.format, args.out / f"report.{args.format}")
    for rec in records:
        print(
            f"{rec.algorithm:8s} {rec.params:45s} mse={format_number(rec.mse_mean)} "
            f"lpe={format_number(rec.lpe_mean)} diverged={rec.diverged_frac:.0%}"
        )
    print(path)
    if any(rec.diverged_frac == 1.0 for rec in records):
        return EXIT_DIVERGED
    return EXIT_OK


def _rho_trace(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.config is not None:
        cfg = load_config(args.config)
        agsf = [f for f in cfg.filters if f.algorithm in ("L-AGSF", "U-AGSF")]
        if not agsf:
            raise ConfigError("rho-trace needs an AGSF filter in the config")
        model, T, fcfg = cfg.build_model(), cfg.T, agsf[0]
    else:
        model, T = ModelSpec("switching").build(args.T), args.T
        fcfg = FilterConfig("L-AGSF", M=100, N=5, L=5, predict_policy=Proportional(0.9))
    traj = simulate(model, T, trajectory_rng(seed, 0))
    rows = rho_trace(model, traj, fcfg, filter_rng(seed, 0, 0))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"rho_trace_seed{seed}.{args.format}"
    if args.format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "u", "rho_predict", "rho_update"])
            writer.writeheader()
            for r in rows:
                writer.writerow({k: (format_number(v) if isinstance(v, float) else v) for k, v in r.items()})
    else:
        path.write_text(json.dumps(rows, indent=1) + "\n")
    print(path)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _simulate(args)
        if args.command == "run":
            return _run(args, sweep=False)
        if args.command == "sweep":
            return _run(args, sweep=True)
        return _rho_trace(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"agsf: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
