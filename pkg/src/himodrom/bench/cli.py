"""``himodrom`` command-line driver."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import HiModError
from .config import ExperimentConfig, load_config
from .experiments import (
    run_eig_decay,
    run_error_vs_n,
    run_experiment,
    run_field_export,
    run_infsup_sweep,
    run_offline_cost_sweep,
    run_speedup,
)

COMMANDS = ("eig-decay", "error-vs-n", "speedup", "offline-cost", "infsup-sweep", "field-export", "run")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="himodrom", description="HiMod reduced-order model benchmarks")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--seed", type=int, help="training-set and greedy seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--method", choices=("hipod", "hirb", "both"))
    p.add_argument("--n", type=int, help="reduced dimension")
    p.add_argument("--m", type=int, help="training-set size")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validated()
    overrides = {}
    if args.seed is not None:
        overrides["train_seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    if args.method is not None:
        overrides["method"] = args.method
    if args.n is not None:
        overrides["n"] = args.n
    if args.m is not None:
        overrides["train_size"] = args.m
    return replace(cfg, **overrides).validated()


def _summary(out: Path, lines) -> None:
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except (HiModError, OSError) as exc:
        print(f"himodrom: configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"command: {args.command}", f"problem: {cfg.problem}"]
    try:
        if args.command == "run":
            run_experiment(cfg, out)
            print(out / "summary.txt")
            return 0
        if args.command == "eig-decay":
            for role, s in run_eig_decay(cfg, out).items():
                k = min(cfg.n, s.eigenvalues.size)
                lines.append(f"{role}.lambda{k}_rel: {s.normalized[k - 1]:.3e}")
                lines.append(f"{role}.rank: {s.rank()}")
        elif args.command == "error-vs-n":
            for meth, res in run_error_vs_n(cfg, out).items():
                last = res["rows"][-1]
                lines += [f"{meth}.N{last[0]}.{k}: {v:.4e}" for k, v in zip(res["header"][1:], last[1:])]
        elif args.command == "speedup":
            for meth, res in run_speedup(cfg, out).items():
                rec = res["records"][0]
                lines += [f"{meth}.tau_m: {rec.tau_m:.4e}", f"{meth}.tau_mn: {rec.tau_mn:.4e}",
                          f"{meth}.speedup: {rec.speedup:.1f}"]
        elif args.command == "offline-cost":
            for m, tp, tr, sp_, sr in run_offline_cost_sweep(cfg, cfg.m_list, out):
                lines.append(f"M={m}: hipod {tp:.4f}s ({sp_} solves), hirb {tr:.4f}s ({sr} solves)")
        elif args.command == "infsup-sweep":
            for ns, beta, beta_h in run_infsup_sweep(cfg, cfg.ns_list, out):
                lines.append(f"N_s={ns}: beta_reduced {beta:.4e} (beta_himod {beta_h:.4e})")
        elif args.command == "field-export":
            lines += [f"wrote {p.name}" for p in run_field_export(cfg, out)]
    except HiModError as exc:
        lines.append(f"error: {type(exc).__name__}: {exc}")
        _summary(out, lines)
        print(f"himodrom: {exc}", file=sys.stderr)
        return 1
    _summary(out, lines)
    print("\n".join(lines))
    return 0


if __name__ == "__main__":
    sys.exit(main())
