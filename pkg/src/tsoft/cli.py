"""Command line entry point: ``tsoft train | bench-stream | report``."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import ParameterError
from .target_update import UpdateRule


def _rule_from_token(token: str) -> UpdateRule:
    """``none``, ``hard[:period]``, ``soft:tau`` or ``tsoft:tau:nu[:sigma_init]``."""
    parts = token.strip().split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "none" and not args:
            return UpdateRule.none()
        if kind == "hard" and len(args) <= 1:
            return UpdateRule.hard(int(args[0])) if args else UpdateRule.hard()
        if kind == "soft" and len(args) == 1:
            return UpdateRule.soft(float(args[0]))
        if kind == "tsoft" and len(args) in (2, 3):
            vals = [harness.parse_float(a) for a in args]
            return UpdateRule.tsoft(*vals)
    except ValueError as exc:
        raise ParameterError(f"bad rule {token!r}: {exc}") from None
    raise ParameterError(f"bad rule {token!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsoft", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train seeded trials and write CSV results")
    t.add_argument("--config", help="key=value config file; flags given here override it")
    t.add_argument("--env", choices=sorted(harness.ENVS))
    t.add_argument("--rule", choices=["none", "hard", "soft", "tsoft"])
    t.add_argument("--tau", type=harness.parse_float)
    t.add_argument("--nu", type=harness.parse_float, help="degrees of freedom; 'inf' allowed")
    t.add_argument("--sigma-init", type=float, dest="sigma_init")
    t.add_argument("--period", type=int, help="hard-update period in steps")
    t.add_argument("--gamma", type=float)
    t.add_argument("--alpha", type=float, help="learning rate")
    t.add_argument("--seeds", type=harness.parse_seeds, help="a..b (inclusive) or a,b,c")
    t.add_argument("--episodes", type=int)
    t.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    t.add_argument("--stochastic-eval", action="store_const", const=True, dest="eval_stochastic")
    t.add_argument("--activation", choices=["tanh", "swish"])
    t.add_argument("--hidden", type=lambda s: tuple(int(h) for h in s.split(",")))
    t.add_argument("--sigma-update", choices=["nominal", "tau_i", "fixed"], dest="sigma_update")
    t.add_argument("--clip-norm", type=float, dest="clip_norm")
    t.add_argument("--diag-every", type=int, dest="diag_every")
    t.add_argument("--out")
    t.add_argument("--workers", type=int, default=1)

    b = sub.add_parser("bench-stream", help="robustness benchmark on a synthetic stream")
    b.add_argument("--slope", type=float, default=0.01)
    b.add_argument("--noise", type=float, default=1.0)
    b.add_argument("--outlier-rate", type=float, default=0.01)
    b.add_argument("--outlier-scale", type=float, default=50.0)
    b.add_argument("--length", type=int, default=2000)
    b.add_argument("--seeds", type=harness.parse_seeds, default=tuple(range(20)))
    b.add_argument("--rules", default="soft:0.3,tsoft:0.3:1.0",
                   help="comma-separated: none, hard[:p], soft:tau, tsoft:tau:nu[:sigma_init]")
    b.add_argument("--out", help="CSV path (default: stdout)")

    r = sub.add_parser("report", help="per-condition target-gap report from summary.csv files")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", help="CSV path (default: stdout)")
    return p


_TRAIN_KEYS = [f.name for f in harness.dataclasses.fields(harness.ExperimentConfig)]


def _train(args):
    base = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    overrides = {k: getattr(args, k) for k in _TRAIN_KEYS
                 if getattr(args, k, None) is not None}
    cfg = harness.dataclasses.replace(base, **overrides)
    records = harness.run_experiment(cfg, workers=args.workers)
    for rec in records:
        print(f"{rec.condition} seed={rec.seed} score={rec.score:.3f} "
              f"final_diff={rec.final_diff:.3e}")
    return 0


def _bench(args):
    spec = harness.StreamSpec(args.slope, args.noise, args.outlier_rate, args.outlier_scale,
                              args.length)
    rules = [_rule_from_token(tok) for tok in args.rules.split(",") if tok.strip()]
    rows = harness.synthetic_benchmark(spec, rules, args.seeds)
    harness.write_benchmark(rows, args.out if args.out else sys.stdout)
    return 0


def _report(args):
    rows = harness.report_dir(args.input)
    harness.write_report(rows, args.out if args.out else sys.stdout)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"train": _train, "bench-stream": _bench, "report": _report}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
