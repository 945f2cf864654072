"""Command-line interface: ``rbcml {generate,fit,check,sweep,crbound}``.

Exit codes: 0 success or consistent, 1 inconsistent verdict, 2 usage or
parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveConfig, SpecError, adaptive_rbcml, parse_breaking_spec, parse_weights_spec
from .breaking import MAX_EXACT_M, kappa_stats
from .consistency import check_consistency_pl, check_consistency_symmetric_rum
from .experiments import ConfigError, ExperimentConfig, cramer_rao_trace_pl, make_family, rows_to_csv, run_experiment
from .model import as_theta
from .objective import wg_product
from .sampling import load_profile, make_rng, sample_ground_truth, sample_profile, save_profile

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


def _parse_theta(text: str, m: int | None = None) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"--theta must be comma-separated numbers: {text!r}") from exc
    if m is not None and len(values) != m:
        raise UsageError(f"--theta has {len(values)} entries, expected m = {m}")
    try:
        return as_theta(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _family(name: str):
    try:
        return make_family(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_generate(args) -> int:
    family = _family(args.family)
    if args.m < 2 or args.n < 1:
        raise UsageError("need --m >= 2 and --n >= 1")
    rng = make_rng(args.seed)
    theta = _parse_theta(args.theta, args.m) if args.theta else sample_ground_truth(args.m, rng)
    profile = sample_profile(family, theta, args.n, rng)
    truth_path = args.truth or f"{args.out}.truth"
    try:
        save_profile(profile, args.out)
        Path(truth_path).write_text("".join(_fmt(t) + "\n" for t in theta))
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    print(f"wrote {profile.n} rankings over {profile.m} alternatives to {args.out}; truth in {truth_path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    family = _family(args.family)
    try:
        profile = load_profile(args.profile)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read profile: {exc}", file=sys.stderr)
        return EXIT_USAGE
    m = profile.m
    try:
        breaking = parse_breaking_spec(args.breaking, m)
        weighting = parse_weights_spec(args.weights, m)
    except SpecError as exc:
        raise UsageError(str(exc)) from exc
    start = np.zeros(m)
    report = wg_product(weighting(start), kappa_stats(breaking(start), profile))
    if not report.weakly_connected:
        print("error: W x G(P) is not weakly connected; components: "
              + " | ".join(" ".join(str(a + 1) for a in comp) for comp in report.components),
              file=sys.stderr)
        return EXIT_NUMERICAL
    cfg = AdaptiveConfig(iterations=args.iterations, breaking_heuristic=breaking, weight_heuristic=weighting,
                         tol=args.tol, max_iter=args.max_iter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fits = adaptive_rbcml(profile, cfg, family)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    fit = fits[-1]
    out = fit.to_dict(timing=args.timing)
    out["iteration_count"] = len(fits)
    text = json.dumps(out, sort_keys=True, indent=2, allow_nan=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    if not args.timing:
        print(f"wallclock: {sum(f.wallclock for f in fits):.6f} s", file=sys.stderr)
    if not fit.converged or len(fits) < args.iterations:
        print("error: optimizer did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        g = parse_breaking_spec(args.breaking, args.m)(np.zeros(args.m))
        w = parse_weights_spec(args.weights, args.m)(np.zeros(args.m))
    except SpecError as exc:
        raise UsageError(str(exc)) from exc
    if args.weights == "pl-heuristic-w":
        print("note: pl-heuristic-w evaluated at theta = 0")
    if args.family_class == "pl":
        verdict = check_consistency_pl(g, w)
    else:
        verdict = check_consistency_symmetric_rum(g, w)
    print(verdict)
    return EXIT_OK if verdict.consistent else EXIT_INCONSISTENT


def cmd_sweep(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except ConfigError as exc:
        print(f"error: config field {exc.field}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        cfg.output = args.out
    rows = run_experiment(cfg)
    if not cfg.output:
        sys.stdout.write(rows_to_csv(rows, timing=cfg.timing))
    for r in rows:
        print(f"{r.estimator} n={r.n}: n*MSE = {r.n_mse_mean:.6g} +/- {r.n_mse_stderr:.3g}"
              f" (failures {r.failures})")
    return EXIT_OK


def cmd_crbound(args) -> int:
    if args.m < 2 or args.m > MAX_EXACT_M:
        raise UsageError(f"crbound needs 2 <= m <= {MAX_EXACT_M}")
    theta = _parse_theta(args.theta, args.m) if args.theta else np.zeros(args.m)
    value = cramer_rao_trace_pl(theta)
    if not args.normalize:
        value *= args.m - 1
    print(_fmt(value))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbcml", description="Rank-breaking composite marginal likelihood")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic profile")
    p.add_argument("--family", default="pl")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--theta", help="comma-separated ground truth (default: Uniform[0,5], re-gauged)")
    p.add_argument("--out", required=True, help="profile file")
    p.add_argument("--truth", help="ground-truth file (default: <out>.truth)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit a profile by (adaptive) RBCML")
    p.add_argument("profile")
    p.add_argument("--family", default="pl")
    p.add_argument("--breaking", default="uniform")
    p.add_argument("--weights", default="uniform")
    p.add_argument("--iterations", "-T", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--timing", action="store_true", help="include wallclock in the JSON output")
    p.add_argument("--out", help="also write the JSON result here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check", help="structural consistency verdict")
    p.add_argument("--breaking", required=True)
    p.add_argument("--weights", default="uniform")
    p.add_argument("--family-class", choices=["pl", "symmetric-rum"], required=True)
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run an n x MSE experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", help="CSV path (overrides the config)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("crbound", help="Cramer-Rao n x MSE reference for Plackett-Luce")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--theta")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="divide the trace by m - 1 (matches n x MSE averaging)")
    p.set_defaults(func=cmd_crbound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
