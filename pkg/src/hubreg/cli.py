"""Command-line interface: ``hubreg {fit,simulate,sweep,probe}``.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical non-convergence.
A ``--config`` JSON file supplies defaults keyed by long flag names (e.g.
``"lambda-o"``); explicit flags win. Every output file starts with ``#``
provenance lines holding the tool version and the resolved configuration.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .datagen import COVARIATE_KINDS, NOISE_KINDS, SIGN_RULES, CovariateFamily, NoiseFamily, ScenarioSpec, sample_instance
from .experiments import (
    SweepGrid,
    default_constants,
    format_probe,
    format_sweep,
    plot_data_csv,
    plot_svg,
    probe_multiplier_process,
    probe_restricted_curvature,
    probe_to_csv,
    run_sweep,
    sweep_to_csv,
)
from .huber import PenaltyConfig
from .io import FormatError, dataset_to_csv, read_dataset, vector_to_csv, write_text
from .solver import FISTA_RESTART, FIXED_LIPSCHITZ, ISTA, BACKTRACKING, SolverOptions, fit
from .tuning import ProblemShape, lambda_grid_cv, practical_grid

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2
# options that never change results and are left out of provenance headers
_NOT_ECHOED = {"config", "out", "threads", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("HUBREG_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"HUBREG_SEED must be an integer, got {raw!r}") from None


def _n_values(text: str) -> list:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty n-values list")
    return vals


def _add_common(p):
    p.add_argument("--config", help="JSON file of defaults keyed by long flag names")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: $HUBREG_SEED or 0)")


def _add_solver(p):
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--tol-kkt", type=float, default=1e-8)
    p.add_argument("--tol-obj", type=float, default=1e-12)
    p.add_argument("--acceleration", choices=[FISTA_RESTART, ISTA], default=FISTA_RESTART)
    p.add_argument("--step-rule", choices=[FIXED_LIPSCHITZ, BACKTRACKING], default=FIXED_LIPSCHITZ)


def _add_scenario(p, n_default=500):
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--s", type=int, default=5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--covariates", choices=COVARIATE_KINDS, default="laplace_iid")
    p.add_argument("--noise", choices=NOISE_KINDS, default="gaussian")
    p.add_argument("--df", type=float, default=3.0, help="student_t degrees of freedom")
    p.add_argument("--beta-magnitude", type=float, default=1.0)
    p.add_argument("--sign-rule", choices=SIGN_RULES, default="all_plus")


def _add_theory(p):
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--L", type=float, default=None, help="subexponential constant (default by family)")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--cs", type=float, default=5.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hubreg", description="l1-penalized Huber regression toolkit")
    parser.add_argument("--version", action="version", version=f"hubreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit the estimator to a dataset CSV")
    p.add_argument("dataset", help="CSV with header y,x1,...,xd")
    p.add_argument("--lambda-o", type=float, default=None)
    p.add_argument("--lambda-s", type=float, default=None)
    p.add_argument("--cv", action="store_true", help="choose penalties by cross-validation")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--loss", choices=["huber", "squared"], default="huber")
    p.add_argument("--out", help="output CSV for beta-hat (default: stdout)")
    _add_solver(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic instance")
    _add_scenario(p, n_default=100)
    p.add_argument("--out", help="output directory (required)")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Monte Carlo error-rate sweep over n")
    _add_scenario(p)
    _add_theory(p)
    p.add_argument("--n-values", type=_n_values, default=[500, 1000, 2000, 4000])
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--mode", choices=["theory", "practical", "fixed"], default="practical")
    p.add_argument("--lambda-o", type=float, default=None, help="fixed mode only")
    p.add_argument("--lambda-s", type=float, default=None, help="fixed mode only")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="output directory (required)")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", help="empirical concentration probes")
    p.add_argument("kind", choices=["multiplier", "curvature"])
    _add_scenario(p, n_default=2000)
    _add_theory(p)
    p.add_argument("--n-values", type=_n_values, default=[500, 1000, 2000, 4000])
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--v-samples", type=int, default=200)
    p.add_argument("--lambda-o", type=float, default=None, help="curvature probe Huber scale override")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="output directory (required)")
    _add_common(p)
    p.set_defaults(func=cmd_probe)
    return parser


def _apply_config(parser, argv):
    """Reparse ``argv`` with defaults from the ``--config`` file, if any."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must be a flat JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for command {args.command}")
        if dest == "n_values" and not isinstance(val, list):
            val = _n_values(val)
        defaults[dest] = val
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _provenance(args) -> list:
    return [
        f"hubreg {__version__}",
        f"command: {args.command}",
        "config: " + json.dumps(_resolved(args), sort_keys=True),
        f"seed: {args.seed}",
    ]


def _solver_opts(args) -> SolverOptions:
    return SolverOptions(
        max_iter=args.max_iter, tol_kkt=args.tol_kkt, tol_obj=args.tol_obj,
        acceleration=args.acceleration, step_rule=args.step_rule,
    )


def _scenario(args) -> ScenarioSpec:
    return ScenarioSpec(
        shape=ProblemShape(args.n, args.d, args.s),
        covariates=CovariateFamily(args.covariates),
        noise=NoiseFamily(args.noise, args.sigma, args.df),
        beta_magnitude=args.beta_magnitude,
        beta_sign_rule=args.sign_rule,
        seed=args.seed,
    )


def _constants(args, spec):
    over = {"c1": args.c1, "c2": args.c2, "c_s": args.cs, "delta": args.delta}
    if args.L is not None:
        over["L"] = args.L
    return default_constants(spec, **over)


def _outdir(path) -> Path:
    if not path:
        raise UsageError("--out is required")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    data = read_dataset(args.dataset)
    if args.cv:
        cfg = lambda_grid_cv(data, args.loss, args.folds, practical_grid(data, args.loss), args.seed)
    else:
        if args.lambda_s is None:
            raise UsageError("fit needs --lambda-s (and --lambda-o for huber) or --cv")
        lo = args.lambda_o
        if lo is None:
            if args.loss == "huber":
                raise UsageError("--lambda-o is required for the huber loss")
            lo = 1.0
        cfg = PenaltyConfig(lo, args.lambda_s)
    res = fit(data, cfg, args.loss, _solver_opts(args))
    header = _provenance(args) + [
        f"lambda_o: {cfg.lambda_o!r}", f"lambda_s: {cfg.lambda_s!r}",
        f"iterations: {res.iterations}", f"kkt_residual: {res.kkt_residual!r}",
        f"status: {res.status}",
    ]
    text = vector_to_csv(res.beta_hat, header)
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"kkt_residual={res.kkt_residual:.3e} iterations={res.iterations} status={res.status}",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    spec = _scenario(args)
    inst = sample_instance(spec)
    out = _outdir(args.out)
    prov = _provenance(args)
    write_text(out / "dataset.csv", dataset_to_csv(inst.data, prov))
    write_text(out / "beta_star.csv", vector_to_csv(inst.beta_star, prov))
    write_text(out / "xi.csv", vector_to_csv(inst.xi, prov))
    print(f"wrote {out / 'dataset.csv'} (n={spec.shape.n}, d={spec.shape.d}, s={spec.shape.s})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _scenario(args)
    fixed = None
    if args.mode == "fixed":
        if args.lambda_o is None or args.lambda_s is None:
            raise UsageError("--mode fixed needs --lambda-o and --lambda-s")
        fixed = PenaltyConfig(args.lambda_o, args.lambda_s)
    grid = SweepGrid(
        base=spec, n_values=tuple(args.n_values), replicates=args.replicates,
        tuning_mode=args.mode, delta=args.delta, consts=_constants(args, spec),
        folds=args.folds, fixed_penalty=fixed,
    )
    report = run_sweep(grid, threads=args.threads)
    out = _outdir(args.out)
    prov = _provenance(args)
    write_text(out / "sweep.csv", sweep_to_csv(report, prov))
    write_text(out / "plot.csv", plot_data_csv(report, prov))
    write_text(out / "plot.svg", plot_svg(report, comments=prov))
    print(format_sweep(report))
    print(f"slope = {report.slope_fit.slope:.4f}")
    if not spec.covariates.in_assumption:
        print(f"note: covariate family {spec.covariates.kind} lies outside the standing assumptions")
    for n, cond in report.conditions.items():
        status = "all conditions hold" if cond.all_passed else "failing: " + "; ".join(cond.failing())
        print(f"theory conditions at n={n}: {status}")
    print(report.conditions[grid.n_values[-1]].format())
    return EXIT_NONCONVERGED if report.failures else EXIT_OK


def cmd_probe(args) -> int:
    spec = _scenario(args)
    consts = _constants(args, spec)
    if args.kind == "multiplier":
        report = probe_multiplier_process(spec, consts, args.n_values, args.replicates, args.threads)
    else:
        report = probe_restricted_curvature(spec, consts, args.v_samples, lambda_o=args.lambda_o)
    out = _outdir(args.out)
    write_text(out / f"probe_{args.kind}.csv", probe_to_csv(report, _provenance(args)))
    print(format_probe(report))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:
            # argparse exits on --help, --version and usage errors
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        if args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"hubreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"hubreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"hubreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
