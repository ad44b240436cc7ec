"""Monte Carlo harness: error-rate sweeps, multiplier/curvature probes and a
paired comparison of the Huber estimator against the lasso.

Every work item derives its own seed from the base seed and its ``(n,
replicate)`` coordinates, and results are ordered by those coordinates, so
reports are identical for any thread count.
"""

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .datagen import DEFAULT_L, ScenarioSpec, sample_instance
from .huber import PenaltyConfig, huber_score
from .rng import derive_seed, stream
from .solver import HUBER, SQUARED, SolverOptions, fit
from .tuning import (
    ConditionReport,
    TheoryConstants,
    check_theorem_conditions,
    lambda_grid_cv,
    lambda_o_theory,
    lambda_s_theory,
    practical_grid,
    radii_theory,
    rate_delta,
)

ESTIMATORS = {"huber_l1": HUBER, "lasso": SQUARED}
TUNING_MODES = ("theory", "practical", "fixed")
# relative threshold for declaring a coordinate nonzero
SUPPORT_THRESHOLD = 1e-6
# held-out fits only rank grid members, so they run at a looser tolerance
CV_SOLVER = SolverOptions(tol_kkt=1e-6)


def _map(func, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def default_constants(spec: ScenarioSpec, **overrides) -> TheoryConstants:
    sigma = spec.noise.sigma if spec.noise.sigma > 0 else 1.0
    kw = {"L": DEFAULT_L[spec.covariates.kind], "sigma": sigma}
    kw.update(overrides)
    return TheoryConstants(**kw)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_loglog(n_values, values) -> SlopeFit:
    """OLS of ``log(value)`` on ``log(n)``; NaN when any value is not positive."""
    n_values = np.asarray(n_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) < 2 or not np.all(values > 0):
        return SlopeFit(float("nan"), float("nan"), float("nan"))
    res = stats.linregress(np.log(n_values), np.log(values))
    return SlopeFit(float(res.slope), float(res.intercept), float(res.rvalue**2))


# ----------------------------------------------------------------------------
# error-rate sweep

@dataclass(frozen=True)
class SweepGrid:
    base: ScenarioSpec
    n_values: tuple
    replicates: int = 1
    tuning_mode: str = "practical"
    delta: float = 0.05
    consts: TheoryConstants | None = None
    folds: int = 5
    fixed_penalty: PenaltyConfig | None = None
    solver: SolverOptions = SolverOptions()
    estimators: tuple = ("huber_l1", "lasso")

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ValueError(f"n_values must be positive and strictly increasing, got {ns}")
        object.__setattr__(self, "n_values", ns)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.tuning_mode not in TUNING_MODES:
            raise ValueError(f"unknown tuning mode {self.tuning_mode!r}")
        if self.tuning_mode == "fixed" and self.fixed_penalty is None:
            raise ValueError("tuning_mode='fixed' requires fixed_penalty")
        if not set(self.estimators) <= set(ESTIMATORS):
            raise ValueError(f"unknown estimator in {self.estimators}")

    def constants(self) -> TheoryConstants:
        if self.consts is not None:
            return replace(self.consts, delta=self.delta)
        return default_constants(self.base, delta=self.delta)


@dataclass(frozen=True)
class SweepRow:
    n: int
    replicate: int
    seed: int
    estimator: str
    l1_error: float
    l2_error: float
    support_recovered: bool
    converged: bool
    iterations: int
    kkt_residual: float
    lambda_o: float
    lambda_s: float


SWEEP_HEADER = [
    "n", "replicate", "seed", "estimator", "l1_error", "l2_error", "support_recovered",
    "converged", "iterations", "kkt_residual", "lambda_o", "lambda_s",
]


@dataclass
class SweepReport:
    rows: list
    aggregates: dict  # (estimator, n) -> {"median", "q25", "q75", "iqr", "count"}
    slope_fits: dict  # estimator -> SlopeFit
    conditions: dict  # n -> ConditionReport at the theory tuning
    failures: int = 0

    @property
    def slope_fit(self) -> SlopeFit:
        return self.slope_fits.get("huber_l1") or next(iter(self.slope_fits.values()))

    def medians(self, estimator: str = "huber_l1") -> list:
        ns = sorted({n for (e, n) in self.aggregates if e == estimator})
        return [self.aggregates[(estimator, n)]["median"] for n in ns]


def _tune(grid: SweepGrid, data, loss, shape, seed) -> PenaltyConfig:
    if grid.tuning_mode == "fixed":
        return grid.fixed_penalty
    if grid.tuning_mode == "theory":
        consts = grid.constants()
        lo = lambda_o_theory(consts, shape.n)
        return PenaltyConfig(lo, lambda_s_theory(consts, shape, lo))
    cands = practical_grid(data, loss)
    return lambda_grid_cv(data, loss, grid.folds, cands, seed, CV_SOLVER)


def _sweep_item(grid: SweepGrid, n: int, rep: int) -> list:
    seed = derive_seed(grid.base.seed, n, rep)
    spec = grid.base.with_n(n).with_seed(seed)
    inst = sample_instance(spec)
    thresh = SUPPORT_THRESHOLD * spec.beta_magnitude
    true_support = set(inst.support.tolist())
    rows = []
    for est in grid.estimators:
        loss = ESTIMATORS[est]
        cfg = _tune(grid, inst.data, loss, spec.shape, seed)
        res = fit(inst.data, cfg, loss, grid.solver)
        diff = res.beta_hat - inst.beta_star
        found = set(np.flatnonzero(np.abs(res.beta_hat) > thresh).tolist())
        rows.append(SweepRow(
            n, rep, seed, est,
            float(np.sum(np.abs(diff))), float(np.linalg.norm(diff)),
            found == true_support, res.converged, res.iterations, res.kkt_residual,
            cfg.lambda_o, cfg.lambda_s,
        ))
    return rows


def run_sweep(grid: SweepGrid, threads: int = 1) -> SweepReport:
    """Replicate fits over the grid of sample sizes and fit the error rate.

    Rows whose fit did not converge are kept (flagged) but excluded from
    the aggregates and the slope fit.
    """
    items = [(n, r) for n in grid.n_values for r in range(grid.replicates)]
    chunks = _map(lambda it: _sweep_item(grid, *it), items, threads)
    rows = [row for chunk in chunks for row in chunk]

    aggregates = {}
    for est in grid.estimators:
        for n in grid.n_values:
            errs = np.array([r.l2_error for r in rows
                             if r.estimator == est and r.n == n and r.converged])
            if errs.size:
                q25, med, q75 = np.percentile(errs, [25, 50, 75])
            else:
                q25 = med = q75 = float("nan")
            aggregates[(est, n)] = {"median": float(med), "q25": float(q25), "q75": float(q75),
                                    "iqr": float(q75 - q25), "count": int(errs.size)}
    slope_fits = {
        est: fit_loglog(grid.n_values, [aggregates[(est, n)]["median"] for n in grid.n_values])
        for est in grid.estimators
    }
    consts = grid.constants()
    conditions = {}
    for n in grid.n_values:
        shape = grid.base.shape.with_n(n)
        try:
            lo = lambda_o_theory(consts, n)
            conditions[n] = check_theorem_conditions(consts, shape, lo, lambda_s_theory(consts, shape, lo))
        except ValueError as exc:
            conditions[n] = ConditionReport((), float("nan"), (str(exc),))
    failures = sum(not r.converged for r in rows)
    return SweepReport(rows, aggregates, slope_fits, conditions, failures)


def sweep_to_csv(report: SweepReport, comments=()) -> str:
    buf = io.StringIO()
    buf.writelines(f"# {c}\n" for c in comments)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in report.rows:
        w.writerow([r.n, r.replicate, r.seed, r.estimator, repr(r.l1_error), repr(r.l2_error),
                    int(r.support_recovered), int(r.converged), r.iterations,
                    repr(r.kkt_residual), repr(r.lambda_o), repr(r.lambda_s)])
    return buf.getvalue()


def plot_data_csv(report: SweepReport, comments=()) -> str:
    """Two-column plot data (``log_n``, ``log_median_l2``) per estimator."""
    buf = io.StringIO()
    buf.writelines(f"# {c}\n" for c in comments)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "log_n", "log_median_l2"])
    for (est, n), agg in sorted(report.aggregates.items()):
        med = agg["median"]
        w.writerow([est, repr(math.log(n)), repr(math.log(med)) if med > 0 else "nan"])
    return buf.getvalue()


def plot_svg(report: SweepReport, width: int = 480, height: int = 320, comments=()) -> str:
    """Minimal self-contained SVG line chart of log median error against log n.

    ``comments`` become XML comments right after the opening tag.
    """
    series = {}
    for (est, n), agg in sorted(report.aggregates.items()):
        if agg["median"] > 0:
            series.setdefault(est, []).append((math.log(n), math.log(agg["median"])))
    pts = [p for s in series.values() for p in s]
    pad = 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           *(f"<!-- {c.replace('--', '- -')} -->" for c in comments),
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
        y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1

        def sx(x):
            return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(y):
            return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

        colors = ["#1f77b4", "#d62728", "#2ca02c"]
        for k, (est, s) in enumerate(sorted(series.items())):
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
            c = colors[k % len(colors)]
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{path}"/>')
            out.append(f'<text x="{pad + 5}" y="{15 + 15 * k}" fill="{c}" font-size="12">{est}</text>')
        out.append(f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" '
                   f'text-anchor="middle">log n</text>')
        out.append(f'<text x="12" y="{height / 2:.0f}" font-size="12" '
                   f'transform="rotate(-90 12 {height / 2:.0f})" text-anchor="middle">'
                   f'log median l2 error</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def format_sweep(report: SweepReport) -> str:
    lines = [f"{'estimator':<10s} {'n':>7s} {'median_l2':>11s} {'iqr_l2':>11s} {'count':>6s}"]
    for (est, n), agg in sorted(report.aggregates.items()):
        lines.append(f"{est:<10s} {n:>7d} {agg['median']:>11.5g} {agg['iqr']:>11.5g} {agg['count']:>6d}")
    for est, sf in sorted(report.slope_fits.items()):
        lines.append(f"slope[{est}] = {sf.slope:.4f}  (intercept {sf.intercept:.4f}, R^2 {sf.r_squared:.4f})")
    if report.failures:
        lines.append(f"non-converged fits excluded: {report.failures}")
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# support function of r1*B1 ∩ r2*B2

@dataclass(frozen=True)
class SupportResult:
    value: float
    argmax: np.ndarray
    mu: float
    dual_value: float


def _shrunk_norms(a, mu):
    s = np.maximum(a - mu, 0.0)
    return s, float(np.sum(s)), float(np.sqrt(s @ s))


def support_function_l1l2(g, r1: float, r2: float, tol: float = 1e-10) -> SupportResult:
    """Exact maximum of ``<g, v>`` over ``{||v||_1 <= r1, ||v||_2 <= r2}``.

    Uses the one-dimensional dual ``min_{mu >= 0} r2 ||S_mu(g)||_2 + mu r1``
    (``S_mu`` is soft-thresholding). Its derivative vanishes where
    ``||S_mu||_1 / ||S_mu||_2 = r1 / r2``, and that ratio is nonincreasing in
    ``mu``, so the root is found by bisection. The maximizer is rebuilt from
    the upper end of the final bracket, which keeps it feasible.
    """
    if not (r1 > 0 and r2 > 0):
        raise ValueError("radii must be positive")
    g = np.asarray(g, dtype=float)
    a = np.abs(g)
    sgn = np.sign(g)
    gmax = float(a.max()) if a.size else 0.0
    if gmax == 0.0:
        return SupportResult(0.0, np.zeros_like(g), 0.0, 0.0)
    rho = r1 / r2

    _, l1, l2 = _shrunk_norms(a, 0.0)
    if l1 <= rho * l2:
        # l1 constraint inactive
        v = r2 * g / l2
        return SupportResult(float(g @ v), v, 0.0, r2 * l2)

    top = a == gmax
    k = int(np.sum(top))
    if rho <= math.sqrt(k):
        # l2 constraint inactive: spread r1 over the largest entries
        v = np.where(top, sgn * r1 / k, 0.0)
        return SupportResult(float(g @ v), v, gmax, r1 * gmax)

    lo, hi = 0.0, gmax
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        _, l1, l2 = _shrunk_norms(a, mid)
        if l1 > rho * l2:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * 1e-6 * gmax:
            break
    s, l1, l2 = _shrunk_norms(a, hi)
    v = r2 * sgn * s / l2
    return SupportResult(float(g @ v), v, hi, r2 * l2 + hi * r1)


# ----------------------------------------------------------------------------
# probes

@dataclass
class ProbeReport:
    kind: str
    per_n: list  # [(n, value)]
    slope: float
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


PROBE_HEADERS = {
    "multiplier": ["n", "replicate", "seed", "value", "scaled_value", "bound"],
    "curvature": ["sample", "k", "v_norm2", "lhs", "lhs_over_norm2", "margin", "min_term"],
}


def _multiplier_item(spec, consts, n, rep):
    seed = derive_seed(spec.seed, n, rep)
    inst = sample_instance(spec.with_n(n).with_seed(seed))
    shape = spec.shape.with_n(n)
    lo = lambda_o_theory(consts, n)
    scale = lo * math.sqrt(n)
    rq = radii_theory(consts, shape, lo)
    w = huber_score(inst.xi / scale)
    g = inst.data.X.T @ w / n
    s = shape.s
    value = support_function_l1l2(g, 3.0 * math.sqrt(s), 1.0).value
    scaled = scale * rq.r_2 * value
    bound = consts.c1 * scale * consts.L * (
        math.sqrt(math.log(shape.d / s) / n) * rq.r_1 + rq.r_delta * rq.r_2)
    return (n, rep, seed, value, scaled, bound)


def probe_multiplier_process(
    spec: ScenarioSpec,
    consts: TheoryConstants,
    n_values,
    replicates: int,
    threads: int = 1,
) -> ProbeReport:
    """Supremum of the Huber-weighted multiplier process over the l1/l2 set.

    For each replicate, ``g = (1/n) sum_i h(xi_i / (lambda_o sqrt n)) x_i``
    at the theory ``lambda_o``. ``value`` is the exact supremum of
    ``<g, v>`` over ``3 sqrt(s) B1 ∩ B2``, i.e. the set with the theory
    radii ratio and unit l2 radius. ``scaled_value`` is
    ``lambda_o sqrt(n)`` times the supremum over the theory radii at that
    ``n``, and ``bound`` is the matching high-probability upper bound. The
    slope is the log-log fit of the median ``value`` against ``n``.
    """
    items = [(n, r) for n in n_values for r in range(replicates)]
    rows = _map(lambda it: _multiplier_item(spec, consts, *it), items, threads)
    per_n = []
    for n in n_values:
        vals = [row[3] for row in rows if row[0] == n]
        per_n.append((n, float(np.median(vals))))
    sf = fit_loglog([p[0] for p in per_n], [p[1] for p in per_n])
    under = float(np.mean([row[4] <= row[5] for row in rows]))
    return ProbeReport("multiplier", per_n, sf.slope, rows,
                       {"fraction_under_bound": under, "r_squared": sf.r_squared})


def curvature_terms(xi, X, v, lambda_o: float) -> np.ndarray:
    """Per-observation terms of the restricted-curvature sum.

    Term ``i`` is ``(lambda_o / sqrt n) (h(a_i) - h(a_i - u_i)) x_i'v`` with
    ``a_i = xi_i / (lambda_o sqrt n)`` and ``u_i = x_i'v / (lambda_o sqrt n)``.
    Each is nonnegative because ``h`` is nondecreasing.
    """
    n = X.shape[0]
    scale = lambda_o * math.sqrt(n)
    xv = X @ v
    a = xi / scale
    return (lambda_o / math.sqrt(n)) * (huber_score(a) - huber_score(a - xv / scale)) * xv


def probe_restricted_curvature(
    spec: ScenarioSpec,
    consts: TheoryConstants,
    v_samples: int,
    lambda_o: float | None = None,
    threshold: float = 0.25,
) -> ProbeReport:
    """Sampled lower-curvature check at ``n = spec.shape.n``.

    Directions are random sparse vectors (support size up to ``9 s``, so the
    l1 constraint ``||v||_1 <= 3 sqrt(s) ||v||_2`` holds) rescaled to
    ``||v||_2 = min(r_2, 1)``. The radius is capped at 1 because the
    guarantee only applies once ``r_2 <= 1``. For each direction the report
    stores the curvature sum, its ratio to ``||v||_2**2`` and its margin over
    ``||v||_2**2 / 2`` minus the deviation allowance.
    """
    shape = spec.shape
    n, d, s = shape.n, shape.d, shape.s
    lo = lambda_o_theory(consts, n) if lambda_o is None else float(lambda_o)
    rq = radii_theory(consts, shape, lo)
    r2 = min(rq.r_2, 1.0)
    r1 = 3.0 * math.sqrt(s) * r2
    inst = sample_instance(spec)
    X, xi = inst.data.X, inst.xi
    allowance = consts.c2 * consts.L * lo * math.sqrt(n) * (
        math.sqrt(math.log(d / s) / n) * r1 + rate_delta(n, consts.delta) * r2)

    rng = stream(spec.seed, "probe")
    kmax = min(d, 9 * s)
    rows = []
    for j in range(v_samples):
        k = int(rng.integers(1, kmax + 1))
        v = np.zeros(d)
        v[rng.choice(d, size=k, replace=False)] = rng.standard_normal(k)
        v *= r2 / np.linalg.norm(v)
        terms = curvature_terms(xi, X, v, lo)
        lhs = float(np.sum(terms))
        nv2 = float(v @ v)
        rows.append((j, k, nv2, lhs, lhs / nv2, lhs - (nv2 / 2 - allowance), float(terms.min())))

    margins = [r[5] for r in rows]
    ratios = [r[4] for r in rows]
    summary = {
        "min_margin": float(min(margins)) if rows else float("nan"),
        "fraction_above_threshold": float(np.mean([q >= threshold for q in ratios])) if rows else float("nan"),
        "threshold": threshold,
        "all_terms_nonnegative": all(r[6] >= 0 for r in rows),
        "radius": r2,
        "lambda_o": lo,
        "allowance": allowance,
    }
    per_n = [(n, summary["min_margin"])]
    return ProbeReport("curvature", per_n, float("nan"), rows, summary)


def probe_to_csv(report: ProbeReport, comments=()) -> str:
    buf = io.StringIO()
    buf.writelines(f"# {c}\n" for c in comments)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROBE_HEADERS[report.kind])
    for row in report.rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def format_probe(report: ProbeReport) -> str:
    lines = [f"probe: {report.kind}"]
    label = "median value" if report.kind == "multiplier" else "min margin"
    for n, val in report.per_n:
        lines.append(f"  n={n:<7d} {label} = {val:.6g}")
    if report.kind == "multiplier":
        lines.append(f"  slope = {report.slope:.4f}")
    for key, val in report.summary.items():
        lines.append(f"  {key} = {val:.6g}" if isinstance(val, float) else f"  {key} = {val}")
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# paired comparison

@dataclass
class ComparisonReport:
    huber_errors: np.ndarray
    lasso_errors: np.ndarray
    seeds: list
    ratio: float
    ci_low: float
    ci_high: float


def compare_estimators(
    spec: ScenarioSpec,
    replicates: int,
    tuning_mode: str = "practical",
    consts: TheoryConstants | None = None,
    n_boot: int = 2000,
    threads: int = 1,
) -> ComparisonReport:
    """Paired-by-seed comparison of median l2 errors, Huber over lasso.

    The 95% interval is a paired percentile bootstrap of the ratio of medians.
    """
    grid = SweepGrid(spec, (spec.shape.n,), replicates, tuning_mode, consts=consts)
    rep = run_sweep(grid, threads)
    by_rep = {}
    for r in rep.rows:
        by_rep.setdefault(r.replicate, {})[r.estimator] = r
    pairs = [(p["huber_l1"], p["lasso"]) for _, p in sorted(by_rep.items())
             if p["huber_l1"].converged and p["lasso"].converged]
    h = np.array([a.l2_error for a, _ in pairs])
    l = np.array([b.l2_error for _, b in pairs])
    ratio = float(np.median(h) / np.median(l))
    if len(pairs) >= 2:
        res = stats.bootstrap(
            (h, l), lambda a, b, axis=-1: np.median(a, axis=axis) / np.median(b, axis=axis),
            paired=True, vectorized=True, n_resamples=n_boot, method="percentile",
            rng=stream(spec.seed, "bootstrap"),
        )
        lo, hi = float(res.confidence_interval.low), float(res.confidence_interval.high)
    else:
        lo = hi = float("nan")
    return ComparisonReport(h, l, [a.seed for a, _ in pairs], ratio, lo, hi)
