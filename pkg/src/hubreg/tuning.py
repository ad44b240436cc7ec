"""Rate quantities, theory-driven tuning parameters and cross-validated tuning.

The theory formulas carry large numerical constants (576, 2880) and two
constants ``c1``, ``c2`` whose values are only known to be "large enough".
They are exposed verbatim for the condition report; practical fitting goes
through :func:`lambda_grid_cv`.
"""

import math
from dataclasses import dataclass

import numpy as np

from .huber import Dataset, PenaltyConfig
from .rng import stream
from .solver import HUBER, SQUARED, SolverOptions, fit_path, smooth_gradient


class ConstraintViolation(ValueError):
    """Problem dimensions violate a standing assumption (e.g. ``d/s < 3``)."""


class ConfigurationError(ValueError):
    pass


# constants from the main error bound
LAMBDA_O_CONSTANT = 576.0
ERROR_BOUND_CONSTANT = 2880.0
CONDITION_CONSTANT = 320.0


@dataclass(frozen=True)
class ProblemShape:
    n: int
    d: int
    s: int

    def __post_init__(self):
        if min(self.n, self.d, self.s) < 1:
            raise ValueError(f"n, d, s must be positive, got {self}")
        if self.s > self.d:
            raise ValueError(f"need s <= d, got s={self.s}, d={self.d}")

    def with_n(self, n: int) -> "ProblemShape":
        return ProblemShape(int(n), self.d, self.s)


@dataclass(frozen=True)
class TheoryConstants:
    """Assumption-level constants. ``c1``/``c2`` defaults are placeholders."""

    L: float = 2.0
    sigma: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c_s: float = 5.0
    delta: float = 0.05

    def __post_init__(self):
        for name in ("L", "sigma", "c1", "c2", "c_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def c_total(self) -> float:
        return self.c1 + self.c2 + self.c_s


@dataclass(frozen=True)
class RateQuantities:
    r_ds: float
    r_delta: float
    r_2: float
    r_1: float


@dataclass(frozen=True)
class Predicate:
    name: str
    passed: bool
    margin: float
    value: float


@dataclass(frozen=True)
class ConditionReport:
    predicates: tuple
    error_bound: float
    notes: tuple = ()

    @property
    def all_passed(self) -> bool:
        return all(p.passed for p in self.predicates)

    def failing(self) -> list:
        return [p.name for p in self.predicates if not p.passed]

    def __getitem__(self, name) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def format(self) -> str:
        lines = []
        for p in self.predicates:
            tag = "PASS" if p.passed else "FAIL"
            lines.append(f"  [{tag}] {p.name:<38s} value={p.value:.6g} margin={p.margin:+.6g}")
        lines.append(f"  error bound 2880 L^3 sigma (c1+c2+c_s)(r_ds+r_delta) = {self.error_bound:.6g}")
        lines.extend(f"  note: {note}" for note in self.notes)
        return "\n".join(lines)


def rate_ds(shape: ProblemShape) -> float:
    """``sqrt(s * log(d/s) / n)`` with the natural log."""
    if shape.d < 3 * shape.s:
        raise ConstraintViolation(f"d/s = {shape.d / shape.s:.3g} < 3")
    return math.sqrt(shape.s * math.log(shape.d / shape.s) / shape.n)


def rate_delta(n: int, delta: float) -> float:
    """``sqrt(log(1/delta) / n)``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError("n must be positive")
    return math.sqrt(math.log(1.0 / delta) / n)


def lambda_o_theory(consts: TheoryConstants, n: int) -> float:
    """Smallest admissible Huber scale, ``576 sigma L**2 / sqrt(n)``."""
    return LAMBDA_O_CONSTANT * consts.sigma * consts.L**2 / math.sqrt(n)


def lambda_s_theory(consts: TheoryConstants, shape: ProblemShape, lambda_o: float) -> float:
    """``c_s lambda_o sqrt(n) L (r_ds + r_delta) / sqrt(s)``."""
    rates = rate_ds(shape) + rate_delta(shape.n, consts.delta)
    return consts.c_s * lambda_o * math.sqrt(shape.n) * consts.L * rates / math.sqrt(shape.s)


def radii_theory(consts: TheoryConstants, shape: ProblemShape, lambda_o: float) -> RateQuantities:
    r_ds = rate_ds(shape)
    r_delta = rate_delta(shape.n, consts.delta)
    r_2 = 5.0 * consts.L * lambda_o * math.sqrt(shape.n) * consts.c_total * (r_ds + r_delta)
    return RateQuantities(r_ds, r_delta, r_2, 3.0 * math.sqrt(shape.s) * r_2)


def check_theorem_conditions(
    consts: TheoryConstants,
    shape: ProblemShape,
    lambda_o: float,
    lambda_s: float,
    rel_tol: float = 1e-9,
) -> ConditionReport:
    """Evaluate every hypothesis of the main error bound and report margins.

    Each predicate's margin is positive (or zero at equality) exactly when it
    holds. The ``lambda_s`` relation is an equality; its margin is
    ``rel_tol * target - |lambda_s sqrt(s) - target|``.
    """
    preds = []

    def at_most_one(name, value):
        preds.append(Predicate(name, value <= 1.0, 1.0 - value, value))

    ratio = shape.d / shape.s
    preds.append(Predicate("d/s >= 3", ratio >= 3, ratio - 3.0, ratio))
    if ratio < 3:
        return ConditionReport(tuple(preds), float("nan"), ("rates undefined for d/s < 3",))

    rq = radii_theory(consts, shape, lambda_o)
    L, sig, ct = consts.L, consts.sigma, consts.c_total
    at_most_one("r_ds <= 1", rq.r_ds)
    at_most_one("r_delta <= 1", rq.r_delta)
    at_most_one("r_2 <= 1", rq.r_2)
    at_most_one("320 L^4 (c1+c2+c_s)(r_ds+r_delta) <= 1",
                CONDITION_CONSTANT * L**4 * ct * (rq.r_ds + rq.r_delta))

    scale = lambda_o * math.sqrt(shape.n)
    floor = LAMBDA_O_CONSTANT * sig * L**2
    preds.append(Predicate("lambda_o sqrt(n) >= 576 sigma L^2", scale >= floor, scale - floor, scale))
    preds.append(Predicate("c_s >= 5 c1", consts.c_s >= 5 * consts.c1,
                           consts.c_s - 5 * consts.c1, consts.c_s))

    lhs = lambda_s * math.sqrt(shape.s)
    target = consts.c_s * scale * L * (rq.r_ds + rq.r_delta)
    gap = rel_tol * target - abs(lhs - target)
    preds.append(Predicate("lambda_s sqrt(s) = c_s lambda_o sqrt(n) L (r_ds+r_delta)",
                           gap >= 0, gap, lhs))

    bound = ERROR_BOUND_CONSTANT * L**3 * sig * ct * (rq.r_ds + rq.r_delta)
    notes = ("c1, c2 are placeholder values; margins are indicative, not certified",)
    return ConditionReport(tuple(preds), bound, notes)


# ----------------------------------------------------------------------------
# practical tuning

def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = stream(seed, "cv_folds")
    ids = np.arange(n) % folds
    return ids[rng.permutation(n)]


def _holdout_error(data: Dataset, beta, cfg: PenaltyConfig, loss: str, n_train: int) -> float:
    r = data.y - data.X @ beta
    if loss == SQUARED:
        return float(np.mean(r * r))
    tau = cfg.lambda_o * math.sqrt(n_train)
    a = np.abs(r) / tau
    return float(np.mean(tau * tau * np.where(a <= 1.0, 0.5 * a * a, a - 0.5)))


def lambda_grid_cv(
    data: Dataset,
    loss: str,
    folds: int,
    grid,
    seed: int,
    opts: SolverOptions | None = None,
) -> PenaltyConfig:
    """Pick the grid member with the smallest mean held-out loss.

    Held-out loss is the Huber loss at the fit's own residual threshold for
    ``loss='huber'`` and the squared error for ``loss='squared'``. Folds are
    a seeded permutation of row indices, so the choice is reproducible.
    Within a fold, members sharing ``lambda_o`` are fitted as a warm-started
    path in decreasing ``lambda_s``.
    """
    grid = list(grid)
    if not grid:
        raise ConfigurationError("grid must be nonempty")
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    if data.n < folds:
        raise ConfigurationError(f"n={data.n} is smaller than folds={folds}")
    if len(grid) == 1:
        return grid[0]

    ids = _fold_ids(data.n, folds, seed)
    order = sorted(range(len(grid)), key=lambda k: (grid[k].lambda_o, -grid[k].lambda_s))
    paths = []
    for k in order:
        if paths and grid[paths[-1][0]].lambda_o == grid[k].lambda_o:
            paths[-1].append(k)
        else:
            paths.append([k])

    err = np.zeros(len(grid))
    for f in range(folds):
        train = data.subset(ids != f)
        test = data.subset(ids == f)
        for path in paths:
            results = fit_path(train, [grid[k] for k in path], loss, opts)
            for k, res in zip(path, results):
                err[k] += _holdout_error(test, res.beta_hat, grid[k], loss, train.n)
    return grid[int(np.argmin(err))]


def robust_scale(v) -> float:
    """Normal-consistent median absolute deviation."""
    v = np.asarray(v, dtype=float)
    return 1.4826 * float(np.median(np.abs(v - np.median(v))))


def practical_grid(
    data: Dataset,
    loss: str = HUBER,
    n_lambda: int = 10,
    min_ratio: float = 0.01,
    huber_k: float = 1.345,
) -> list:
    """Default CV grid: ``lambda_s`` log-spaced down from the smallest value
    that zeroes every coefficient, with one Huber scale.

    The residual threshold ``lambda_o sqrt(n)`` is ``huber_k`` times a robust
    scale of the centred response.
    """
    scale = robust_scale(data.y)
    if scale <= 0:
        scale = float(np.std(data.y)) or 1.0
    lambda_o = huber_k * scale / math.sqrt(data.n)
    probe = PenaltyConfig(lambda_o, 0.0)
    lam_max = float(np.max(np.abs(smooth_gradient(np.zeros(data.d), data, probe, loss))))
    lam_max = max(lam_max, 1e-12)
    return [PenaltyConfig(lambda_o, float(l))
            for l in lam_max * np.logspace(0.0, math.log10(min_ratio), n_lambda)]
