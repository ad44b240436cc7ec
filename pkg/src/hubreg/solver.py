"""Proximal gradient solver for l1-penalized Huber and squared-loss regression.

Both losses share one engine. The smooth part of either objective has a
gradient that is Lipschitz with constant at most ``sigma_max(X)**2 / n``
because the Huber score is 1-Lipschitz, so a fixed step ``1/L`` is always
safe.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .huber import DomainError, Dataset, PenaltyConfig, ShapeError

logger = logging.getLogger(__name__)

HUBER = "huber"
SQUARED = "squared"
LOSS_KINDS = (HUBER, SQUARED)

ISTA = "ista"
FISTA_RESTART = "fista_restart"
FIXED_LIPSCHITZ = "fixed_lipschitz"
BACKTRACKING = "backtracking"

_EPS = np.finfo(float).eps
# consecutive no-progress iterations before declaring a stall
_STALL_WINDOW = 50


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 100_000
    tol_kkt: float = 1e-8
    tol_obj: float = 1e-12
    acceleration: str = FISTA_RESTART
    step_rule: str = FIXED_LIPSCHITZ
    backtrack_factor: float = 0.5

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.tol_kkt > 0 and self.tol_obj > 0):
            raise ValueError("tolerances must be positive")
        if self.acceleration not in (ISTA, FISTA_RESTART):
            raise ValueError(f"unknown acceleration {self.acceleration!r}")
        if self.step_rule not in (FIXED_LIPSCHITZ, BACKTRACKING):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")


@dataclass
class FitResult:
    beta_hat: np.ndarray
    iterations: int
    converged: bool
    kkt_residual: float
    objective_trace: list = field(repr=False)
    loss_kind: str = HUBER
    status: str = "converged"
    lipschitz: float = float("nan")


def soft_threshold(v, t):
    """Proximal map of ``t * |.|``: ``sign(v) * max(|v| - t, 0)``, elementwise."""
    if np.any(np.asarray(t) < 0):
        raise DomainError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("soft_threshold requires finite input")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return out if out.ndim else float(out)


def lipschitz_upper_bound(data: Dataset, rtol: float = 1e-6, max_iter: int = 5000) -> float:
    """Upper bound on the gradient Lipschitz constant, ``1.01 * sigma_max(X)**2 / n``.

    ``sigma_max**2`` comes from power iteration on the smaller of ``X'X`` and
    ``XX'``. If power iteration fails to settle within ``max_iter`` steps the
    Frobenius bound is used instead. An all-zero design returns ``1e-12``
    with a ``RuntimeWarning``.
    """
    X = data.X
    n, d = X.shape
    frob = float(np.sum(X * X)) / n
    if frob == 0.0:
        warnings.warn("design matrix is identically zero", RuntimeWarning, stacklevel=2)
        return 1e-12
    G = (X.T @ X if d <= n else X @ X.T) / n
    # fixed start vector keeps the bound reproducible
    v = np.random.default_rng(0).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        w = G @ v
        rho_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the null space; restart from the heaviest basis vector
            v = np.zeros(G.shape[0])
            v[int(np.argmax(np.diag(G)))] = 1.0
            continue
        v = w / nw
        if abs(rho_new - rho) <= 0.1 * rtol * rho_new:
            rho = rho_new
            break
        rho = rho_new
    else:
        logger.warning("power iteration did not settle; using Frobenius bound")
        return frob
    return 1.01 * rho


class _Smooth:
    """Evaluates the smooth data-fit term and its gradient for one loss kind."""

    def __init__(self, data: Dataset, cfg: PenaltyConfig, kind: str, use_gram: bool = True):
        if kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {kind!r}")
        self.X, self.y, self.n = data.X, data.y, data.n
        self.kind = kind
        self.lambda_o = cfg.lambda_o
        self.tau = cfg.lambda_o * np.sqrt(self.n)
        self.gram = None
        if use_gram and kind == SQUARED and data.n > data.d:
            self.gram = data.X.T @ data.X / self.n
            self.Xty = data.X.T @ data.y / self.n

    def value(self, Xb):
        r = self.y - Xb
        if self.kind == SQUARED:
            return float(r @ r) / (2 * self.n)
        a = np.abs(r) / self.tau
        return float(self.lambda_o**2 * np.sum(np.where(a <= 1.0, 0.5 * a * a, a - 0.5)))

    def grad(self, b, Xb):
        if self.gram is not None:
            return self.gram @ b - self.Xty
        r = self.y - Xb
        if self.kind == SQUARED:
            return -(self.X.T @ r) / self.n
        w = np.clip(r / self.tau, -1.0, 1.0)
        return -(self.lambda_o / np.sqrt(self.n)) * (self.X.T @ w)


def _kkt_from_grad(beta, g, lambda_s):
    active = beta != 0
    res = np.where(
        active,
        np.abs(g + lambda_s * np.sign(beta)),
        np.maximum(np.abs(g) - lambda_s, 0.0),
    )
    return float(np.max(res)) if res.size else 0.0


def _check_inputs(data, beta=None):
    if not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset")
    if beta is None:
        return None
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.d,):
        raise ShapeError(f"beta must have shape ({data.d},), got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise DomainError("beta contains non-finite entries")
    return beta


def smooth_gradient(beta, data: Dataset, cfg: PenaltyConfig, loss: str = HUBER) -> np.ndarray:
    """Gradient of the smooth part for either loss kind."""
    beta = _check_inputs(data, beta)
    return _Smooth(data, cfg, loss, use_gram=False).grad(beta, data.X @ beta)


def kkt_residual(beta, data: Dataset, cfg: PenaltyConfig, loss: str = HUBER) -> float:
    """Largest violation of the subgradient optimality condition at ``beta``.

    For ``beta_j != 0`` the violation is ``|g_j + lambda_s sign(beta_j)|``; for
    ``beta_j == 0`` it is ``max(0, |g_j| - lambda_s)``, where ``g`` is the
    gradient of the smooth part.
    """
    beta = _check_inputs(data, beta)
    return _kkt_from_grad(beta, smooth_gradient(beta, data, cfg, loss), cfg.lambda_s)


def _backtrack_step(sm, z, Xz, fz, gz, L, lambda_s, factor, X):
    """One backtracking prox step from ``z``. Returns ``(x, Xx, fx, L)``.

    ``L`` grows by ``1/factor`` until the quadratic model majorizes the
    smooth term at the candidate.
    """
    while True:
        x = soft_threshold(z - gz / L, lambda_s / L)
        Xx = X @ x
        fx = sm.value(Xx)
        dx = x - z
        model = fz + float(gz @ dx) + 0.5 * L * float(dx @ dx)
        if fx <= model + 8 * _EPS * max(abs(fz), abs(model)):
            return x, Xx, fx, L
        L /= factor


def fit(
    data: Dataset,
    cfg: PenaltyConfig,
    loss: str = HUBER,
    opts: SolverOptions | None = None,
    init=None,
    lipschitz: float | None = None,
) -> FitResult:
    """Minimize the l1-penalized Huber (or squared) objective by proximal gradient.

    Convergence is declared once the KKT residual falls to ``opts.tol_kkt``.
    With ``fista_restart`` a step that raises the objective is rejected and
    the momentum reset, so the objective trace is nonincreasing in both modes.
    ``lipschitz`` lets callers reuse a precomputed :func:`lipschitz_upper_bound`.
    """
    opts = opts or SolverOptions()
    if not isinstance(cfg, PenaltyConfig):
        raise TypeError("cfg must be a PenaltyConfig")
    x = np.zeros(data.d) if init is None else _check_inputs(data, init).copy()
    sm = _Smooth(data, cfg, loss)
    X, lam = data.X, cfg.lambda_s
    L_ub = lipschitz_upper_bound(data) if lipschitz is None else float(lipschitz)
    backtrack = opts.step_rule == BACKTRACKING
    L = L_ub * opts.backtrack_factor**3 if backtrack else L_ub
    accel = opts.acceleration == FISTA_RESTART

    Xx = X @ x
    fx = sm.value(Xx)
    Fx = fx + lam * float(np.sum(np.abs(x)))
    gx = sm.grad(x, Xx)
    trace = [Fx]
    kkt = _kkt_from_grad(x, gx, lam)
    if kkt <= opts.tol_kkt:
        return FitResult(x, 0, True, kkt, trace, loss, "converged", L)

    z, Xz, fz, gz = x, Xx, fx, gx
    t = 1.0
    status = "max_iter"
    quiet = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        if backtrack:
            x_new, Xx_new, fx_new, L = _backtrack_step(
                sm, z, Xz, fz, gz, L, lam, opts.backtrack_factor, X
            )
        else:
            x_new = soft_threshold(z - gz / L, lam / L)
            Xx_new = X @ x_new
            fx_new = sm.value(Xx_new)
        F_new = fx_new + lam * float(np.sum(np.abs(x_new)))

        if accel and F_new > Fx and z is not x:
            # function-value restart: drop the step and take a plain prox step from x next
            z, Xz, fz, gz = x, Xx, fx, gx
            t = 1.0
            trace.append(Fx)
            continue

        step = float(np.max(np.abs(x_new - x)))
        change = Fx - F_new
        g_new = sm.grad(x_new, Xx_new)
        if accel:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_new
            t = t_new
        else:
            mom = 0.0
        x_old, Xx_old = x, Xx
        x, Xx, fx, Fx, gx = x_new, Xx_new, fx_new, F_new, g_new
        trace.append(Fx)

        kkt = _kkt_from_grad(x, gx, lam)
        if kkt <= opts.tol_kkt:
            status = "converged"
            break

        if abs(change) <= opts.tol_obj * max(1.0, abs(Fx)) and step <= 4 * _EPS * max(
            1.0, float(np.max(np.abs(x)))
        ):
            quiet += 1
            if quiet >= _STALL_WINDOW:
                status = "stalled"
                break
        else:
            quiet = 0

        if mom == 0.0:
            z, Xz, fz, gz = x, Xx, fx, gx
        else:
            z = x + mom * (x - x_old)
            Xz = Xx + mom * (Xx - Xx_old)
            fz = sm.value(Xz)
            gz = sm.grad(z, Xz)

    converged = status == "converged"
    if not converged:
        logger.info("fit stopped without convergence (%s), kkt=%.3g", status, kkt)
    return FitResult(x, it, converged, kkt, trace, loss, status, L)


def fit_path(
    data: Dataset,
    configs,
    loss: str = HUBER,
    opts: SolverOptions | None = None,
) -> list:
    """Fit a sequence of configurations, warm-starting each from the previous one.

    Order the configurations by decreasing ``lambda_s`` for best effect.
    """
    results = []
    init = None
    L = lipschitz_upper_bound(data)
    for cfg in configs:
        res = fit(data, cfg, loss, opts, init=init, lipschitz=L)
        results.append(res)
        init = res.beta_hat
    return results
