"""Composite log-marginal likelihood over broken pairwise comparisons.

The objective is ``sum_{i != j} kappa_ij * w_ij * log p_ij(theta)``.  Gradients
and Hessians are returned in gauge-fixed coordinates (the first ``m - 1``
entries of ``theta``; the last one is pinned at 0).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.sparse.csgraph import connected_components

from .breaking import check_kappa
from .model import ModelDomainError, PlackettLuce, UtilityFamily, as_theta

__all__ = [
    "FitResult",
    "ConnectivityReport",
    "DivergenceError",
    "check_weights",
    "uniform_weights",
    "weights_to_text",
    "weights_from_text",
    "save_weights",
    "load_weights",
    "cll",
    "cll_grad",
    "cll_hessian",
    "wg_product",
    "maximize_cll",
    "newton_maximize",
]

FD_STEP = 1e-5


class DivergenceError(RuntimeError):
    """The iterate left the ``bound`` box: the maximizer is likely at infinity."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


@dataclass
class FitResult:
    theta: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool
    wallclock: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["theta"] = [float(t) for t in self.theta]
        if not timing:
            del d["wallclock"]
        return d


@dataclass
class ConnectivityReport:
    weakly_connected: bool
    strongly_connected: bool
    components: list = field(default_factory=list)
    # every weak component is strongly connected, so the maximizer is finite
    bounded: bool = True


# ---------------------------------------------------------------- weights


def check_weights(w, m: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or (m is not None and w.shape[0] != m):
        raise ValueError(f"CML weights must be an m x m matrix, got shape {w.shape}")
    if np.any(np.diag(w) != 0):
        raise ValueError("CML weights must have a zero diagonal")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("CML weights must be finite and nonnegative")
    return w


def uniform_weights(m: int, value: float = 1.0) -> np.ndarray:
    return value * (np.ones((m, m)) - np.eye(m))


def weights_to_text(w) -> str:
    """``m`` on the first line, then one 1-based ``i j weight`` line per positive entry."""
    w = check_weights(w)
    lines = [str(w.shape[0])]
    for i, j in zip(*np.nonzero(w)):
        lines.append(f"{i + 1} {j + 1} {float(w[i, j])!r}")
    return "\n".join(lines) + "\n"


def weights_from_text(text: str) -> np.ndarray:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 1:
        raise ValueError("weights file must start with a line holding m")
    m = int(rows[0][0])
    w = np.zeros((m, m))
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 'i j weight', got {' '.join(row)!r}")
        i, j, v = int(row[0]), int(row[1]), float(row[2])
        if not (1 <= i <= m and 1 <= j <= m) or i == j:
            raise ValueError(f"line {lineno}: invalid alternative pair ({i}, {j})")
        w[i - 1, j - 1] = v
    return check_weights(w)


def save_weights(w, path) -> None:
    Path(path).write_text(weights_to_text(w))


def load_weights(path) -> np.ndarray:
    return weights_from_text(Path(path).read_text())


# ---------------------------------------------------------------- objective


def _prepare(family, kappa, w, theta):
    theta = as_theta(theta)
    m = theta.size
    family.validate(m)
    c = check_kappa(kappa, m) * check_weights(w, m)
    return theta, c


def cll(family: UtilityFamily, kappa, w, theta, *, generic: bool = False) -> float:
    """Composite log-marginal likelihood.

    Plackett-Luce uses the expanded closed form unless ``generic`` is set.
    """
    theta, c = _prepare(family, kappa, w, theta)
    if isinstance(family, PlackettLuce) and not generic:
        i, j = np.triu_indices(theta.size, 1)
        a, b = c[i, j], c[j, i]
        return float(np.sum(a * theta[i] + b * theta[j] - (a + b) * np.logaddexp(theta[i], theta[j])))
    logp, _ = family.pair_matrices(theta)
    active = c > 0
    if np.any(np.isneginf(logp[active])):
        raise ModelDomainError("a weighted pairwise probability underflowed to 0")
    return float(np.sum(c[active] * logp[active]))


def _full_grad(family, theta, c, generic=False):
    if isinstance(family, PlackettLuce) and not generic:
        # sum_j (c_ij - (c_ij + c_ji) * e^theta_i / (e^theta_i + e^theta_j))
        d = theta[:, None] - theta[None, :]
        p = np.exp(-np.logaddexp(0.0, -d))
        g = c - (c + c.T) * p
        np.fill_diagonal(g, 0.0)
        return g.sum(axis=1)
    logp, logd = family.pair_matrices(theta)
    off = ~np.eye(theta.size, dtype=bool)
    # d log p_ij / d theta_i = dens_ij / p_ij; p_ji depends on theta_i through -dens_ij
    r_own = np.where(off, np.exp(logd - logp), 0.0)
    r_rev = np.where(off, np.exp(logd - logp.T), 0.0)
    own = np.where(c > 0, c * r_own, 0.0)
    rev = np.where(c.T > 0, c.T * r_rev, 0.0)
    return np.sum(own - rev, axis=1)


def cll_grad(family: UtilityFamily, kappa, w, theta, *, generic: bool = False) -> np.ndarray:
    """Gradient of :func:`cll` with respect to the first ``m - 1`` parameters."""
    theta, c = _prepare(family, kappa, w, theta)
    return _full_grad(family, theta, c, generic)[:-1]


def _full_hessian(family, theta, c):
    slope = family.pair_slope(theta)
    if slope is None:
        return None
    logp, logd = family.pair_matrices(theta)
    off = ~np.eye(theta.size, dtype=bool)
    r = np.where(off, np.exp(logd - logp), 0.0)
    # second derivative in d of c_ij * log p_ij(d)
    t = np.where(c > 0, c * r * (slope - r), 0.0)
    t[~off] = 0.0
    s = t + t.T
    return np.diag(s.sum(axis=1)) - s


def cll_hessian(family: UtilityFamily, kappa, w, theta, *, full: bool = False) -> np.ndarray:
    """Hessian of :func:`cll`; ``(m-1) x (m-1)`` unless ``full`` is set.

    Analytic for families exposing the pairwise density slope (Plackett-Luce,
    Gaussian); central differences of the gradient otherwise.
    """
    theta, c = _prepare(family, kappa, w, theta)
    h = _full_hessian(family, theta, c)
    if h is None:
        m = theta.size
        h = np.zeros((m, m))
        for l in range(m):
            e = np.zeros(m)
            e[l] = FD_STEP
            h[:, l] = (_full_grad(family, theta + e, c) - _full_grad(family, theta - e, c)) / (2 * FD_STEP)
        h = (h + h.T) / 2.0
    return h if full else h[:-1, :-1]


def wg_product(w, kappa) -> ConnectivityReport:
    """Connectivity of the directed graph with edge ``i -> j`` weighted ``w_ij * kappa_ij``."""
    w = check_weights(w)
    kappa = check_kappa(kappa, w.shape[0])
    adj = (w * kappa) > 0
    n_weak, weak = connected_components(adj, directed=True, connection="weak")
    n_strong, _ = connected_components(adj, directed=True, connection="strong")
    components = [np.flatnonzero(weak == k).tolist() for k in range(n_weak)]
    components.sort(key=lambda comp: comp[0])
    return ConnectivityReport(n_weak == 1, n_strong == 1, components, n_strong == n_weak)


# ---------------------------------------------------------------- optimizer


def newton_maximize(f: Callable, grad: Callable, hess: Callable, x0: np.ndarray, *,
                    tol: float = 1e-8, max_iter: int = 500, bound: float = 50.0) -> FitResult:
    """Damped Newton ascent with Armijo backtracking on free coordinates.

    Falls back to the gradient direction when the Hessian is not negative
    definite.  ``theta`` in the result is the free vector with a trailing 0.
    """
    start = time.perf_counter()
    x = np.array(x0, dtype=float)
    fx = f(x)
    g = grad(x)
    gnorm = float(np.linalg.norm(g))
    it = 0
    converged = gnorm <= tol
    while not converged and it < max_iter:
        it += 1
        h = hess(x)
        try:
            chol = np.linalg.cholesky(-h)
            step = np.linalg.solve(chol.T, np.linalg.solve(chol, g))
        except np.linalg.LinAlgError:
            step = g
        slope = float(g @ step)
        t = 1.0
        accepted = False
        for _ in range(60):
            xn = x + t * step
            fn = f(xn)
            if fn >= fx + 1e-4 * t * slope:
                accepted = True
                break
            # in the roundoff regime the objective cannot resolve the step
            if abs(fn - fx) <= 1e-12 * (1.0 + abs(fx)):
                gn = grad(xn)
                if np.linalg.norm(gn) < gnorm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        x, fx = xn, fn
        if np.max(np.abs(x)) > bound:
            raise DivergenceError(
                f"|theta| exceeded {bound} after {it} iterations; the maximizer is likely unbounded",
                np.append(x, 0.0))
        g = grad(x)
        gnorm = float(np.linalg.norm(g))
        converged = gnorm <= tol
    return FitResult(np.append(x, 0.0), float(fx), gnorm, it, bool(converged), time.perf_counter() - start)


def maximize_cll(family: UtilityFamily, kappa, w, init=None, *, tol: float = 1e-8,
                 max_iter: int = 500, bound: float = 50.0) -> FitResult:
    """Gauge-fixed maximizer of the composite log-marginal likelihood.

    Warns when ``W x G(P)`` is not strongly connected.  If some weak
    component is not strongly connected the supremum is not attained and
    :class:`DivergenceError` is raised, as it is whenever the iterate leaves
    ``[-bound, bound]``.  Non-convergence within ``max_iter`` is reported
    through ``converged=False``.
    """
    kappa = check_kappa(kappa)
    m = kappa.shape[0]
    w = check_weights(w, m)
    family.validate(m)
    report = wg_product(w, kappa)
    if not report.strongly_connected:
        warnings.warn("W x G(P) is not strongly connected; the maximizer may be unbounded",
                      RuntimeWarning, stacklevel=2)
    x0 = np.zeros(m - 1) if init is None else as_theta(init, m)[:-1]
    c = kappa * w

    def full(x):
        return np.append(x, 0.0)

    def f(x):
        return cll(family, kappa, w, full(x))

    def grad(x):
        return _full_grad(family, full(x), c)[:-1]

    def hess(x):
        return cll_hessian(family, kappa, w, full(x))

    if report.bounded:
        return newton_maximize(f, grad, hess, x0, tol=tol, max_iter=max_iter, bound=bound)
    # the supremum is not attained: a vanishing gradient only means the iterate drifted far out
    fit = newton_maximize(f, grad, hess, x0, tol=0.0, max_iter=max_iter, bound=bound)
    raise DivergenceError(f"maximizer is at infinity; stopped at |theta| = {np.max(np.abs(fit.theta)):.3g}",
                          fit.theta)
