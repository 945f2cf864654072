"""Consistency checks for (breaking, weights) configurations.

Two routes: structural predicates on the breaking graph and the weights, and
the behavioural criterion that the expected composite score vanishes at the
true parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.sparse.csgraph import connected_components

from .breaking import (
    BreakingGraph,
    expected_kappa,
    is_uniform,
    is_weighted_union_of_position_k,
    kappa_stats,
)
from .model import UtilityFamily, as_theta
from .objective import DivergenceError, check_weights, cll_grad, maximize_cll, weights_from_text
from .sampling import derive_rng, sample_profile

__all__ = [
    "ConsistencyVerdict",
    "NON_POSITION_K_UNION",
    "NON_UNIFORM_G",
    "W_NOT_CONNECTED",
    "W_NOT_SYMMETRIC",
    "EXPECTED_GRADIENT_NONZERO",
    "expected_gradient",
    "weights_connected",
    "weights_symmetric",
    "check_consistency_pl",
    "check_consistency_symmetric_rum",
    "mse",
    "empirical_consistency_trend",
    "load_battery",
]

NON_POSITION_K_UNION = "non-position-k-union"
NON_UNIFORM_G = "non-uniform-G"
W_NOT_CONNECTED = "W-not-connected"
W_NOT_SYMMETRIC = "W-not-symmetric"
EXPECTED_GRADIENT_NONZERO = "expected-gradient-nonzero"

ZERO_GRADIENT = 1e-8
NONZERO_GRADIENT = 1e-3


@dataclass
class ConsistencyVerdict:
    consistent: bool
    reasons: list = field(default_factory=list)

    @classmethod
    def from_reasons(cls, reasons):
        return cls(not reasons, list(reasons))

    def __str__(self):
        if self.consistent:
            return "consistent"
        return "inconsistent: " + ", ".join(self.reasons)


def expected_gradient(family: UtilityFamily, g: BreakingGraph, w, theta0, *, monte_carlo: bool = False,
                      samples: int = 200_000, rng=None) -> np.ndarray:
    """Gradient of the expected objective at the truth ``theta0``.

    Zero for every ``theta0`` exactly when the configuration is consistent.
    """
    theta0 = as_theta(theta0, g.m)
    kbar = expected_kappa(g, family, theta0, monte_carlo=monte_carlo, samples=samples, rng=rng)
    return cll_grad(family, kbar, w, theta0)


def weights_connected(w, tol: float = 0.0) -> bool:
    """Connectivity over pairs with both directions strictly positive."""
    w = check_weights(w)
    adj = np.minimum(w, w.T) > tol
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def weights_symmetric(w, tol: float = 1e-9) -> bool:
    w = check_weights(w)
    return bool(np.max(np.abs(w - w.T)) <= tol)


def _weight_reasons(w, tol):
    reasons = []
    if not weights_connected(w):
        reasons.append(W_NOT_CONNECTED)
    if not weights_symmetric(w, tol):
        reasons.append(W_NOT_SYMMETRIC)
    return reasons


def check_consistency_pl(g: BreakingGraph, w, tol: float = 1e-9) -> ConsistencyVerdict:
    """Plackett-Luce: consistent iff G is a weighted union of position-k
    breakings and W is connected and symmetric."""
    w = check_weights(w, g.m)
    reasons = []
    if is_weighted_union_of_position_k(g, tol) is None:
        reasons.append(NON_POSITION_K_UNION)
    reasons += _weight_reasons(w, tol)
    return ConsistencyVerdict.from_reasons(reasons)


def check_consistency_symmetric_rum(g: BreakingGraph, w, tol: float = 1e-9) -> ConsistencyVerdict:
    """Symmetric location families (e.g. Gaussian): consistent iff G is
    uniform and W is connected and symmetric.

    The family-level premise (log-density slope decreasing to -infinity on
    the right, +infinity on the left) holds for the Gaussian and is taken on
    trust for custom families.
    """
    w = check_weights(w, g.m)
    reasons = []
    if not is_uniform(g, tol):
        reasons.append(NON_UNIFORM_G)
    reasons += _weight_reasons(w, tol)
    return ConsistencyVerdict.from_reasons(reasons)


def mse(estimate, truth) -> float:
    """Mean squared error over the ``m - 1`` free coordinates."""
    a, b = as_theta(estimate), as_theta(truth)
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(np.mean((a[:-1] - b[:-1]) ** 2))


def empirical_consistency_trend(family: UtilityFamily, g: BreakingGraph, w, theta0, n_grid, trials: int,
                                seed: int, *, return_details: bool = False):
    """Mean MSE of the fitted parameters for each sample size in ``n_grid``.

    Trial ``t`` at grid index ``k`` draws from stream ``(seed, k, t)``.  Failed
    fits are skipped and counted.  Returns ``[(n, mean_mse), ...]``; with
    ``return_details`` each entry is ``(n, mean_mse, stderr, failures, estimates)``.
    """
    theta0 = as_theta(theta0, g.m)
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    out = []
    for k, n in enumerate(n_grid):
        errs, estimates, failures = [], [], 0
        for t in range(trials):
            rng = derive_rng(seed, k, t)
            profile = sample_profile(family, theta0, n, rng)
            try:
                fit = maximize_cll(family, kappa_stats(g, profile), w)
            except (DivergenceError, np.linalg.LinAlgError, FloatingPointError):
                failures += 1
                continue
            if not fit.converged:
                failures += 1
                continue
            estimates.append(fit.theta)
            errs.append(mse(fit.theta, theta0))
        errs = np.asarray(errs)
        mean = float(errs.mean()) if errs.size else float("nan")
        if return_details:
            se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else float("nan")
            out.append((n, mean, se, failures, np.asarray(estimates)))
        else:
            out.append((n, mean))
    return out


def load_battery(m: int):
    """Fixture breakings and weights shipped with the package for ``m`` in {3, 4}.

    Returns ``(graphs, weights)``, two dicts keyed by fixture name.
    """
    graphs, weights = {}, {}
    root = resources.files("rbcml") / "data" / "battery"
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        prefix, kind, name = entry.name[:-4].split("_", 2)
        if prefix != f"m{m}":
            continue
        text = entry.read_text()
        if kind == "G":
            graphs[name] = BreakingGraph.from_text(text)
        else:
            weights[name] = weights_from_text(text)
    if not graphs:
        raise ValueError(f"no fixture battery for m = {m}")
    return graphs, weights
