"""Adaptive RBCML: re-derive the breaking and the weights from the previous estimate.

Starting at ``theta = 0``, each iteration builds ``G(theta)`` and ``W(theta)``,
recomputes the statistics when the breaking changed, and maximizes the
composite likelihood warm-started at the previous iterate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .breaking import BreakingGraph, kappa_stats, position_k_breaking, uniform_breaking, weighted_union
from .model import Profile, UtilityFamily, as_theta
from .objective import DivergenceError, FitResult, check_weights, load_weights, maximize_cll, uniform_weights

__all__ = [
    "AdaptiveConfig",
    "SpecError",
    "heuristic_w_pl",
    "constant_breaking",
    "constant_weights",
    "parse_breaking_spec",
    "parse_weights_spec",
    "adaptive_rbcml",
]


class SpecError(ValueError):
    """Unknown or malformed breaking/weights specification."""


def heuristic_w_pl(theta) -> np.ndarray:
    """Symmetric weights ``1 / (|theta_i - theta_j| + 4)``: closer pairs count more."""
    theta = as_theta(theta)
    w = 1.0 / (np.abs(theta[:, None] - theta[None, :]) + 4.0)
    np.fill_diagonal(w, 0.0)
    return w


def constant_breaking(g: BreakingGraph) -> Callable[[np.ndarray], BreakingGraph]:
    return lambda theta: g


def constant_weights(w) -> Callable[[np.ndarray], np.ndarray]:
    w = check_weights(w)
    return lambda theta: w


def parse_breaking_spec(spec: str, m: int) -> Callable[[np.ndarray], BreakingGraph]:
    """``uniform``, ``position:<k>``, ``position-union:<a1,...,a_{m-1}>`` or a file path."""
    spec = spec.strip()
    try:
        if spec == "uniform":
            return constant_breaking(uniform_breaking(m))
        if spec.startswith("position:"):
            return constant_breaking(position_k_breaking(m, int(spec.split(":", 1)[1])))
        if spec.startswith("position-union:"):
            alphas = [float(a) for a in spec.split(":", 1)[1].split(",")]
            if len(alphas) != m - 1:
                raise SpecError(f"position-union needs m - 1 = {m - 1} coefficients, got {len(alphas)}")
            return constant_breaking(weighted_union(
                [(a, position_k_breaking(m, k)) for k, a in enumerate(alphas, start=1)]))
        if os.path.exists(spec):
            g = BreakingGraph.load(spec)
            if g.m != m:
                raise SpecError(f"breaking file {spec} is over {g.m} positions, expected {m}")
            return constant_breaking(g)
    except SpecError:
        raise
    except (ValueError, OSError) as exc:
        raise SpecError(f"invalid breaking spec {spec!r}: {exc}") from exc
    raise SpecError(f"unknown breaking spec {spec!r}")


def parse_weights_spec(spec: str, m: int) -> Callable[[np.ndarray], np.ndarray]:
    """``uniform`` / ``uniform-w``, ``pl-heuristic-w`` or a file path."""
    spec = spec.strip()
    if spec in ("uniform", "uniform-w"):
        return constant_weights(uniform_weights(m))
    if spec == "pl-heuristic-w":
        return heuristic_w_pl
    if os.path.exists(spec):
        try:
            w = load_weights(spec)
        except (ValueError, OSError) as exc:
            raise SpecError(f"invalid weights file {spec!r}: {exc}") from exc
        if w.shape[0] != m:
            raise SpecError(f"weights file {spec} is over {w.shape[0]} alternatives, expected {m}")
        return constant_weights(w)
    raise SpecError(f"unknown weights spec {spec!r}")


@dataclass
class AdaptiveConfig:
    iterations: int = 1
    breaking_heuristic: Callable[[np.ndarray], BreakingGraph] | None = None
    weight_heuristic: Callable[[np.ndarray], np.ndarray] | None = None
    tol: float = 1e-8
    max_iter: int = 500
    bound: float = 50.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("adaptive RBCML needs at least one iteration")


def adaptive_rbcml(profile: Profile, cfg: AdaptiveConfig, family: UtilityFamily) -> list[FitResult]:
    """Run the adaptive loop and return one :class:`FitResult` per iteration.

    Defaults are uniform breaking and uniform weights.  A failed iteration
    (divergence or no convergence) ends the loop; its result is the last
    entry, flagged ``converged=False``.
    """
    m = profile.m
    breaking = cfg.breaking_heuristic or constant_breaking(uniform_breaking(m))
    weighting = cfg.weight_heuristic or constant_weights(uniform_weights(m))
    theta = np.zeros(m)
    results: list[FitResult] = []
    g_prev, kappa = None, None
    for _ in range(cfg.iterations):
        g = breaking(theta)
        w = check_weights(weighting(theta), m)
        if g.m != m:
            raise ValueError(f"breaking heuristic returned a graph over {g.m} positions, expected {m}")
        if g_prev is None or not g.isclose(g_prev, 1e-12):
            kappa = kappa_stats(g, profile)
            g_prev = g
        try:
            fit = maximize_cll(family, kappa, w, init=theta, tol=cfg.tol, max_iter=cfg.max_iter, bound=cfg.bound)
        except DivergenceError as exc:
            results.append(FitResult(exc.theta, float("nan"), float("nan"), 0, False))
            break
        results.append(fit)
        if not fit.converged:
            break
        theta = fit.theta
    return results
