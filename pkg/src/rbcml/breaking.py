"""Weighted rank-breaking graphs and the pairwise statistics they extract.

A breaking graph lives on ranking *positions*.  Positions are 1-based in the
constructors that name them (``position_k_breaking(m, 1)`` breaks the top
position) and in the text format; the dense ``weights`` matrix is indexed
0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .model import (
    MAX_QUADRATURE_M,
    PlackettLuce,
    Profile,
    UtilityFamily,
    all_rankings,
    as_theta,
    ranking_probs,
)

__all__ = [
    "BreakingGraph",
    "position_k_breaking",
    "uniform_breaking",
    "weighted_union",
    "kappa_stats",
    "expected_kappa",
    "is_weighted_union_of_position_k",
    "is_uniform",
    "check_kappa",
    "MAX_EXACT_M",
]

DEFAULT_TOL = 1e-9
MAX_EXACT_M = 8


@dataclass(frozen=True, eq=False)
class BreakingGraph:
    """Undirected weighted graph over positions; ``weights[k, l]`` for ``k < l``.

    The stored matrix is symmetric with a zero diagonal.  Absent edges and
    zero-weight edges are the same thing.
    """

    m: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.m, self.m) or self.m < 2:
            raise ValueError(f"breaking weights must be an m x m matrix with m >= 2, got {w.shape}")
        upper = np.triu(w, 1)
        lower = np.tril(w, -1)
        # accept either triangle or a symmetric matrix
        if np.any(lower) and np.any(upper) and not np.allclose(upper, lower.T, rtol=0, atol=1e-12):
            raise ValueError("breaking weights must be symmetric or triangular")
        if np.any(np.diag(w) != 0):
            raise ValueError("breaking graphs have no self-loops")
        w = np.maximum(upper, lower.T)
        w = w + w.T
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("breaking weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise ValueError("breaking graph needs at least one positive weight")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int, float]]) -> "BreakingGraph":
        """Build from 1-based ``(k, l, weight)`` triples; repeated edges add up."""
        w = np.zeros((m, m))
        for k, l, g in edges:
            if not (1 <= k <= m and 1 <= l <= m) or k == l:
                raise ValueError(f"invalid position pair ({k}, {l}) for m = {m}")
            k, l = min(k, l), max(k, l)
            w[k - 1, l - 1] += g
        return cls(m, w)

    def edges(self) -> list[tuple[int, int, float]]:
        """Positive-weight edges as 1-based ``(k, l, weight)`` with ``k < l``."""
        k, l = np.nonzero(np.triu(self.weights, 1))
        return [(int(a) + 1, int(b) + 1, float(self.weights[a, b])) for a, b in zip(k, l)]

    @property
    def total_weight(self) -> float:
        return float(np.triu(self.weights, 1).sum())

    def scaled(self, c: float) -> "BreakingGraph":
        return BreakingGraph(self.m, c * self.weights)

    def __add__(self, other: "BreakingGraph") -> "BreakingGraph":
        return weighted_union([(1.0, self), (1.0, other)])

    def __eq__(self, other):
        if not isinstance(other, BreakingGraph):
            return NotImplemented
        return self.m == other.m and np.array_equal(self.weights, other.weights)

    def isclose(self, other: "BreakingGraph", tol: float = 1e-12) -> bool:
        return self.m == other.m and bool(np.max(np.abs(self.weights - other.weights)) <= tol)

    __hash__ = None

    def to_text(self) -> str:
        lines = [str(self.m)] + [f"{k} {l} {g!r}" for k, l, g in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BreakingGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 1:
            raise ValueError("breaking file must start with a line holding m")
        m = int(rows[0][0])
        edges = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 'k l weight', got {' '.join(row)!r}")
            edges.append((int(row[0]), int(row[1]), float(row[2])))
        return cls.from_edges(m, edges)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "BreakingGraph":
        return cls.from_text(Path(path).read_text())


def position_k_breaking(m: int, k: int) -> BreakingGraph:
    """Unit edges from position ``k`` (1-based) to every later position."""
    if not 1 <= k <= m - 1:
        raise ValueError(f"position k must satisfy 1 <= k <= m - 1 = {m - 1}, got {k}")
    w = np.zeros((m, m))
    w[k - 1, k:] = 1.0
    return BreakingGraph(m, w)


def uniform_breaking(m: int) -> BreakingGraph:
    if m < 2:
        raise ValueError("uniform breaking needs m >= 2")
    return BreakingGraph(m, np.ones((m, m)) - np.eye(m))


def weighted_union(terms: Iterable[tuple[float, BreakingGraph]]) -> BreakingGraph:
    terms = list(terms)
    if not terms:
        raise ValueError("weighted_union needs at least one term")
    m = terms[0][1].m
    total = np.zeros((m, m))
    for c, g in terms:
        if g.m != m:
            raise ValueError(f"cannot combine breakings over {m} and {g.m} positions")
        if c < 0:
            raise ValueError("union coefficients must be nonnegative")
        total += c * g.weights
    if not np.any(total > 0):
        raise ValueError("weighted union is the empty graph")
    return BreakingGraph(m, total)


def check_kappa(kappa: np.ndarray, m: int | None = None) -> np.ndarray:
    k = np.asarray(kappa, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or (m is not None and k.shape[0] != m):
        raise ValueError(f"kappa must be an m x m matrix, got shape {k.shape}")
    if np.any(np.diag(k) != 0) or np.any(k < 0) or not np.all(np.isfinite(k)):
        raise ValueError("kappa must be finite, nonnegative, with a zero diagonal")
    return k


def _ranking_contributions(g: BreakingGraph, rankings: np.ndarray) -> np.ndarray:
    """Per-ranking kappa matrices, shape ``(n, m, m)``."""
    n, m = rankings.shape
    out = np.zeros((n, m, m))
    rows = np.arange(n)
    for k, l, w in g.edges():
        out[rows, rankings[:, k - 1], rankings[:, l - 1]] += w
    return out


def kappa_stats(g: BreakingGraph, profile: Profile) -> np.ndarray:
    """Average breaking weight each ordered pair ``(i above j)`` receives per ranking."""
    if g.m != profile.m:
        raise ValueError(f"breaking has {g.m} positions but the profile ranks {profile.m} alternatives")
    m = g.m
    # collapse duplicate rankings first; profiles are usually much larger than m!
    uniq, counts = np.unique(profile.rankings, axis=0, return_counts=True)
    kappa = np.zeros((m, m))
    for k, l, w in g.edges():
        np.add.at(kappa, (uniq[:, k - 1], uniq[:, l - 1]), w * counts)
    return kappa / profile.n


def expected_kappa(g: BreakingGraph, family: UtilityFamily, theta, *, monte_carlo: bool = False,
                   samples: int = 200_000, rng: np.random.Generator | None = None,
                   return_stderr: bool = False):
    """Expected kappa under the model at ``theta``.

    Exact mode enumerates all ``m!`` rankings (``m <= 8`` for Plackett-Luce,
    ``m <= 6`` for quadrature-based families).  Monte-Carlo mode averages
    ``kappa_stats`` over ``samples`` simulated rankings; with
    ``return_stderr`` the entrywise standard errors are returned too.
    """
    theta = as_theta(theta, g.m)
    family.validate(g.m)
    m = g.m
    if not monte_carlo:
        limit = MAX_EXACT_M if isinstance(family, PlackettLuce) else MAX_QUADRATURE_M
        if m > limit:
            raise ValueError(f"exact expected kappa supports m <= {limit} for {family.name}; "
                             "pass monte_carlo=True")
        rankings = all_rankings(m)
        probs = ranking_probs(family, theta, rankings)
        kappa = np.zeros((m, m))
        for k, l, w in g.edges():
            np.add.at(kappa, (rankings[:, k - 1], rankings[:, l - 1]), w * probs)
        return (kappa, np.zeros((m, m))) if return_stderr else kappa

    from .sampling import sample_profile

    rng = np.random.default_rng(0) if rng is None else rng
    total = np.zeros((m, m))
    total_sq = np.zeros((m, m))
    done = 0
    while done < samples:
        b = min(50_000, samples - done)
        contrib = _ranking_contributions(g, sample_profile(family, theta, b, rng).rankings)
        total += contrib.sum(axis=0)
        total_sq += (contrib**2).sum(axis=0)
        done += b
    mean = total / samples
    var = np.maximum(total_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / max(samples - 1, 1))
    return (mean, se) if return_stderr else mean


def is_weighted_union_of_position_k(g: BreakingGraph, tol: float = DEFAULT_TOL):
    """Per-position coefficients if ``g`` is a nonnegative union of position-k breakings.

    Returns the list ``[alpha_1, ..., alpha_{m-1}]`` (``alpha_k`` is the
    weight on every edge leaving position ``k`` downwards), or None.
    """
    w = g.weights
    alphas = []
    for k in range(g.m - 1):
        row = w[k, k + 1:]
        if np.max(row) - np.min(row) > tol:
            return None
        alphas.append(float(row.mean()))
    return alphas


def is_uniform(g: BreakingGraph, tol: float = DEFAULT_TOL) -> bool:
    vals = g.weights[np.triu_indices(g.m, 1)]
    return bool(np.max(vals) - np.min(vals) <= tol)
