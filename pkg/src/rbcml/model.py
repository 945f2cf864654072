"""Location-family random utility models.

Each alternative ``a_i`` draws a latent utility ``theta_i + e_i`` where the
noise ``e_i`` has a fixed shape; rankings sort utilities in descending order.
Alternatives and positions are 0-based array indices throughout the Python
API.  Parameter vectors are gauge-fixed by subtracting their last entry.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats
from scipy.integrate import cumulative_simpson, simpson

__all__ = [
    "ModelDomainError",
    "InvalidPairError",
    "UtilityFamily",
    "PlackettLuce",
    "Gaussian",
    "CustomSymmetric",
    "Profile",
    "as_theta",
    "check_ranking",
    "pairwise_prob",
    "pairwise_prob_grad",
    "ranking_prob",
    "all_rankings",
    "ranking_probs",
    "log_concavity_probe",
    "convolve_logpdf",
    "convolve_logcdf",
]

# Node count of the fixed Gauss-Legendre rule used by custom families.
GL_NODES = 256
# Grid size of the sequential-conditioning quadrature for ranking probabilities.
RANKING_GRID = 2**14 + 1
# Largest m for which non-PL ranking probabilities use quadrature.
MAX_QUADRATURE_M = 6
MC_SAMPLES = 1_000_000


class ModelDomainError(ValueError):
    """Raised for non-finite parameters or densities outside the model class."""


class InvalidPairError(ValueError):
    """Raised when a pairwise quantity is requested for ``i == j``."""


def as_theta(values, m: int | None = None) -> np.ndarray:
    """Validate a location vector and return its gauge-fixed copy (last entry 0)."""
    theta = np.asarray(values, dtype=float)
    if theta.ndim != 1 or theta.size < 2:
        raise ModelDomainError(f"theta must be a vector with at least 2 entries, got shape {theta.shape}")
    if m is not None and theta.size != m:
        raise ModelDomainError(f"theta has {theta.size} entries, expected {m}")
    if not np.all(np.isfinite(theta)):
        raise ModelDomainError("theta entries must be finite")
    return theta - theta[-1]


def check_ranking(order, m: int) -> np.ndarray:
    r = np.asarray(order)
    if r.shape != (m,) or not np.array_equal(np.sort(r), np.arange(m)):
        raise ValueError(f"not a ranking of {m} alternatives: {list(np.ravel(r))}")
    return r.astype(np.int64)


def all_rankings(m: int) -> np.ndarray:
    """All ``m!`` rankings in lexicographic order, shape ``(m!, m)``."""
    return np.array(list(itertools.permutations(range(m))), dtype=np.int64)


@dataclass(frozen=True)
class Profile:
    """A preference profile: ``n`` full rankings over ``m`` alternatives, top first."""

    m: int
    rankings: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rankings, dtype=np.int64)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] != self.m:
            raise ValueError(f"rankings must have shape (n >= 1, {self.m}), got {r.shape}")
        if not np.array_equal(np.sort(r, axis=1), np.broadcast_to(np.arange(self.m), r.shape)):
            bad = np.flatnonzero(np.any(np.sort(r, axis=1) != np.arange(self.m), axis=1))[0]
            raise ValueError(f"ranking {bad} is not a permutation: {r[bad].tolist()}")
        r.flags.writeable = False
        object.__setattr__(self, "rankings", r)

    @classmethod
    def from_rankings(cls, rankings: Sequence[Sequence[int]]) -> "Profile":
        r = np.asarray(rankings, dtype=np.int64)
        if r.ndim != 2:
            raise ValueError("rankings must be a non-empty list of equal-length sequences")
        return cls(r.shape[1], r)

    @property
    def n(self) -> int:
        return self.rankings.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented
        return self.m == other.m and np.array_equal(self.rankings, other.rankings)

    __hash__ = None


class UtilityFamily:
    """Shape of the utility noise for every alternative.

    Subclasses provide the pairwise functions of the utility difference
    ``d = theta_i - theta_j``: ``log p_ij`` (``_log_cdf``), the log of
    ``dp_ij/dtheta_i`` (``_log_pdf``) and optionally the slope of the latter
    in ``d`` (``_dlog_pdf``), plus per-alternative noise densities for the
    ranking-probability quadrature and samplers.
    """

    name = "rum"
    symmetric = False

    def validate(self, m: int) -> None:
        pass

    # pairwise primitives, vectorized over index arrays i, j
    def _log_cdf(self, d, i, j):
        raise NotImplementedError

    def _log_pdf(self, d, i, j):
        raise NotImplementedError

    def _dlog_pdf(self, d, i, j):
        return None

    # per-alternative noise (location 0)
    def noise_logpdf(self, x, i):
        raise NotImplementedError

    def noise_cdf(self, x, i):
        raise NotImplementedError

    def noise_logsf(self, x, i):
        raise NotImplementedError

    def sample_noise(self, rng: np.random.Generator, size: tuple[int, int]) -> np.ndarray:
        raise NotImplementedError

    def window(self, theta: np.ndarray) -> tuple[float, float]:
        """Integration interval in utility space covering all alternatives."""
        raise NotImplementedError

    def pair_matrices(self, theta: np.ndarray):
        """Return ``(log p, log dp/dtheta_i)`` as ``m x m`` matrices (diagonal 0)."""
        m = theta.size
        i, j = np.nonzero(~np.eye(m, dtype=bool))
        d = theta[i] - theta[j]
        logp = np.zeros((m, m))
        logd = np.full((m, m), -np.inf)
        logp[i, j] = self._log_cdf(d, i, j)
        logd[i, j] = self._log_pdf(d, i, j)
        return logp, logd

    def pair_slope(self, theta: np.ndarray):
        """``d/dd log(dp_ij/dtheta_i)`` per pair, or None when not available."""
        m = theta.size
        i, j = np.nonzero(~np.eye(m, dtype=bool))
        s = self._dlog_pdf(theta[i] - theta[j], i, j)
        if s is None:
            return None
        out = np.zeros((m, m))
        out[i, j] = s
        return out


class PlackettLuce(UtilityFamily):
    """Gumbel noise with density ``exp(-x - exp(-x))``; logistic pairwise link."""

    name = "pl"

    def _log_cdf(self, d, i, j):
        return -np.logaddexp(0.0, -d)

    def _log_pdf(self, d, i, j):
        return -np.logaddexp(0.0, -d) - np.logaddexp(0.0, d)

    def _dlog_pdf(self, d, i, j):
        return -np.tanh(np.asarray(d) / 2.0)

    def noise_logpdf(self, x, i):
        x = np.asarray(x, dtype=float)
        return -x - np.exp(-x)

    def noise_cdf(self, x, i):
        return np.exp(-np.exp(-np.asarray(x, dtype=float)))

    def noise_logcdf(self, x, i):
        return -np.exp(-np.asarray(x, dtype=float))

    def noise_logsf(self, x, i):
        return np.log(-np.expm1(-np.exp(-np.asarray(x, dtype=float))))

    def sample_noise(self, rng, size):
        # inverse CDF of the Gumbel density: -ln(-ln U)
        return -np.log(-np.log(rng.random(size)))

    def window(self, theta):
        return float(theta.min()) - 8.0, float(theta.max()) + 45.0

    def __repr__(self):
        return "PlackettLuce()"


class Gaussian(UtilityFamily):
    """Normal noise with per-alternative standard deviations (default 1)."""

    name = "gaussian"
    symmetric = True

    def __init__(self, scales=None):
        if scales is not None:
            scales = np.asarray(scales, dtype=float)
            if scales.ndim != 1 or not np.all(np.isfinite(scales)) or np.any(scales <= 0):
                raise ModelDomainError("Gaussian scales must be a vector of positive finite reals")
        self.scales = scales

    def validate(self, m):
        if self.scales is not None and self.scales.size != m:
            raise ModelDomainError(f"Gaussian family has {self.scales.size} scales, model has {m} alternatives")

    def _scale(self, i):
        if self.scales is None:
            return np.ones(np.shape(i))
        return self.scales[i]

    def _pair_scale(self, i, j):
        return np.hypot(self._scale(i), self._scale(j))

    def _log_cdf(self, d, i, j):
        return special.log_ndtr(d / self._pair_scale(i, j))

    def _log_pdf(self, d, i, j):
        s = self._pair_scale(i, j)
        return stats.norm.logpdf(d / s) - np.log(s)

    def _dlog_pdf(self, d, i, j):
        return -d / self._pair_scale(i, j) ** 2

    def noise_logpdf(self, x, i):
        s = self._scale(i)
        return stats.norm.logpdf(np.asarray(x) / s) - np.log(s)

    def noise_cdf(self, x, i):
        return special.ndtr(np.asarray(x) / self._scale(i))

    def noise_logcdf(self, x, i):
        return special.log_ndtr(np.asarray(x) / self._scale(i))

    def noise_logsf(self, x, i):
        return special.log_ndtr(-np.asarray(x) / self._scale(i))

    def sample_noise(self, rng, size):
        z = rng.standard_normal(size)
        if self.scales is not None:
            z = z * self.scales
        return z

    def window(self, theta):
        s = 1.0 if self.scales is None else float(self.scales.max())
        return float(theta.min()) - 12.0 * s, float(theta.max()) + 12.0 * s

    def __repr__(self):
        return f"Gaussian(scales={None if self.scales is None else self.scales.tolist()})"


class CustomSymmetric(UtilityFamily):
    """A user-supplied symmetric noise density shared by all alternatives.

    ``density`` and ``cdf`` must be vectorized.  Pairwise quantities use a
    256-node Gauss-Legendre rule over ``half_width`` (default ``10 * scale``)
    beyond the two locations; heavy-tailed shapes need a wider window.
    """

    name = "custom"
    symmetric = True

    def __init__(self, density: Callable, cdf: Callable, scale: float = 1.0,
                 half_width: float | None = None, sampler: Callable | None = None):
        if not scale > 0:
            raise ModelDomainError("scale must be positive")
        self.density = density
        self.cdf = cdf
        self.scale = float(scale)
        self.half_width = 10.0 * self.scale if half_width is None else float(half_width)
        self.sampler = sampler
        probe = np.linspace(-10.0 * self.scale, 10.0 * self.scale, 401)
        f = np.asarray(density(probe), dtype=float)
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ModelDomainError("density must be positive everywhere (compact support is not supported)")
        if np.max(np.abs(f - np.asarray(density(-probe), dtype=float))) > 1e-12:
            raise ModelDomainError("density is not symmetric about 0")
        self._nodes, self._weights = np.polynomial.legendre.leggauss(GL_NODES)

    def _quad(self, d, integrand):
        d = np.atleast_1d(np.asarray(d, dtype=float))
        lo = np.minimum(d, 0.0) - self.half_width
        hi = np.maximum(d, 0.0) + self.half_width
        half = (hi - lo)[:, None] / 2.0
        v = (lo + hi)[:, None] / 2.0 + half * self._nodes
        return np.sum(self._weights * half * integrand(v, d[:, None]), axis=1)

    def _log_cdf(self, d, i, j):
        # P(e_i - e_j > -d) = int f(v) F(d - v) dv
        p = self._quad(d, lambda v, dd: self.density(v) * self.cdf(dd - v))
        return np.log(np.clip(p, 0.0, 1.0))

    def _log_pdf(self, d, i, j):
        q = self._quad(d, lambda v, dd: self.density(v) * self.density(v - dd))
        return np.log(q)

    def noise_logpdf(self, x, i):
        return np.log(self.density(np.asarray(x, dtype=float)))

    def noise_cdf(self, x, i):
        return self.cdf(np.asarray(x, dtype=float))

    def sample_noise(self, rng, size):
        if self.sampler is not None:
            return np.asarray(self.sampler(rng, size), dtype=float)
        # numeric inverse CDF on a fine grid
        x = np.linspace(-self.half_width, self.half_width, 20001)
        c = np.maximum.accumulate(self.cdf(x))
        keep = np.concatenate(([True], np.diff(c) > 0))
        return np.interp(rng.random(size), c[keep], x[keep])

    def window(self, theta):
        return float(theta.min()) - self.half_width, float(theta.max()) + self.half_width

    def __repr__(self):
        return f"CustomSymmetric(scale={self.scale}, half_width={self.half_width})"


def _check_pair(theta, i, j):
    m = theta.size
    if i == j:
        raise InvalidPairError(f"pairwise quantity needs two distinct alternatives, got i = j = {i}")
    for k in (i, j):
        if not 0 <= k < m:
            raise IndexError(f"alternative index {k} out of range for m = {m}")


def pairwise_prob(family: UtilityFamily, theta, i: int, j: int) -> float:
    """Probability that alternative ``i`` is ranked above alternative ``j``."""
    theta = as_theta(theta)
    family.validate(theta.size)
    _check_pair(theta, i, j)
    ii, jj = np.array([i]), np.array([j])
    return float(np.exp(family._log_cdf(theta[ii] - theta[jj], ii, jj))[0])


def pairwise_prob_grad(family: UtilityFamily, theta, i: int, j: int, l: int) -> float:
    """Partial derivative of ``pairwise_prob(i, j)`` with respect to ``theta_l``."""
    theta = as_theta(theta)
    family.validate(theta.size)
    _check_pair(theta, i, j)
    if not 0 <= l < theta.size:
        raise IndexError(f"alternative index {l} out of range")
    if l not in (i, j):
        return 0.0
    ii, jj = np.array([i]), np.array([j])
    dens = float(np.exp(family._log_pdf(theta[ii] - theta[jj], ii, jj))[0])
    return dens if l == i else -dens


def _pl_log_ranking_probs(theta: np.ndarray, rankings: np.ndarray) -> np.ndarray:
    u = theta[rankings]
    # log of sum of exp over the suffix starting at each position
    tail = np.logaddexp.accumulate(u[:, ::-1], axis=1)[:, ::-1]
    return np.sum(u[:, :-1] - tail[:, :-1], axis=1)


class _RankingQuadrature:
    """Sequential conditioning from the bottom position upwards.

    ``below[suffix](u)`` is the probability that the alternatives of
    ``suffix`` all fall below ``u`` in that order; suffixes are memoized so
    rankings sharing a tail share the work.
    """

    def __init__(self, family, theta):
        lo, hi = family.window(theta)
        self.grid = np.linspace(lo, hi, RANKING_GRID)
        self.dens = [np.exp(family.noise_logpdf(self.grid - theta[a], a)) for a in range(theta.size)]
        self.cdf = [family.noise_cdf(self.grid - theta[a], a) for a in range(theta.size)]
        self.below = {}

    def _below(self, suffix):
        if len(suffix) == 1:
            return self.cdf[suffix[0]]
        got = self.below.get(suffix)
        if got is None:
            h = self.dens[suffix[0]] * self._below(suffix[1:])
            got = self.below[suffix] = cumulative_simpson(h, x=self.grid, initial=0.0)
        return got

    def prob(self, r) -> float:
        r = tuple(int(a) for a in r)
        return float(simpson(self.dens[r[0]] * self._below(r[1:]), x=self.grid))


def ranking_prob(family: UtilityFamily, theta, ranking, *, return_stderr: bool = False,
                 rng: np.random.Generator | None = None, samples: int = MC_SAMPLES):
    """Probability of a full ranking (top first).

    Plackett-Luce uses the exact product formula.  Other families use
    quadrature for ``m <= 6`` and Monte-Carlo beyond; with
    ``return_stderr=True`` a ``(probability, standard_error)`` pair is
    returned (standard error 0 for the deterministic paths).
    """
    theta = as_theta(theta)
    m = theta.size
    family.validate(m)
    r = check_ranking(ranking, m)
    if isinstance(family, PlackettLuce):
        p, se = float(np.exp(_pl_log_ranking_probs(theta, r[None, :]))[0]), 0.0
    elif m <= MAX_QUADRATURE_M:
        p, se = _RankingQuadrature(family, theta).prob(r), 0.0
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        hits = 0
        done = 0
        while done < samples:
            b = min(100_000, samples - done)
            u = theta + family.sample_noise(rng, (b, m))
            hits += int(np.count_nonzero(np.all(np.diff(u[:, r], axis=1) < 0, axis=1)))
            done += b
        p = hits / samples
        se = math.sqrt(p * (1 - p) / samples)
    return (p, se) if return_stderr else p


def ranking_probs(family: UtilityFamily, theta: np.ndarray, rankings: np.ndarray) -> np.ndarray:
    """Vectorized deterministic ranking probabilities (PL, or quadrature for m <= 6)."""
    if isinstance(family, PlackettLuce):
        return np.exp(_pl_log_ranking_probs(theta, rankings))
    if theta.size > MAX_QUADRATURE_M:
        raise ValueError(f"deterministic ranking probabilities need m <= {MAX_QUADRATURE_M} for {family.name}")
    quad = _RankingQuadrature(family, theta)
    return np.array([quad.prob(r) for r in rankings])


def log_concavity_probe(f: Callable, grid, *, log: bool = False) -> float:
    """Largest second difference of ``log f`` over the interior of a uniform grid.

    A negative result certifies strict log-concavity on the grid.  Pass
    ``log=True`` when ``f`` already returns ``log f`` (avoids rounding of
    values near 0 or 1).
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("grid needs at least 3 points")
    step = np.diff(x)
    if np.any(step <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.max(np.abs(step - step[0])) > 1e-9 * max(1.0, abs(step[0])):
        raise ValueError("grid must be uniformly spaced")
    if log:
        lf = np.asarray(f(x), dtype=float)
        if not np.all(np.isfinite(lf)):
            raise ModelDomainError("log f must be finite on the grid")
    else:
        fx = np.asarray(f(x), dtype=float)
        if np.any(~(fx > 0)):
            raise ModelDomainError("f must be positive on the grid")
        lf = np.log(fx)
    return float(np.max(lf[:-2] - 2.0 * lf[1:-1] + lf[2:]))


def convolve_logpdf(logpdf_a: Callable, logpdf_b: Callable, nodes) -> Callable:
    """Log-density of the sum of two independent variables, by trapezoid quadrature.

    ``nodes`` is a uniform grid covering the mass of ``b``.
    """
    y = np.asarray(nodes, dtype=float)
    h = y[1] - y[0]
    lb = logpdf_b(y)

    def logpdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        terms = logpdf_a(x[:, None] - y[None, :]) + lb[None, :]
        return special.logsumexp(terms, axis=1) + math.log(h)

    return logpdf


def convolve_logcdf(logcdf_a: Callable, logsf_a: Callable, logpdf_b: Callable, nodes) -> Callable:
    """Log-CDF of the sum of two independent variables.

    Below the median the CDF itself is convolved; above it the survival
    function is, and ``log1p(-S)`` keeps the digits a sum close to 1 would lose.
    """
    lower = convolve_logpdf(logcdf_a, logpdf_b, nodes)
    upper = convolve_logpdf(logsf_a, logpdf_b, nodes)

    def logcdf(x):
        lo, up = lower(x), upper(x)
        with np.errstate(divide="ignore"):
            # the upper branch is -inf deep in the lower tail, where it is not selected
            tail = np.log1p(-np.exp(np.minimum(up, 0.0)))
        return np.where(lo < -math.log(2.0), lo, tail)

    return logcdf

