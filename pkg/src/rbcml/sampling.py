"""Seeded generation of ground-truth parameters and synthetic profiles.

All randomness flows through :class:`numpy.random.Generator` (PCG64).
Independent streams for parallel trials come from :func:`derive_rng`.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import Profile, UtilityFamily, as_theta

__all__ = [
    "make_rng",
    "derive_rng",
    "sample_ground_truth",
    "sample_ranking",
    "sample_profile",
    "sample_pl_sequential",
    "profile_to_text",
    "profile_from_text",
    "save_profile",
    "load_profile",
]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for sub-stream ``stream`` of ``seed`` (e.g. ``(n_index, trial)``)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def sample_ground_truth(m: int, rng: np.random.Generator, low: float = 0.0, high: float = 5.0) -> np.ndarray:
    """Independent ``Uniform[low, high]`` locations, shifted so the last one is 0."""
    if m < 2:
        raise ValueError("need at least 2 alternatives")
    return as_theta(rng.uniform(low, high, size=m))


def _sort_utilities(u: np.ndarray) -> np.ndarray:
    # descending utility; a stable sort breaks exact ties by alternative index
    return np.argsort(-u, axis=1, kind="stable")


def sample_profile(family: UtilityFamily, theta, n: int, rng: np.random.Generator) -> Profile:
    """``n`` i.i.d. rankings drawn by sorting sampled utilities."""
    if n < 1:
        raise ValueError("n must be at least 1")
    theta = as_theta(theta)
    family.validate(theta.size)
    u = theta + family.sample_noise(rng, (n, theta.size))
    return Profile(theta.size, _sort_utilities(u))


def sample_ranking(family: UtilityFamily, theta, rng: np.random.Generator) -> np.ndarray:
    return sample_profile(family, theta, 1, rng).rankings[0].copy()


def sample_pl_sequential(theta, n: int, rng: np.random.Generator) -> Profile:
    """Plackett-Luce rankings by repeatedly choosing the next alternative with probability proportional to exp(theta)."""
    theta = as_theta(theta)
    m = theta.size
    out = np.empty((n, m), dtype=np.int64)
    remaining = np.broadcast_to(np.exp(theta - theta.max()), (n, m)).copy()
    rows = np.arange(n)
    for pos in range(m):
        cum = np.cumsum(remaining, axis=1)
        target = rng.random(n) * cum[:, -1]
        pick = np.minimum((cum <= target[:, None]).sum(axis=1), m - 1)
        # never pick an already-used alternative (zero weight) at the boundary
        while np.any(remaining[rows, pick] == 0):
            bad = remaining[rows, pick] == 0
            pick[bad] -= 1
        out[:, pos] = pick
        remaining[rows, pick] = 0.0
    return Profile(m, out)


def profile_to_text(profile: Profile) -> str:
    """``m n`` header, then one ranking per line as 1-based indices, top first."""
    lines = [f"{profile.m} {profile.n}"]
    lines += [" ".join(str(a + 1) for a in r) for r in profile.rankings]
    return "\n".join(lines) + "\n"


def profile_from_text(text: str) -> Profile:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError("profile file must start with a 'm n' line")
    m, n = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != n:
        raise ValueError(f"header announces {n} rankings, found {len(body)}")
    rankings = []
    for lineno, row in enumerate(body, start=2):
        r = [int(a) - 1 for a in row]
        if sorted(r) != list(range(m)):
            raise ValueError(f"line {lineno}: not a permutation of 1..{m}: {' '.join(row)}")
        rankings.append(r)
    return Profile(m, np.array(rankings, dtype=np.int64).reshape(n, m))


def save_profile(profile: Profile, path) -> None:
    Path(path).write_text(profile_to_text(profile))


def load_profile(path) -> Profile:
    return profile_from_text(Path(path).read_text())
