"""Desk-scale experiment harness: n x MSE sweeps, Cramer-Rao reference, full PL MLE."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .adaptive import AdaptiveConfig, SpecError, adaptive_rbcml, parse_breaking_spec, parse_weights_spec
from .breaking import MAX_EXACT_M
from .model import Gaussian, PlackettLuce, Profile, UtilityFamily, all_rankings, as_theta, ranking_probs
from .objective import DivergenceError, FitResult, newton_maximize
from .sampling import derive_rng, sample_ground_truth, sample_profile

__all__ = [
    "ConfigError",
    "EstimatorSpec",
    "ExperimentConfig",
    "ResultRow",
    "CSV_COLUMNS",
    "make_family",
    "n_mse",
    "pl_scores",
    "fisher_information_pl",
    "cramer_rao_trace_pl",
    "pl_log_likelihood",
    "pl_full_mle",
    "run_experiment",
    "rows_to_csv",
]

CSV_COLUMNS = ["estimator", "n", "n_mse_mean", "n_mse_stderr", "runtime_mean_s", "failures"]


class ConfigError(ValueError):
    """Experiment configuration violates the schema; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def make_family(name: str) -> UtilityFamily:
    key = name.strip().lower()
    if key in ("pl", "plackett-luce", "plackett_luce"):
        return PlackettLuce()
    if key in ("gaussian", "normal"):
        return Gaussian()
    raise ValueError(f"unknown family {name!r} (expected 'pl' or 'gaussian')")


def n_mse(estimate, truth, n: int) -> float:
    """``n`` times the mean squared error over the ``m - 1`` free coordinates."""
    a, b = as_theta(estimate), as_theta(truth)
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(n * np.mean((a[:-1] - b[:-1]) ** 2))


# ---------------------------------------------------------------- Plackett-Luce likelihood


def _stage_probs(theta: np.ndarray, rankings: np.ndarray, t: int) -> np.ndarray:
    """Choice probabilities at stage ``t`` scattered to alternatives, shape ``(K, m)``."""
    k = rankings.shape[0]
    p = np.zeros((k, theta.size))
    rows = np.arange(k)[:, None]
    p[rows, rankings[:, t:]] = softmax(theta[rankings[:, t:]], axis=1)
    return p


def pl_scores(theta, rankings) -> np.ndarray:
    """Score of ``log Pr_PL(R | theta)`` per ranking, free coordinates only, shape ``(K, m - 1)``."""
    theta = as_theta(theta)
    rankings = np.atleast_2d(np.asarray(rankings, dtype=np.int64))
    k, m = rankings.shape
    s = np.zeros((k, m))
    for t in range(m - 1):
        s[np.arange(k), rankings[:, t]] += 1.0
        s -= _stage_probs(theta, rankings, t)
    return s[:, :-1]


def fisher_information_pl(theta0) -> np.ndarray:
    """Exact single-ranking Fisher information (free coordinates), by enumerating all m! rankings."""
    theta0 = as_theta(theta0)
    m = theta0.size
    if m > MAX_EXACT_M:
        raise ValueError(f"exact Fisher information needs m <= {MAX_EXACT_M}, got {m}")
    rankings = all_rankings(m)
    probs = ranking_probs(PlackettLuce(), theta0, rankings)
    s = pl_scores(theta0, rankings)
    return (s * probs[:, None]).T @ s


def cramer_rao_trace_pl(theta0, n: int = 1) -> float:
    """Cramer-Rao reference for n x MSE: ``trace(I^-1) / (m - 1)``.

    The bound on MSE scales as ``1/n``, so the ``n x MSE`` reference is the
    same for every ``n``.
    """
    info = fisher_information_pl(theta0)
    try:
        inv = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Fisher information is singular") from exc
    return float(np.trace(inv) / info.shape[0])


def _collapse(profile: Profile):
    uniq, counts = np.unique(profile.rankings, axis=0, return_counts=True)
    return uniq, counts / profile.n


def pl_log_likelihood(theta, profile: Profile) -> float:
    """Average Plackett-Luce log-likelihood per ranking."""
    theta = as_theta(theta, profile.m)
    uniq, freq = _collapse(profile)
    u = theta[uniq]
    tail = np.array([logsumexp(u[:, t:], axis=1) for t in range(profile.m - 1)]).T
    return float(freq @ np.sum(u[:, :-1] - tail, axis=1))


def pl_full_mle(profile: Profile, init=None, *, tol: float = 1e-8, max_iter: int = 500,
                bound: float = 50.0) -> FitResult:
    """Maximum-likelihood Plackett-Luce fit of the whole rankings (Newton)."""
    m = profile.m
    uniq, freq = _collapse(profile)

    def full(x):
        return np.append(x, 0.0)

    def f(x):
        th = full(x)
        u = th[uniq]
        tail = np.stack([logsumexp(u[:, t:], axis=1) for t in range(m - 1)], axis=1)
        return float(freq @ np.sum(u[:, :-1] - tail, axis=1))

    def grad(x):
        th = full(x)
        g = np.zeros(m)
        for t in range(m - 1):
            np.add.at(g, uniq[:, t], freq)
            g -= freq @ _stage_probs(th, uniq, t)
        return g[:-1]

    def hess(x):
        th = full(x)
        h = np.zeros((m, m))
        for t in range(m - 1):
            p = _stage_probs(th, uniq, t)
            h -= np.diag(freq @ p) - (p * freq[:, None]).T @ p
        return h[:-1, :-1]

    x0 = np.zeros(m - 1) if init is None else as_theta(init, m)[:-1]
    return newton_maximize(f, grad, hess, x0, tol=tol, max_iter=max_iter, bound=bound)


# ---------------------------------------------------------------- sweeps


@dataclass
class EstimatorSpec:
    """``kind`` is ``rbcml`` (adaptive loop) or ``pl-mle`` (full-likelihood baseline)."""

    name: str
    kind: str = "rbcml"
    breaking: str = "uniform"
    weights: str = "uniform"
    iterations: int = 1


@dataclass
class ExperimentConfig:
    family: str
    m: int
    n_grid: list
    trials: int
    seed: int
    estimators: list = field(default_factory=list)
    output: str | None = None
    jsonl: str | None = None
    theta0: list | None = None
    timing: bool = False
    tol: float = 1e-8
    max_iter: int = 500

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key in ("family", "m", "n_grid", "trials", "seed"):
            if key not in data:
                raise ConfigError(key, "required field missing")
        raw_estimators = data.get("estimators") or [{"name": "rbcml-uniform"}]
        if not isinstance(raw_estimators, list):
            raise ConfigError("estimators", "must be a list")
        estimators = []
        for k, est in enumerate(raw_estimators):
            where = f"estimators[{k}]"
            if isinstance(est, str):
                est = {"name": est, "kind": est}
            if not isinstance(est, dict) or "name" not in est:
                raise ConfigError(where, "each estimator needs a name")
            extra = set(est) - set(EstimatorSpec.__dataclass_fields__)
            if extra:
                raise ConfigError(f"{where}.{sorted(extra)[0]}", "unknown field")
            spec = EstimatorSpec(**est)
            if spec.kind not in ("rbcml", "pl-mle"):
                raise ConfigError(f"{where}.kind", f"unknown estimator {spec.kind!r}")
            estimators.append(spec)
        cfg = cls(**{**data, "estimators": estimators})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        try:
            family = make_family(str(self.family))
        except ValueError as exc:
            raise ConfigError("family", str(exc)) from exc
        if not isinstance(self.m, int) or self.m < 2:
            raise ConfigError("m", "must be an integer >= 2")
        if (not isinstance(self.n_grid, list) or not self.n_grid
                or not all(isinstance(n, int) and n >= 1 for n in self.n_grid)
                or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:]))):
            raise ConfigError("n_grid", "must be a nonempty strictly increasing list of positive integers")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed", "must be an integer")
        if self.theta0 is not None and len(self.theta0) != self.m:
            raise ConfigError("theta0", f"must have m = {self.m} entries")
        for k, est in enumerate(self.estimators):
            where = f"estimators[{k}]"
            if est.kind == "pl-mle" and not isinstance(family, PlackettLuce):
                raise ConfigError(f"{where}.kind", "pl-mle requires the pl family")
            if not isinstance(est.iterations, int) or est.iterations < 1:
                raise ConfigError(f"{where}.iterations", "must be an integer >= 1")
            try:
                parse_breaking_spec(est.breaking, self.m)
            except SpecError as exc:
                raise ConfigError(f"{where}.breaking", str(exc)) from exc
            try:
                parse_weights_spec(est.weights, self.m)
            except SpecError as exc:
                raise ConfigError(f"{where}.weights", str(exc)) from exc


@dataclass
class ResultRow:
    estimator: str
    n: int
    n_mse_mean: float
    n_mse_stderr: float
    runtime_mean_s: float
    failures: int = 0


def _fit(est: EstimatorSpec, family, profile, cfg: ExperimentConfig) -> np.ndarray | None:
    if est.kind == "pl-mle":
        fit = pl_full_mle(profile, tol=cfg.tol, max_iter=cfg.max_iter)
        return fit.theta if fit.converged else None
    acfg = AdaptiveConfig(
        iterations=est.iterations,
        breaking_heuristic=parse_breaking_spec(est.breaking, cfg.m),
        weight_heuristic=parse_weights_spec(est.weights, cfg.m),
        tol=cfg.tol,
        max_iter=cfg.max_iter,
    )
    fits = adaptive_rbcml(profile, acfg, family)
    last = fits[-1]
    if len(fits) < est.iterations or not last.converged:
        return None
    return last.theta


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every estimator on shared replicates and aggregate n x MSE per ``n``.

    Replicate ``t`` at grid index ``k`` uses stream ``(seed, k, t)`` for both
    the ground truth and the profile, so estimators are compared on the same
    data.  Failed fits are counted and excluded from the means.
    """
    cfg.validate()
    family = make_family(cfg.family)
    estimators = cfg.estimators or [EstimatorSpec("rbcml-uniform")]
    records = []
    rows = []
    for k, n in enumerate(cfg.n_grid):
        scores = {e.name: [] for e in estimators}
        times = {e.name: [] for e in estimators}
        failures = {e.name: 0 for e in estimators}
        for t in range(cfg.trials):
            rng = derive_rng(cfg.seed, k, t)
            theta0 = as_theta(cfg.theta0) if cfg.theta0 is not None else sample_ground_truth(cfg.m, rng)
            profile = sample_profile(family, theta0, n, rng)
            for est in estimators:
                start = time.perf_counter()
                try:
                    theta = _fit(est, family, profile, cfg)
                except (DivergenceError, np.linalg.LinAlgError):
                    theta = None
                elapsed = time.perf_counter() - start
                if theta is None:
                    failures[est.name] += 1
                    continue
                value = n_mse(theta, theta0, n)
                scores[est.name].append(value)
                times[est.name].append(elapsed)
                if cfg.jsonl:
                    rec = {"estimator": est.name, "n": n, "trial": t, "seed": [cfg.seed, k, t],
                           "theta0": theta0.tolist(), "theta": [float(v) for v in theta], "mse": value / n}
                    if cfg.timing:
                        rec["runtime"] = elapsed
                    records.append(rec)
        for est in estimators:
            vals = np.asarray(scores[est.name])
            mean = float(vals.mean()) if vals.size else math.nan
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            rt = float(np.mean(times[est.name])) if times[est.name] else math.nan
            rows.append(ResultRow(est.name, n, mean, se, rt, failures[est.name]))
    if cfg.output:
        Path(cfg.output).write_text(rows_to_csv(rows, timing=cfg.timing))
    if cfg.jsonl:
        Path(cfg.jsonl).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    return rows


def rows_to_csv(rows: list[ResultRow], timing: bool = True) -> str:
    """CSV text; without ``timing`` the runtime column holds ``NA`` so output is reproducible."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        d = asdict(r)
        writer.writerow([
            d["estimator"], d["n"], repr(d["n_mse_mean"]), repr(d["n_mse_stderr"]),
            repr(d["runtime_mean_s"]) if timing else "NA", d["failures"],
        ])
    return buf.getvalue()
