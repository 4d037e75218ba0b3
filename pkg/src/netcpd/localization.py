"""Turning learned prior means into declared change points.

Two rules are provided. :func:`detect_gamma` compares a Monte Carlo
statistic drawn from consecutive learned priors against the Gamma law it
follows when no change occurs. :func:`detect_data_driven` standardizes the
consecutive-difference norms and cuts at a Normal-quantile threshold.
Both finish with :func:`post_process`.

Times are 1-based; the magnitude arrays are indexed by ``t = 2..T``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class LocalizationConfig:
    method: str = "data_driven"
    alpha: float = 0.01
    m: int | None = None
    q: float = 0.9
    eps_spc: int = 5
    eps_end: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("gamma", "data_driven"):
            raise ValueError(f"unknown localization method {self.method!r}")
        if not 0 < self.alpha < 1 or not 0 < self.q < 1:
            raise ValueError("alpha and q must lie in (0, 1)")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")
        if self.eps_spc < 0 or self.eps_end < 0:
            raise ValueError("eps_spc and eps_end must be non-negative")

    def samples_for(self, d: int) -> int:
        """Default Monte Carlo size: 1000 for d <= 5, otherwise 500."""
        if self.m is not None:
            return self.m
        return 1000 if d <= 5 else 500


@dataclass
class ChangeMagnitudes:
    delta_mu: np.ndarray      # ||mu^t - mu^{t-1}||, t = 2..T
    zeta: np.ndarray          # standardized delta_mu (nan if undefined)
    statistic: np.ndarray     # quantity compared with the threshold
    threshold: float
    flagged: np.ndarray       # raw decisions before post-processing

    @property
    def times(self) -> np.ndarray:
        return np.arange(2, self.delta_mu.size + 2)


@dataclass
class Detection:
    points: list
    magnitudes: ChangeMagnitudes

    @property
    def count(self) -> int:
        return len(self.points)


def difference_norms(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 2 or mu.shape[0] < 2:
        raise ValueError("mu must be a (T, d) array with T >= 2")
    return np.linalg.norm(np.diff(mu, axis=0), axis=1)


def standardize(delta) -> np.ndarray:
    """``(delta - median) / std`` with the n-1 denominator; nan if std is 0 or undefined."""
    delta = np.asarray(delta, dtype=float)
    if delta.size < 2:
        return np.full(delta.shape, np.nan)
    sd = delta.std(ddof=1)
    if sd == 0:
        return np.full(delta.shape, np.nan)
    return (delta - np.median(delta)) / sd


def gamma_null_quantile(d: int, m: int, alpha: float, T: int) -> float:
    """Upper ``alpha / (T - 1)`` point of Gamma(shape ``m d / 2``, scale ``2 / m``).

    That Gamma law is the distribution of the mean of ``m`` draws of
    ``||e||^2 / 2`` with ``e ~ N(0, 2 I_d)``.
    """
    if d < 1 or m < 1 or T < 2 or not 0 < alpha < 1:
        raise ValueError("need d, m >= 1, T >= 2, 0 < alpha < 1")
    return float(stats.gamma.isf(alpha / (T - 1), a=m * d / 2.0, scale=2.0 / m))


def gamma_statistic(mu, m: int, rng=None) -> np.ndarray:
    """Mean of ``||e||^2 / 2`` over ``m`` draws ``e ~ N(mu^t - mu^{t-1}, 2 I)``, per t."""
    rng = np.random.default_rng(rng)
    diff = np.diff(np.asarray(mu, dtype=float), axis=0)
    e = diff[:, None, :] + np.sqrt(2.0) * rng.standard_normal((diff.shape[0], m, diff.shape[1]))
    return 0.5 * np.einsum("tmd,tmd->tm", e, e).mean(axis=1)


def post_process(points, scores, eps_spc: int, eps_end: int, T: int) -> list[int]:
    """Thin close pairs, then trim the ends.

    ``scores`` maps each candidate to its strength. Scanning left to right,
    a candidate closer than ``eps_spc`` to the last kept point replaces it
    only if strictly stronger. Points below ``eps_end`` or above
    ``T - eps_end`` are then dropped.
    """
    pts = [int(p) for p in points]
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValueError("points must be strictly increasing")
    kept: list[int] = []
    for p in pts:
        if kept and p - kept[-1] < eps_spc:
            if scores[p] > scores[kept[-1]]:
                kept[-1] = p
        else:
            kept.append(p)
    return [p for p in kept if eps_end <= p <= T - eps_end]


def _finish(mu, stat, threshold, flagged, zeta, config):
    T = np.asarray(mu).shape[0]
    times = np.arange(2, T + 1)
    cand = times[flagged]
    score = dict(zip(times.tolist(), stat.tolist()))
    points = post_process(cand.tolist(), score, config.eps_spc, config.eps_end, T)
    mags = ChangeMagnitudes(difference_norms(mu), zeta, stat, float(threshold), flagged)
    return Detection(points, mags)


def detect_gamma(mu, config: LocalizationConfig = LocalizationConfig(method="gamma"),
                 rng=None) -> Detection:
    mu = np.asarray(mu, dtype=float)
    T, d = mu.shape
    m = config.samples_for(d)
    q_thr = gamma_null_quantile(d, m, config.alpha, T)
    stat = gamma_statistic(mu, m, config.seed if rng is None else rng)
    flagged = stat > q_thr
    return _finish(mu, stat, q_thr, flagged, standardize(difference_norms(mu)), config)


def data_driven_threshold(zeta, q: float) -> float:
    return float(np.mean(zeta) + stats.norm.ppf(q) * np.std(zeta, ddof=1))


def detect_data_driven(mu, config: LocalizationConfig = LocalizationConfig()) -> Detection:
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] < 3:
        raise ValueError("the data-driven rule needs T >= 3")
    zeta = standardize(difference_norms(mu))
    if np.isnan(zeta).any():
        # flat series: nothing to declare
        flagged = np.zeros(zeta.size, dtype=bool)
        return _finish(mu, zeta, np.nan, flagged, zeta, config)
    thr = data_driven_threshold(zeta, config.q)
    return _finish(mu, zeta, thr, zeta > thr, zeta, config)


def detect(mu, config: LocalizationConfig) -> Detection:
    if config.method == "gamma":
        return detect_gamma(mu, config)
    return detect_data_driven(mu, config)


def write_magnitudes_csv(det: Detection, path) -> None:
    mg = det.magnitudes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "delta_mu", "zeta", "statistic", "threshold", "flagged", "declared"])
        declared = set(det.points)
        for i, t in enumerate(mg.times):
            w.writerow([int(t), repr(float(mg.delta_mu[i])), repr(float(mg.zeta[i])),
                        repr(float(mg.statistic[i])), repr(mg.threshold),
                        int(mg.flagged[i]), int(t in declared)])
