"""Choosing the fusion strength by odd/even cross-validation, then refitting."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .admm import AdmmConfig, FitResult, fit, log_marginal_from_samples
from .graphs import GraphSequence
from .langevin import stream
from .localization import difference_norms

log = logging.getLogger(__name__)


def split_odd_even(graphs: GraphSequence) -> tuple[GraphSequence, GraphSequence]:
    """Odd times (1, 3, ...) for training, even times (2, 4, ...) for testing."""
    if graphs.T < 4:
        raise ValueError("cross-validation split needs T >= 4")
    return (GraphSequence(graphs.y[0::2], graphs.directed),
            GraphSequence(graphs.y[1::2], graphs.directed))


def test_log_likelihood(params, mu_train, test: GraphSequence, n_samples: int,
                        rng=None) -> float:
    """Estimated ``sum_j log p(test_j)`` with test graph ``j`` scored under prior row ``j``.

    Row ``j`` of the training means belongs to time ``2j - 1``, the left
    neighbour of test time ``2j``.
    """
    mu_train = np.asarray(mu_train, dtype=float)
    if test.T > mu_train.shape[0]:
        raise ValueError(f"{test.T} test graphs but only {mu_train.shape[0]} prior rows")
    mu = mu_train[:test.T]
    rng = np.random.default_rng(rng)
    samples = mu[:, None, :] + rng.standard_normal((test.T, n_samples, mu.shape[1]))
    return float(log_marginal_from_samples(params, test.y, samples).sum())


def _cv_score(args):
    lam, train, test, config = args
    cfg = replace(config, lam=lam)
    result = fit(train, cfg)
    return test_log_likelihood(result.params, result.mu, test, cfg.loglik_samples,
                               rng=stream(cfg.seed, 3))


def select_lambda(graphs: GraphSequence, grid, config: AdmmConfig, n_jobs: int = 1):
    """Fit on odd times for each value in ``grid`` and score on even times.

    Returns ``(best_lambda, scores)`` with ``scores`` mapping each grid value
    to its held-out log-likelihood (``nan`` for failed fits). Ties go to the
    larger value.
    """
    grid = sorted({float(g) for g in grid})
    if not grid:
        raise ValueError("lambda grid is empty")
    train, test = split_odd_even(graphs)
    jobs = [(lam, train, test, config) for lam in grid]
    if n_jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_cv_score, j) for j in jobs]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except (FloatingPointError, ValueError) as exc:
                    outcomes.append(exc)
    else:
        outcomes = []
        for j in jobs:
            try:
                outcomes.append(_cv_score(j))
            except (FloatingPointError, ValueError) as exc:
                outcomes.append(exc)
    scores = {}
    for lam, out in zip(grid, outcomes):
        if isinstance(out, Exception):
            warnings.warn(f"fit failed for lambda={lam}: {out}")
            scores[lam] = math.nan
        else:
            scores[lam] = out
    valid = {lam: s for lam, s in scores.items() if np.isfinite(s)}
    if not valid:
        raise RuntimeError("every lambda in the grid failed to fit")
    best = max(valid, key=lambda lam: (valid[lam], lam))
    return best, scores


def coefficient_of_variation(mu) -> float:
    """``mean / sd`` of the consecutive-difference norms.

    A zero standard deviation gives ``inf`` when the mean is positive and
    0 when the mean is 0.
    """
    delta = difference_norms(mu)
    mean = float(delta.mean())
    sd = float(delta.std(ddof=1)) if delta.size > 1 else 0.0
    if sd == 0:
        return math.inf if mean > 0 else 0.0
    return mean / sd


def pick_by_cov(candidates) -> int:
    """Index of the candidate prior-mean matrix with the largest CoV (first on ties)."""
    covs = [coefficient_of_variation(mu) for mu in candidates]
    return int(np.argmax(covs))


def refit_and_pick(graphs: GraphSequence, lam: float, config: AdmmConfig, repeats: int = 3):
    """Refit on all data with ``repeats`` seeds and keep the largest-CoV fit.

    Seeds are ``config.seed, config.seed + 1, ...``. Returns
    ``(chosen FitResult, list of CoV values)``.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    results: list[FitResult] = []
    for r in range(repeats):
        cfg = replace(config, lam=lam).with_seed(config.seed + r)
        results.append(fit(graphs, cfg))
    covs = [coefficient_of_variation(res.mu) for res in results]
    return results[pick_by_cov([res.mu for res in results])], covs


def write_cv_csv(scores: dict, selected: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "test_loglik", "selected"])
        for lam in sorted(scores):
            w.writerow([repr(lam), repr(float(scores[lam])), int(lam == selected)])
