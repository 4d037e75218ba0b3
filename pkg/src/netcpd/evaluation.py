"""Detection metrics and a degree-corrected block model held-out check."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .graphs import GraphSequence, points_to_partition

# ---------------------------------------------------------------------------
# change-point metrics


def count_error(truth, detected) -> int:
    """``|K_hat - K|``."""
    return abs(len(list(detected)) - len(list(truth)))


def one_sided_distance(source, target) -> float:
    """``max_{c in target} min_{s in source} |s - c|``.

    An empty ``source`` gives ``+inf`` and an empty ``target`` gives ``-inf``
    (the max over an empty set), checked in that order.
    """
    source = np.asarray(list(source), dtype=float)
    target = np.asarray(list(target), dtype=float)
    if source.size == 0:
        return math.inf
    if target.size == 0:
        return -math.inf
    return float(np.abs(target[:, None] - source[None, :]).min(axis=1).max())


def hausdorff_one_sided(truth, detected) -> tuple[float, float]:
    """Both one-sided Hausdorff distances ``(d(det | truth), d(truth | det))``.

    ``d(det | truth)`` is large when a true change is missed; ``d(truth |
    det)`` is large when a detection is far from every true change.

    >>> hausdorff_one_sided([26, 51, 76], [25, 53])
    (23.0, 2.0)
    """
    detected = list(detected)
    if not detected:
        return math.inf, -math.inf
    return one_sided_distance(detected, truth), one_sided_distance(truth, detected)


def coverage(truth, detected, T: int) -> float:
    """Length-weighted best Jaccard overlap of ``truth`` intervals by ``detected``.

    Both arguments are partitions of ``1..T`` given as lists of ranges (or
    any iterables of time indices).
    """
    truth = [set(a) for a in truth]
    detected = [set(a) for a in detected]
    for part in (truth, detected):
        if sorted(x for a in part for x in a) != list(range(1, T + 1)):
            raise ValueError(f"not a partition of 1..{T}")
    total = 0.0
    for a in truth:
        best = max(len(a & b) / len(a | b) for b in detected)
        total += len(a) * best
    return total / T


def coverage_from_points(truth_points, detected_points, T: int) -> float:
    return coverage(points_to_partition(truth_points, T),
                    points_to_partition(detected_points, T), T)


def metric_row(truth_points, detected_points, T: int) -> dict:
    d_det, d_truth = hausdorff_one_sided(truth_points, detected_points)
    return {"count_error": count_error(truth_points, detected_points),
            "d_det_given_truth": d_det, "d_truth_given_det": d_truth,
            "coverage": coverage_from_points(truth_points, detected_points, T)}


def write_metrics_csv(rows, path) -> None:
    keys = ["trial", "count_error", "d_det_given_truth", "d_truth_given_det", "coverage"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for i, r in enumerate(rows):
            w.writerow([r.get("trial", i)] + [repr(float(r[k])) if k != "count_error" else r[k]
                                             for k in keys[1:]])


# ---------------------------------------------------------------------------
# degree-corrected stochastic block model

_LOG_FLOOR = 1e-10


@dataclass
class DcsbmModel:
    """Fitted block model. ``labels`` are 0-based block indices."""

    labels: np.ndarray
    B: np.ndarray            # (K, K) block edge sums
    theta: np.ndarray        # (n,) degree parameters
    pi: np.ndarray           # (K,) mixing proportions
    pl_trace: list = field(default_factory=list)   # per-round pseudo-likelihood traces

    @property
    def K(self) -> int:
        return self.B.shape[0]

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def undirected_support(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.maximum(A, A.T)


def spectral_labels(A, K: int) -> np.ndarray:
    """k-means on row-normalized leading eigenvectors of ``D^-1/2 A D^-1/2``.

    Centers are seeded by farthest-point traversal, so the result does not
    depend on node order (up to exact ties).
    """
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    L = inv[:, None] * A * inv[None, :]
    vals, vecs = np.linalg.eigh(L)
    X = vecs[:, np.argsort(-np.abs(vals))[:K]]
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = np.where(norms > 0, X / np.where(norms > 0, norms, 1.0), 0.0)
    centers = [X[np.argmax(np.linalg.norm(X - X.mean(axis=0), axis=1))]]
    for _ in range(1, K):
        dist = np.min([np.linalg.norm(X - c, axis=1) for c in centers], axis=0)
        centers.append(X[np.argmax(dist)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(X, np.array(centers), minit="matrix", iter=50)
    return labels


def _reseed_empty(labels: np.ndarray, K: int) -> np.ndarray:
    """Give each empty block half of the currently largest block."""
    labels = labels.copy()
    for k in range(K):
        sizes = np.bincount(labels, minlength=K)
        if sizes[k] == 0:
            big = int(np.argmax(sizes))
            members = np.flatnonzero(labels == big)
            labels[members[1::2]] = k
    return labels


def _log_theta(theta):
    with np.errstate(divide="ignore"):
        return np.log(theta)


def pseudo_log_likelihood(b, pi, theta) -> float:
    """``sum_i log sum_l pi_l prod_k theta_lk^{b_ik}``."""
    logits = np.log(pi)[None, :] + _xlogy_rows(b, theta)
    return float(_lse(logits).sum())


def _xlogy_rows(b, theta):
    # b (n, K) @ log(theta).T with 0 * log 0 := 0
    lt = _log_theta(theta)
    out = np.zeros((b.shape[0], theta.shape[0]))
    for l in range(theta.shape[0]):
        with np.errstate(invalid="ignore"):
            term = np.where(b > 0, b * lt[l][None, :], 0.0)
        out[:, l] = term.sum(axis=1)
    return out


def _lse(x):
    m = np.max(x, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]


def _em(b, d, labels, K, max_iter, tol):
    n = b.shape[0]
    onehot = np.eye(K)[labels]
    pi = onehot.mean(axis=0)
    theta = _theta_update(onehot, b, d, K)
    trace = [pseudo_log_likelihood(b, pi, theta)]
    post = onehot
    for _ in range(max_iter):
        logits = np.log(np.maximum(pi, 1e-300))[None, :] + _xlogy_rows(b, theta)
        post = np.exp(logits - _lse(logits)[:, None])
        pi = post.mean(axis=0)
        theta = _theta_update(post, b, d, K)
        trace.append(pseudo_log_likelihood(b, np.maximum(pi, 1e-300), theta))
        if trace[-1] - trace[-2] <= tol * max(1.0, abs(trace[-2])):
            break
    return post, trace


def _theta_update(post, b, d, K):
    num = post.T @ b
    den = post.T @ d
    theta = np.where(den[:, None] > 0, num / np.where(den > 0, den, 1.0)[:, None], 1.0 / K)
    return theta


def fit_dcsbm(A, K: int, init_labels=None, max_rounds: int = 20, em_iter: int = 200,
              tol: float = 1e-10) -> DcsbmModel:
    """Pseudo-likelihood EM for a degree-corrected block model.

    ``A`` is a symmetric non-negative matrix (an adjacency matrix or an
    average of several). Each round recomputes the block sums ``b_ik`` from
    the current labels, runs EM on the mixture, and relabels nodes by their
    most probable block; rounds stop when labels no longer change.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n < K:
        raise ValueError(f"cannot split {n} nodes into {K} blocks")
    if A.sum() <= 0:
        raise ValueError("graph has no edges")
    labels = spectral_labels(A, K) if init_labels is None else np.asarray(init_labels, dtype=int)
    labels = _reseed_empty(labels, K)
    d = A.sum(axis=1)
    traces = []
    for _ in range(max_rounds):
        b = A @ np.eye(K)[labels]
        post, trace = _em(b, d, labels, K, em_iter, tol)
        traces.append(trace)
        new = _reseed_empty(np.argmax(post, axis=1), K)
        if np.array_equal(new, labels):
            break
        labels = new
    onehot = np.eye(K)[labels]
    B = onehot.T @ A @ onehot
    block_deg = B.sum(axis=1)
    theta = np.where(block_deg[labels] > 0, d / np.where(block_deg[labels] > 0,
                                                        block_deg[labels], 1.0), 0.0)
    return DcsbmModel(labels, B, theta, onehot.mean(axis=0), traces)


def dcsbm_log_likelihood(model: DcsbmModel, A) -> float:
    """Block-model log-likelihood of ``A`` under fitted labels, ``theta`` and ``B``::

        sum_ij A_ij log(theta_i theta_j B_{e_i e_j})
          - (sum_kl B_kl + sum_k B_kk sum_{i in k} theta_i^2) / 2
          + sum_k n_k log(n_k / n)
    """
    A = np.asarray(A, dtype=float)
    e, th, B = model.labels, model.theta, model.B
    rate = th[:, None] * th[None, :] * B[e][:, e]
    present = A > 0
    edge_term = float(np.sum(A[present] * np.log(np.maximum(rate[present], _LOG_FLOOR))))
    sq = np.bincount(e, weights=th * th, minlength=model.K)
    penalty = 0.5 * (B.sum() + float(np.sum(np.diag(B) * sq)))
    nk = model.block_sizes
    nz = nk > 0
    size_term = float(np.sum(nk[nz] * np.log(nk[nz] / model.n)))
    return edge_term - penalty + size_term


def bic(model: DcsbmModel, A) -> float:
    """``-2 loglik + (K^2 + n) log(n (n - 1) / 2)``."""
    n = model.n
    return -2.0 * dcsbm_log_likelihood(model, A) + (model.K ** 2 + n) * math.log(n * (n - 1) / 2)


def select_dcsbm(A, K_grid=(2, 3, 4, 5)) -> DcsbmModel:
    """Fit every K in the grid and keep the lowest BIC."""
    best, best_score = None, math.inf
    for K in K_grid:
        if K >= A.shape[0]:
            continue
        model = fit_dcsbm(A, K)
        score = bic(model, A)
        if score < best_score:
            best, best_score = model, score
    if best is None:
        raise ValueError("no admissible K in grid")
    return best


@dataclass
class HoldoutResult:
    total: float
    per_interval: list      # (interval range, K chosen or None, held times, score)


def interval_holdout_score(graphs: GraphSequence, change_points, gap: int,
                           K_grid=(2, 3, 4, 5)) -> HoldoutResult:
    """Held-out block-model log-likelihood of a segmentation.

    Graphs at times that are multiples of ``gap`` are held out. Within each
    interval the remaining graphs are averaged (on their undirected support)
    and a DCSBM is chosen by BIC; the held-out graphs in that interval are
    scored under it. An interval with no remaining graphs borrows the model
    of the nearest earlier interval (or the next one).
    """
    if gap < 2:
        raise ValueError("holdout gap must be at least 2")
    if gap > graphs.T:
        raise ValueError(f"holdout gap {gap} exceeds series length {graphs.T}")
    intervals = points_to_partition(change_points, graphs.T)
    support = np.array([undirected_support(a) for a in graphs.y])
    models = []
    for iv in intervals:
        train = [t for t in iv if t % gap != 0]
        models.append(select_dcsbm(support[[t - 1 for t in train]].mean(axis=0), K_grid)
                      if train and support[[t - 1 for t in train]].sum() > 0 else None)
    if all(m is None for m in models):
        raise ValueError("no interval has training graphs with edges")
    total, rows = 0.0, []
    for j, iv in enumerate(intervals):
        held = [t for t in iv if t % gap == 0]
        model = models[j]
        if model is None:
            prev = [m for m in models[:j] if m is not None]
            model = prev[-1] if prev else next(m for m in models[j + 1:] if m is not None)
        score = sum(dcsbm_log_likelihood(model, support[t - 1]) for t in held)
        total += score
        rows.append((iv, models[j].K if models[j] is not None else None, held, score))
    return HoldoutResult(total, rows)


def write_holdout_csv(rows, path) -> None:
    """Rows of ``(gap, method, loglik)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gap", "method", "loglik"])
        for gap, method, ll in rows:
            w.writerow([gap, method, repr(float(ll))])
