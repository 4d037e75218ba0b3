"""Group fused lasso proximal step solved as a group lasso.

Minimizes over ``gamma`` (1 x d) and ``beta`` ((T-1) x d)::

    lam * sum_t ||beta_t||_2 + (kappa / 2) * ||M - 1 gamma - X beta||_F^2

where ``X`` is the T x (T-1) lower-triangular design with ``X[i, j] = 1`` for
``i > j``, so ``nu = 1 gamma + X beta`` has ``nu[0] = gamma`` and
``nu[t + 1] - nu[t] = beta[t]``. ``X`` is never formed: ``X[:, t]^T v`` is
the suffix sum ``v[t + 1:].sum(0)`` and ``X beta`` is a shifted cumulative
sum. Row indices here are 0-based (``t = 0..T-2`` for beta).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GflProblem:
    M: np.ndarray
    lam: float
    kappa: float

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        if self.M.ndim != 2 or self.M.shape[0] < 2:
            raise ValueError("M must be a (T, d) array with T >= 2")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be finite and non-negative")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError("kappa must be finite and positive")

    @property
    def T(self) -> int:
        return self.M.shape[0]

    @property
    def d(self) -> int:
        return self.M.shape[1]


@dataclass
class GflSolution:
    gamma: np.ndarray
    beta: np.ndarray
    kkt: float = np.inf
    sweeps: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def nu(self) -> np.ndarray:
        return reconstruct(self.gamma, self.beta)

    @classmethod
    def zeros(cls, T: int, d: int) -> "GflSolution":
        return cls(np.zeros(d), np.zeros((T - 1, d)))


def design_column_dot(T: int, t: int) -> int:
    """``X[:, t]^T X[:, t]`` for the 1-based column ``t``: the count ``T - t``."""
    if not 1 <= t <= T - 1:
        raise IndexError(f"column {t} out of range 1..{T - 1}")
    return T - t


def reconstruct(gamma, beta) -> np.ndarray:
    """``nu = 1 gamma + X beta``."""
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    nu = np.empty((beta.shape[0] + 1, gamma.size))
    nu[0] = gamma
    np.cumsum(beta, axis=0, out=nu[1:])
    nu[1:] += gamma
    return nu


def split(nu) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`reconstruct`."""
    nu = np.asarray(nu, dtype=float)
    return nu[0].copy(), np.diff(nu, axis=0)


def _xt(v: np.ndarray) -> np.ndarray:
    """``X^T v``: row t is ``v[t + 1:].sum(0)``."""
    return np.cumsum(v[::-1], axis=0)[::-1][1:]


def residual(problem: GflProblem, gamma, beta) -> np.ndarray:
    return problem.M - reconstruct(gamma, beta)


def objective(problem: GflProblem, gamma, beta) -> float:
    r = residual(problem, gamma, beta)
    return float(problem.lam * np.linalg.norm(beta, axis=1).sum()
                 + 0.5 * problem.kappa * np.sum(r * r))


def block_shrink(b: np.ndarray, lam: float, scale: float) -> np.ndarray:
    """``(1 / scale) * (1 - lam / ||b||)_+ * b``; zero when ``||b|| <= lam``."""
    nb = np.linalg.norm(b)
    if nb <= lam:
        return np.zeros_like(b)
    return (1.0 - lam / nb) * b / scale


def update_beta_row(problem: GflProblem, gamma, beta, t: int) -> np.ndarray:
    """Exact minimizer over the 0-based row ``t`` of beta, others fixed."""
    T = problem.T
    r = residual(problem, gamma, beta)
    b = problem.kappa * (r[t + 1:].sum(axis=0) + (T - 1 - t) * beta[t])
    return block_shrink(b, problem.lam, problem.kappa * (T - 1 - t))


def update_gamma(problem: GflProblem, beta) -> np.ndarray:
    """``gamma = mean over rows of (M - X beta)``."""
    xb = reconstruct(np.zeros(problem.d), beta)
    return (problem.M - xb).mean(axis=0)


def sweep(problem: GflProblem, gamma, beta) -> np.ndarray:
    """One ascending block-coordinate pass over all beta rows, in O(T d).

    Updating row ``t`` by ``delta`` lowers the residual of every later row by
    ``delta``, so the suffix sum seen by row ``t' > t`` drops by
    ``(T - 1 - t') * delta``; the running total of deltas carries this.
    """
    T = problem.T
    lam, kappa = problem.lam, problem.kappa
    beta = beta.copy()
    suffix = _xt(residual(problem, gamma, beta))
    shift = np.zeros(problem.d)
    for t in range(T - 1):
        count = T - 1 - t
        s_t = suffix[t] - count * shift
        old = beta[t]
        new = block_shrink(kappa * (s_t + count * old), lam, kappa * count)
        shift += new - old
        beta[t] = new
    return beta


def kkt_residual(problem: GflProblem, gamma, beta) -> float:
    """Worst violation of the block optimality conditions for beta."""
    grad = problem.kappa * _xt(residual(problem, gamma, beta))
    norms = np.linalg.norm(beta, axis=1)
    active = norms > 0
    viol = np.maximum(np.linalg.norm(grad, axis=1) - problem.lam, 0.0)
    if np.any(active):
        unit = beta[active] / norms[active, None]
        viol[active] = np.linalg.norm(problem.lam * unit - grad[active], axis=1)
    return float(viol.max()) if viol.size else 0.0


def solve(problem: GflProblem, init: GflSolution | None = None, max_sweeps: int = 20,
          tol: float = 1e-6, check_monotone: bool = False) -> GflSolution:
    """Alternate beta sweeps and gamma updates.

    Stops once the KKT residual is at most ``tol`` or after ``max_sweeps``
    sweeps; the last iterate (which has the lowest objective) is returned
    with its residual.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be at least 1")
    if init is None:
        init = GflSolution.zeros(problem.T, problem.d)
    gamma = np.asarray(init.gamma, dtype=float).copy()
    beta = np.asarray(init.beta, dtype=float).copy()
    trace = [objective(problem, gamma, beta)] if check_monotone else []
    kkt = np.inf
    n = 0
    for n in range(1, max_sweeps + 1):
        beta = sweep(problem, gamma, beta)
        gamma = update_gamma(problem, beta)
        if check_monotone:
            obj = objective(problem, gamma, beta)
            if obj > trace[-1] * (1 + 1e-12) + 1e-12:
                raise AssertionError(f"objective increased at sweep {n}: {trace[-1]} -> {obj}")
            trace.append(obj)
        kkt = kkt_residual(problem, gamma, beta)
        if kkt <= tol:
            break
    return GflSolution(gamma, beta, kkt, n, trace)
