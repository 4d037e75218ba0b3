"""ADMM fitting of time-varying prior means under a group fused lasso penalty.

Each outer iteration:

1. draw posterior samples of ``z^t`` by Langevin dynamics around ``mu^t``;
2. set ``mu^t = (E[z^t | y^t] + kappa (nu^t - w^t)) / (1 + kappa)``;
3. take Adam steps on the decoder using the same samples;
4. solve the group fused lasso step for ``(gamma, beta)`` with target ``mu + w``;
5. update the scaled dual ``w <- mu - nu + w``;
6. rebalance ``kappa`` from the primal and dual residuals;
7. estimate the marginal log-likelihood and test the stopping rule.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import decoder as dec
from . import gfl
from .graphs import GraphSequence
from .langevin import LangevinConfig, posterior_mean, sample_posterior_all, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmConfig:
    """Settings for :func:`fit`.

    ``n_iter``, ``decoder_steps`` and ``bcd_sweeps`` are the outer ADMM
    iterations, Adam steps per iteration and block coordinate sweeps per
    iteration. ``loglik_samples`` prior draws per time point feed the
    likelihood estimate used by the stopping rule.
    """

    lam: float = 50.0
    kappa: float = 10.0
    n_iter: int = 50
    decoder_steps: int = 20
    bcd_sweeps: int = 20
    lr: float = 0.01
    tol: float = 1e-5
    patience: int = 5
    latent_dim: int = 10
    rank: int = 5
    hidden: int = 64
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    loglik_samples: int = 200
    kkt_tol: float = 1e-6
    adapt_kappa: bool = True
    seed: int = 0
    # test hook: drop the decoder term from sampling and skip decoder updates
    likelihood: bool = True

    def __post_init__(self):
        for name in ("n_iter", "decoder_steps", "bcd_sweeps", "patience", "latent_dim",
                     "rank", "hidden", "loglik_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not (self.tol > 0 and self.kkt_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.kappa > 0 and self.lam >= 0 and self.lr >= 0):
            raise ValueError("need kappa > 0, lam >= 0, lr >= 0")

    def with_seed(self, seed: int) -> "AdmmConfig":
        return replace(self, seed=seed, langevin=replace(self.langevin, seed=seed))


@dataclass
class AdmmState:
    mu: np.ndarray
    params: dec.DecoderParameters
    gamma: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    kappa: float
    adam: dec.AdamState
    iteration: int = 0
    history: list = field(default_factory=list)
    kappa_events: list = field(default_factory=list)

    @property
    def nu(self) -> np.ndarray:
        return gfl.reconstruct(self.gamma, self.beta)


@dataclass
class FitResult:
    mu: np.ndarray
    params: dec.DecoderParameters
    state: AdmmState
    converged: bool

    @property
    def history(self) -> list:
        return self.state.history


# ---------------------------------------------------------------------------
# individual updates

def update_mu(post_mean, nu, w, kappa: float) -> np.ndarray:
    """Closed-form prior-mean update: a kappa-weighted average."""
    post_mean, nu, w = (np.asarray(a, dtype=float) for a in (post_mean, nu, w))
    out = (post_mean + kappa * (nu - w)) / (1.0 + kappa)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite prior mean update")
    return out


def decoder_loss_grad(params, graphs, samples) -> dec.DecoderParameters:
    """Gradient of ``-sum_t mean_u log p(y^t | z_u^t)`` with respect to the decoder."""
    T, s, d = samples.shape
    index = np.repeat(np.arange(T), s)
    _, _, g = dec.evaluate(params, samples.reshape(T * s, d), graphs, index,
                           weights=np.full(T * s, -1.0 / s), want_phi=True, want_ll=False)
    return g


def update_phi(params, adam: dec.AdamState, graphs, samples, lr: float, steps: int):
    """``steps`` Adam steps on the Monte Carlo decoder loss."""
    for b in range(steps):
        g = decoder_loss_grad(params, graphs, samples)
        try:
            params, adam = dec.adam_step(params, g, adam, lr)
        except FloatingPointError as exc:
            raise FloatingPointError(f"decoder step {b + 1}: {exc}") from exc
    return params, adam


def sampled_nll(params, graphs, samples) -> float:
    T, s, d = samples.shape
    ll, _, _ = dec.evaluate(params, samples.reshape(T * s, d), graphs, np.repeat(np.arange(T), s))
    return -float(ll.sum()) / s


def update_dual(mu, nu, w) -> np.ndarray:
    return np.asarray(mu) - np.asarray(nu) + np.asarray(w)


def residuals(mu, nu, nu_prev) -> tuple[float, float]:
    """Root-mean-square primal (``mu - nu``) and dual (``nu - nu_prev``) residuals."""
    mu, nu, nu_prev = (np.asarray(a, dtype=float) for a in (mu, nu, nu_prev))
    size = mu.size
    return (float(np.sqrt(np.sum((mu - nu) ** 2) / size)),
            float(np.sqrt(np.sum((nu - nu_prev) ** 2) / size)))


def adapt_kappa(kappa: float, w, r_primal: float, r_dual: float, factor: float = 2.0,
                ratio: float = 10.0):
    """Residual balancing. Returns ``(kappa, w, changed)``."""
    w = np.asarray(w, dtype=float)
    if r_primal > ratio * r_dual:
        return kappa * factor, w / factor, True
    if r_dual > ratio * r_primal:
        return kappa / factor, w * factor, True
    return kappa, w, False


def log_marginal_from_samples(params, graphs, samples) -> np.ndarray:
    """Per-time log-sum-exp estimate of ``log p(y^t)`` from prior draws.

    ``samples`` is ``(T, s, d)`` drawn from each time point's prior.
    """
    T, s, d = samples.shape
    ll, _, _ = dec.evaluate(params, samples.reshape(T * s, d), graphs, np.repeat(np.arange(T), s))
    ll = ll.reshape(T, s)
    # logsumexp subtracts the per-row maximum before exponentiating
    return logsumexp(ll, axis=1) - np.log(s)


def approximate_log_likelihood(params, mu, graphs, n_samples: int, rng=None) -> float:
    """Monte Carlo estimate of ``sum_t log p(y^t)`` under priors ``N(mu^t, I)``."""
    rng = np.random.default_rng(rng)
    mu = np.asarray(mu, dtype=float)
    samples = mu[:, None, :] + rng.standard_normal((mu.shape[0], n_samples, mu.shape[1]))
    return float(log_marginal_from_samples(params, graphs, samples).sum())


def should_stop(history, tol: float, patience: int) -> bool:
    """True when the last ``patience`` relative changes are all within ``tol``."""
    h = np.asarray(history, dtype=float)
    if h.size < patience + 1:
        return False
    prev, cur = h[-patience - 1:-1], h[-patience:]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs((cur - prev) / prev)
    rel = np.where(prev == 0, np.where(cur == prev, 0.0, np.inf), rel)
    return bool(np.all(rel <= tol))


# ---------------------------------------------------------------------------
# driver

def _as_array(graphs):
    if isinstance(graphs, GraphSequence):
        return graphs.y, graphs.directed
    raise TypeError("graphs must be a GraphSequence")


def init_state(graphs: GraphSequence, config: AdmmConfig) -> AdmmState:
    T, d = graphs.T, config.latent_dim
    params = dec.init_decoder(graphs.n, d, config.rank, config.hidden, graphs.directed,
                              rng=stream(config.seed, 0))
    return AdmmState(mu=np.zeros((T, d)), params=params, gamma=np.zeros(d),
                     beta=np.zeros((T - 1, d)), w=np.zeros((T, d)), kappa=config.kappa,
                     adam=dec.AdamState.fresh(params.size))


def step(state: AdmmState, Y: np.ndarray, config: AdmmConfig) -> AdmmState:
    """One outer ADMM iteration, in place. Returns ``state``."""
    a = state.iteration + 1
    nu_prev = state.nu
    samples = sample_posterior_all(state.params, state.mu, Y, config.langevin,
                                   likelihood=config.likelihood, key=(1, a))
    mu = update_mu(posterior_mean(samples), nu_prev, state.w, state.kappa)
    if config.likelihood:
        state.params, state.adam = update_phi(state.params, state.adam, Y, samples,
                                              config.lr, config.decoder_steps)
    problem = gfl.GflProblem(mu + state.w, config.lam, state.kappa)
    sol = gfl.solve(problem, gfl.GflSolution(state.gamma, state.beta),
                    max_sweeps=config.bcd_sweeps, tol=config.kkt_tol)
    state.gamma, state.beta = sol.gamma, sol.beta
    nu = state.nu
    state.w = update_dual(mu, nu, state.w)
    state.mu = mu
    r_primal, r_dual = residuals(mu, nu, nu_prev)
    kappa_used = state.kappa
    if config.adapt_kappa:
        state.kappa, state.w, changed = adapt_kappa(state.kappa, state.w, r_primal, r_dual)
        if changed:
            state.kappa_events.append((a, r_primal, r_dual, kappa_used, state.kappa))
            log.debug("iteration %d: kappa %g -> %g (r_primal=%g, r_dual=%g)",
                      a, kappa_used, state.kappa, r_primal, r_dual)
    loglik = approximate_log_likelihood(state.params, mu, Y, config.loglik_samples,
                                        rng=stream(config.seed, 2, a))
    state.history.append({"iteration": a, "r_primal": r_primal, "r_dual": r_dual,
                          "kappa": kappa_used, "loglik": loglik, "kkt": sol.kkt})
    state.iteration = a
    return state


def fit(graphs: GraphSequence, config: AdmmConfig, callback=None) -> FitResult:
    """Learn prior means and decoder weights for a graph sequence.

    Parameters
    ----------
    graphs : GraphSequence with ``T >= 2``.
    config : AdmmConfig
    callback : optional callable receiving the state after every iteration.
    """
    Y, _ = _as_array(graphs)
    if graphs.T < 2:
        raise ValueError("fitting needs at least two time points")
    state = init_state(graphs, config)
    converged = False
    for a in range(1, config.n_iter + 1):
        try:
            step(state, Y, config)
        except FloatingPointError as exc:
            raise FloatingPointError(f"ADMM iteration {a}: {exc}") from exc
        if callback is not None:
            callback(state)
        if should_stop([h["loglik"] for h in state.history], config.tol, config.patience):
            converged = True
            break
    return FitResult(state.mu.copy(), state.params, state, converged)


def write_diagnostics_csv(result: FitResult, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "r_primal", "r_dual", "kappa", "loglik"])
        for h in result.history:
            wr.writerow([h["iteration"], repr(h["r_primal"]), repr(h["r_dual"]),
                         repr(h["kappa"]), repr(h["loglik"])])


def write_matrix_csv(mat, path, prefix="mu") -> None:
    mat = np.asarray(mat, dtype=float)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"{prefix}_{j + 1}" for j in range(mat.shape[1])])
        for t, row in enumerate(mat, start=1):
            wr.writerow([t] + [repr(float(x)) for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]])
