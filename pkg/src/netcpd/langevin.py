"""Short-run Langevin sampling of latent graph representations.

The chain targets ``p(z | y) ∝ p(y | z) N(z; mu, I)`` with the unadjusted
update::

    z <- z + step * (grad_z log p(y | z) - (z - mu)) + sqrt(2 * step) * eps

Every chain starts at the prior mean and is restarted on each call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import decoder as dec


@dataclass(frozen=True)
class LangevinConfig:
    step_size: float = 0.5
    n_steps: int = 30
    n_samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValueError("step_size must be non-negative")
        if self.n_steps < 1 or self.n_samples < 1:
            raise ValueError("n_steps and n_samples must be at least 1")


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; equal inputs give equal streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def sample_posterior(params, mu_t, y_t, cfg: LangevinConfig, *, likelihood=True,
                     key=(0,)) -> np.ndarray:
    """Draw ``cfg.n_samples`` latent vectors for a single graph.

    Returns an array of shape ``(n_samples, d)``.
    """
    mu_t = np.asarray(mu_t, dtype=float)
    return sample_posterior_all(params, mu_t[None], np.asarray(y_t)[None], cfg,
                                likelihood=likelihood, key=key)[0]


def sample_posterior_all(params, mu, graphs, cfg: LangevinConfig, *, likelihood=True,
                         key=(0,)) -> np.ndarray:
    """Run independent chain groups for every time point at once.

    Parameters
    ----------
    params : DecoderParameters or None
        May be None only when ``likelihood`` is False.
    mu : (T, d) prior means.
    graphs : (T, n, n) observed adjacency matrices.
    likelihood : bool
        If False the decoder term is dropped and the chain is an
        Euler-Maruyama Ornstein-Uhlenbeck process around ``mu``.
    key : tuple of ints
        Extra stream key (e.g. the ADMM iteration), combined with ``cfg.seed``
        and the time index to seed each time point's noise.

    Returns
    -------
    samples : (T, n_samples, d)
    """
    mu = np.asarray(mu, dtype=float)
    T, d = mu.shape
    s = cfg.n_samples
    rngs = [stream(cfg.seed, *key, t) for t in range(T)]
    z = np.repeat(mu[:, None, :], s, axis=1)
    if cfg.step_size == 0:
        return z
    noise_scale = np.sqrt(2.0 * cfg.step_size)
    index = np.repeat(np.arange(T), s)
    eps = np.empty_like(z)
    for step in range(cfg.n_steps):
        drift = mu[:, None, :] - z
        if likelihood:
            _, gz, _ = dec.evaluate(params, z.reshape(T * s, d), graphs, index,
                                    want_z=True, want_ll=False)
            drift += gz.reshape(T, s, d)
        for t in range(T):
            eps[t] = rngs[t].standard_normal((s, d))
        z = z + cfg.step_size * drift + noise_scale * eps
        if not np.all(np.isfinite(z)):
            t, chain = np.argwhere(~np.isfinite(z).all(axis=2))[0]
            raise FloatingPointError(
                f"non-finite Langevin state at step {step + 1}, time {t + 1}, chain {chain}")
    return z


def posterior_mean(samples) -> np.ndarray:
    """Average over the sample axis (second to last)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-2] < 1:
        raise ValueError("need at least one sample")
    return samples.mean(axis=-2)


def sample_prior(mu_t, count: int, rng=None) -> np.ndarray:
    """``count`` draws from ``N(mu_t, I)``; ``mu_t`` may be ``(d,)`` or ``(T, d)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(rng)
    mu_t = np.asarray(mu_t, dtype=float)
    if mu_t.ndim == 1:
        return mu_t + rng.standard_normal((count, mu_t.size))
    return mu_t[:, None, :] + rng.standard_normal((mu_t.shape[0], count, mu_t.shape[1]))
