"""Synthetic dynamic networks with planted change points."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import decoder as dec
from .graphs import GraphSequence, dyad_mask, points_to_partition, validate_change_points


def plant_schedule(T: int, change_points) -> list[range]:
    """Contiguous intervals of ``1..T`` split at the change points."""
    return points_to_partition(change_points, T)


def regime_labels(T: int, change_points) -> np.ndarray:
    """0-based interval index for each time ``1..T``."""
    labels = np.empty(T, dtype=int)
    for j, iv in enumerate(plant_schedule(T, change_points)):
        labels[iv.start - 1:iv.stop - 1] = j
    return labels


def even_blocks(n: int, n_blocks: int = 3) -> np.ndarray:
    """Block label per node for ``n_blocks`` (nearly) even contiguous blocks."""
    return np.arange(n) * n_blocks // n


def block_matrix(n: int, within: float, between: float, n_blocks: int = 3) -> np.ndarray:
    lab = even_blocks(n, n_blocks)
    return np.where(lab[:, None] == lab[None, :], within, between)


@dataclass(frozen=True)
class SbmSpec:
    """Two alternating block-model regimes with edge persistence ``rho``.

    Odd-numbered intervals (1st, 3rd, ...) use ``P``, even-numbered ones ``Q``.
    """

    n: int = 50
    T: int = 100
    change_points: tuple = (26, 51, 76)
    p_within: float = 0.5
    p_between: float = 0.3
    q_within: float = 0.45
    q_between: float = 0.2
    rho: float = 0.5
    n_blocks: int = 3
    directed: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("p_within", "p_between", "q_within", "q_between", "rho"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.T < 2 or self.n < 2:
            raise ValueError("need T >= 2 and n >= 2")
        validate_change_points(self.change_points, self.T)


def sbm_probabilities(spec: SbmSpec) -> np.ndarray:
    """The ``(T, n, n)`` edge-probability schedule ``E^t``."""
    P = block_matrix(spec.n, spec.p_within, spec.p_between, spec.n_blocks)
    Q = block_matrix(spec.n, spec.q_within, spec.q_between, spec.n_blocks)
    lab = regime_labels(spec.T, spec.change_points)
    return np.where((lab % 2 == 0)[:, None, None], P[None], Q[None])


def markov_bernoulli(E: np.ndarray, rho: float, rng) -> np.ndarray:
    """Sample ``y^1 ~ Bern(E^1)`` then persist edges with strength ``rho``.

    Present edges stay with probability ``rho (1 - E) + E``; absent dyads
    form with probability ``(1 - rho) E``. Both keep ``E`` stationary.
    """
    T = E.shape[0]
    y = np.empty(E.shape, dtype=np.uint8)
    y[0] = rng.random(E.shape[1:]) < E[0]
    for t in range(1, T):
        p = np.where(y[t - 1] == 1, rho * (1.0 - E[t]) + E[t], (1.0 - rho) * E[t])
        y[t] = rng.random(E.shape[1:]) < p
    return y


def _finalize(y: np.ndarray, directed: bool) -> np.ndarray:
    n = y.shape[1]
    if directed:
        return y * dyad_mask(n, True)
    upper = y * dyad_mask(n, False)
    return upper | upper.transpose(0, 2, 1)


def simulate_sbm(spec: SbmSpec) -> tuple[GraphSequence, list[int]]:
    rng = np.random.default_rng(spec.seed)
    y = markov_bernoulli(sbm_probabilities(spec), spec.rho, rng)
    return GraphSequence(_finalize(y, spec.directed), spec.directed), list(spec.change_points)


@dataclass(frozen=True)
class GeneratorSpec:
    """Latent-regime graphs from a fixed random decoder.

    Latent vectors are drawn from ``N(means[j] * 1, variance * I)`` in
    interval ``j`` (regimes alternate through ``means``), then mapped to
    ``sigmoid(U V^T)`` by a randomly initialized, untrained network.
    """

    n: int = 50
    T: int = 100
    change_points: tuple = (26, 51, 76)
    latent_dim: int = 10
    rank: int = 5
    hidden: int = 64
    means: tuple = (-1.0, 5.0)
    variance: float = 0.1
    directed: bool = True
    seed: int = 0
    weight_seed: int | None = None

    def __post_init__(self):
        if self.latent_dim < 1 or self.rank < 1:
            raise ValueError("latent_dim and rank must be at least 1")
        validate_change_points(self.change_points, self.T)


def generator_network(spec: GeneratorSpec) -> dec.DecoderParameters:
    wseed = spec.seed if spec.weight_seed is None else spec.weight_seed
    return dec.init_decoder(spec.n, spec.latent_dim, spec.rank, spec.hidden, spec.directed,
                            rng=np.random.default_rng([wseed, 1]))


def generator_latents(spec: GeneratorSpec, rng) -> np.ndarray:
    lab = regime_labels(spec.T, spec.change_points)
    centers = np.asarray(spec.means, dtype=float)[lab % len(spec.means)]
    noise = rng.standard_normal((spec.T, spec.latent_dim)) * np.sqrt(spec.variance)
    return centers[:, None] + noise


def simulate_generator(spec: GeneratorSpec, params: dec.DecoderParameters | None = None):
    """Returns ``(graphs, change_points)``; ``params`` overrides the random network."""
    rng = np.random.default_rng([spec.seed, 2])
    params = generator_network(spec) if params is None else params
    z = generator_latents(spec, rng)
    y = dec.sample_graphs(params, z, rng)
    return GraphSequence(y, spec.directed), list(spec.change_points)


def write_truth(change_points, path) -> None:
    Path(path).write_text(json.dumps({"change_points": [int(c) for c in change_points]}) + "\n")


def read_truth(path) -> list[int]:
    return [int(c) for c in json.loads(Path(path).read_text())["change_points"]]
