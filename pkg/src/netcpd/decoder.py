"""Neural graph decoder mapping a latent vector to dyad probabilities.

Architecture (fixed, so gradients are written out by hand)::

    a = tanh(W1 z + b1)                    hidden, width h
    U = reshape(Wu a + bu, (n, k))
    V = reshape(Wv a + bv, (n, k))         directed only
    R = sigmoid(U V^T)   or   sigmoid(U U^T)

The log-likelihood sums Bernoulli log-masses over the dyad set (ordered
pairs ``i != j`` when directed, ``i < j`` otherwise). Probabilities are
clipped to ``[EPS_PROB, 1 - EPS_PROB]`` before taking logs, and the
gradients are those of the clipped function.

Every evaluation routine accepts a batch of latent vectors ``(B, d)``; a
single vector ``(d,)`` is treated as a batch of one and squeezed on return.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graphs import dyad_mask

EPS_PROB = 1e-7
CHECKPOINT_FORMAT = "netcpd-decoder"
CHECKPOINT_VERSION = 1

# upper bound on B * n * n floats held per chunk
_CHUNK_ELEMS = 1 << 21


@dataclass
class DecoderParameters:
    """Weights of the decoder. ``Wv``/``bv`` are ``None`` for undirected graphs."""

    W1: np.ndarray   # (h, d)
    b1: np.ndarray   # (h,)
    Wu: np.ndarray   # (n*k, h)
    bu: np.ndarray   # (n*k,)
    n: int
    k: int
    Wv: np.ndarray | None = None
    bv: np.ndarray | None = None

    def __post_init__(self):
        h, d = self.W1.shape
        if self.b1.shape != (h,):
            raise ValueError(f"b1 must have shape ({h},), got {self.b1.shape}")
        heads = [("Wu", "bu")] + ([("Wv", "bv")] if self.Wv is not None else [])
        if (self.Wv is None) != (self.bv is None):
            raise ValueError("Wv and bv must be given together")
        for wn, bn in heads:
            W, b = getattr(self, wn), getattr(self, bn)
            if W.shape != (self.n * self.k, h):
                raise ValueError(f"{wn} must have shape ({self.n * self.k}, {h}), got {W.shape}")
            if b.shape != (self.n * self.k,):
                raise ValueError(f"{bn} must have shape ({self.n * self.k},), got {b.shape}")

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def directed(self) -> bool:
        return self.Wv is not None

    def arrays(self) -> dict[str, np.ndarray]:
        names = ["W1", "b1", "Wu", "bu"] + (["Wv", "bv"] if self.directed else [])
        return {name: getattr(self, name) for name in names}

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def with_vector(self, vec: np.ndarray) -> "DecoderParameters":
        out, pos = {}, 0
        for name, a in self.arrays().items():
            out[name] = np.asarray(vec[pos:pos + a.size], dtype=float).reshape(a.shape).copy()
            pos += a.size
        if pos != vec.size:
            raise ValueError(f"vector has {vec.size} entries, expected {pos}")
        return replace(self, **out)

    def copy(self) -> "DecoderParameters":
        return replace(self, **{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> "DecoderParameters":
        return replace(self, **{k: np.zeros_like(v) for k, v in self.arrays().items()})

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_decoder(n: int, d: int = 10, k: int = 5, hidden: int = 64,
                 directed: bool = True, rng=None) -> DecoderParameters:
    """Weights uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, biases zero."""
    rng = np.random.default_rng(rng)

    def uni(shape, fan_in):
        a = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    heads = {"Wu": uni((n * k, hidden), hidden), "bu": np.zeros(n * k)}
    if directed:
        heads.update(Wv=uni((n * k, hidden), hidden), bv=np.zeros(n * k))
    return DecoderParameters(W1=uni((hidden, d), d), b1=np.zeros(hidden), n=n, k=k, **heads)


def zero_decoder(n: int, d: int, k: int, hidden: int = 4, directed: bool = True) -> DecoderParameters:
    p = init_decoder(n, d, k, hidden, directed, rng=0)
    return p.zeros_like()


# ---------------------------------------------------------------------------
# forward pass

def _heads(params: DecoderParameters, Z: np.ndarray):
    a = np.tanh(Z @ params.W1.T + params.b1)
    B = Z.shape[0]
    U = (a @ params.Wu.T + params.bu).reshape(B, params.n, params.k)
    V = (a @ params.Wv.T + params.bv).reshape(B, params.n, params.k) if params.directed else U
    return a, U, V


def _as_batch(params: DecoderParameters, z):
    Z = np.asarray(z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.ndim != 2 or Z.shape[1] != params.d:
        raise ValueError(f"latent vector must have length {params.d}, got shape {np.shape(z)}")
    return Z, single


def node_factors(params: DecoderParameters, z):
    """Node-level factors ``(U, V)``; ``V is U`` for undirected decoders."""
    Z, single = _as_batch(params, z)
    _, U, V = _heads(params, Z)
    if single:
        return U[0], V[0]
    return U, V


def forward(params: DecoderParameters, z) -> np.ndarray:
    """Edge-probability matrix ``R``; diagonal entries are set to 0."""
    Z, single = _as_batch(params, z)
    _, U, V = _heads(params, Z)
    R = _sigmoid(U @ V.transpose(0, 2, 1))
    idx = np.arange(params.n)
    R[:, idx, idx] = 0.0
    return R[0] if single else R


def _mask(n, directed):
    return dyad_mask(n, directed).astype(float)


def _sigmoid(x):
    # exp overflow for large |x| only produces inf -> 0/1, which is what we want
    out = np.negative(x)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    return np.reciprocal(out, out=out)


def sample_graphs(params: DecoderParameters, z, rng=None) -> np.ndarray:
    """Draw one adjacency matrix per latent vector from the decoder."""
    rng = np.random.default_rng(rng)
    R = forward(params, z)
    y = (rng.random(R.shape) < R).astype(np.uint8)
    mask = dyad_mask(params.n, params.directed)
    y = y * mask
    if not params.directed:
        y = y | np.swapaxes(y, -1, -2)
    return y


# ---------------------------------------------------------------------------
# likelihood and gradients

def _evaluate(params, Z, Y, weights, want_z, want_phi, want_ll=True):
    """Log-likelihood per row of ``Z`` and optional gradients.

    ``Y`` is ``(B, n, n)`` aligned with ``Z``. The parameter gradient is the
    ``weights``-weighted sum over rows.
    """
    mask = _mask(params.n, params.directed)
    a, U, V = _heads(params, Z)
    R = _sigmoid(U @ V.transpose(0, 2, 1))
    Yf = Y.astype(float)
    ll = None
    if want_ll:
        # probability of the observed value, one log per dyad
        p_obs = np.clip(np.abs((1.0 - Yf) - R), EPS_PROB, 1.0 - EPS_PROB)
        ll = np.einsum("bij,ij->b", np.log(p_obs), mask)
    if not (want_z or want_phi):
        return ll, None, None
    G = np.subtract(Yf, R, out=Yf)
    G *= mask
    G[(R <= EPS_PROB) | (R >= 1.0 - EPS_PROB)] = 0.0
    if params.directed:
        gU = G @ V
        gV = G.transpose(0, 2, 1) @ U
    else:
        gU = (G + G.transpose(0, 2, 1)) @ U
        gV = None
    B = Z.shape[0]
    gU = gU.reshape(B, -1)
    da = gU @ params.Wu
    if gV is not None:
        gV = gV.reshape(B, -1)
        da += gV @ params.Wv
    dpre = da * (1.0 - a * a)
    dz = dpre @ params.W1 if want_z else None
    dphi = None
    if want_phi:
        w = weights[:, None]
        dphi = {"W1": (dpre * w).T @ Z, "b1": (dpre * w).sum(axis=0),
                "Wu": (gU * w).T @ a, "bu": (gU * w).sum(axis=0)}
        if gV is not None:
            dphi["Wv"] = (gV * w).T @ a
            dphi["bv"] = (gV * w).sum(axis=0)
    return ll, dz, dphi


def evaluate(params: DecoderParameters, Z, graphs, index=None, weights=None,
             want_z=False, want_phi=False, want_ll=True):
    """Batched likelihood/gradient evaluation in memory-bounded chunks.

    Parameters
    ----------
    Z : (B, d) latent vectors.
    graphs : (n, n) single graph or (G, n, n) stack.
    index : optional (B,) ints selecting ``graphs[index[b]]`` for row ``b``.
        Required when ``graphs`` is a stack whose length differs from B.
    weights : optional (B,) weights for the summed parameter gradient.

    Returns
    -------
    ll : (B,) log-likelihoods, or None when ``want_ll`` is False
    dz : (B, d) gradients with respect to each row of Z, or None
    dphi : DecoderParameters of summed weighted gradients, or None
    """
    Z = np.asarray(Z, dtype=float)
    graphs = np.asarray(graphs)
    B = Z.shape[0]
    if graphs.ndim == 2:
        graphs = graphs[None]
        index = np.zeros(B, dtype=int)
    if graphs.shape[1:] != (params.n, params.n):
        raise ValueError(f"graphs must be {params.n}x{params.n}, got {graphs.shape[1:]}")
    if index is None:
        if graphs.shape[0] != B:
            raise ValueError("need an index when graph count differs from batch size")
        index = np.arange(B)
    weights = np.ones(B) if weights is None else np.asarray(weights, dtype=float)
    chunk = max(1, _CHUNK_ELEMS // (params.n * params.n))
    ll = np.empty(B) if want_ll else None
    dz = np.empty_like(Z) if want_z else None
    acc = None
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        l, g, p = _evaluate(params, Z[lo:hi], graphs[index[lo:hi]], weights[lo:hi],
                            want_z, want_phi, want_ll)
        if want_ll:
            ll[lo:hi] = l
        if want_z:
            dz[lo:hi] = g
        if want_phi:
            if acc is None:
                acc = p
            else:
                for key in acc:
                    acc[key] += p[key]
    dphi = replace(params, **acc) if want_phi else None
    return ll, dz, dphi


def log_likelihood(params: DecoderParameters, z, y) -> float | np.ndarray:
    """Bernoulli log-likelihood of graph ``y`` under latent ``z``."""
    Z, single = _as_batch(params, z)
    ll, _, _ = evaluate(params, Z, y)
    return float(ll[0]) if single else ll


def grad_z(params: DecoderParameters, z, y) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``z``."""
    Z, single = _as_batch(params, z)
    _, dz, _ = evaluate(params, Z, y, want_z=True, want_ll=False)
    return dz[0] if single else dz


def grad_phi(params: DecoderParameters, z, y) -> DecoderParameters:
    """Gradient of :func:`log_likelihood` with respect to every weight.

    For a batch of latent vectors the gradients are summed.
    """
    Z, _ = _as_batch(params, z)
    _, _, dphi = evaluate(params, Z, y, want_phi=True, want_ll=False)
    return dphi


def residual_grad_phi(params: DecoderParameters, z, target) -> DecoderParameters:
    """Parameter gradient for a real-valued target in place of ``y``.

    Uses the same residual ``target - R`` that drives :func:`grad_phi`; with
    ``target = forward(params, z)`` the result is exactly zero.
    """
    Z, _ = _as_batch(params, z)
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = np.broadcast_to(target, (Z.shape[0],) + target.shape)
    _, _, dphi = _evaluate(params, Z, target, np.ones(Z.shape[0]), False, True, False)
    return replace(params, **dphi)


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(params: DecoderParameters, grads: DecoderParameters, state: AdamState,
              lr: float) -> tuple[DecoderParameters, AdamState]:
    """One Adam descent step along ``grads`` (a loss gradient)."""
    g = grads.to_vector()
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** step)
    v_hat = v / (1 - state.beta2 ** step)
    theta = params.to_vector() - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=m, v=v, step=step)
    return params.with_vector(theta), new_state


# ---------------------------------------------------------------------------
# checkpoints

def save_decoder(params: DecoderParameters, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "n": params.n, "d": params.d, "k": params.k,
        "hidden": params.hidden, "directed": params.directed,
        "arrays": {name: a.tolist() for name, a in params.arrays().items()},
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_decoder(path) -> DecoderParameters:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a decoder checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    arrs = {k: np.asarray(v, dtype=float) for k, v in doc["arrays"].items()}
    p = DecoderParameters(n=doc["n"], k=doc["k"], **arrs)
    if (p.d, p.hidden, p.directed) != (doc["d"], doc["hidden"], doc["directed"]):
        raise ValueError("checkpoint header does not match stored arrays")
    return p
