"""Clean-token predictors for masked inputs.

Denoiser outputs are arrays of shape ``(B, L, V + 1)``. The mask column is
always exactly zero and unmasked input positions are point masses on the
input token (carry-over).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import ConfigError, RngStream, StardiffError, as_batch, categorical_from_uniform
from .corpus import MarkovChain
from .noise import NoiseSchedule, corrupt


class ImpossibleEvidence(StardiffError, ValueError):
    pass


def _carry(x: np.ndarray, real: np.ndarray) -> np.ndarray:
    """Append the zero mask column and overwrite unmasked positions with point masses."""
    B, L, V = real.shape
    out = np.zeros((B, L, V + 1))
    out[..., :V] = real
    seen = x != V
    b, i = np.nonzero(seen)
    out[b, i, :] = 0.0
    out[b, i, x[b, i]] = 1.0
    return out


class Denoiser:
    vocab_size: int

    @property
    def mask_id(self) -> int:
        return self.vocab_size

    def denoise(self, x_t, t: float | None = None) -> np.ndarray:
        """Per-position clean-token distributions; ``t`` is accepted and ignored."""
        raise NotImplementedError

    def loo(self, x0) -> np.ndarray:
        """``p(x_i | x_{-i})`` for every position of clean sequences, shape ``(B, L, V)``.

        Equivalent to denoising ``x0`` with only position ``i`` masked, read at ``i``.
        """
        x0 = as_batch(x0)
        B, L = x0.shape
        res = np.empty((B, L, self.vocab_size))
        for i in range(L):
            xi = x0.copy()
            xi[:, i] = self.mask_id
            res[:, i] = self.denoise(xi)[:, i, : self.vocab_size]
        return res


class MarkovOracleDenoiser(Denoiser):
    """Exact posterior marginals of a Markov chain given the unmasked tokens."""

    def __init__(self, chain: MarkovChain):
        self.chain = chain
        self.vocab_size = chain.size

    def denoise(self, x_t, t=None):
        x = as_batch(x_t)
        B, L = x.shape
        V = self.vocab_size
        if np.any(x > V) or np.any(x < 0):
            raise ConfigError("token ids outside the chain vocabulary")
        ev = np.ones((B, L, V))
        b, i = np.nonzero(x != V)
        ev[b, i, :] = 0.0
        ev[b, i, x[b, i]] = 1.0

        # scaled forward-backward; per-position renormalisation keeps long chains finite
        fwd = np.empty((B, L, V))
        bwd = np.empty((B, L, V))
        f = self.chain.pi[None, :] * ev[:, 0]
        for j in range(L):
            if j > 0:
                f = (f @ self.chain.A) * ev[:, j]
            z = f.sum(axis=1, keepdims=True)
            if np.any(z <= 0):
                raise ImpossibleEvidence("observed tokens have zero probability under the chain")
            f = f / z
            fwd[:, j] = f
        g = np.ones((B, V))
        bwd[:, L - 1] = g
        for j in range(L - 2, -1, -1):
            g = (ev[:, j + 1] * g) @ self.chain.A.T
            g = g / g.sum(axis=1, keepdims=True)
            bwd[:, j] = g
        post = fwd * bwd
        post = post / post.sum(axis=2, keepdims=True)
        return _carry(x, post)

    def loo(self, x0):
        x = as_batch(x0)
        A, pi = self.chain.A, self.chain.pi
        B, L = x.shape
        left = np.empty((B, L, self.vocab_size))
        left[:, 0] = pi[None, :]
        if L > 1:
            left[:, 1:] = A[x[:, :-1]]
        right = np.ones((B, L, self.vocab_size))
        if L > 1:
            right[:, :-1] = A[:, x[:, 1:]].transpose(1, 2, 0)
        p = left * right
        z = p.sum(axis=2, keepdims=True)
        return np.where(z > 0, p / np.where(z > 0, z, 1.0), 1.0 / self.vocab_size)

    def to_dict(self):
        return {"kind": "markov_oracle", "chain": self.chain.to_dict()}


class TabularDenoiser(Denoiser):
    """Counts of the clean token given the (possibly masked) immediate neighbours.

    Context ids are real tokens, ``V`` for a masked neighbour and ``V + 1``
    for the sequence boundary.
    """

    def __init__(self, vocab_size: int, counts: np.ndarray | None = None, smoothing: float = 1.0):
        self.vocab_size = int(vocab_size)
        V = self.vocab_size
        self.counts = np.zeros((V + 2, V + 2, V)) if counts is None else np.asarray(counts, dtype=float)
        if self.counts.shape != (V + 2, V + 2, V) or np.any(self.counts < 0):
            raise ConfigError("tabular counts have the wrong shape or negative entries")
        if smoothing < 0:
            raise ConfigError("smoothing must be >= 0")
        self.smoothing = float(smoothing)

    def _contexts(self, x: np.ndarray):
        B, L = x.shape
        edge = self.vocab_size + 1
        left = np.full((B, L), edge, dtype=np.int64)
        right = np.full((B, L), edge, dtype=np.int64)
        left[:, 1:] = x[:, :-1]
        right[:, :-1] = x[:, 1:]
        return left, right

    def table(self) -> np.ndarray:
        c = self.counts + self.smoothing
        tot = c.sum(axis=2, keepdims=True)
        return np.where(tot > 0, c / np.where(tot > 0, tot, 1.0), 1.0 / self.vocab_size)

    def denoise(self, x_t, t=None):
        x = as_batch(x_t)
        if np.any(x > self.vocab_size) or np.any(x < 0):
            raise ConfigError("token ids outside the vocabulary")
        left, right = self._contexts(x)
        return _carry(x, self.table()[left, right])

    def loo(self, x0):
        left, right = self._contexts(as_batch(x0))
        return self.table()[left, right]

    def merge(self, other: "TabularDenoiser") -> "TabularDenoiser":
        if other.vocab_size != self.vocab_size:
            raise ConfigError("cannot merge tables over different vocabularies")
        return TabularDenoiser(self.vocab_size, self.counts + other.counts, self.smoothing)

    def to_dict(self):
        return {
            "kind": "tabular",
            "vocab": self.vocab_size,
            "smoothing": self.smoothing,
            "counts": self.counts.astype(int).tolist() if np.all(self.counts == np.round(self.counts)) else self.counts.tolist(),
        }


def oracle_denoise(d: MarkovOracleDenoiser, x_t) -> np.ndarray:
    return d.denoise(x_t)


def tabular_fit(
    dataset,
    schedule: NoiseSchedule,
    rng: RngStream,
    vocab_size: int,
    smoothing: float = 1.0,
    repeats: int = 1,
) -> TabularDenoiser:
    """Count-based fit: corrupt each sequence at ``t ~ U(0, 1)`` and tally masked positions."""
    x0 = np.asarray(dataset, dtype=np.int64)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ConfigError("tabular_fit needs a non-empty dataset of equal-length sequences")
    model = TabularDenoiser(vocab_size, smoothing=smoothing)
    V = vocab_size
    for _ in range(repeats):
        t = rng.random(x0.shape[0])
        alpha = np.array([schedule.alpha(float(ti)) for ti in t])
        xt = corrupt(x0, alpha, rng, V)
        left, right = model._contexts(xt)
        m = xt == V
        np.add.at(model.counts, (left[m], right[m], x0[m]), 1.0)
    return model


def tempered(out: np.ndarray, tau: float) -> np.ndarray:
    """Real-token part of a denoiser output raised to ``1/tau`` and renormalised.

    ``tau = 0`` is argmax with the lowest index winning ties.
    """
    V = out.shape[-1] - 1
    p = out[..., :V]
    if tau == 1.0:
        return p
    if tau == 0.0:
        return np.eye(V)[np.argmax(p, axis=-1)]
    with np.errstate(divide="ignore"):
        lp = np.log(p) / tau
    lp = lp - lp.max(axis=-1, keepdims=True)
    q = np.exp(lp)
    return q / q.sum(axis=-1, keepdims=True)


def sample_candidate(out: np.ndarray, tau_diffuse: float, rng: RngStream, x_t=None) -> np.ndarray:
    """Draw a clean candidate per position; carried positions are copied verbatim."""
    if tau_diffuse < 0:
        raise ConfigError("tau_diffuse must be >= 0")
    out = np.asarray(out)
    single = out.ndim == 2
    o = out[None] if single else out
    p = tempered(o, tau_diffuse)
    cand = categorical_from_uniform(p, rng.random(p.shape[:2]))
    if x_t is not None:
        x = as_batch(x_t)
        cand = np.where(x != o.shape[-1] - 1, x, cand)
    return cand[0] if single else cand


def load_denoiser(obj) -> Denoiser:
    d = json.loads(Path(obj).read_text()) if isinstance(obj, (str, Path)) else obj
    kind = d.get("kind")
    if kind == "markov_oracle":
        return MarkovOracleDenoiser(MarkovChain.from_dict(d["chain"]))
    if kind == "tabular":
        return TabularDenoiser(d["vocab"], np.array(d["counts"], dtype=float), d["smoothing"])
    raise ConfigError(f"unknown denoiser kind {kind!r}")


def save_denoiser(path, d: Denoiser, extra: dict | None = None) -> None:
    obj = d.to_dict()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n")
