"""Synthetic data sources with exactly computable likelihoods, and dataset files."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import ConfigError, RngStream, StardiffError, categorical_from_uniform


class ParseError(StardiffError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarkovChain:
    pi: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "A", A)
        V = pi.shape[0]
        if V < 2 or A.shape != (V, V):
            raise ConfigError(f"chain needs pi of size V >= 2 and A of shape (V, V); got {pi.shape}, {A.shape}")
        if np.any(pi < 0) or np.any(A < 0):
            raise ConfigError("chain entries must be non-negative")
        if abs(pi.sum() - 1) > 1e-9 or np.any(np.abs(A.sum(axis=1) - 1) > 1e-9):
            raise ConfigError("pi and every row of A must sum to 1")

    @property
    def size(self) -> int:
        return self.pi.shape[0]

    def to_dict(self) -> dict:
        return {"pi": self.pi.tolist(), "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovChain":
        return cls(np.array(d["pi"], dtype=float), np.array(d["A"], dtype=float))

    def stationary(self) -> np.ndarray:
        w, v = np.linalg.eig(self.A.T)
        k = int(np.argmin(np.abs(w - 1)))
        s = np.abs(np.real(v[:, k]))
        return s / s.sum()

    def entropy_rate(self) -> float:
        """Entropy rate in nats under the stationary distribution."""
        mu = self.stationary()
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(self.A > 0, self.A * np.log(self.A), 0.0).sum(axis=1)
        return float(mu @ h)


def sticky_chain(size: int, stay: float) -> MarkovChain:
    """Uniform start, stay with probability ``stay``, else move uniformly."""
    off = (1 - stay) / (size - 1)
    A = np.full((size, size), off)
    np.fill_diagonal(A, stay)
    return MarkovChain(np.full(size, 1 / size), A)


def cyclic_chain(size: int, forward: float) -> MarkovChain:
    """Uniform start, step ``i -> i+1 (mod V)`` with probability ``forward``."""
    off = (1 - forward) / (size - 1)
    A = np.full((size, size), off)
    for i in range(size):
        A[i, (i + 1) % size] = forward
    return MarkovChain(np.full(size, 1 / size), A)


def markov_sample(mc: MarkovChain, L: int, rng: RngStream, count: int | None = None) -> np.ndarray:
    """Draw ``count`` sequences (or a single one when ``count`` is None)."""
    n = 1 if count is None else count
    u = rng.random((n, L))
    x = np.empty((n, L), dtype=np.int64)
    x[:, 0] = categorical_from_uniform(np.broadcast_to(mc.pi, (n, mc.size)), u[:, 0])
    for i in range(1, L):
        x[:, i] = categorical_from_uniform(mc.A[x[:, i - 1]], u[:, i])
    return x[0] if count is None else x


def markov_logprob(mc: MarkovChain, x) -> float | np.ndarray:
    """Log-likelihood in nats; ``-inf`` for impossible sequences."""
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if np.any(xb >= mc.size) or np.any(xb < 0):
        raise ConfigError("logprob requires clean sequences")
    with np.errstate(divide="ignore"):
        lp = np.log(mc.pi[xb[:, 0]])
        if xb.shape[1] > 1:
            lp = lp + np.log(mc.A[xb[:, :-1], xb[:, 1:]]).sum(axis=1)
    return float(lp[0]) if single else lp


def markov_exact(mc: MarkovChain, L: int) -> dict[tuple[int, ...], float]:
    """Exact distribution over all ``V**L`` sequences."""
    seqs = np.array(list(itertools.product(range(mc.size), repeat=L)), dtype=np.int64)
    probs = np.exp(markov_logprob(mc, seqs))
    return {tuple(int(t) for t in s): float(p) for s, p in zip(seqs, probs) if p > 0}


@dataclass(frozen=True)
class DyckSource:
    """Balanced strings over ``k`` bracket types, padded to ``length``.

    Token ``2j`` opens type ``j``, ``2j + 1`` closes it and ``2k`` is padding.
    Samples are uniform over all non-empty balanced strings of even length up
    to ``length`` whose nesting never exceeds ``max_depth``.
    """

    k: int = 1
    max_depth: int = 4
    length: int = 8

    @property
    def vocab_size(self) -> int:
        return 2 * self.k + 1

    @property
    def pad_id(self) -> int:
        return 2 * self.k


@lru_cache(maxsize=None)
def _completions(r: int, d: int, k: int, max_depth: int) -> int:
    """Number of ways to finish a string with ``r`` tokens left at depth ``d``."""
    if d > r or d < 0:
        return 0
    if r == 0:
        return 1
    total = _completions(r - 1, d - 1, k, max_depth) if d > 0 else 0
    if d < max_depth:
        total += k * _completions(r - 1, d + 1, k, max_depth)
    return total


def dyck_sample(ds: DyckSource, rng: RngStream) -> np.ndarray:
    if ds.length < 2 or ds.max_depth < 1:
        raise ConfigError("Dyck source needs length >= 2 and max_depth >= 1")
    lengths = list(range(2, ds.length + 1, 2))
    counts = [_completions(n, 0, ds.k, ds.max_depth) for n in lengths]
    total = sum(counts)
    n = lengths[int(categorical_from_uniform(np.array([c / total for c in counts]), rng.random()))]
    out: list[int] = []
    stack: list[int] = []
    for r in range(n, 0, -1):
        d = len(stack)
        close = _completions(r - 1, d - 1, ds.k, ds.max_depth) if d > 0 else 0
        opens = ds.k * _completions(r - 1, d + 1, ds.k, ds.max_depth) if d < ds.max_depth else 0
        if rng.random() * (close + opens) < close:
            out.append(2 * stack.pop() + 1)
        else:
            j = min(int(rng.random() * ds.k), ds.k - 1)
            stack.append(j)
            out.append(2 * j)
    out += [ds.pad_id] * (ds.length - n)
    return np.array(out, dtype=np.int64)


def is_balanced(x, ds: DyckSource) -> bool:
    stack: list[int] = []
    seq = list(int(t) for t in x)
    body = seq
    while body and body[-1] == ds.pad_id:
        body = body[:-1]
    if not body:
        return False
    for t in body:
        if t == ds.pad_id or not 0 <= t < 2 * ds.k:
            return False
        if t % 2 == 0:
            stack.append(t // 2)
            if len(stack) > ds.max_depth:
                return False
        elif not stack or stack.pop() != t // 2:
            return False
    return not stack


def write_dataset(path, sequences) -> None:
    with open(path, "w") as f:
        for s in sequences:
            f.write(json.dumps({"tokens": [int(t) for t in s]}) + "\n")


def read_dataset(path, vocab_size: int | None = None, allow_mask: bool = False) -> list[np.ndarray]:
    """Read a JSON-lines dataset; ids must be real tokens (or the mask id if allowed)."""
    hi = None if vocab_size is None else vocab_size + (1 if allow_mask else 0)
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                toks = obj["tokens"]
                if not isinstance(toks, list) or not toks or not all(isinstance(t, int) for t in toks):
                    raise ValueError("tokens must be a non-empty list of integers")
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            if any(t < 0 or (hi is not None and t >= hi) for t in toks):
                raise ParseError(f"{path}:{lineno}: token id out of range for vocab size {vocab_size}")
            out.append(np.array(toks, dtype=np.int64))
    return out


def read_chain(path) -> MarkovChain:
    return MarkovChain.from_dict(json.loads(Path(path).read_text()))


def write_chain(path, mc: MarkovChain) -> None:
    Path(path).write_text(json.dumps(mc.to_dict()) + "\n")
