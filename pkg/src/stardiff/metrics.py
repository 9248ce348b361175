"""Sample-quality metrics computed against the known data chain."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import ConfigError
from .corpus import MarkovChain, markov_logprob


class Perplexity(NamedTuple):
    value: float
    impossible: int


def oracle_ppl_report(mc: MarkovChain, samples) -> Perplexity:
    s = np.atleast_2d(np.asarray(samples, dtype=np.int64))
    if s.size == 0:
        return Perplexity(float("nan"), 0)
    lp = np.atleast_1d(markov_logprob(mc, s))
    bad = int(np.isinf(lp).sum())
    if bad:
        return Perplexity(float("inf"), bad)
    return Perplexity(float(np.exp(-lp.sum() / s.size)), 0)


def oracle_gen_ppl(mc: MarkovChain, samples) -> float:
    """exp of the mean per-token negative log-likelihood under the chain."""
    return oracle_ppl_report(mc, samples).value


def diversity(sample) -> float:
    x = [int(t) for t in sample]
    if len(x) < 4:
        raise ConfigError("diversity needs sequences of length >= 4")
    out = 1.0
    for n in range(2, 5):
        grams = [tuple(x[i : i + n]) for i in range(len(x) - n + 1)]
        out *= len(set(grams)) / len(grams)
    return out


def mean_diversity(samples) -> float:
    return float(np.mean([diversity(s) for s in samples]))


def step_similarity(traj, b: int = 0) -> np.ndarray:
    """Fraction of matching candidate tokens between adjacent steps for trajectory row ``b``."""
    c = [cand[b] for cand in traj.candidates]
    if len(c) < 2:
        raise ConfigError("step similarity needs at least two recorded candidates")
    return np.array([float(np.mean(c[k] == c[k + 1])) for k in range(len(c) - 1)])


def infill_accuracy(truth, generated, masked_positions) -> float:
    t = np.asarray(truth)
    g = np.asarray(generated)
    if t.shape != g.shape:
        raise ConfigError("truth and generated sequences differ in length")
    pos = sorted(masked_positions)
    if not pos:
        return 1.0
    return float(np.mean(t[pos] == g[pos]))
