"""Desk-scale experiment protocols shared by ``scripts/`` and the acceptance tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import RunConfig, seeded_stream
from .corpus import MarkovChain, cyclic_chain, markov_exact, markov_sample, sticky_chain
from .denoiser import MarkovOracleDenoiser, TabularDenoiser, tabular_fit
from .metrics import oracle_gen_ppl
from .noise import NoiseSchedule
from .predictor import LogisticErrorPredictor, SurprisalPredictor, make_training_set, roc_auc, train_logistic
from .samplers import generate
from .verify import enumerate_sampler, tv_distance


@dataclass
class Corpus:
    """A chain, a tabular denoiser fit on one split and a predictor fit on a disjoint one."""

    chain: MarkovChain
    length: int
    denoiser: TabularDenoiser
    predictor: LogisticErrorPredictor
    val_auc: float


def build_corpus(chain: MarkovChain | None = None, length: int = 32, n_denoiser: int = 20_000, n_predictor: int = 3_000, n_val: int = 1_000, seed: int = 1) -> Corpus:
    mc = chain or cyclic_chain(4, 0.85)
    sched = NoiseSchedule("linear", 1)
    data = markov_sample(mc, length, seeded_stream(seed, 0), n_denoiser)
    hold = markov_sample(mc, length, seeded_stream(seed, 1), n_predictor + n_val)
    den = tabular_fit(data, sched, seeded_stream(seed, 2), mc.size)
    tset = make_training_set(hold[:n_predictor], den, sched, seeded_stream(seed, 3))
    vset = make_training_set(hold[n_predictor:], den, sched, seeded_stream(seed, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred, _ = train_logistic(tset)
    return Corpus(mc, length, den, pred, roc_auc(vset.X @ pred.weights, vset.y))


def seed_ppls(corpus: Corpus, config: RunConfig, seeds: int, count: int, predictor=None, workers=None) -> np.ndarray:
    """Oracle PPL per seed; seed ``j`` uses ``base_seed = j``."""
    out = []
    for j in range(seeds):
        s, _ = generate(config.replace(base_seed=j), corpus.denoiser, count, predictor=predictor, workers=workers)
        out.append(oracle_gen_ppl(corpus.chain, s))
    return np.array(out)


@dataclass
class GuidedResult:
    steps: int
    unguided: np.ndarray
    learned: np.ndarray
    reference: np.ndarray
    p_learned: float = field(init=False)
    gap_reference: float = field(init=False)
    unguided_se: float = field(init=False)

    def __post_init__(self):
        self.p_learned = float(stats.ttest_rel(self.learned, self.unguided, alternative="less").pvalue)
        self.gap_reference = float(np.mean(self.unguided - self.reference))
        self.unguided_se = float(self.unguided.std(ddof=1) / np.sqrt(len(self.unguided)))

    @property
    def learned_wins(self) -> bool:
        return bool(self.learned.mean() < self.unguided.mean() and self.p_learned < 0.01)

    @property
    def reference_wins(self) -> bool:
        return bool(self.gap_reference > 0 and self.gap_reference >= 3 * self.unguided_se)


def guided_vs_unguided(corpus: Corpus, steps: int, seeds: int = 10, count: int = 256, tau_remask: float = 8.0, workers=None) -> GuidedResult:
    """Star-loop against G-Star-loop (learned and reference predictors), paired by seed."""
    V, L = corpus.chain.size, corpus.length
    base = RunConfig(vocab=V, sequence_length=L, total_steps=steps, sampler="loop")
    g = base.replace(sampler="gstar-loop", tau_remask=tau_remask)
    return GuidedResult(
        steps,
        seed_ppls(corpus, base, seeds, count, workers=workers),
        seed_ppls(corpus, g, seeds, count, corpus.predictor, workers),
        seed_ppls(corpus, g, seeds, count, SurprisalPredictor(corpus.chain), workers),
    )


def hybrid_tv(t_on: float, chain: MarkovChain | None = None, length: int = 3, steps: int = 3) -> float:
    """Exact TV to the data distribution for the hybrid sampler on a tiny instance."""
    mc = chain or sticky_chain(2, 0.9)
    cfg = RunConfig(vocab=mc.size, sequence_length=length, total_steps=steps, sampler="hybrid", t_on=t_on)
    return tv_distance(enumerate_sampler(cfg, MarkovOracleDenoiser(mc)), markov_exact(mc, length))


def infill_trials(chain: MarkovChain, trials: int, seed: int = 0) -> float:
    """Argmax infilling of the middle token of length-3 sequences with equal ends."""
    rng = seeded_stream(seed, 0)
    rows = []
    while len(rows) < trials:
        x = markov_sample(chain, 3, rng, 4 * trials)
        rows += list(x[x[:, 0] == x[:, 2]])
    truth = np.array(rows[:trials])
    init = truth.copy()
    init[:, 1] = chain.size
    cfg = RunConfig(vocab=chain.size, sequence_length=3, total_steps=1, tau_diffuse=0.0, clamped=[[0, 0], [2, 0]], base_seed=seed)
    out, _ = generate(cfg, MarkovOracleDenoiser(chain), trials, init=init)
    return float(np.mean(out[:, 1] == truth[:, 1]))
