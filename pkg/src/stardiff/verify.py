"""Exact sampler-induced distributions on tiny instances, plus analytic identities.

The enumerator walks the same step plan as the simulator but replaces every
random draw by an exact branch: per-position kernels from :mod:`stardiff.noise`
for the factorised steps, and Plackett-Luce subset probabilities for the
Gumbel-Top-N selection of guided steps. Identical intermediate states are
merged by exact addition before expanding the next step.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import replace

import numpy as np
from scipy.special import logsumexp

from .core import ConfigError, RunConfig, StardiffError
from .denoiser import Denoiser, tempered
from .noise import NoiseSchedule, mdlm_step_dist, remdm_step_dist, star_step_dist
from .samplers import Step, plan_steps

DEFAULT_BUDGET = 10**7


class BudgetError(StardiffError):
    def __init__(self, leaves: int, budget: int):
        super().__init__(f"enumeration needs up to {leaves} leaves, budget is {budget}")
        self.leaves = leaves
        self.budget = budget


class ExactDistribution(dict):
    """Mapping from clean token tuples to probability, kept in sorted key order."""

    @classmethod
    def from_items(cls, items) -> "ExactDistribution":
        d = cls()
        for k in sorted(items):
            d[k] = items[k]
        return d

    @property
    def total(self) -> float:
        return math.fsum(self.values())


def empirical(samples) -> ExactDistribution:
    counts: dict[tuple, int] = defaultdict(int)
    arr = np.asarray(samples)
    for row in arr:
        counts[tuple(int(t) for t in row)] += 1
    n = len(arr)
    return ExactDistribution.from_items({k: c / n for k, c in counts.items()})


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def leaf_count(config: RunConfig) -> int:
    V, L = config.vocab, config.sequence_length
    return config.total_steps * (V + 1) ** L * V**L


def _product(dists: list[np.ndarray]):
    """All joint outcomes of independent per-position distributions."""
    supports = [[(int(v), float(d[v])) for v in np.nonzero(d > 0)[0]] for d in dists]
    for combo in itertools.product(*supports):
        prob = 1.0
        for _, pv in combo:
            prob *= pv
        yield tuple(v for v, _ in combo), prob


def subset_probs(logits: np.ndarray, tau: float, n: int, eligible: np.ndarray) -> dict[frozenset, float]:
    """Exact law of the Gumbel-Top-N selected set.

    With ``tau > 0`` the selection is sequential sampling without
    replacement from ``softmax(logits / tau)``; the set probability sums the
    ordered-draw probabilities over all orderings. ``tau = 0`` is the
    deterministic top-n with lowest-index tie-break.
    """
    idx = [i for i in range(len(logits)) if eligible[i]]
    if n > len(idx):
        raise ConfigError("n exceeds the eligible count")
    if n == 0:
        return {frozenset(): 1.0}
    if tau == 0:
        order = sorted(idx, key=lambda i: (-logits[i], i))
        return {frozenset(order[:n]): 1.0}
    s = {i: logits[i] / tau for i in idx}
    out: dict[frozenset, float] = defaultdict(float)
    for perm in itertools.permutations(idx, n):
        left = list(idx)
        lp = 0.0
        for j in perm:
            lp += s[j] - logsumexp([s[r] for r in left])
            left.remove(j)
        out[frozenset(perm)] += math.exp(lp)
    return dict(out)


def _expand(config: RunConfig, st: Step, state: tuple, denoiser: Denoiser, predictor, truth):
    V = config.vocab
    mask = config.mask_id
    clamp = config.clamp_mask
    x = np.array(state, dtype=np.int64)
    out = denoiser.denoise(x[None], st.t)
    p = tempered(out, config.tau_diffuse)[0]
    pfull = np.concatenate([p, np.zeros((len(state), 1))], axis=1)
    L = len(state)

    def point(v):
        d = np.zeros(V + 1)
        d[v] = 1.0
        return d

    if st.kind in ("mdlm", "remdm", "star"):
        dists = []
        for i in range(L):
            if clamp[i]:
                dists.append(point(state[i]))
            elif st.kind == "mdlm":
                dists.append(mdlm_step_dist(state[i], st.alpha_t, st.alpha_s, pfull[i], mask))
            elif st.kind == "remdm":
                dists.append(remdm_step_dist(state[i], st.alpha_t, st.alpha_s, st.sigma, pfull[i], mask))
            else:
                cand = pfull[i] if state[i] == mask else point(state[i])
                dists.append(sum(cand[v] * star_step_dist(st.alpha_s, v, mask) for v in np.nonzero(cand[:V])[0]))
        yield from _product(dists)
        return
    if st.kind == "single":
        slots = [i for i in range(L) if state[i] == mask and not clamp[i]]
        if not slots:
            yield state, 1.0
            return
        for i in slots:
            for v in np.nonzero(p[i] > 0)[0]:
                s2 = list(state)
                s2[i] = int(v)
                yield tuple(s2), p[i][v] / len(slots)
        return
    if st.kind == "guided":
        cands = [pfull[i] if state[i] == mask else point(state[i]) for i in range(L)]
        for cand, pc in _product(cands):
            c = np.array(cand, dtype=np.int64)
            logits = np.asarray(predictor.logits(c[None], x[None], out, denoiser, truth))[0]
            for sel, ps in subset_probs(logits, config.tau_remask, st.n_remask, ~clamp).items():
                s2 = tuple(mask if i in sel else cand[i] for i in range(L))
                yield s2, pc * ps
        return
    raise ConfigError(f"unknown step kind {st.kind!r}")


def enumerate_sampler(
    config: RunConfig, denoiser: Denoiser, predictor=None, truth=None, budget: int = DEFAULT_BUDGET, steps=None
) -> ExactDistribution:
    """Exact distribution of the final clean sequence produced by ``config``.

    ``steps`` overrides the compiled plan (used to build hand-made transition
    sequences such as ReMDM with ``sigma = 1 - alpha_s``).
    """
    leaves = leaf_count(config)
    if leaves > budget:
        raise BudgetError(leaves, budget)
    if config.sampler in ("gstar", "gstar-loop") and predictor is None:
        raise ConfigError(f"sampler {config.sampler!r} needs an error predictor")
    dist: dict[tuple, float] = {tuple(int(t) for t in config.initial_state(1)[0]): 1.0}
    for st in plan_steps(config) if steps is None else steps:
        nxt: dict[tuple, float] = defaultdict(float)
        for state, pr in dist.items():
            for s2, q in _expand(config, st, state, denoiser, predictor, truth):
                nxt[s2] += pr * q
        dist = nxt
    if any(config.mask_id in s for s, pr in dist.items() if pr > 0):
        raise StardiffError("sampler plan terminated with masked positions")
    return ExactDistribution.from_items({s: pr for s, pr in dist.items() if pr > 0})


def star_as_remdm(steps: list[Step], sigma_fn=None) -> list[Step]:
    """Rewrite star steps as ReMDM steps with ``sigma = 1 - alpha_s`` (or ``sigma_fn``)."""
    fn = sigma_fn or (lambda a_t, a_s: 1.0 - a_s)
    return [replace(st, kind="remdm", sigma=fn(st.alpha_t, st.alpha_s)) if st.kind == "star" else st for st in steps]


def check_remask_kl(alpha_s: float, k: int, phat) -> tuple[float, float]:
    """KL between the re-noised true token and the re-noised prediction, and ``-alpha_s log phat[k]``."""
    ph = np.asarray(phat, dtype=float)
    mask = len(ph) - 1
    if ph[mask] != 0:
        raise ConfigError("predicted distribution must have zero mask mass")
    if ph[k] == 0:
        return math.inf, math.inf
    q = alpha_s * np.eye(len(ph))[k]
    q[mask] += 1 - alpha_s
    r = alpha_s * ph
    r[mask] += 1 - alpha_s
    kl = math.fsum(float(qi * math.log(qi / ri)) for qi, ri in zip(q, r) if qi > 0)
    return kl, float(-alpha_s * math.log(ph[k]))


def vlb_weights(schedule: NoiseSchedule, T: int | None = None) -> np.ndarray:
    """Per-step cross-entropy weights of the star-shaped bound: 1, then alpha at the previous grid time."""
    T = schedule.T if T is None else T
    return np.array([1.0] + [schedule.alpha((k - 1) / T) for k in range(2, T + 1)])


# -- battery ---------------------------------------------------------------

CHAIN2 = {"pi": [0.6, 0.4], "A": [[0.8, 0.2], [0.3, 0.7]]}
CHAIN3 = {"pi": [0.5, 0.3, 0.2], "A": [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.25, 0.25, 0.5]]}


def alpha_pairs(count: int = 100) -> list[tuple[float, float]]:
    """Adjacent (alpha_t, alpha_s) pairs from linear and log-linear grids."""
    pairs = []
    T = 2
    while len(pairs) < count:
        for kind in ("linear", "loglinear"):
            a = NoiseSchedule(kind, T).alphas()
            pairs += [(float(a[k]), float(a[k - 1])) for k in range(1, T + 1)]
        T += 1
    return pairs[:count]


def _row(check, instance, metric, value, tolerance, ok=None):
    value = float(value)
    return {
        "check": check,
        "instance": instance,
        "metric": metric,
        "value": value,
        "tolerance": float(tolerance),
        "pass": bool(value <= tolerance) if ok is None else bool(ok),
    }


def _chain(d):
    from .corpus import MarkovChain

    return MarkovChain.from_dict(d)


def check_star_remdm_kernel(pairs=None, sigma_fn=None) -> float:
    """Largest per-entry gap between the star step and ReMDM with sigma = 1 - alpha_s."""
    fn = sigma_fn or (lambda a_t, a_s: 1.0 - a_s)
    worst = 0.0
    V = 3
    for a_t, a_s in pairs or alpha_pairs():
        for k in range(V):
            phat = np.zeros(V + 1)
            phat[k] = 1.0
            want = star_step_dist(a_s, k, V)
            for x in (k, V):
                got = remdm_step_dist(x, a_t, a_s, fn(a_t, a_s), phat, V)
                worst = max(worst, float(np.abs(got - want).max()))
    return worst


def check_sigma0_kernel(pairs=None) -> float:
    worst = 0.0
    V = 3
    phat = np.array([0.5, 0.3, 0.2, 0.0])
    for a_t, a_s in pairs or alpha_pairs():
        for x in range(V + 1):
            a = remdm_step_dist(x, a_t, a_s, 0.0, phat, V)
            b = mdlm_step_dist(x, a_t, a_s, phat, V)
            worst = max(worst, float(np.abs(a - b).max()))
    return worst


def check_remask_kl_random(n: int = 1000, seed: int = 0) -> float:
    from .core import seeded_stream

    rng = seeded_stream(seed, 0)
    worst = 0.0
    for _ in range(n):
        V = 2 + int(rng.random() * 6)
        a = float(rng.random())
        ph = np.append(rng.gen.dirichlet(np.ones(V)), 0.0)
        k = int(rng.random() * V)
        kl, f = check_remask_kl(a, k, ph)
        worst = max(worst, abs(kl - f))
    return worst


def run_battery(sim_runs: int = 200_000, workers: int = 1, sigma_fn=None) -> list[dict]:
    """Every exact and statistical check, one report row each.

    ``sigma_fn`` replaces the ``1 - alpha_s`` remasking probability in the
    star/ReMDM equivalence checks (used to demonstrate that they can fail).
    """
    from .corpus import markov_exact
    from .denoiser import MarkovOracleDenoiser
    from .noise import corrupt, sigma_max
    from .predictor import SurprisalPredictor
    from .samplers import generate, run_plan
    from .core import seeded_stream

    rows = []
    rows.append(_row("star_remdm_kernel", "100 alpha pairs", "max_abs_diff", check_star_remdm_kernel(sigma_fn=sigma_fn), 1e-15))
    bound_gap = max(max(0.0, (1 - a_s) - sigma_max(a_t, a_s)) for a_t, a_s in alpha_pairs(400))
    rows.append(_row("star_sigma_in_bounds", "400 alpha pairs", "max_excess", bound_gap, 0.0))
    for chain, V, L, T in [(CHAIN2, 2, 2, 2), (CHAIN3, 3, 2, 2), (CHAIN2, 2, 3, 3)]:
        den = MarkovOracleDenoiser(_chain(chain))
        cfg = RunConfig(vocab=V, sequence_length=L, total_steps=T, sampler="star")
        p = enumerate_sampler(cfg, den)
        q = enumerate_sampler(cfg, den, steps=star_as_remdm(plan_steps(cfg), sigma_fn))
        rows.append(_row("star_remdm_enumeration", f"V={V},L={L},T={T}", "tv", tv_distance(p, q), 1e-12))

    rows.append(_row("remask_kl", "1000 random triples", "max_abs_diff", check_remask_kl_random(), 1e-10))
    rows.append(_row("sigma0_kernel", "100 alpha pairs", "max_abs_diff", check_sigma0_kernel(), 0.0))

    den2 = MarkovOracleDenoiser(_chain(CHAIN2))
    base = RunConfig(vocab=2, sequence_length=6, total_steps=5, sampler="mdlm", base_seed=7)
    a = generate(base, den2, 256)[0]
    b = generate(base.replace(sampler="remdm", sigma_kind="cap", eta=0.0), den2, 256)[0]
    rows.append(_row("sigma0_trajectory", "V=2,L=6,T=5,256 seqs", "mismatches", int((a != b).sum()), 0))

    for fam_a, fam_b, t_on in [("hybrid", "mdlm", 0.0), ("hybrid", "star", 1.0)]:
        for V, L, T, ch in [(2, 2, 2, CHAIN2), (2, 3, 3, CHAIN2), (3, 2, 3, CHAIN3)]:
            den = MarkovOracleDenoiser(_chain(ch))
            c = RunConfig(vocab=V, sequence_length=L, total_steps=T, sampler=fam_a, t_on=t_on)
            p = enumerate_sampler(c, den)
            q = enumerate_sampler(c.replace(sampler=fam_b), den)
            rows.append(_row(f"hybrid_t_on_{t_on:g}_vs_{fam_b}", f"V={V},L={L},T={T}", "tv", tv_distance(p, q), 1e-12))

    c = RunConfig(vocab=2, sequence_length=3, total_steps=3, sampler="mdlm", one_per_step=True)
    p = enumerate_sampler(c, den2)
    rows.append(_row("chain_rule", "V=2,L=3,T=3", "tv", tv_distance(p, markov_exact(den2.chain, 3)), 1e-9))
    rows.append(_row("enumeration_mass", "V=2,L=3,T=3", "abs_err", abs(p.total - 1.0), 1e-10))

    rng = seeded_stream(11, 0)
    L = 10_000
    x = corrupt(np.zeros((1, L), dtype=np.int64), 0.5, rng, 2)
    frac = float((x == 2).mean())
    rows.append(_row("forward_mask_rate", "alpha=0.5,L=10000", "abs_dev", abs(frac - 0.5), 0.02))

    pred = SurprisalPredictor(den2.chain)
    fams = {
        "mdlm": {},
        "remdm": {"sigma_kind": "cap", "eta": 0.5},
        "star": {},
        "hybrid": {"t_on": 0.5},
        "gstar": {"t_on": 1.0, "tau_remask": 1.0},
        "loop": {"loop_steps": 1},
        "gstar-loop": {"loop_steps": 1, "tau_remask": 1.0},
    }
    for fam, extra in fams.items():
        c = RunConfig(vocab=2, sequence_length=2, total_steps=2, sampler=fam, base_seed=2024, **extra)
        pr = pred if fam.startswith("gstar") else None
        exact = enumerate_sampler(c, den2, predictor=pr)
        sims = generate(c, den2, sim_runs, predictor=pr, workers=workers)[0]
        rows.append(_row("enum_vs_sim", f"{fam},V=2,L=2,T=2,n={sim_runs}", "tv", tv_distance(exact, empirical(sims)), 0.01))
    return rows
