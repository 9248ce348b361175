"""Reverse-trajectory samplers.

Every sampler family compiles to a list of :class:`Step` records
(:func:`plan_steps`). The same plan drives Monte-Carlo simulation here and
exact enumeration in :mod:`stardiff.verify`, so the two can be compared.

Step kinds:

``mdlm``    absorbing posterior; carried tokens frozen
``remdm``   absorbing posterior with remasking probability ``sigma``
``single``  exactly one uniformly chosen masked position is filled
``star``    full candidate, then every position kept with probability ``alpha_s``
``guided``  full candidate, then ``n`` positions remasked by Gumbel-Top-N on error logits
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, RangeError, RngStream, RunConfig, round_half_up, seeded_stream
from .denoiser import Denoiser, tempered
from .noise import DegenerateStep, NoiseSchedule, SigmaSchedule, sigma_at
from .core import categorical_from_uniform

DEFAULT_ALPHA_ON = 0.9
DEFAULT_N_REMASK = 15
CHUNK_SIZE = 64

# loop noise levels used for benchmark-length generation with N = 15
BENCHMARK_ALPHA_ON = {128: 0.88, 256: 0.95, 768: 0.98, 1024: 0.98, 1280: 0.98}


@dataclass(frozen=True)
class Step:
    kind: str
    t: float
    alpha_t: float
    alpha_s: float
    sigma: float = 0.0
    n_remask: int = 0
    phase: str = "main"


@dataclass(frozen=True)
class LoopPlan:
    draft_steps: int
    loop_steps: int
    finish_steps: int
    alpha_on: float

    def __post_init__(self):
        if min(self.draft_steps, self.loop_steps, self.finish_steps) < 0:
            raise ConfigError("loop plan step counts must be non-negative")
        if not 0.0 < self.alpha_on < 1.0:
            raise ConfigError("alpha_on must lie in (0, 1)")

    @property
    def total(self) -> int:
        return self.draft_steps + self.loop_steps + self.finish_steps

    def check(self, T: int) -> "LoopPlan":
        if self.total != T:
            raise ConfigError(f"loop plan {self.draft_steps}+{self.loop_steps}+{self.finish_steps} != T={T}")
        if self.finish_steps < 1:
            raise ConfigError("loop plan needs at least one finishing step to end clean")
        return self

    @classmethod
    def from_budget(cls, T: int, loop_steps: int, alpha_on: float, schedule_kind: str = "linear") -> "LoopPlan":
        """Split the non-loop steps between draft and finish in proportion to time."""
        if not 0 <= loop_steps < T:
            raise ConfigError(f"loop_steps={loop_steps} must lie in [0, T) for T={T}")
        m = T - loop_steps
        t_on = NoiseSchedule(schedule_kind, T).inverse(alpha_on)
        draft = min(round_half_up(m * (1.0 - t_on)), m - 1)
        return cls(draft, loop_steps, m - draft, alpha_on).check(T)


def resolve_alpha_on(config: RunConfig) -> float:
    if config.alpha_on is not None:
        return config.alpha_on
    if config.n_remask is not None:
        return 1.0 - config.n_remask / config.sequence_length
    return DEFAULT_ALPHA_ON


def alpha_on_for_length(L: int, n: int = DEFAULT_N_REMASK) -> float:
    """Preset loop level for common lengths, else ``1 - n / L``."""
    return BENCHMARK_ALPHA_ON.get(L, 1.0 - n / L)


def eligible_count(config: RunConfig) -> int:
    return config.sequence_length - len(config.clamped)


def target_mask_count(alpha_s: float, eligible: int) -> int:
    return int(min(max(round_half_up((1.0 - alpha_s) * eligible), 0), eligible))


def loop_plan(config: RunConfig) -> LoopPlan:
    T = config.total_steps
    loop = config.loop_steps if config.loop_steps is not None else round_half_up(config.loop_fraction * T)
    return LoopPlan.from_budget(T, min(loop, T - 1), resolve_alpha_on(config), config.schedule)


def _sweep(schedule: NoiseSchedule, t_hi: float, t_lo: float, n: int, kind: str, phase: str, k0: int, config, sig):
    steps = []
    ts = np.linspace(t_hi, t_lo, n + 1) if n else []
    for j in range(n):
        t, s = float(ts[j]), float(ts[j + 1])
        a_t, a_s = schedule.alpha(t), schedule.alpha(s)
        steps.append(_make(kind, t, a_t, a_s, k0 + j, config, sig, phase))
    return steps


def _make(kind, t, a_t, a_s, k, config: RunConfig, sig: SigmaSchedule, phase, n_override=None):
    if kind == "remdm":
        return Step("remdm", t, a_t, a_s, sigma=sigma_at(sig, k, a_t, a_s), phase=phase)
    if kind == "guided":
        n = n_override if n_override is not None else target_mask_count(a_s, eligible_count(config))
        return Step("guided", t, a_t, a_s, n_remask=min(n, eligible_count(config)), phase=phase)
    return Step(kind, t, a_t, a_s, phase=phase)


def plan_steps(config: RunConfig) -> list[Step]:
    """Compile a config into its per-step transition plan."""
    T = config.total_steps
    sched = NoiseSchedule(config.schedule, T)
    sig = SigmaSchedule(config.sigma_kind, config.eta, tuple(config.sigma_window) if config.sigma_window else None)
    fam = config.sampler
    if fam in ("loop", "gstar-loop"):
        plan = loop_plan(config)
        t_on = sched.inverse(plan.alpha_on)
        steps = _sweep(sched, 1.0, t_on, plan.draft_steps, "mdlm", "draft", 0, config, sig)
        kind = "guided" if fam == "gstar-loop" else "star"
        for j in range(plan.loop_steps):
            steps.append(
                _make(kind, t_on, plan.alpha_on, plan.alpha_on, plan.draft_steps + j, config, sig, "loop", config.n_remask)
            )
        steps += _sweep(sched, t_on, 0.0, plan.finish_steps, "mdlm", "finish", plan.draft_steps + plan.loop_steps, config, sig)
        return steps
    steps = []
    for j, k in enumerate(range(T, 0, -1)):
        t, s = k / T, (k - 1) / T
        a_t, a_s = sched.alpha(t), sched.alpha(s)
        if fam == "mdlm":
            kind = "single" if config.one_per_step else "mdlm"
        elif fam == "remdm":
            kind = "remdm"
        elif fam == "star":
            kind = "star"
        else:
            late = t <= config.t_on
            kind = ("guided" if fam == "gstar" else "star") if late else "mdlm"
        steps.append(_make(kind, t, a_t, a_s, j, config, sig, "main"))
    return steps


@dataclass
class Trajectory:
    """Batch of reverse trajectories.

    ``states`` has ``len(steps) + 1`` arrays of shape ``(B, L)``; ``candidates``
    and ``remask_sets`` have one entry per step.
    """

    steps: list[Step]
    states: list[np.ndarray] = field(default_factory=list)
    candidates: list[np.ndarray] = field(default_factory=list)
    remask_sets: list[np.ndarray] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def select(self, b: int) -> "Trajectory":
        return Trajectory(
            self.steps,
            [s[b : b + 1] for s in self.states],
            [c[b : b + 1] for c in self.candidates],
            [r[b : b + 1] for r in self.remask_sets],
        )

    def dump_lines(self, b: int = 0, sequence_index: int | None = None) -> list[str]:
        lines = []
        for k, st in enumerate(self.steps):
            rec = {
                "step": k,
                "alpha_s": st.alpha_s,
                "state": self.states[k + 1][b].tolist(),
                "candidate": self.candidates[k][b].tolist(),
                "remasked": np.nonzero(self.remask_sets[k][b])[0].tolist(),
            }
            if sequence_index is not None:
                rec = {"sequence": sequence_index, **rec}
            lines.append(json.dumps(rec))
        return lines


def gumbel_top_n_mask(logits: np.ndarray, tau: float, n: int, rng: RngStream | None, eligible=None) -> np.ndarray:
    """Boolean selection of ``n`` positions per row.

    ``tau > 0`` ranks ``logits / tau + Gumbel`` noise (sampling without
    replacement from the tempered softmax); ``tau = 0`` ranks the raw logits
    with the lowest index winning ties.
    """
    z = np.atleast_2d(np.asarray(logits, dtype=float))
    B, L = z.shape
    elig = np.ones((B, L), dtype=bool) if eligible is None else np.broadcast_to(np.asarray(eligible, dtype=bool), (B, L))
    if np.any(elig.sum(axis=1) < n) or n < 0:
        raise RangeError(f"cannot select {n} of {int(elig.sum(axis=1).min())} eligible positions")
    sel = np.zeros((B, L), dtype=bool)
    if n == 0:
        return sel
    if tau > 0:
        u = rng.random((B, L))
        with np.errstate(divide="ignore"):
            g = -np.log(-np.log(u))
        scores = z / tau + g
    elif tau == 0:
        scores = z.copy()
    else:
        raise RangeError("tau must be >= 0")
    scores = np.where(elig, scores, -np.inf)
    order = np.argsort(-scores, axis=1, kind="stable")[:, :n]
    np.put_along_axis(sel, order, True, axis=1)
    return sel


def gumbel_top_n(logits, tau: float, n: int, rng: RngStream | None) -> set[int]:
    return set(np.nonzero(gumbel_top_n_mask(np.asarray(logits)[None], tau, n, rng)[0])[0].tolist())


def _step(config: RunConfig, st: Step, x, denoiser, predictor, rng, truth):
    mask = config.mask_id
    clamp = config.clamp_mask[None, :]
    B, L = x.shape
    out = denoiser.denoise(x, st.t)
    p = tempered(out, config.tau_diffuse)
    cand = categorical_from_uniform(p, rng.random((B, L)))
    masked = x == mask
    cand = np.where(masked, cand, x)
    if st.kind in ("mdlm", "remdm"):
        u = rng.random((B, L))
        if masked.any() and st.alpha_t >= 1.0:
            raise DegenerateStep("alpha_t = 1 with masked input")
        sigma = st.sigma if st.kind == "remdm" else 0.0
        p_unmask = (st.alpha_s - (1.0 - sigma) * st.alpha_t) / (1.0 - st.alpha_t) if st.alpha_t < 1.0 else 0.0
        new = np.where(masked, np.where(u < p_unmask, cand, mask), np.where(u < sigma, mask, x))
        new = np.where(clamp, x, new)
        remasked = ~masked & (new == mask)
    elif st.kind == "single":
        u = rng.random(B)
        elig = masked & ~clamp
        cnt = elig.sum(axis=1)
        new = x.copy()
        rows = np.nonzero(cnt > 0)[0]
        if len(rows):
            pick = np.minimum((u[rows] * cnt[rows]).astype(np.int64), cnt[rows] - 1)
            order = np.cumsum(elig[rows], axis=1) - 1
            col = np.argmax(elig[rows] & (order == pick[:, None]), axis=1)
            new[rows, col] = cand[rows, col]
        remasked = np.zeros((B, L), dtype=bool)
    elif st.kind == "star":
        u = rng.random((B, L))
        keep = (u < st.alpha_s) | clamp
        new = np.where(keep, cand, mask)
        remasked = new == mask
    elif st.kind == "guided":
        if predictor is None:
            raise ConfigError("guided steps need an error predictor")
        logits = predictor.logits(cand, x, out, denoiser, truth)
        remasked = gumbel_top_n_mask(logits, config.tau_remask, st.n_remask, rng, eligible=~config.clamp_mask)
        new = np.where(remasked, mask, cand)
    else:
        raise ConfigError(f"unknown step kind {st.kind!r}")
    return new, cand, remasked


def run_plan(config: RunConfig, steps: list[Step], denoiser: Denoiser, rng: RngStream, batch: int = 1, predictor=None, truth=None, init=None) -> Trajectory:
    x = config.initial_state(batch) if init is None else np.array(init, dtype=np.int64, copy=True)
    traj = Trajectory(steps, [x])
    for st in steps:
        x, cand, rem = _step(config, st, x, denoiser, predictor, rng, truth)
        traj.states.append(x)
        traj.candidates.append(cand)
        traj.remask_sets.append(rem)
    return traj


def _family(config: RunConfig, *names):
    if config.sampler not in names:
        raise ConfigError(f"config sampler {config.sampler!r} is not one of {names}")


def run_mdlm(config, denoiser, rng, batch=1, **kw):
    _family(config, "mdlm")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, **kw)


def run_remdm(config, denoiser, rng, batch=1, **kw):
    _family(config, "remdm")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, **kw)


def run_star(config, denoiser, rng, batch=1, **kw):
    _family(config, "star")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, **kw)


def run_hybrid(config, denoiser, rng, batch=1, **kw):
    _family(config, "hybrid", "gstar")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, **kw)


def run_gstar(config, denoiser, predictor, rng, batch=1, **kw):
    _family(config, "gstar")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, predictor=predictor, **kw)


def run_loop(config, denoiser, predictor, rng, batch=1, **kw):
    _family(config, "loop", "gstar-loop")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, predictor=predictor, **kw)


def run(config: RunConfig, denoiser, rng, batch=1, predictor=None, **kw) -> Trajectory:
    """Dispatch on ``config.sampler``."""
    if config.sampler in ("gstar", "gstar-loop") and predictor is None:
        raise ConfigError(f"sampler {config.sampler!r} needs an error predictor")
    return run_plan(config, plan_steps(config), denoiser, rng, batch, predictor=predictor, **kw)


def default_workers() -> int:
    return int(os.environ.get("STARDIFF_WORKERS", "1"))


def generate(
    config: RunConfig,
    denoiser,
    count: int,
    predictor=None,
    workers: int | None = None,
    truth=None,
    init=None,
    keep_trajectories=False,
):
    """Generate ``count`` sequences in fixed chunks of :data:`CHUNK_SIZE`.

    Chunk ``c`` always uses stream ``(config.base_seed, c)``, so results do
    not depend on the number of workers. ``truth`` (per-row ground truth for
    the oracle predictor) and ``init`` (per-row starting states, e.g. with
    per-row evidence at the clamped positions) are sliced per chunk. Returns
    ``(samples, trajectories)`` with ``trajectories`` empty unless requested.
    """
    if config.sampler in ("gstar", "gstar-loop") and predictor is None:
        raise ConfigError(f"sampler {config.sampler!r} needs an error predictor")
    workers = default_workers() if workers is None else workers
    steps = plan_steps(config)
    chunks = [(c, min(CHUNK_SIZE, count - c * CHUNK_SIZE)) for c in range((count + CHUNK_SIZE - 1) // CHUNK_SIZE)]

    def work(item):
        c, n = item
        sl = slice(c * CHUNK_SIZE, c * CHUNK_SIZE + n)
        tr = None if truth is None else np.asarray(truth)[sl]
        x0 = None if init is None else np.asarray(init)[sl]
        return run_plan(config, steps, denoiser, seeded_stream(config.base_seed, c), n, predictor=predictor, truth=tr, init=x0)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(work, chunks))
    else:
        trajs = [work(ch) for ch in chunks]
    samples = np.concatenate([t.final for t in trajs]) if trajs else np.zeros((0, config.sequence_length), dtype=np.int64)
    return samples, (trajs if keep_trajectories else [])
