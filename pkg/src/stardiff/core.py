"""Shared domain types: vocabulary, seeded randomness, categorical draws, run configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Sequence as Seq

import numpy as np

NORM_TOL = 1e-9

FAMILIES = ("mdlm", "remdm", "star", "hybrid", "gstar", "loop", "gstar-loop")
SCHEDULES = ("linear", "loglinear")
SIGMA_KINDS = ("off", "cap", "rescale", "loopwindow")


class StardiffError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(StardiffError, ValueError):
    pass


class NotNormalized(StardiffError, ValueError):
    pass


class RangeError(StardiffError, ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Real tokens are ``0..size-1``; the mask id is pinned to ``size``."""

    size: int

    def __post_init__(self):
        if int(self.size) < 2:
            raise ConfigError(f"vocab size must be >= 2, got {self.size}")

    @property
    def mask_id(self) -> int:
        return self.size


class RngStream:
    """Index-addressed random stream.

    The stream is a numpy ``Generator`` seeded from ``SeedSequence(seed,
    spawn_key=(index,))`` so that stream ``k`` is the same no matter how many
    other streams exist or in which order they are consumed.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        ss = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(self.stream_index,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def random(self, shape=None) -> np.ndarray | float:
        return self.gen.random(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_index={self.stream_index})"


def seeded_stream(base_seed: int, index: int) -> RngStream:
    return RngStream(base_seed, index)


def check_distribution(probs, tol: float = NORM_TOL) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise NotNormalized("distribution must be a non-empty 1-d array")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise NotNormalized(f"negative or non-finite entries in {p}")
    if abs(p.sum() - 1.0) > tol:
        raise NotNormalized(f"probabilities sum to {p.sum()!r}")
    return p


def categorical_from_uniform(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw along the last axis using pre-drawn uniforms.

    ``probs`` has shape ``(..., K)`` and ``u`` has shape ``(...)``. The scan
    order is the index order; the CDF is renormalised by its last entry so a
    uniform in ``[0, 1)`` can never land on a trailing zero-probability slot.
    """
    cdf = np.cumsum(probs, axis=-1)
    cdf = cdf / cdf[..., -1:]
    idx = (cdf <= np.asarray(u)[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_categorical(probs, rng: RngStream) -> int:
    p = check_distribution(probs)
    return int(categorical_from_uniform(p, np.asarray(rng.random()))[()])


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class RunConfig:
    """Declarative description of one reverse trajectory (and a batch of them).

    ``clamped`` holds ``[position, token]`` pairs fixed as evidence. ``n_remask``
    overrides the per-step remask count of guided refinement steps; when set
    and ``alpha_on`` is left at ``None`` the loop level becomes ``1 - N/L``.
    """

    vocab: int = 4
    sequence_length: int = 16
    total_steps: int = 16
    schedule: str = "linear"
    sampler: str = "mdlm"
    t_on: float = 0.3
    eta: float = 0.0
    sigma_kind: str = "off"
    sigma_window: list[int] | None = None
    alpha_on: float | None = None
    loop_fraction: float = 0.10
    loop_steps: int | None = None
    tau_remask: float = 8.0
    tau_diffuse: float = 1.0
    n_remask: int | None = None
    one_per_step: bool = False
    base_seed: int = 0
    clamped: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.clamped = [[int(p), int(t)] for p, t in self.clamped]
        self.validate()

    def validate(self) -> "RunConfig":
        Vocab(self.vocab)
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be >= 1")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.sampler not in FAMILIES:
            raise ConfigError(f"unknown sampler family {self.sampler!r}")
        if self.sigma_kind not in SIGMA_KINDS:
            raise ConfigError(f"unknown sigma_kind {self.sigma_kind!r}")
        if not 0.0 <= self.t_on <= 1.0:
            raise ConfigError("t_on must lie in [0, 1]")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if self.alpha_on is not None and not 0.0 < self.alpha_on < 1.0:
            raise ConfigError("alpha_on must lie in (0, 1)")
        if not 0.0 <= self.loop_fraction <= 1.0:
            raise ConfigError("loop_fraction must lie in [0, 1]")
        if self.tau_remask < 0 or self.tau_diffuse < 0:
            raise ConfigError("temperatures must be >= 0")
        if self.n_remask is not None and self.n_remask < 0:
            raise ConfigError("n_remask must be >= 0")
        seen = set()
        for pos, tok in self.clamped:
            if not 0 <= pos < self.sequence_length:
                raise ConfigError(f"clamped position {pos} outside [0, {self.sequence_length})")
            if not 0 <= tok < self.vocab:
                raise ConfigError(f"clamped token {tok} is not a real token")
            if pos in seen:
                raise ConfigError(f"position {pos} clamped twice")
            seen.add(pos)
        return self

    @property
    def mask_id(self) -> int:
        return self.vocab

    @property
    def clamp_mask(self) -> np.ndarray:
        m = np.zeros(self.sequence_length, dtype=bool)
        for pos, _ in self.clamped:
            m[pos] = True
        return m

    def initial_state(self, batch: int = 1) -> np.ndarray:
        x = np.full((batch, self.sequence_length), self.mask_id, dtype=np.int64)
        for pos, tok in self.clamped:
            x[:, pos] = tok
        return x

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown RunConfig keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def as_batch(x: Seq[int] | np.ndarray) -> np.ndarray:
    """View a single sequence or a batch as a 2-d int array."""
    a = np.asarray(x, dtype=np.int64)
    return a[None, :] if a.ndim == 1 else a
