"""Masking schedules, remasking schedules and the per-position transition kernels.

All kernels return probability vectors of length ``V + 1`` where the last slot
is the mask token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, RangeError, RngStream, StardiffError

LOGLINEAR_EPS = 1e-4


class DegenerateStep(StardiffError, ZeroDivisionError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str = "linear"
    T: int = 16

    def __post_init__(self):
        if self.kind not in ("linear", "loglinear"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.T < 1:
            raise ConfigError("T must be >= 1")

    def alpha(self, t: float) -> float:
        return alpha_at(self, t)

    def inverse(self, alpha: float) -> float:
        """Time at which the survival probability equals ``alpha``."""
        if not 0.0 < alpha <= 1.0:
            raise RangeError(f"alpha {alpha} outside (0, 1]")
        if self.kind == "linear":
            return 1.0 - alpha
        return min(1.0, math.log(alpha) / math.log(LOGLINEAR_EPS))

    def grid(self) -> np.ndarray:
        """Times ``t_k = k / T`` for ``k = 0..T``."""
        return np.arange(self.T + 1) / self.T

    def alphas(self) -> np.ndarray:
        return np.array([self.alpha(t) for t in self.grid()])


def alpha_at(schedule: NoiseSchedule, t: float) -> float:
    if not 0.0 <= t <= 1.0:
        raise RangeError(f"t={t} outside [0, 1]")
    if schedule.kind == "linear":
        return 1.0 - t
    return math.exp(t * math.log(LOGLINEAR_EPS))


def corrupt(x0: np.ndarray, alpha_t: float, rng: RngStream, mask_id: int, clamp=None) -> np.ndarray:
    """Forward marginal: keep each token with probability ``alpha_t``."""
    x0 = np.asarray(x0, dtype=np.int64)
    alpha_t = np.asarray(alpha_t, dtype=float)
    if alpha_t.ndim == 1 and x0.ndim == 2:
        alpha_t = alpha_t[:, None]
    u = rng.random(x0.shape)
    drop = u >= alpha_t
    if clamp is not None:
        drop &= ~np.broadcast_to(np.asarray(clamp, dtype=bool), x0.shape)
    return np.where(drop, mask_id, x0)


def _point(token: int, size: int) -> np.ndarray:
    d = np.zeros(size)
    d[token] = 1.0
    return d


def _real_part(xhat0_dist, mask_id: int) -> np.ndarray:
    d = np.asarray(xhat0_dist, dtype=float)
    if d.shape[-1] == mask_id:
        d = np.append(d, 0.0)
    if d[mask_id] != 0.0:
        raise ConfigError("clean-token distribution must put zero mass on the mask id")
    return d


def _finish(d: np.ndarray) -> np.ndarray:
    d = np.where(d < 0, 0.0, d)
    return d


def sigma_max(alpha_t: float, alpha_s: float) -> float:
    if alpha_t <= 0.0:
        return 1.0
    return min(1.0, (1.0 - alpha_s) / alpha_t)


def mdlm_step_dist(x_t_i: int, alpha_t: float, alpha_s: float, xhat0_dist_i, mask_id: int) -> np.ndarray:
    """Absorbing-state posterior: carried tokens are frozen, masks unmask toward ``xhat0``."""
    size = mask_id + 1
    if x_t_i != mask_id:
        return _point(x_t_i, size)
    if alpha_t >= 1.0:
        raise DegenerateStep("alpha_t = 1 with a masked input")
    p = _real_part(xhat0_dist_i, mask_id)
    d = (alpha_s - alpha_t) / (1.0 - alpha_t) * p
    d[mask_id] = (1.0 - alpha_s) / (1.0 - alpha_t)
    return _finish(d)


def remdm_step_dist(
    x_t_i: int, alpha_t: float, alpha_s: float, sigma_t: float, xhat0_dist_i, mask_id: int
) -> np.ndarray:
    """Remasking posterior; ``sigma_t`` must already lie in its legal interval."""
    hi = sigma_max(alpha_t, alpha_s)
    if not 0.0 <= sigma_t <= hi + 1e-15:
        raise RangeError(f"sigma_t={sigma_t} outside [0, {hi}]")
    size = mask_id + 1
    if x_t_i != mask_id:
        d = (1.0 - sigma_t) * _point(x_t_i, size)
        d[mask_id] += sigma_t
        return _finish(d)
    if alpha_t >= 1.0:
        raise DegenerateStep("alpha_t = 1 with a masked input")
    p = _real_part(xhat0_dist_i, mask_id)
    d = (alpha_s - (1.0 - sigma_t) * alpha_t) / (1.0 - alpha_t) * p
    d[mask_id] = (1.0 - alpha_s - sigma_t * alpha_t) / (1.0 - alpha_t)
    return _finish(d)


def star_step_dist(alpha_s: float, xhat0_token_i: int, mask_id: int) -> np.ndarray:
    """Forward marginal re-applied to the sampled clean candidate."""
    if not 0 <= xhat0_token_i < mask_id:
        raise ConfigError("star step needs a real candidate token")
    d = alpha_s * _point(xhat0_token_i, mask_id + 1)
    d[mask_id] = 1.0 - alpha_s
    return d


@dataclass(frozen=True)
class SigmaSchedule:
    """Remasking probability per step.

    ``cap`` caps at ``eta``, ``rescale`` scales the largest legal value by
    ``eta`` and ``loopwindow`` is a constant ``eta`` inside ``window`` (a
    half-open range of 0-based step indices) and zero elsewhere.
    """

    kind: str = "off"
    eta: float = 0.0
    window: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("off", "cap", "rescale", "loopwindow"):
            raise ConfigError(f"unknown sigma schedule {self.kind!r}")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")


def sigma_at(s: SigmaSchedule, step: int, alpha_t: float, alpha_s: float) -> float:
    hi = sigma_max(alpha_t, alpha_s)
    if s.kind == "off":
        raw = 0.0
    elif s.kind == "cap":
        raw = min(s.eta, hi)
    elif s.kind == "rescale":
        raw = s.eta * hi
    else:
        lo, up = s.window if s.window is not None else (0, 1 << 62)
        raw = s.eta if lo <= step < up else 0.0
    return float(min(max(raw, 0.0), hi))
