"""Error predictors: per-position logits that a candidate token is wrong.

The learned variant is a logistic head over a small hand-built feature map.
The probability and entropy features come from the denoiser's leave-one-out
scores of the candidate itself (each position re-predicted with only that
position hidden), so committed tokens can be flagged as well as fresh ones.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from .core import ConfigError, RngStream, StardiffError, as_batch
from .corpus import MarkovChain
from .denoiser import Denoiser, MarkovOracleDenoiser, sample_candidate
from .noise import NoiseSchedule, corrupt

ORACLE_LOGIT = 10.0


class MissingGroundTruth(StardiffError, ValueError):
    pass


def entropy(p: np.ndarray, axis: int = -1) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(p > 0, p * np.log(p), 0.0).sum(axis=axis)


def feature_dim(vocab_size: int) -> int:
    return vocab_size + 5


def candidate_features(denoiser: Denoiser, candidate, x_t) -> np.ndarray:
    """Feature rows ``[prob, entropy, fresh, position, one-hot(token), 1]``, shape ``(B, L, V + 5)``."""
    c = as_batch(candidate)
    x = as_batch(x_t)
    B, L = c.shape
    V = denoiser.vocab_size
    loo = denoiser.loo(c)
    prob = np.take_along_axis(loo, c[..., None], axis=2)[..., 0]
    feats = np.zeros((B, L, V + 5))
    feats[..., 0] = prob
    feats[..., 1] = entropy(loo)
    feats[..., 2] = x == V
    feats[..., 3] = np.arange(L) / max(L - 1, 1)
    feats[..., 4 : 4 + V] = np.eye(V)[c]
    feats[..., -1] = 1.0
    return feats


class ErrorPredictor:
    kind: str

    def logits(self, candidate, x_t, out, denoiser, truth=None) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass
class LogisticErrorPredictor(ErrorPredictor):
    weights: np.ndarray
    degenerate: bool = False
    hyper: dict = field(default_factory=dict)
    kind: str = "logistic"

    def logits(self, candidate, x_t, out, denoiser, truth=None):
        return candidate_features(denoiser, candidate, x_t) @ self.weights

    def to_dict(self):
        d = {"kind": "logistic", "weights": [float(w) for w in self.weights]}
        if self.degenerate:
            d["degenerate"] = True
        return d


class EntropyPredictor(ErrorPredictor):
    """Confidence baseline: the entropy of the step's denoiser distribution."""

    kind = "entropy"

    def logits(self, candidate, x_t, out, denoiser, truth=None):
        o = np.asarray(out)
        o = o[None] if o.ndim == 2 else o
        return entropy(o[..., :-1])


class OraclePredictor(ErrorPredictor):
    """Ground-truth comparison; only usable when the clean target is known."""

    kind = "oracle"

    def logits(self, candidate, x_t, out, denoiser, truth=None):
        if truth is None:
            raise MissingGroundTruth("oracle predictor needs the ground-truth sequence")
        c = as_batch(candidate)
        return np.where(c != np.broadcast_to(as_batch(truth), c.shape), ORACLE_LOGIT, -ORACLE_LOGIT)


class SurprisalPredictor(ErrorPredictor):
    """Reference scorer for unconditional generation: -log p_chain(x_i | x_{-i})."""

    kind = "surprisal"

    def __init__(self, chain: MarkovChain):
        self.chain = chain
        self._oracle = MarkovOracleDenoiser(chain)

    def logits(self, candidate, x_t, out, denoiser, truth=None):
        c = as_batch(candidate)
        p = np.take_along_axis(self._oracle.loo(c), c[..., None], axis=2)[..., 0]
        with np.errstate(divide="ignore"):
            return np.minimum(-np.log(p), 50.0)

    def to_dict(self):
        return {"kind": "surprisal", "chain": self.chain.to_dict()}


def predict_logits(p: ErrorPredictor, candidate, denoiser_output, mask_pattern, denoiser=None, truth=None):
    """``mask_pattern`` is the noisy input ``x_t`` (mask ids mark fresh positions)."""
    return p.logits(candidate, mask_pattern, denoiser_output, denoiser, truth)


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    fresh: np.ndarray

    def __len__(self):
        return len(self.y)


def make_training_set(dataset, denoiser: Denoiser, schedule: NoiseSchedule, rng: RngStream, tau_diffuse: float = 1.0, t=None):
    """Simulate denoiser mistakes: corrupt, denoise, sample a candidate, label mismatches.

    ``t`` may pin the corruption time (scalar) for diagnostics; by default it
    is drawn uniformly per sequence.
    """
    x0 = np.asarray(dataset, dtype=np.int64)
    if x0.ndim != 2 or len(x0) == 0:
        raise ConfigError("make_training_set needs a non-empty dataset of equal-length sequences")
    n = x0.shape[0]
    ts = rng.random(n) if t is None else np.full(n, float(t))
    alpha = np.array([schedule.alpha(float(ti)) for ti in ts])
    xt = corrupt(x0, alpha, rng, denoiser.mask_id)
    out = denoiser.denoise(xt)
    cand = sample_candidate(out, tau_diffuse, rng, x_t=xt)
    feats = candidate_features(denoiser, cand, xt)
    y = (cand != x0).astype(float)
    return TrainingSet(feats.reshape(-1, feats.shape[-1]), y.reshape(-1), (xt == denoiser.mask_id).reshape(-1))


def class_weights(y: np.ndarray) -> np.ndarray:
    pos = y.sum()
    neg = len(y) - pos
    return np.where(y > 0, neg / pos if pos > 0 else 1.0, 1.0)


def logistic_loss(w: np.ndarray, X: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    z = X @ w
    nll = -(y * log_expit(z) + (1 - y) * log_expit(-z))
    return float((c * nll).sum() / c.sum())


def logistic_grad(w: np.ndarray, X: np.ndarray, y: np.ndarray, c: np.ndarray) -> np.ndarray:
    r = c * (expit(X @ w) - y)
    return X.T @ r / c.sum()


@dataclass
class LogisticHyper:
    lr: float = 2.5
    epochs: int = 2000
    tol: float = 1e-8


def train_logistic(tset: TrainingSet, hyper: LogisticHyper | None = None, rng: RngStream | None = None):
    """Full-batch gradient descent on the class-weighted logistic loss.

    Returns ``(predictor, loss_curve)``. A single-class set yields a constant
    predictor with ``degenerate=True``.
    """
    hyper = hyper or LogisticHyper()
    X, y = tset.X, tset.y
    if len(y) == 0:
        raise ConfigError("empty training set")
    d = X.shape[1]
    pos = y.sum()
    if pos == 0 or pos == len(y):
        warnings.warn("error-predictor training set has a single class; returning a constant predictor")
        w = np.zeros(d)
        w[-1] = -ORACLE_LOGIT if pos == 0 else ORACLE_LOGIT
        return LogisticErrorPredictor(w, degenerate=True, hyper=vars(hyper)), []
    c = class_weights(y)
    # identical (row, label) pairs collapse to one weighted row; the loss is unchanged
    keys, inv = np.unique(np.column_stack([X, y]), axis=0, return_inverse=True)
    X, y = keys[:, :-1], keys[:, -1]
    c = np.bincount(inv.ravel(), weights=c, minlength=len(keys))
    cn = c / c.sum()
    w = np.zeros(d) if rng is None else 0.01 * (rng.random(d) - 0.5)
    curve = []
    for _ in range(hyper.epochs + 1):
        z = X @ w
        curve.append(float(-(cn * (y * log_expit(z) + (1 - y) * log_expit(-z))).sum()))
        if len(curve) > 1 and curve[-2] - curve[-1] < hyper.tol:
            break
        w = w - hyper.lr * (X.T @ (cn * (expit(z) - y)))
    return LogisticErrorPredictor(w, hyper=vars(hyper)), curve


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney estimate; ties count one half."""
    labels = np.asarray(labels).astype(bool)
    n1 = labels.sum()
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    r = rankdata(scores)
    return float((r[labels].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def load_predictor(obj) -> ErrorPredictor:
    d = json.loads(Path(obj).read_text()) if isinstance(obj, (str, Path)) else obj
    kind = d.get("kind")
    if kind == "logistic":
        return LogisticErrorPredictor(np.array(d["weights"], dtype=float), degenerate=bool(d.get("degenerate", False)))
    if kind == "entropy":
        return EntropyPredictor()
    if kind == "oracle":
        return OraclePredictor()
    if kind == "surprisal":
        return SurprisalPredictor(MarkovChain.from_dict(d["chain"]))
    raise ConfigError(f"unknown predictor kind {kind!r}")


def save_predictor(path, p: ErrorPredictor) -> None:
    Path(path).write_text(json.dumps(p.to_dict(), sort_keys=True) + "\n")
