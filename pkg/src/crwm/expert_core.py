"""Randomized weighted majority over a fixed pool of experts.

Weights are kept as natural logs so that long streams with small penalties
(``beta ** m`` for thousands of mistakes) never underflow.  The public
functions operate on a :class:`WeightVector` in place and also return it,
which keeps call sites short in the prequential loop.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

RngHandle = np.random.Generator


def substream(seed: int, *key: int) -> RngHandle:
    """Independent generator for ``(seed, *key)``.

    Streams with different keys never overlap, so each learner, expert and
    synthetic source can draw without perturbing the others.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not (0.0 < beta < 1.0) or not math.isfinite(beta):
        raise ValueError(f"beta must lie in the open interval (0, 1), got {beta}")
    return beta


class WeightVector:
    """Multiplicative weights of one RWM learner.

    ``log_weights[i]`` equals ``m_i * ln(beta)`` where ``m_i`` is the number
    of penalised mistakes of expert ``i``; every weight starts at 1.
    """

    __slots__ = ("log_weights", "beta", "log_beta")

    def __init__(self, n: int, beta: float = 0.5):
        if n < 1:
            raise ValueError(f"need at least one expert, got n={n}")
        self.beta = check_beta(beta)
        self.log_beta = math.log(self.beta)
        self.log_weights = np.zeros(int(n), dtype=np.float64)

    def __len__(self) -> int:
        return self.log_weights.shape[0]

    def __repr__(self) -> str:
        return f"WeightVector(n={len(self)}, beta={self.beta})"

    @classmethod
    def from_log_weights(cls, log_weights: Sequence[float], beta: float) -> "WeightVector":
        lw = np.asarray(log_weights, dtype=np.float64)
        if lw.ndim != 1 or lw.size == 0:
            raise ValueError("log weights must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log weights must be finite")
        w = cls(lw.size, beta)
        w.log_weights = lw.copy()
        return w

    def copy(self) -> "WeightVector":
        return WeightVector.from_log_weights(self.log_weights, self.beta)

    @property
    def weights(self) -> np.ndarray:
        """Actual weights ``exp(log_weights)``; may underflow to 0 on long streams."""
        return np.exp(self.log_weights)

    def relative_weights(self) -> np.ndarray:
        """Weights rescaled so the largest is 1 (same ratios, never all zero)."""
        return np.exp(self.log_weights - self.log_weights.max())

    def log_total(self) -> float:
        """``ln W`` computed without leaving log space."""
        top = self.log_weights.max()
        return float(top + math.log(np.exp(self.log_weights - top).sum()))


def _as_predictions(w: WeightVector, predictions) -> np.ndarray:
    p = np.asarray(predictions)
    if p.ndim != 1 or p.shape[0] != len(w):
        raise ValueError(
            f"prediction vector has shape {p.shape}, expected ({len(w)},)"
        )
    return p


def rwm_predict(w: WeightVector, predictions, rng: RngHandle) -> tuple[int, int]:
    """Sample an expert with probability ``w_i / W`` and return its label.

    Returns ``(label, chosen_expert)``.  Sampling walks the cumulative
    weight array; a draw landing exactly on a boundary goes to the lower
    index.  Exactly one uniform variate is consumed per call.
    """
    p = _as_predictions(w, predictions)
    lw = w.log_weights
    cdf = np.exp(lw - lw.max()).cumsum()
    total = float(cdf[-1])
    # any nan or +inf log weight makes the total nan
    if not math.isfinite(total):
        raise ValueError("non-finite weight")
    # u in (0, W]; first index with cdf >= u
    u = (1.0 - rng.random()) * total
    i = int(cdf.searchsorted(u, side="left"))
    i = min(i, len(cdf) - 1)
    return int(p[i]), i


def rwm_update(w: WeightVector, predictions, truth: int) -> WeightVector:
    """Multiply the weight of every wrong expert by ``beta`` (in place)."""
    p = _as_predictions(w, predictions)
    w.log_weights[p != truth] += w.log_beta
    return w


def expected_mistake_fraction(w: WeightVector, predictions, truth: int) -> float:
    """Fraction of total weight sitting on experts that disagree with ``truth``."""
    p = _as_predictions(w, predictions)
    rel = w.relative_weights()
    wrong = p != truth
    if not wrong.any():
        return 0.0
    return float(rel[wrong].sum() / rel.sum())


class RandomizedWeightedMajority:
    """Single RWM learner bundling its weights with a private random stream."""

    def __init__(self, n: int, beta: float = 0.5, seed: int = 0, rng: RngHandle | None = None):
        self.weights = WeightVector(n, beta)
        self.rng = rng if rng is not None else substream(seed, 0, 0)
        self.instances_seen = 0

    @property
    def beta(self) -> float:
        return self.weights.beta

    def predict(self, predictions) -> int:
        return rwm_predict(self.weights, predictions, self.rng)[0]

    def expected_mistake(self, predictions, truth: int) -> float:
        return expected_mistake_fraction(self.weights, predictions, truth)

    def update(self, predictions, truth: int) -> None:
        rwm_update(self.weights, predictions, truth)
        self.instances_seen += 1
