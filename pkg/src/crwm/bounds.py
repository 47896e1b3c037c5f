"""Closed-form mistake bounds for RWM and the cascade.

All functions are pure.  Mistake counts are expected to be exact integer
counts, not products of rates and region sizes.
"""

from __future__ import annotations

import math
from typing import Sequence

from .expert_core import check_beta


def _check_n(n: int) -> None:
    if n < 1:
        raise ValueError(f"expert count must be >= 1, got {n}")


def _check_count(m, name: str = "mistake count") -> None:
    if m < 0:
        raise ValueError(f"{name} must be >= 0, got {m}")


def rwm_mistake_bound(m: int, n: int, beta: float) -> float:
    """Upper bound on expected RWM mistakes given the best expert made ``m``.

    ``(m ln(1/beta) + ln n) / (1 - beta)``
    """
    beta = check_beta(beta)
    _check_n(n)
    _check_count(m)
    return (m * math.log(1.0 / beta) + math.log(n)) / (1.0 - beta)


def crwm_mistake_bound(m_per_learner: Sequence[int], n: int, beta: float) -> float:
    """Upper bound on expected cascade mistakes.

    ``m_per_learner[j]`` is the best expert's mistake count on the instances
    answered by learner ``j``; one ``ln n`` term is paid per learner.
    """
    beta = check_beta(beta)
    _check_n(n)
    ms = list(m_per_learner)
    if len(ms) < 3:
        raise ValueError(f"a cascade has at least 3 learners, got {len(ms)} counts")
    for m in ms:
        _check_count(m)
    return (sum(ms) * math.log(1.0 / beta) + len(ms) * math.log(n)) / (1.0 - beta)


def bound_difference(m_per_learner: Sequence[int], m: int, n: int, beta: float) -> float:
    """``crwm_mistake_bound - rwm_mistake_bound`` computed in one expression.

    Negative means the cascade bound is tighter.
    """
    beta = check_beta(beta)
    _check_n(n)
    ms = list(m_per_learner)
    extra = len(ms) - 1
    return ((sum(ms) - m) * math.log(1.0 / beta) + extra * math.log(n)) / (1.0 - beta)


def crossover_threshold(n: int, beta: float, num_classes: int = 2) -> float:
    """Mistake savings the cascade needs before its bound beats RWM's.

    For two classes this is ``2 ln n / ln(1/beta)``; with ``L`` classes the
    cascade pays ``L`` extra ``ln n`` terms.
    """
    beta = check_beta(beta)
    _check_n(n)
    return num_classes * math.log(n) / math.log(1.0 / beta)


def crossover_satisfied(k1: int, gap: float, n: int, beta: float, num_classes: int = 2) -> bool:
    """True iff ``k1 * gap`` strictly exceeds :func:`crossover_threshold`.

    ``k1`` is the number of instances in the region where the overall best
    expert is beaten and ``gap`` the error-rate margin there.
    """
    if k1 < 0:
        raise ValueError(f"region size must be >= 0, got {k1}")
    return k1 * gap > crossover_threshold(n, beta, num_classes)


def biased_fp_rate(fp: int, tp: int, n_p: float = 1, n_c: float = 2) -> float:
    """Smoothed false-positive share ``(fp + n_p) / (fp + tp + n_c)``.

    An expert that never predicts positive scores ``n_p / n_c`` instead of 0.
    """
    _check_count(fp, "fp")
    _check_count(tp, "tp")
    if not (n_c > n_p >= 0):
        raise ValueError(f"need n_c > n_p >= 0, got n_p={n_p}, n_c={n_c}")
    return (fp + n_p) / (fp + tp + n_c)


def biased_fn_rate(fn: int, tn: int, n_p: float = 1, n_c: float = 2) -> float:
    """Counterpart of :func:`biased_fp_rate` over negative predictions."""
    return biased_fp_rate(fn, tn, n_p, n_c)
