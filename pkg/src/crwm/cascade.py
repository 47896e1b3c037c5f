"""Cascading randomized weighted majority.

A cascade keeps ``L + 1`` weight vectors over one shared pool of ``n``
experts: one guard learner per class, visited in ``class_order``, and a
final learner.  Every learner draws a label on every instance.  The first
guard whose draw equals its own class answers; if none does, the final
learner answers.  Only the answering learner is updated afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expert_core import (
    RngHandle,
    WeightVector,
    check_beta,
    expected_mistake_fraction,
    rwm_predict,
    rwm_update,
    substream,
)


@dataclass(frozen=True)
class RoutingOutcome:
    label: int
    responder: int
    per_learner_labels: tuple[int, ...]
    chosen_experts: tuple[int, ...] = ()


class CrwmModel:
    """Weights and routing chain of a cascade.

    ``learners[j]`` for ``j < L`` guards class ``class_order[j]``;
    ``learners[L]`` is the final learner.
    """

    def __init__(
        self,
        n: int,
        num_classes: int,
        beta: float = 0.5,
        class_order: Sequence[int] | None = None,
    ):
        if num_classes < 2:
            raise ValueError(f"need at least two classes, got {num_classes}")
        self.num_classes = int(num_classes)
        self.beta = check_beta(beta)
        if class_order is None:
            class_order = range(self.num_classes)
        order = tuple(int(c) for c in class_order)
        if sorted(order) != list(range(self.num_classes)):
            raise ValueError(
                f"class_order {order} is not a permutation of 0..{self.num_classes - 1}"
            )
        self.class_order = order
        self.learners = [WeightVector(n, self.beta) for _ in range(self.num_classes + 1)]
        self.instances_seen = 0

    @property
    def n_experts(self) -> int:
        return len(self.learners[0])

    @property
    def final_index(self) -> int:
        return self.num_classes

    def guarded_class(self, j: int) -> int | None:
        return self.class_order[j] if j < self.num_classes else None

    def copy(self) -> "CrwmModel":
        m = CrwmModel(self.n_experts, self.num_classes, self.beta, self.class_order)
        m.learners = [w.copy() for w in self.learners]
        m.instances_seen = self.instances_seen
        return m


def learner_rngs(seed: int, num_learners: int) -> list[RngHandle]:
    """One random stream per cascade position, keyed by ``(seed, position)``."""
    return [substream(seed, 0, j) for j in range(num_learners)]


def crwm_predict(model: CrwmModel, predictions, rngs: Sequence[RngHandle]) -> RoutingOutcome:
    if len(rngs) != len(model.learners):
        raise ValueError(f"need {len(model.learners)} random streams, got {len(rngs)}")
    draws = [rwm_predict(w, predictions, g) for w, g in zip(model.learners, rngs)]
    labels = tuple(d[0] for d in draws)
    chosen = tuple(d[1] for d in draws)
    for j, cls in enumerate(model.class_order):
        if labels[j] == cls:
            return RoutingOutcome(cls, j, labels, chosen)
    final = model.final_index
    return RoutingOutcome(labels[final], final, labels, chosen)


def _check_responder(model: CrwmModel, outcome: RoutingOutcome) -> int:
    r = outcome.responder
    if not (0 <= r < len(model.learners)):
        raise ValueError(f"responder {r} out of range 0..{len(model.learners) - 1}")
    return r


def crwm_update(model: CrwmModel, outcome: RoutingOutcome, predictions, truth: int) -> CrwmModel:
    """Penalise wrong experts in the responding learner only (in place)."""
    r = _check_responder(model, outcome)
    rwm_update(model.learners[r], predictions, truth)
    model.instances_seen += 1
    return model


def crwm_expected_mistake(model: CrwmModel, outcome: RoutingOutcome, predictions, truth: int) -> float:
    r = _check_responder(model, outcome)
    return expected_mistake_fraction(model.learners[r], predictions, truth)


class CascadingRWM:
    """A :class:`CrwmModel` plus the per-position random streams it draws from."""

    def __init__(
        self,
        n: int,
        num_classes: int,
        beta: float = 0.5,
        class_order: Sequence[int] | None = None,
        seed: int = 0,
    ):
        self.model = CrwmModel(n, num_classes, beta, class_order)
        self.rngs = learner_rngs(seed, len(self.model.learners))

    def predict(self, predictions) -> RoutingOutcome:
        return crwm_predict(self.model, predictions, self.rngs)

    def expected_mistake(self, outcome: RoutingOutcome, predictions, truth: int) -> float:
        return crwm_expected_mistake(self.model, outcome, predictions, truth)

    def update(self, outcome: RoutingOutcome, predictions, truth: int) -> None:
        crwm_update(self.model, outcome, predictions, truth)

    def state(self) -> dict:
        """Checkpoint view: log-weights per position, order, beta, counter."""
        m = self.model
        return {
            "beta": m.beta,
            "num_classes": m.num_classes,
            "class_order": list(m.class_order),
            "instances_seen": m.instances_seen,
            "log_weights": [w.log_weights.tolist() for w in m.learners],
        }

    @staticmethod
    def model_from_state(state: dict) -> CrwmModel:
        lw = np.asarray(state["log_weights"], dtype=np.float64)
        m = CrwmModel(lw.shape[1], int(state["num_classes"]), float(state["beta"]), state["class_order"])
        if lw.shape[0] != len(m.learners):
            raise ValueError(f"expected {len(m.learners)} weight rows, got {lw.shape[0]}")
        m.learners = [WeightVector.from_log_weights(row, m.beta) for row in lw]
        m.instances_seen = int(state["instances_seen"])
        return m
