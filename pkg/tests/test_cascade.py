import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crwm.bounds import crwm_mistake_bound, rwm_mistake_bound
from crwm.cascade import (
    CascadingRWM,
    CrwmModel,
    RoutingOutcome,
    crwm_expected_mistake,
    crwm_predict,
    crwm_update,
    learner_rngs,
)
from crwm.expert_core import WeightVector, expected_mistake_fraction, rwm_update

from conftest import weights_of


class ScriptedRng:
    """Stands in for a generator; picks the expert whose cumulative slot holds ``u``."""

    def __init__(self, r):
        self.r = r

    def random(self):
        return self.r


def forced(model, expert_per_learner):
    """Random streams that make learner j pick ``expert_per_learner[j]`` under uniform weights."""
    n = model.n_experts
    return [ScriptedRng(1.0 - (e + 0.5) / n) for e in expert_per_learner]


class TestModel:
    def test_shape(self):
        m = CrwmModel(5, 3)
        assert len(m.learners) == 4
        assert all(len(w) == 5 for w in m.learners)
        assert m.class_order == (0, 1, 2)

    @pytest.mark.parametrize("order", [(0, 0), (0, 2), (1,), (0, 1, 2)])
    def test_order_must_be_permutation(self, order):
        with pytest.raises(ValueError):
            CrwmModel(3, 2, 0.5, order)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            CrwmModel(3, 1)


class TestRouting:
    """Binary routing: guard 0, guard 1, then the final learner."""

    P = [0, 1, 1]  # expert 0 says class 0, experts 1 and 2 say class 1

    def test_guard0_accepts(self):
        m = CrwmModel(3, 2)
        out = crwm_predict(m, self.P, forced(m, [0, 1, 2]))
        assert (out.label, out.responder) == (0, 0)

    def test_guard1_accepts(self):
        m = CrwmModel(3, 2)
        out = crwm_predict(m, self.P, forced(m, [1, 1, 0]))
        assert (out.label, out.responder) == (1, 1)
        assert out.per_learner_labels == (1, 1, 0)

    @pytest.mark.parametrize("final_pick,label", [(0, 0), (2, 1)])
    def test_final_learner(self, final_pick, label):
        m = CrwmModel(3, 2)
        out = crwm_predict(m, self.P, forced(m, [1, 0, final_pick]))
        assert (out.label, out.responder) == (label, 2)

    def test_custom_order(self):
        m = CrwmModel(3, 2, class_order=(1, 0))
        out = crwm_predict(m, self.P, forced(m, [1, 0, 0]))
        assert (out.label, out.responder) == (1, 0)

    def test_all_learners_draw(self):
        m = CrwmModel(3, 2)
        rngs = learner_rngs(0, 3)
        crwm_predict(m, self.P, rngs)
        fresh = learner_rngs(0, 3)
        for g, f in zip(rngs, fresh):
            f.random()
            assert g.random() == f.random()

    def test_rng_count_checked(self):
        with pytest.raises(ValueError):
            crwm_predict(CrwmModel(3, 2), self.P, learner_rngs(0, 2))


class TestUpdate:
    def test_only_responder_changes(self):
        m = CrwmModel(6, 2)
        p = [0, 0, 1, 0, 0, 1]
        before = [w.log_weights.copy() for w in m.learners]
        crwm_update(m, RoutingOutcome(0, 0, (0, 0, 0)), p, 0)
        np.testing.assert_allclose(m.learners[0].weights, [1, 1, 0.5, 1, 1, 0.5])
        for j in (1, 2):
            assert m.learners[j].log_weights.tobytes() == before[j].tobytes()

    def test_all_correct_unchanged(self):
        m = CrwmModel(3, 2)
        crwm_update(m, RoutingOutcome(1, 1, (1, 1, 1)), [1, 1, 1], 1)
        assert all(np.all(w.log_weights == 0) for w in m.learners)

    def test_bad_responder(self):
        with pytest.raises(ValueError):
            crwm_update(CrwmModel(3, 2), RoutingOutcome(0, 3, (0, 0, 0)), [0, 0, 0], 0)

    def test_expected_mistake_of_responder(self):
        m = CrwmModel(2, 2)
        m.learners[0] = weights_of([1, 1])
        m.learners[1] = weights_of([1, 1e-9])
        out0 = RoutingOutcome(0, 0, (0, 0, 0))
        out1 = RoutingOutcome(1, 1, (1, 1, 1))
        assert crwm_expected_mistake(m, out0, [0, 1], 0) == 0.5
        assert crwm_expected_mistake(m, out1, [1, 0], 1) < 1e-8

    def test_expected_mistake_all_on_correct(self):
        m = CrwmModel(2, 2)
        m.learners[2] = weights_of([1.0, 1e-300])
        assert crwm_expected_mistake(m, RoutingOutcome(1, 2, (1, 0, 1)), [1, 0], 1) < 1e-299


def random_stream(seed, n, L, N):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, L, N)
    err = rng.uniform(0, 0.6, n)
    flip = rng.random((N, n)) < err
    P = np.where(flip, (y[:, None] + rng.integers(1, L, (N, n))) % L, y[:, None])
    return y, P


class TestReplayOracle:
    """Each learner's trajectory equals plain RWM on its routed subsequence."""

    @pytest.mark.parametrize("L", [2, 3, 5])
    def test_replay(self, L):
        n, N = 7, 400
        y, P = random_stream(L, n, L, N)
        learner = CascadingRWM(n, L, 0.5, seed=3)
        routed = [[] for _ in range(L + 1)]
        total = 0.0
        for t in range(N):
            out = learner.predict(P[t])
            if out.responder < L:
                assert out.label == learner.model.class_order[out.responder]
            total += learner.expected_mistake(out, P[t], int(y[t]))
            learner.update(out, P[t], int(y[t]))
            routed[out.responder].append(t)
        assert sum(len(r) for r in routed) == N
        replay_total = 0.0
        for j, idx in enumerate(routed):
            w = WeightVector(n, 0.5)
            for t in idx:
                replay_total += expected_mistake_fraction(w, P[t], int(y[t]))
                rwm_update(w, P[t], int(y[t]))
            np.testing.assert_array_equal(w.log_weights, learner.model.learners[j].log_weights)
        assert math.isclose(total, replay_total, rel_tol=1e-9, abs_tol=1e-9)


class TestCheckpoint:
    def test_state_round_trip(self):
        c = CascadingRWM(4, 3, 0.3, (2, 0, 1), seed=1)
        y, P = random_stream(0, 4, 3, 50)
        for t in range(50):
            out = c.predict(P[t])
            c.update(out, P[t], int(y[t]))
        m = CascadingRWM.model_from_state(c.state())
        assert m.class_order == (2, 0, 1) and m.instances_seen == 50
        for a, b in zip(m.learners, c.model.learners):
            np.testing.assert_array_equal(a.log_weights, b.log_weights)

    def test_copy_is_independent(self):
        m = CrwmModel(2, 2)
        c = m.copy()
        crwm_update(c, RoutingOutcome(0, 0, (0, 0, 0)), [1, 1], 0)
        assert np.all(m.learners[0].log_weights == 0)


class TestBoundProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 12), st.sampled_from([2, 3, 5]),
           st.sampled_from([0.1, 0.5, 0.9]), st.integers(20, 300))
    def test_per_learner_and_total_bounds(self, seed, n, L, beta, N):
        y, P = random_stream(seed, n, L, N)
        c = CascadingRWM(n, L, beta, seed=seed)
        M = np.zeros(L + 1)
        m = np.zeros((n, L + 1), dtype=int)
        for t in range(N):
            out = c.predict(P[t])
            M[out.responder] += c.expected_mistake(out, P[t], int(y[t]))
            c.update(out, P[t], int(y[t]))
            m[:, out.responder] += P[t] != y[t]
        for j in range(L + 1):
            for k in range(n):
                assert M[j] <= rwm_mistake_bound(int(m[k, j]), n, beta) * (1 + 1e-9)
        assert M.sum() <= crwm_mistake_bound(m.min(axis=0).tolist(), n, beta) * (1 + 1e-9)
