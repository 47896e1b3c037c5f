"""Incremental naive Bayes experts and the online bagging/boosting baselines.

:class:`OnlineNaiveBayes` is a plain single model.  :class:`ExpertPool`
holds ``n`` naive Bayes models as stacked arrays so that predicting with and
training the whole pool costs a handful of numpy operations per instance.
Each expert differs from its siblings through its own Poisson(1) training
repetitions and, optionally, a random feature subspace.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .expert_core import RngHandle, substream
from .stream_io import DatasetSchema

VAR_REL_FLOOR = 1e-6
VAR_ABS_FLOOR = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)

# substream key prefixes; the cascade uses 0
POOL_KEY = 1
BAGGING_KEY = 3
BOOSTING_KEY = 4


def _split_kinds(schema: DatasetSchema) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    feats = schema.features
    num_idx = np.array([i for i, a in enumerate(feats) if a.is_numeric], dtype=np.intp)
    cat_idx = np.array([i for i, a in enumerate(feats) if not a.is_numeric], dtype=np.intp)
    domains = np.array([len(feats[i].values) for i in cat_idx], dtype=np.intp)
    return num_idx, cat_idx, domains


def _check_instance(schema: DatasetSchema, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (schema.num_features,):
        raise ValueError(f"instance has shape {x.shape}, schema expects ({schema.num_features},)")
    return x


class OnlineNaiveBayes:
    """Naive Bayes with Gaussian numeric and Laplace-smoothed nominal likelihoods.

    Before any training the prediction is class 0.  Ties go to the lower
    class index.  Missing values are ignored in training and prediction.
    """

    def __init__(self, schema: DatasetSchema, feature_mask: Sequence[bool] | None = None):
        self.schema = schema
        feats = schema.features
        L = schema.num_classes
        if feature_mask is None:
            feature_mask = [True] * len(feats)
        if len(feature_mask) != len(feats):
            raise ValueError("feature mask length does not match the schema")
        self.feature_mask = [bool(b) for b in feature_mask]
        self.class_counts = [0.0] * L
        # per attribute: numeric -> [n, mean, m2] per class plus global; nominal -> counts
        self.stats: list = []
        self.global_stats: list = []
        for a in feats:
            if a.is_numeric:
                self.stats.append([[0.0, 0.0, 0.0] for _ in range(L)])
                self.global_stats.append([0.0, 0.0, 0.0])
            else:
                self.stats.append([[0.0] * len(a.values) for _ in range(L)])
                self.global_stats.append(None)

    @property
    def trained(self) -> bool:
        return sum(self.class_counts) > 0

    def train(self, x, y: int, repetitions: int = 1) -> "OnlineNaiveBayes":
        if repetitions < 0:
            raise ValueError("repetitions must be >= 0")
        if repetitions == 0:
            return self
        x = _check_instance(self.schema, x)
        k = float(repetitions)
        self.class_counts[y] += k
        for j, a in enumerate(self.schema.features):
            v = x[j]
            if math.isnan(v):
                continue
            if a.is_numeric:
                _welford(self.stats[j][y], v, k)
                _welford(self.global_stats[j], v, k)
            else:
                self.stats[j][y][int(v)] += k
        return self

    def _variance(self, acc) -> float:
        n, _, m2 = acc
        return m2 / (n - 1.0) if n > 1 else 0.0

    def joint_log_likelihood(self, x) -> list[float]:
        x = _check_instance(self.schema, x)
        total = sum(self.class_counts)
        scores = []
        for c in range(self.schema.num_classes):
            if self.class_counts[c] <= 0:
                scores.append(-math.inf)
                continue
            s = math.log(self.class_counts[c] / total)
            for j, a in enumerate(self.schema.features):
                v = x[j]
                if not self.feature_mask[j] or math.isnan(v):
                    continue
                if a.is_numeric:
                    n, mean, _ = self.stats[j][c]
                    if n <= 0:
                        continue
                    floor = max(VAR_REL_FLOOR * self._variance(self.global_stats[j]), VAR_ABS_FLOOR)
                    var = max(self._variance(self.stats[j][c]), floor)
                    s += -0.5 * (_LOG_2PI + math.log(var) + (v - mean) ** 2 / var)
                else:
                    counts = self.stats[j][c]
                    s += math.log(counts[int(v)] + 1.0) - math.log(sum(counts) + len(counts))
            scores.append(s)
        return scores

    def predict(self, x) -> int:
        x = _check_instance(self.schema, x)
        if not self.trained:
            return 0
        scores = self.joint_log_likelihood(x)
        return max(range(len(scores)), key=lambda c: (scores[c], -c))


def _welford(acc: list, v: float, k: float) -> None:
    n0, mean0, m2 = acc
    n1 = n0 + k
    delta = v - mean0
    mean1 = mean0 + delta * k / n1
    acc[0] = n1
    acc[1] = mean1
    acc[2] = m2 + delta * (v - mean1) * k


def nb_predict(model: OnlineNaiveBayes, x) -> int:
    return model.predict(x)


def nb_train(model: OnlineNaiveBayes, x, y: int, repetitions: int = 1) -> OnlineNaiveBayes:
    return model.train(x, y, repetitions)


class _PoissonBuffer:
    """Per-expert Poisson draws, fetched in blocks from each expert's stream."""

    def __init__(self, rngs: Sequence[RngHandle], lam: float, block: int = 512):
        self.rngs = list(rngs)
        self.lam = lam
        self.block = block
        self._buf = np.empty((len(self.rngs), 0), dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[1]:
            self._buf = np.stack([g.poisson(self.lam, self.block) for g in self.rngs])
            self._pos = 0
        k = self._buf[:, self._pos]
        self._pos += 1
        return k


class NaiveBayesBank:
    """``E`` naive Bayes models over one schema, stored as stacked arrays.

    Model ``e`` computes exactly what ``OnlineNaiveBayes(schema, masks[e])``
    would after the same training calls.
    """

    def __init__(self, schema: DatasetSchema, size: int, masks: np.ndarray | None = None):
        self.schema = schema
        self.size = int(size)
        E, L = self.size, schema.num_classes
        self.num_idx, self.cat_idx, self.domains = _split_kinds(schema)
        dn, dc = len(self.num_idx), len(self.cat_idx)
        if masks is None:
            masks = np.ones((E, schema.num_features), dtype=bool)
        masks = np.asarray(masks, dtype=bool)
        if masks.shape != (E, schema.num_features):
            raise ValueError(f"masks have shape {masks.shape}, expected {(E, schema.num_features)}")
        self.masks = masks
        self.num_mask = masks[:, self.num_idx]
        self.cat_mask = masks[:, self.cat_idx]
        self.class_counts = np.zeros((E, L))
        self.num_n = np.zeros((E, L, dn))
        self.num_mean = np.zeros((E, L, dn))
        self.num_m2 = np.zeros((E, L, dn))
        self.glob_n = np.zeros((E, dn))
        self.glob_mean = np.zeros((E, dn))
        self.glob_m2 = np.zeros((E, dn))
        vmax = int(self.domains.max()) if dc else 1
        self.cat_counts = np.zeros((E, L, dc, vmax))
        self.cat_n = np.zeros((E, L, dc))
        self._cat_cols = np.arange(dc)

    def predict(self, x, sel: slice = slice(None)) -> np.ndarray:
        """Predicted class index for each model in ``sel``."""
        x = np.asarray(x, dtype=np.float64)
        counts = self.class_counts[sel]
        with np.errstate(divide="ignore"):
            score = np.log(counts / counts.sum(axis=1, keepdims=True).clip(min=1e-300))
        if self.num_idx.size:
            xn = x[self.num_idx]
            valid = ~np.isnan(xn)
            if valid.any():
                n = self.num_n[sel][:, :, valid]
                mean = self.num_mean[sel][:, :, valid]
                m2 = self.num_m2[sel][:, :, valid]
                gn = self.glob_n[sel][:, valid]
                gvar = np.where(gn > 1, self.glob_m2[sel][:, valid] / np.maximum(gn - 1, 1), 0.0)
                floor = np.maximum(VAR_REL_FLOOR * gvar, VAR_ABS_FLOOR)[:, None, :]
                var = np.where(n > 1, m2 / np.maximum(n - 1, 1), 0.0)
                var = np.maximum(var, floor)
                ll = -0.5 * (_LOG_2PI + np.log(var) + (xn[valid] - mean) ** 2 / var)
                use = (n > 0) & self.num_mask[sel][:, None, valid]
                score = score + np.where(use, ll, 0.0).sum(axis=2)
        if self.cat_idx.size:
            xc = x[self.cat_idx]
            valid = ~np.isnan(xc)
            if valid.any():
                cols = self._cat_cols[valid]
                vals = xc[valid].astype(np.intp)
                c = self.cat_counts[sel][:, :, cols, vals]
                ll = np.log(c + 1.0) - np.log(self.cat_n[sel][:, :, cols] + self.domains[cols])
                use = self.cat_mask[sel][:, None, cols]
                score = score + np.where(use, ll, 0.0).sum(axis=2)
        # untrained rows are all -inf and argmax yields class 0
        return np.argmax(score, axis=1)

    def train(self, x, y: int, k, sel: slice = slice(None)) -> None:
        """Train each model in ``sel`` on ``(x, y)`` with its repetition count ``k``."""
        x = np.asarray(x, dtype=np.float64)
        k = np.asarray(k, dtype=np.float64)
        if not k.any():
            return
        self.class_counts[sel, y] += k
        if self.num_idx.size:
            xn = x[self.num_idx]
            valid = np.flatnonzero(~np.isnan(xn))
            if valid.size:
                xv = xn[valid]
                kk = k[:, None]
                n0 = self.num_n[sel, y][:, valid]
                mu0 = self.num_mean[sel, y][:, valid]
                n1, mu1, dm2 = _bulk_welford(n0, mu0, xv, kk)
                self.num_n[sel, y, valid] = n1
                self.num_mean[sel, y, valid] = mu1
                self.num_m2[sel, y, valid] += dm2
                g0 = self.glob_n[sel][:, valid]
                gm0 = self.glob_mean[sel][:, valid]
                g1, gm1, gdm2 = _bulk_welford(g0, gm0, xv, kk)
                self.glob_n[sel, valid] = g1
                self.glob_mean[sel, valid] = gm1
                self.glob_m2[sel, valid] += gdm2
        if self.cat_idx.size:
            xc = x[self.cat_idx]
            valid = np.flatnonzero(~np.isnan(xc))
            if valid.size:
                vals = xc[valid].astype(np.intp)
                self.cat_counts[sel, y, valid, vals] += k[:, None]
                self.cat_n[sel, y, valid] += k[:, None]


def _bulk_welford(n0, mu0, x, k):
    n1 = n0 + k
    delta = x - mu0
    ratio = np.divide(k, n1, out=np.zeros_like(n1), where=n1 > 0)
    mu1 = mu0 + delta * ratio
    return n1, mu1, delta * (x - mu1) * k


def draw_subspace_mask(rng: RngHandle, num_features: int, keep_prob: float) -> np.ndarray:
    """Keep each feature with probability ``keep_prob``; redraw until non-empty."""
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    while True:
        m = rng.random(num_features) < keep_prob
        if m.any():
            return m


class ExpertPool:
    """The ``n`` shared naive Bayes experts consulted by RWM and the cascade.

    Expert ``i`` draws its feature mask and then its per-instance Poisson
    repetition counts from the substream ``(seed, key, i)``.
    """

    def __init__(
        self,
        schema: DatasetSchema,
        n: int = 100,
        seed: int = 0,
        subspace: bool = True,
        keep_prob: float = 0.7,
        poisson_mean: float = 1.0,
        key: int = POOL_KEY,
    ):
        if n < 1:
            raise ValueError(f"pool needs at least one expert, got {n}")
        self.schema = schema
        self.n = int(n)
        self.subspace = bool(subspace)
        self.keep_prob = float(keep_prob)
        self.poisson_mean = float(poisson_mean)
        rngs = [substream(seed, key, i) for i in range(self.n)]
        d = schema.num_features
        if self.subspace:
            masks = np.stack([draw_subspace_mask(g, d, self.keep_prob) for g in rngs])
        else:
            masks = np.ones((self.n, d), dtype=bool)
        self.bank = NaiveBayesBank(schema, self.n, masks)
        self._poisson = _PoissonBuffer(rngs, self.poisson_mean)
        self.last_repetitions = np.zeros(self.n, dtype=np.int64)

    @property
    def masks(self) -> np.ndarray:
        return self.bank.masks

    def predict(self, x) -> np.ndarray:
        return self.bank.predict(_check_instance(self.schema, x))

    def train(self, x, y: int) -> np.ndarray:
        """Train every expert with its own Poisson repetition count; returns the counts."""
        k = self._poisson.next()
        self.last_repetitions = k
        self.bank.train(_check_instance(self.schema, x), int(y), k)
        return k


def pool_predict(pool: ExpertPool, x) -> np.ndarray:
    return pool.predict(x)


def pool_train(pool: ExpertPool, x, y: int) -> ExpertPool:
    pool.train(x, y)
    return pool


class OnlineBagging:
    """Oza's online bagging: each model trains ``Poisson(1)`` times per instance."""

    def __init__(self, schema: DatasetSchema, n: int = 100, seed: int = 0):
        self.pool = ExpertPool(schema, n, seed, subspace=False, key=BAGGING_KEY)
        self.num_classes = schema.num_classes

    def predict(self, x) -> int:
        votes = np.bincount(self.pool.predict(x), minlength=self.num_classes)
        return int(np.argmax(votes))

    def train(self, x, y: int) -> None:
        self.pool.train(x, y)


class OnlineBoosting:
    """Oza's online boosting with naive Bayes stages.

    For each instance the sample weight ``lam`` starts at 1; stage ``m``
    trains ``Poisson(lam)`` times and then rescales ``lam`` by
    ``N / (2 * lambda_correct[m])`` or ``N / (2 * lambda_wrong[m])``
    depending on whether it now classifies the instance correctly.
    """

    EPS_CLAMP = 1e-10

    def __init__(self, schema: DatasetSchema, n: int = 100, seed: int = 0):
        self.schema = schema
        self.n = int(n)
        self.bank = NaiveBayesBank(schema, self.n)
        self.rng = substream(seed, BOOSTING_KEY)
        self.lambda_correct = np.zeros(self.n)
        self.lambda_wrong = np.zeros(self.n)
        self.instances_seen = 0
        self.last_lambdas = np.zeros(0)

    def stage_weights(self) -> np.ndarray:
        """Vote weight ``log((1-eps)/eps)`` per stage; 0 for untrained or worse-than-chance stages."""
        total = self.lambda_correct + self.lambda_wrong
        eps = np.divide(self.lambda_wrong, total, out=np.full(self.n, 0.5), where=total > 0)
        eps = np.clip(eps, self.EPS_CLAMP, 1.0 - self.EPS_CLAMP)
        w = np.log((1.0 - eps) / eps)
        return np.where((total > 0) & (w > 0), w, 0.0)

    def predict(self, x) -> int:
        x = _check_instance(self.schema, x)
        w = self.stage_weights()
        if not w.any():
            return int(self.bank.predict(x, slice(0, 1))[0])
        preds = self.bank.predict(x)
        votes = np.bincount(preds, weights=w, minlength=self.schema.num_classes)
        return int(np.argmax(votes))

    def train(self, x, y: int) -> None:
        x = _check_instance(self.schema, x)
        self.instances_seen += 1
        N = float(self.instances_seen)
        lam = 1.0
        lambdas = np.empty(self.n)
        for m in range(self.n):
            lambdas[m] = lam
            k = self.rng.poisson(lam)
            sel = slice(m, m + 1)
            if k:
                self.bank.train(x, y, [k], sel)
            if self.bank.predict(x, sel)[0] == y:
                self.lambda_correct[m] += lam
                lam *= N / (2.0 * self.lambda_correct[m])
            else:
                self.lambda_wrong[m] += lam
                lam *= N / (2.0 * self.lambda_wrong[m])
        self.last_lambdas = lambdas
