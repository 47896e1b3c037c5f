"""Prequential (test-then-train) experiments.

Every instance is first predicted, then its label is revealed to the
learner, and only then do the base experts train on it.  Runs differ only
in their seed (``config.seed + run_index``), so two algorithms evaluated
with the same config are paired run by run.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.special import betainc

from . import bounds
from .base_learners import ExpertPool, OnlineBagging, OnlineBoosting
from .cascade import CascadingRWM
from .expert_core import (
    RandomizedWeightedMajority,
    check_beta,
    expected_mistake_fraction,
    rwm_predict,
    rwm_update,
    substream,
)
from .stream_io import Dataset

ALGORITHMS = ("rwm", "crwm", "online_bagging", "online_boosting")
EXPERT_ALGORITHMS = ("rwm", "crwm")
DEFAULT_BETAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
SYNTH_KEY = 2
# relative slack for floating-point round-off when checking bounds
BOUND_RTOL = 1e-9


class BoundViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "crwm"
    n_experts: int = 100
    beta: float = 0.5
    runs: int = 50
    seed: int = 0
    class_order: tuple[int, ...] | None = None
    subspace: bool = True
    keep_prob: float = 0.7
    poisson_mean: float = 1.0
    betas: tuple[float, ...] = DEFAULT_BETAS

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        check_beta(self.beta)
        for b in self.betas:
            check_beta(b)
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if not (0.0 < self.keep_prob <= 1.0):
            raise ValueError("keep_prob must lie in (0, 1]")
        if self.poisson_mean <= 0:
            raise ValueError("poisson_mean must be > 0")
        if self.class_order is not None:
            object.__setattr__(self, "class_order", tuple(int(c) for c in self.class_order))

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# -- synthetic expert streams ------------------------------------------------

@dataclass(frozen=True)
class SyntheticExpertSpec:
    """Oracle experts: ``error_rates[i, c]`` is P(expert i errs | true class c)."""

    error_rates: tuple[tuple[float, ...], ...]
    prior: tuple[float, ...]
    length: int
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        err = np.asarray(self.error_rates, dtype=np.float64)
        prior = np.asarray(self.prior, dtype=np.float64)
        if err.ndim != 2 or err.shape[0] < 1:
            raise ValueError("error_rates must be an (experts x classes) matrix")
        if prior.ndim != 1 or prior.shape[0] != err.shape[1] or prior.shape[0] < 2:
            raise ValueError("prior must have one entry per class (>= 2 classes)")
        if np.any((err < 0) | (err > 1)) or np.any(prior < 0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError(f"prior sums to {prior.sum()}, not 1")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        object.__setattr__(self, "error_rates", tuple(tuple(float(v) for v in r) for r in err))
        object.__setattr__(self, "prior", tuple(float(v) for v in prior))

    @property
    def n_experts(self) -> int:
        return len(self.error_rates)

    @property
    def num_classes(self) -> int:
        return len(self.prior)


@dataclass
class SyntheticStream:
    y: np.ndarray
    predictions: np.ndarray
    num_classes: int
    name: str = "synthetic"

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def n_experts(self) -> int:
        return self.predictions.shape[1]


def generate_synthetic_stream(spec: SyntheticExpertSpec) -> SyntheticStream:
    """Draw labels from the prior; each expert flips to a uniformly random wrong class."""
    rng = substream(spec.seed, SYNTH_KEY)
    err = np.asarray(spec.error_rates)
    L, N = spec.num_classes, spec.length
    y = rng.choice(L, size=N, p=np.asarray(spec.prior))
    flip = rng.random((N, spec.n_experts)) < err[:, y].T
    offset = rng.integers(1, L, size=(N, spec.n_experts))
    wrong = (y[:, None] + offset) % L
    preds = np.where(flip, wrong, y[:, None]).astype(np.int64)
    return SyntheticStream(y.astype(np.int64), preds, L, spec.name)


def specialist_spec(length: int = 10_000, seed: int = 0) -> SyntheticExpertSpec:
    """Two specialists and one generalist.

    Expert 0 errs 10% on class 0 and 30% on class 1, expert 1 the reverse,
    expert 2 errs 18% on both.  Expert 2 is best overall while each
    specialist is best on its own class.
    """
    return SyntheticExpertSpec(
        error_rates=((0.10, 0.30), (0.30, 0.10), (0.18, 0.18)),
        prior=(0.5, 0.5),
        length=length,
        seed=seed,
        name="specialists",
    )


def random_synthetic_spec(rng: np.random.Generator, n: int, num_classes: int, length: int, seed: int) -> SyntheticExpertSpec:
    err = rng.uniform(0.0, 0.6, size=(n, num_classes))
    prior = rng.dirichlet(np.ones(num_classes))
    return SyntheticExpertSpec(tuple(map(tuple, err)), tuple(prior), length, seed, "random")


StreamLike = Union[Dataset, SyntheticStream, SyntheticExpertSpec]


# -- per-run results ----------------------------------------------------------

@dataclass
class RunResult:
    """Counters from one prequential pass.

    ``expert_region_mistakes[k, j]`` counts expert ``k``'s mistakes on the
    instances answered by cascade position ``j`` (a single column for RWM).
    ``expert_confusion[k, c, d]`` counts instances of true class ``c`` that
    expert ``k`` labelled ``d``.
    """

    algorithm: str
    seed: int
    beta: float
    n_instances: int
    num_classes: int
    mistakes: int
    expected_mistakes: float
    routed_counts: np.ndarray
    learner_expected_mistakes: np.ndarray
    expert_region_mistakes: np.ndarray
    expert_confusion: np.ndarray
    seconds: float = 0.0

    @property
    def n_experts(self) -> int:
        return self.expert_region_mistakes.shape[0]

    @property
    def has_experts(self) -> bool:
        return self.algorithm in EXPERT_ALGORITHMS and self.n_experts > 0

    @property
    def accuracy(self) -> float:
        return 1.0 - self.mistakes / self.n_instances

    @property
    def correct(self) -> int:
        return self.n_instances - self.mistakes

    # bound bookkeeping
    @property
    def expert_mistakes(self) -> np.ndarray:
        return self.expert_region_mistakes.sum(axis=1)

    @property
    def best_expert(self) -> int:
        return int(np.argmin(self.expert_mistakes))

    @property
    def best_expert_mistakes(self) -> int:
        return int(self.expert_mistakes.min())

    @property
    def region_best_mistakes(self) -> np.ndarray:
        return self.expert_region_mistakes.min(axis=0)

    @property
    def rwm_bound(self) -> float:
        """Single-learner bound from the overall best expert on this stream."""
        return bounds.rwm_mistake_bound(self.best_expert_mistakes, self.n_experts, self.beta)

    @property
    def crwm_bound(self) -> float:
        return bounds.crwm_mistake_bound(self.region_best_mistakes.tolist(), self.n_experts, self.beta)

    @property
    def learner_bounds(self) -> np.ndarray:
        return np.array([
            bounds.rwm_mistake_bound(int(m), self.n_experts, self.beta)
            for m in self.region_best_mistakes
        ])

    @property
    def bound(self) -> float:
        """The algorithm's own bound: the cascade bound for CRWM, else the RWM bound."""
        return self.crwm_bound if self.algorithm == "crwm" else self.rwm_bound

    @property
    def crossover_savings(self) -> int:
        """Mistakes saved by per-region best experts over the overall best."""
        p = self.best_expert
        return int((self.expert_region_mistakes[p] - self.region_best_mistakes).sum())

    @property
    def region0_gap(self) -> float:
        """Error-rate margin of the region-best over the overall best at position 0."""
        K = int(self.routed_counts[0])
        if K == 0:
            return 0.0
        p = self.best_expert
        return (int(self.expert_region_mistakes[p, 0]) - int(self.region_best_mistakes[0])) / K

    @property
    def crossover_region0(self) -> bool:
        return bounds.crossover_satisfied(
            int(self.routed_counts[0]), self.region0_gap, self.n_experts, self.beta, self.num_classes
        )

    @property
    def crossover(self) -> bool:
        """Savings over all regions exceed the cascade's extra ``L ln n`` cost."""
        return bounds.crossover_satisfied(
            1, float(self.crossover_savings), self.n_experts, self.beta, self.num_classes
        )

    def bound_violations(self) -> list[str]:
        """Violated mistake bounds (empty when all hold)."""
        if not self.has_experts:
            return []
        out = []
        slack = lambda b: b * (1 + BOUND_RTOL) + BOUND_RTOL
        if self.algorithm == "rwm":
            if self.expected_mistakes > slack(self.rwm_bound):
                out.append(f"rwm: expected {self.expected_mistakes:.6g} > bound {self.rwm_bound:.6g}")
        else:
            for j, (M, B) in enumerate(zip(self.learner_expected_mistakes, self.learner_bounds)):
                if M > slack(B):
                    out.append(f"learner {j}: expected {M:.6g} > bound {B:.6g}")
            if self.expected_mistakes > slack(self.crwm_bound):
                out.append(f"crwm: expected {self.expected_mistakes:.6g} > bound {self.crwm_bound:.6g}")
        return out

    def check_bounds(self) -> None:
        v = self.bound_violations()
        if v:
            raise BoundViolation("; ".join(v))

    def confusion_counts(self, positive: int = 1) -> dict[str, np.ndarray]:
        """Per-expert tp/fp/tn/fn, treating ``positive`` as the positive class (binary only)."""
        if self.num_classes != 2:
            raise ValueError("FP/FN counts are defined for two-class streams only")
        neg = 1 - positive
        C = self.expert_confusion
        return {
            "tp": C[:, positive, positive],
            "fp": C[:, neg, positive],
            "tn": C[:, neg, neg],
            "fn": C[:, positive, neg],
        }


# -- the prequential loop -----------------------------------------------------

def _expert_source(data, config: ExperimentConfig, seed: int):
    """Return ``(labels, features or None, pool or fixed predictions, L)``."""
    if isinstance(data, SyntheticExpertSpec):
        data = generate_synthetic_stream(replace(data, seed=seed))
    if isinstance(data, SyntheticStream):
        return data.y, None, data.predictions, data.num_classes
    if isinstance(data, Dataset):
        pool = ExpertPool(
            data.schema, config.n_experts, seed,
            subspace=config.subspace, keep_prob=config.keep_prob, poisson_mean=config.poisson_mean,
        )
        return data.y, data.X, pool, data.num_classes
    raise TypeError(f"unsupported data source {type(data).__name__}")


def _finish(algorithm, seed, beta, y, labels, F_by_region, regions, P, num_regions, seconds, num_classes) -> RunResult:
    N = y.shape[0]
    if P is not None:
        wrong = P != y[:, None]
        erm = np.stack([wrong[regions == j].sum(axis=0) for j in range(num_regions)], axis=1)
        conf = np.zeros((P.shape[1], num_classes, num_classes), dtype=np.int64)
        for c in range(num_classes):
            rows = P[y == c]
            for d in range(num_classes):
                conf[:, c, d] = (rows == d).sum(axis=0)
        routed = np.bincount(regions, minlength=num_regions)
    else:
        erm = np.zeros((0, 1), dtype=np.int64)
        conf = np.zeros((0, num_classes, num_classes), dtype=np.int64)
        routed = np.array([N])
    return RunResult(
        algorithm=algorithm,
        seed=seed,
        beta=beta,
        n_instances=int(N),
        num_classes=int(num_classes),
        mistakes=int((labels != y).sum()),
        expected_mistakes=float(F_by_region.sum()),
        routed_counts=routed.astype(np.int64),
        learner_expected_mistakes=F_by_region.astype(np.float64),
        expert_region_mistakes=erm.astype(np.int64),
        expert_confusion=conf,
        seconds=seconds,
    )


def run_prequential(algorithm: str, data: StreamLike, config: ExperimentConfig | None = None, seed: int | None = None) -> RunResult:
    """One test-then-train pass of ``algorithm`` over ``data``.

    For RWM and the cascade the expert pool trains on every instance after
    the learner update.  Wall-clock time covers the loop only.
    """
    config = config or ExperimentConfig(algorithm=algorithm)
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    seed = config.seed if seed is None else int(seed)
    beta = config.beta
    y, X, source, L = _expert_source(data, config, seed)
    N = y.shape[0]
    if N == 0:
        raise ValueError("empty stream")
    labels = np.empty(N, dtype=np.int64)

    if algorithm in ("online_bagging", "online_boosting"):
        if X is None:
            raise ValueError(f"{algorithm} needs a feature stream, not oracle expert predictions")
        cls = OnlineBagging if algorithm == "online_bagging" else OnlineBoosting
        model = cls(data.schema, config.n_experts, seed)
        t0 = time.perf_counter()
        for t in range(N):
            x = X[t]
            labels[t] = model.predict(x)
            model.train(x, int(y[t]))
        seconds = time.perf_counter() - t0
        return _finish(algorithm, seed, beta, y, labels, np.zeros(1), None, None, 1, seconds, L)

    pool = source if isinstance(source, ExpertPool) else None
    fixed = None if pool is not None else source
    n = pool.n if pool is not None else fixed.shape[1]
    P = np.empty((N, n), dtype=np.int64)
    regions = np.zeros(N, dtype=np.int64)

    if algorithm == "crwm":
        learner = CascadingRWM(n, L, beta, config.class_order, seed)
        F_by_region = np.zeros(L + 1)
        t0 = time.perf_counter()
        for t in range(N):
            yt = int(y[t])
            p = pool.predict(X[t]) if pool is not None else fixed[t]
            out = learner.predict(p)
            F_by_region[out.responder] += learner.expected_mistake(out, p, yt)
            learner.update(out, p, yt)
            labels[t] = out.label
            regions[t] = out.responder
            P[t] = p
            if pool is not None:
                pool.train(X[t], yt)
        seconds = time.perf_counter() - t0
        return _finish(algorithm, seed, beta, y, labels, F_by_region, regions, P, L + 1, seconds, L)

    learner = RandomizedWeightedMajority(n, beta, seed)
    w, rng = learner.weights, learner.rng
    F_total = 0.0
    t0 = time.perf_counter()
    for t in range(N):
        yt = int(y[t])
        p = pool.predict(X[t]) if pool is not None else fixed[t]
        labels[t] = rwm_predict(w, p, rng)[0]
        F_total += expected_mistake_fraction(w, p, yt)
        rwm_update(w, p, yt)
        P[t] = p
        if pool is not None:
            pool.train(X[t], yt)
    seconds = time.perf_counter() - t0
    return _finish(algorithm, seed, beta, y, labels, np.array([F_total]), regions, P, 1, seconds, L)


# -- multi-run reports ----------------------------------------------------------

@dataclass
class PrequentialReport:
    algorithm: str
    dataset: str
    config: ExperimentConfig
    runs: list[RunResult] = field(default_factory=list)

    def _col(self, fn) -> np.ndarray:
        return np.array([fn(r) for r in self.runs], dtype=np.float64)

    @property
    def accuracies(self) -> np.ndarray:
        return self._col(lambda r: r.accuracy)

    def summary(self) -> dict[str, float]:
        """Means (and sample std of accuracy) over runs."""
        if not self.runs:
            return {}
        acc = self.accuracies
        out = {
            "runs": float(len(self.runs)),
            "mean_accuracy": float(acc.mean()),
            "std_accuracy": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0,
            "mean_mistakes": float(self._col(lambda r: r.mistakes).mean()),
            "mean_expected_mistakes": float(self._col(lambda r: r.expected_mistakes).mean()),
            "mean_seconds": float(self._col(lambda r: r.seconds).mean()),
        }
        if all(r.has_experts for r in self.runs):
            out["mean_bound"] = float(self._col(lambda r: r.bound).mean())
            out["mean_rwm_bound"] = float(self._col(lambda r: r.rwm_bound).mean())
            out["bound_violations"] = float(sum(bool(r.bound_violations()) for r in self.runs))
            if self.algorithm == "crwm":
                out["mean_crwm_bound"] = float(self._col(lambda r: r.crwm_bound).mean())
                out["crossover_fraction"] = float(self._col(lambda r: r.crossover).mean())
        return out

    def violations(self) -> list[str]:
        return [f"run {i} (seed {r.seed}): {v}" for i, r in enumerate(self.runs) for v in r.bound_violations()]


def _run_one(args):
    algorithm, data, config, seed = args
    return run_prequential(algorithm, data, config, seed)


def data_name(data: StreamLike) -> str:
    if isinstance(data, Dataset):
        return data.schema.relation
    return getattr(data, "name", "synthetic")


def run_experiment(algorithm: str, data: StreamLike, config: ExperimentConfig, jobs: int = 1) -> PrequentialReport:
    """``config.runs`` prequential passes with seeds ``config.seed + i``.

    A :class:`SyntheticExpertSpec` is regenerated per run from the run seed.
    With ``jobs > 1`` runs execute in worker processes; results are ordered
    by run index either way.
    """
    config = config.with_(algorithm=algorithm)
    tasks = [(algorithm, data, config, config.seed + i) for i in range(config.runs)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            runs = list(ex.map(_run_one, tasks))
    else:
        runs = [_run_one(t) for t in tasks]
    return PrequentialReport(algorithm, data_name(data), config, runs)


# -- statistics ---------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    mean_diff: float
    verdict: str


def paired_t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05, alternative: str = "two-sided") -> TTestResult:
    """Paired Student t-test on ``a - b``.

    ``verdict`` is ``draw`` when ``p >= alpha``, otherwise ``win`` if ``a``
    has the larger mean and ``lose`` if not.  Identical samples give
    ``t = 0, p = 1``; a constant non-zero difference gives ``p = 0``.
    ``alternative`` may be ``two-sided``, ``greater`` (mean of a - b > 0) or
    ``less``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    if a.size < 2:
        raise ValueError("need at least two pairs")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    d = a - b
    df = d.size - 1
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t = math.copysign(math.inf, mean)
            p = 0.0 if alternative == "two-sided" or (alternative == "greater") == (mean > 0) else 1.0
    else:
        t = mean / (sd / math.sqrt(d.size))
        two = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
        if alternative == "two-sided":
            p = two
        elif (alternative == "greater") == (t > 0):
            p = two / 2.0
        else:
            p = 1.0 - two / 2.0
    if p >= alpha:
        verdict = "draw"
    else:
        verdict = "win" if mean > 0 else "lose"
    return TTestResult(t, p, df, mean, verdict)


def compare(algorithms: Sequence[str], data: StreamLike, config: ExperimentConfig, reference: str | None = None, jobs: int = 1):
    """Run several algorithms on paired seeds and t-test the reference against each.

    Returns ``(reports, tests)`` where ``tests[other]`` compares per-run
    accuracy of ``reference`` (default ``crwm`` if present) minus ``other``.
    """
    algorithms = list(algorithms)
    if not algorithms:
        raise ValueError("no algorithms to compare")
    if reference is None:
        reference = "crwm" if "crwm" in algorithms else algorithms[0]
    reports = {a: run_experiment(a, data, config, jobs) for a in algorithms}
    tests = {}
    if len(reports[reference].runs) >= 2:
        for a in algorithms:
            if a != reference:
                tests[a] = paired_t_test(reports[reference].accuracies, reports[a].accuracies)
    return reports, tests


def beta_sweep(algorithm: str, data: StreamLike, betas: Sequence[float], runs: int, seed: int, config: ExperimentConfig | None = None, jobs: int = 1) -> list[tuple[float, float]]:
    """Mean accuracy over ``runs`` runs for each penalty in ``betas``."""
    base = (config or ExperimentConfig()).with_(runs=runs, seed=seed)
    table = []
    for b in betas:
        rep = run_experiment(algorithm, data, base.with_(beta=float(b)), jobs)
        table.append((float(b), float(rep.accuracies.mean())))
    return table


@dataclass(frozen=True)
class ExpertRateRow:
    kind: str  # "raw" or "biased"
    best_fp: float
    best_fn: float
    best_error: float

    @property
    def fp_flag(self) -> bool:
        return self.best_fp < self.best_error

    @property
    def fn_flag(self) -> bool:
        return self.best_fn < self.best_error


def expert_rates(run: RunResult, positive: int = 1, n_p: float = 1, n_c: float = 2) -> dict[str, np.ndarray]:
    """Per-expert error, FP and FN rates of one run (two-class streams).

    Raw rates are conditional on the true class: ``fp / (fp + tn)`` and
    ``fn / (fn + tp)``.  Biased rates apply the smoothed estimator to the
    counts it is defined on: ``(fp + n_p) / (fp + tp + n_c)`` and
    ``(fn + n_p) / (fn + tn + n_c)``.
    """
    c = run.confusion_counts(positive)
    tp, fp, tn, fn = (c[k].astype(np.float64) for k in ("tp", "fp", "tn", "fn"))
    N = float(run.n_instances)
    err = (fp + fn) / N
    fp_rate = np.divide(fp, fp + tn, out=np.zeros_like(fp), where=(fp + tn) > 0)
    fn_rate = np.divide(fn, fn + tp, out=np.zeros_like(fn), where=(fn + tp) > 0)
    bfp = np.array([bounds.biased_fp_rate(int(a), int(b), n_p, n_c) for a, b in zip(fp, tp)])
    bfn = np.array([bounds.biased_fn_rate(int(a), int(b), n_p, n_c) for a, b in zip(fn, tn)])
    return {"error": err, "fp": fp_rate, "fn": fn_rate, "biased_fp": bfp, "biased_fn": bfn}


def expert_rate_table(report: PrequentialReport, positive: int = 1) -> list[ExpertRateRow]:
    """Best FP, FN and error rate among the experts, averaged over runs.

    The biased row compares biased FP/FN against the plain error rate.
    """
    runs = [r for r in report.runs if r.has_experts]
    if not runs:
        raise ValueError("report has no expert statistics")
    rates = [expert_rates(r, positive) for r in runs]
    best = lambda key: float(np.mean([rt[key].min() for rt in rates]))
    err = best("error")
    return [
        ExpertRateRow("raw", best("fp"), best("fn"), err),
        ExpertRateRow("biased", best("biased_fp"), best("biased_fn"), err),
    ]
