"""Report serialization.

The machine format is line-oriented text::

    crwm-report/1
    kind=prequential
    [config]
    key=value
    [run]
    key=value
    ...

Arrays are written as ``dims|v v v`` (e.g. ``2,3|1 2 3 4 5 6``).  Floats are
written with ``repr`` so a read-back is exact.  Field order is fixed, so
equal reports serialize to equal bytes.  Wall-clock fields are only written
when ``timing=True``; they are the one thing that differs between reruns.
"""

from __future__ import annotations

import io
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .evaluation import (
    ExperimentConfig,
    PrequentialReport,
    RunResult,
    TTestResult,
    expert_rate_table,
)
from .stream_io import ParseError

MAGIC = "crwm-report/1"
TIMING_NOTE = "# seconds cover the learning loop only; dataset parsing is excluded"

_RUN_FIELDS = (
    "algorithm", "seed", "beta", "n_instances", "num_classes", "mistakes",
    "expected_mistakes", "routed_counts", "learner_expected_mistakes",
    "expert_region_mistakes", "expert_confusion",
)


def _fmt_scalar(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _fmt_array(a: np.ndarray) -> str:
    a = np.asarray(a)
    dims = ",".join(str(d) for d in a.shape)
    if a.dtype.kind in "iub":
        vals = " ".join(str(int(v)) for v in a.ravel())
    else:
        vals = " ".join(repr(float(v)) for v in a.ravel())
    return f"{dims}|{vals}"


def _parse_array(text: str, dtype, line: int) -> np.ndarray:
    try:
        dims_s, vals_s = text.split("|", 1)
        dims = tuple(int(d) for d in dims_s.split(",")) if dims_s else ()
        vals = [dtype(v) for v in vals_s.split()]
        return np.asarray(vals, dtype=np.int64 if dtype is int else np.float64).reshape(dims)
    except ValueError as e:
        raise ParseError(f"bad array field: {e}", line) from None


def _config_items(config: ExperimentConfig, dataset: str) -> list[tuple[str, str]]:
    order = "" if config.class_order is None else ",".join(str(c) for c in config.class_order)
    return [
        ("algorithm", config.algorithm),
        ("dataset", dataset),
        ("n_experts", _fmt_scalar(config.n_experts)),
        ("beta", _fmt_scalar(config.beta)),
        ("runs", _fmt_scalar(config.runs)),
        ("seed", _fmt_scalar(config.seed)),
        ("class_order", order),
        ("subspace", _fmt_scalar(config.subspace)),
        ("keep_prob", _fmt_scalar(config.keep_prob)),
        ("poisson_mean", _fmt_scalar(config.poisson_mean)),
        ("betas", " ".join(repr(float(b)) for b in config.betas)),
    ]


def _run_items(r: RunResult, timing: bool) -> list[tuple[str, str]]:
    items = [
        ("algorithm", r.algorithm),
        ("seed", _fmt_scalar(r.seed)),
        ("beta", _fmt_scalar(r.beta)),
        ("n_instances", _fmt_scalar(r.n_instances)),
        ("num_classes", _fmt_scalar(r.num_classes)),
        ("mistakes", _fmt_scalar(r.mistakes)),
        ("expected_mistakes", _fmt_scalar(r.expected_mistakes)),
        ("routed_counts", _fmt_array(r.routed_counts)),
        ("learner_expected_mistakes", _fmt_array(r.learner_expected_mistakes)),
        ("expert_region_mistakes", _fmt_array(r.expert_region_mistakes)),
        ("expert_confusion", _fmt_array(r.expert_confusion)),
    ]
    if timing:
        items.append(("seconds", _fmt_scalar(r.seconds)))
    # derived, informational; ignored on read
    items.append(("accuracy", _fmt_scalar(r.accuracy)))
    if r.has_experts:
        items += [
            ("bound", _fmt_scalar(r.bound)),
            ("rwm_bound", _fmt_scalar(r.rwm_bound)),
            ("best_expert_mistakes", _fmt_scalar(r.best_expert_mistakes)),
            ("bound_violations", _fmt_scalar(len(r.bound_violations()))),
        ]
        if r.algorithm == "crwm":
            items += [
                ("crwm_bound", _fmt_scalar(r.crwm_bound)),
                ("region_best_mistakes", _fmt_array(r.region_best_mistakes)),
                ("crossover_satisfied", _fmt_scalar(r.crossover)),
                ("crossover_region0", _fmt_scalar(r.crossover_region0)),
            ]
    return items


def _block(out: io.StringIO, name: str, items: Iterable[tuple[str, str]]) -> None:
    out.write(f"[{name}]\n")
    for k, v in items:
        out.write(f"{k}={v}\n")


def _summary_items(report: PrequentialReport, timing: bool) -> list[tuple[str, str]]:
    return [
        (k, _fmt_scalar(v))
        for k, v in report.summary().items()
        if timing or k != "mean_seconds"
    ]


def write_report(report: PrequentialReport, fmt: str = "machine", timing: bool = False) -> bytes:
    """Serialize a report; ``fmt`` is ``machine`` or ``table``."""
    if fmt == "table":
        return render_report_table(report, timing).encode()
    if fmt != "machine":
        raise ValueError(f"unknown format {fmt!r}")
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=prequential\n")
    if timing:
        out.write(TIMING_NOTE + "\n")
    _block(out, "config", _config_items(report.config, report.dataset))
    for i, r in enumerate(report.runs):
        _block(out, "run", [("index", str(i))] + _run_items(r, timing))
    if report.runs:
        _block(out, "summary", _summary_items(report, timing))
    return out.getvalue().encode()


def _sections(data) -> tuple[str, list[tuple[str, dict, int]]]:
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(f"missing {MAGIC!r} header", 1)
    kind = None
    sections: list[tuple[str, dict, int]] = []
    for i, raw in enumerate(lines[1:], start=2):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        if s.startswith("[") and s.endswith("]"):
            sections.append((s[1:-1], {}, i))
            continue
        if "=" not in s:
            raise ParseError(f"expected key=value, got {s[:40]!r}", i)
        k, v = s.split("=", 1)
        if not sections:
            if k == "kind":
                kind = v
                continue
            raise ParseError(f"field {k!r} outside a section", i)
        sections[-1][1][k] = (v, i)
    if kind is None:
        raise ParseError("missing kind")
    return kind, sections


def _get(fields: dict, key: str, line: int) -> tuple[str, int]:
    if key not in fields:
        raise ParseError(f"missing field {key!r}", line)
    return fields[key]


def _config_from(fields: dict, line: int) -> tuple[ExperimentConfig, str]:
    g = lambda k: _get(fields, k, line)[0]
    try:
        order = g("class_order")
        cfg = ExperimentConfig(
            algorithm=g("algorithm"),
            n_experts=int(g("n_experts")),
            beta=float(g("beta")),
            runs=int(g("runs")),
            seed=int(g("seed")),
            class_order=tuple(int(c) for c in order.split(",")) if order else None,
            subspace=g("subspace") == "true",
            keep_prob=float(g("keep_prob")),
            poisson_mean=float(g("poisson_mean")),
            betas=tuple(float(b) for b in g("betas").split()),
        )
    except ValueError as e:
        raise ParseError(f"bad config: {e}", line) from None
    return cfg, g("dataset")


def _run_from(fields: dict, line: int) -> RunResult:
    def g(k):
        return _get(fields, k, line)

    try:
        seconds = float(fields["seconds"][0]) if "seconds" in fields else 0.0
        return RunResult(
            algorithm=g("algorithm")[0],
            seed=int(g("seed")[0]),
            beta=float(g("beta")[0]),
            n_instances=int(g("n_instances")[0]),
            num_classes=int(g("num_classes")[0]),
            mistakes=int(g("mistakes")[0]),
            expected_mistakes=float(g("expected_mistakes")[0]),
            routed_counts=_parse_array(g("routed_counts")[0], int, g("routed_counts")[1]),
            learner_expected_mistakes=_parse_array(*_with(g("learner_expected_mistakes"), float)),
            expert_region_mistakes=_parse_array(*_with(g("expert_region_mistakes"), int)),
            expert_confusion=_parse_array(*_with(g("expert_confusion"), int)),
            seconds=seconds,
        )
    except ValueError as e:
        raise ParseError(f"bad run field: {e}", line) from None


def _with(pair, dtype):
    v, line = pair
    return v, dtype, line


def read_report(data) -> PrequentialReport:
    kind, sections = _sections(data)
    if kind != "prequential":
        raise ParseError(f"expected a prequential report, got kind={kind!r}")
    if not sections or sections[0][0] != "config":
        raise ParseError("report must start with a [config] section")
    cfg, dataset = _config_from(sections[0][1], sections[0][2])
    runs = [_run_from(f, ln) for name, f, ln in sections[1:] if name == "run"]
    return PrequentialReport(cfg.algorithm, dataset, cfg, runs)


# -- model checkpoints -----------------------------------------------------------

def write_model_state(state: Mapping) -> bytes:
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=model\n")
    _block(out, "model", [
        ("beta", _fmt_scalar(float(state["beta"]))),
        ("num_classes", _fmt_scalar(int(state["num_classes"]))),
        ("class_order", ",".join(str(c) for c in state["class_order"])),
        ("instances_seen", _fmt_scalar(int(state["instances_seen"]))),
        ("log_weights", _fmt_array(np.asarray(state["log_weights"], dtype=np.float64))),
    ])
    return out.getvalue().encode()


def read_model_state(data) -> dict:
    kind, sections = _sections(data)
    if kind != "model" or not sections:
        raise ParseError(f"expected a model document, got kind={kind!r}")
    fields, line = sections[0][1], sections[0][2]
    try:
        return {
            "beta": float(_get(fields, "beta", line)[0]),
            "num_classes": int(_get(fields, "num_classes", line)[0]),
            "class_order": [int(c) for c in _get(fields, "class_order", line)[0].split(",")],
            "instances_seen": int(_get(fields, "instances_seen", line)[0]),
            "log_weights": _parse_array(_get(fields, "log_weights", line)[0], float, line).tolist(),
        }
    except ValueError as e:
        raise ParseError(f"bad model field: {e}", line) from None


# -- human-readable tables ---------------------------------------------------------

def _g(v: float) -> str:
    return f"{v:.6g}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    out = [line(header), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def render_report_table(report: PrequentialReport, timing: bool = False) -> str:
    c = report.config
    head = (
        f"{report.algorithm} on {report.dataset}: n={c.n_experts} beta={_g(c.beta)} "
        f"runs={len(report.runs)} seed={c.seed}\n"
    )
    cols = ["run", "seed", "accuracy", "mistakes", "E[mistakes]", "bound"]
    if timing:
        cols.append("seconds")
    rows = []
    for i, r in enumerate(report.runs):
        row = [str(i), str(r.seed), _g(100 * r.accuracy), str(r.mistakes), _g(r.expected_mistakes),
               _g(r.bound) if r.has_experts else "-"]
        if timing:
            row.append(_g(r.seconds))
        rows.append(row)
    body = _table(cols, rows)
    summ = "".join(f"{k}: {_g(v)}\n" for k, v in report.summary().items() if timing or k != "mean_seconds")
    return head + body + summ


def write_comparison(
    dataset: str,
    reports: Mapping[str, PrequentialReport],
    tests: Mapping[str, TTestResult],
    fmt: str = "machine",
    timing: bool = False,
) -> bytes:
    """Accuracy per algorithm plus reference-vs-other t-test verdicts."""
    algs = list(reports)
    ref = next((a for a in algs if a not in tests), algs[0])
    if fmt == "table":
        rows = [[a, _g(100 * reports[a].accuracies.mean()), _g(100 * reports[a].accuracies.std(ddof=1)) if len(reports[a].runs) > 1 else "0"]
                + ([_g(reports[a].summary()["mean_seconds"])] if timing else [])
                for a in algs]
        cols = ["algorithm", "accuracy %", "std %"] + (["seconds"] if timing else [])
        text = f"dataset: {dataset}\n" + _table(cols, rows)
        if tests:
            trows = [[f"{ref} vs {a}", _g(t.t), _g(t.p), t.verdict] for a, t in tests.items()]
            text += "\n" + _table(["paired t-test", "t", "p", "verdict"], trows)
        return text.encode()
    if fmt != "machine":
        raise ValueError(f"unknown format {fmt!r}")
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=comparison\n")
    if timing:
        out.write(TIMING_NOTE + "\n")
    _block(out, "comparison", [("dataset", dataset), ("reference", ref), ("algorithms", ",".join(algs))])
    for a in algs:
        _block(out, "algorithm", [("name", a)] + _summary_items(reports[a], timing)
               + [("accuracies", _fmt_array(reports[a].accuracies))])
    for a, t in tests.items():
        _block(out, "ttest", [("pair", f"{ref},{a}"), ("t", _fmt_scalar(t.t)), ("p", _fmt_scalar(t.p)),
                              ("df", str(t.df)), ("mean_diff", _fmt_scalar(t.mean_diff)), ("verdict", t.verdict)])
    return out.getvalue().encode()


def write_sweep(dataset: str, sweeps: Mapping[str, Sequence[tuple[float, float]]], fmt: str = "machine") -> bytes:
    algs = list(sweeps)
    betas = [b for b, _ in sweeps[algs[0]]] if algs else []
    if fmt == "table":
        rows = [[_g(b)] + [_g(100 * dict(sweeps[a])[b]) for a in algs] for b in betas]
        return (f"dataset: {dataset}\n" + _table(["beta"] + [f"{a} acc %" for a in algs], rows)).encode()
    if fmt != "machine":
        raise ValueError(f"unknown format {fmt!r}")
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=sweep\n")
    _block(out, "sweep", [("dataset", dataset), ("algorithms", ",".join(algs))])
    for a in algs:
        for b, acc in sweeps[a]:
            _block(out, "point", [("algorithm", a), ("beta", _fmt_scalar(b)), ("mean_accuracy", _fmt_scalar(acc))])
    return out.getvalue().encode()


def bounds_rows(crwm: PrequentialReport, rwm: PrequentialReport) -> dict[str, float]:
    """Mean bound and observed mistakes for both learners, plus crossover facts."""
    mean = lambda xs: float(np.mean(list(xs)))
    return {
        "crwm_bound": mean(r.crwm_bound for r in crwm.runs),
        "crwm_mistakes": mean(r.mistakes for r in crwm.runs),
        "crwm_expected_mistakes": mean(r.expected_mistakes for r in crwm.runs),
        "rwm_bound": mean(r.rwm_bound for r in rwm.runs),
        "rwm_mistakes": mean(r.mistakes for r in rwm.runs),
        "rwm_expected_mistakes": mean(r.expected_mistakes for r in rwm.runs),
        # both bounds from the cascade's own stream, so they share region statistics
        "same_stream_rwm_bound": mean(r.rwm_bound for r in crwm.runs),
        "crossover_satisfied": mean(r.crossover for r in crwm.runs),
        "crossover_region0": mean(r.crossover_region0 for r in crwm.runs),
        "routed_region0": mean(r.routed_counts[0] for r in crwm.runs),
        "region0_gap": mean(r.region0_gap for r in crwm.runs),
        "violations": float(len(crwm.violations()) + len(rwm.violations())),
    }


def write_bounds(dataset: str, crwm: PrequentialReport, rwm: PrequentialReport, fmt: str = "machine") -> bytes:
    row = bounds_rows(crwm, rwm)
    if fmt == "table":
        cols = ["dataset", "CRWM bound", "CRWM result", "RWM bound", "RWM result", "crossover"]
        cells = [dataset, _g(row["crwm_bound"]), _g(row["crwm_mistakes"]), _g(row["rwm_bound"]),
                 _g(row["rwm_mistakes"]), _g(row["crossover_satisfied"])]
        return _table(cols, [cells]).encode()
    if fmt != "machine":
        raise ValueError(f"unknown format {fmt!r}")
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=bounds\n")
    _block(out, "bounds", [("dataset", dataset)] + [(k, _fmt_scalar(v)) for k, v in row.items()])
    return out.getvalue().encode()


def write_rate_table(dataset: str, report: PrequentialReport, fmt: str = "table") -> bytes:
    rows = expert_rate_table(report)
    if fmt == "table":
        mark = lambda v, f: _g(v) + ("*" if f else "")
        cells = [[dataset, r.kind, mark(r.best_fp, r.fp_flag), mark(r.best_fn, r.fn_flag), _g(r.best_error)] for r in rows]
        return _table(["dataset", "rates", "best FP", "best FN", "best error"], cells).encode()
    out = io.StringIO()
    out.write(f"{MAGIC}\nkind=expert_rates\n")
    for r in rows:
        _block(out, "rates", [("dataset", dataset), ("kind", r.kind), ("best_fp", _fmt_scalar(r.best_fp)),
                              ("best_fn", _fmt_scalar(r.best_fn)), ("best_error", _fmt_scalar(r.best_error)),
                              ("fp_flag", _fmt_scalar(r.fp_flag)), ("fn_flag", _fmt_scalar(r.fn_flag))])
    return out.getvalue().encode()


def is_nan(v: float) -> bool:
    return isinstance(v, float) and math.isnan(v)
