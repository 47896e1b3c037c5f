"""Dataset schema, ARFF and CSV readers/writers.

Instances are stored as rows of a float matrix: numeric attributes keep
their value, nominal attributes hold the index of the value in the declared
domain, and missing values are NaN.  Class labels are kept separately as
integer indices into the class attribute's domain.

Supported ARFF subset: ``@relation``, ``@attribute`` with numeric/real/
integer or ``{...}`` nominal types, ``@data``, ``%`` comments and ``?`` for
missing values.  Sparse rows, string and date attributes are rejected.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NUMERIC = "numeric"
NOMINAL = "nominal"

_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")
_NUMERIC_TYPES = {"numeric", "real", "integer"}


class ParseError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, NOMINAL):
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if self.kind == NOMINAL:
            if not self.values:
                raise ValueError(f"nominal attribute {self.name!r} has an empty domain")
            if len(set(self.values)) != len(self.values):
                raise ValueError(f"nominal attribute {self.name!r} repeats a value")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC


@dataclass(frozen=True)
class DatasetSchema:
    relation: str
    attributes: tuple[Attribute, ...]
    class_index: int
    _lookup: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not (0 <= self.class_index < len(attrs)):
            raise ValueError(f"class index {self.class_index} out of range")
        cls = attrs[self.class_index]
        if cls.kind != NOMINAL:
            raise ValueError(f"class attribute {cls.name!r} must be nominal")
        if len(cls.values) < 2:
            raise ValueError(f"class attribute {cls.name!r} needs at least two values")
        lookup = tuple({v: i for i, v in enumerate(a.values)} for a in attrs)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def class_attribute(self) -> Attribute:
        return self.attributes[self.class_index]

    @property
    def class_values(self) -> tuple[str, ...]:
        return self.class_attribute.values

    @property
    def num_classes(self) -> int:
        return len(self.class_values)

    @property
    def features(self) -> tuple[Attribute, ...]:
        return tuple(a for i, a in enumerate(self.attributes) if i != self.class_index)

    @property
    def num_features(self) -> int:
        return len(self.attributes) - 1

    def value_index(self, attr_pos: int, value: str) -> int | None:
        return self._lookup[attr_pos].get(value)


@dataclass
class Dataset:
    """A labelled stream held in memory, in arrival order."""

    schema: DatasetSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, self.schema.num_features)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("feature rows and labels differ in length")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def num_classes(self) -> int:
        return self.schema.num_classes

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )


# -- tokenising -------------------------------------------------------------

def _split_fields(text: str, line: int, sep: str = ",") -> list[str]:
    """Split on ``sep`` outside single or double quotes; strip and unquote."""
    fields: list[str] = []
    buf: list[str] = []
    quote = None
    quoted_field = False
    i = 0
    while i < len(text):
        ch = text[i]
        if quote is not None:
            if ch == "\\" and i + 1 < len(text):
                buf.append(text[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                buf.append(ch)
        elif ch in "'\"":
            if "".join(buf).strip():
                raise ParseError(f"unexpected quote in {text!r}", line)
            buf = []
            quote = ch
            quoted_field = True
        elif ch == sep:
            fields.append(_finish(buf, quoted_field))
            buf, quoted_field = [], False
        else:
            if quoted_field and not ch.isspace():
                raise ParseError(f"text after closing quote in {text!r}", line)
            buf.append(ch)
        i += 1
    if quote is not None:
        raise ParseError("unterminated quote", line)
    fields.append(_finish(buf, quoted_field))
    return fields


def _finish(buf: list[str], quoted: bool) -> str:
    s = "".join(buf)
    return s if quoted else s.strip()


def _needs_quote(s: str) -> bool:
    return s == "" or s == "?" or any(c in s for c in " \t,'\"%{}\\") or s != s.strip()


def _quote(s: str) -> str:
    if not _needs_quote(s):
        return s
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def parse_number(token: str, line: int | None = None) -> float:
    if not _NUMBER.match(token):
        raise ParseError(f"not a number: {token!r}", line)
    v = float(token)
    if not math.isfinite(v):
        raise ParseError(f"number out of range: {token!r}", line)
    return v


def format_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _read_header_token(rest: str, line: int) -> tuple[str, str]:
    """Take the (possibly quoted) leading name from ``rest``."""
    rest = rest.strip()
    if not rest:
        raise ParseError("missing name", line)
    if rest[0] in "'\"":
        q = rest[0]
        i, buf = 1, []
        while i < len(rest):
            ch = rest[i]
            if ch == "\\" and i + 1 < len(rest):
                buf.append(rest[i + 1])
                i += 2
                continue
            if ch == q:
                return "".join(buf), rest[i + 1:].strip()
            buf.append(ch)
            i += 1
        raise ParseError("unterminated quote", line)
    parts = rest.split(None, 1)
    return parts[0], (parts[1].strip() if len(parts) > 1 else "")


def _parse_type(name: str, spec: str, line: int) -> Attribute:
    if spec.startswith("{"):
        if not spec.endswith("}"):
            raise ParseError(f"unterminated nominal domain for {name!r}", line)
        inner = spec[1:-1]
        values = [v for v in _split_fields(inner, line)]
        if not inner.strip() or any(v == "" for v in values):
            raise ParseError(f"empty nominal value in domain of {name!r}", line)
        if len(set(values)) != len(values):
            raise ParseError(f"duplicate nominal value in domain of {name!r}", line)
        if "?" in values:
            raise ParseError(f"'?' is reserved for missing values ({name!r})", line)
        return Attribute(name, NOMINAL, tuple(values))
    kind = spec.split()[0].lower() if spec else ""
    if kind in _NUMERIC_TYPES:
        return Attribute(name, NUMERIC)
    if not kind:
        raise ParseError(f"missing type for attribute {name!r}", line)
    raise ParseError(f"unsupported attribute type {kind!r} for {name!r}", line)


def _resolve_class(attrs: Sequence[Attribute], class_attribute, line: int | None) -> int:
    if class_attribute is None:
        return len(attrs) - 1
    if isinstance(class_attribute, int):
        idx = class_attribute if class_attribute >= 0 else len(attrs) + class_attribute
        if not (0 <= idx < len(attrs)):
            raise ParseError(f"class attribute index {class_attribute} out of range", line)
        return idx
    for i, a in enumerate(attrs):
        if a.name == class_attribute:
            return i
    raise ParseError(f"no attribute named {class_attribute!r}", line)


def _to_text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"input is not valid UTF-8 ({e.reason} at byte {e.start})") from None
    return data


def _decode_row(
    schema: DatasetSchema, values: Sequence[str], line: int
) -> tuple[np.ndarray, int]:
    if len(values) != len(schema.attributes):
        raise ParseError(
            f"expected {len(schema.attributes)} values, found {len(values)}", line
        )
    row = np.empty(schema.num_features, dtype=np.float64)
    label = -1
    col = 0
    for pos, (attr, tok) in enumerate(zip(schema.attributes, values)):
        if pos == schema.class_index:
            if tok in ("?", ""):
                raise ParseError("missing class value", line)
            idx = schema.value_index(pos, tok)
            if idx is None:
                raise ParseError(f"undeclared class value {tok!r}", line)
            label = idx
            continue
        if tok in ("?", ""):
            row[col] = math.nan
        elif attr.is_numeric:
            row[col] = parse_number(tok, line)
        else:
            idx = schema.value_index(pos, tok)
            if idx is None:
                raise ParseError(f"undeclared nominal value {tok!r} for {attr.name!r}", line)
            row[col] = idx
        col += 1
    return row, label


# -- ARFF -------------------------------------------------------------------

def parse_arff_header(text, class_attribute: str | int | None = None) -> tuple[DatasetSchema, int]:
    """Parse the header; returns the schema and the 0-based line index of ``@data``."""
    text = _to_text(text)
    lines = text.splitlines()
    relation = None
    attrs: list[Attribute] = []
    for i, raw in enumerate(lines):
        lineno = i + 1
        s = raw.strip()
        if not s or s.startswith("%"):
            continue
        low = s.lower()
        if low.startswith("@relation"):
            if relation is not None:
                raise ParseError("duplicate @relation", lineno)
            if attrs:
                raise ParseError("@relation after @attribute", lineno)
            relation, _ = _read_header_token(s[len("@relation"):], lineno)
        elif low.startswith("@attribute"):
            if relation is None:
                raise ParseError("@attribute before @relation", lineno)
            name, spec = _read_header_token(s[len("@attribute"):], lineno)
            if any(a.name == name for a in attrs):
                raise ParseError(f"duplicate attribute {name!r}", lineno)
            attrs.append(_parse_type(name, spec, lineno))
        elif low.startswith("@data"):
            if relation is None or not attrs:
                raise ParseError("@data before any @attribute", lineno)
            if len(attrs) < 2:
                raise ParseError("need at least one feature and a class attribute", lineno)
            cidx = _resolve_class(attrs, class_attribute, lineno)
            try:
                schema = DatasetSchema(relation, tuple(attrs), cidx)
            except ValueError as e:
                raise ParseError(str(e), lineno) from None
            return schema, i
        else:
            raise ParseError(f"unexpected header line {s[:40]!r}", lineno)
    raise ParseError("no @data section", len(lines) or None)


def parse_arff(text, class_attribute: str | int | None = None) -> Dataset:
    """Parse an ARFF document into a :class:`Dataset`.

    The class attribute defaults to the last declared attribute and must be
    nominal.  Raises :class:`ParseError` with a line number on bad input.
    """
    text = _to_text(text)
    schema, data_line = parse_arff_header(text, class_attribute)
    lines = text.splitlines()
    rows, labels = [], []
    for i in range(data_line + 1, len(lines)):
        lineno = i + 1
        s = lines[i].strip()
        if not s or s.startswith("%"):
            continue
        if s.startswith("{"):
            raise ParseError("sparse ARFF rows are not supported", lineno)
        row, label = _decode_row(schema, _split_fields(s, lineno), lineno)
        rows.append(row)
        labels.append(label)
    X = np.vstack(rows) if rows else np.empty((0, schema.num_features))
    return Dataset(schema, X, np.asarray(labels, dtype=np.int64))


def _cell(attr: Attribute, v: float) -> str:
    if math.isnan(v):
        return "?"
    if attr.is_numeric:
        return format_number(v)
    return _quote(attr.values[int(v)])


def _row_cells(dataset: Dataset, r: int) -> list[str]:
    schema = dataset.schema
    cells, col = [], 0
    for pos, attr in enumerate(schema.attributes):
        if pos == schema.class_index:
            cells.append(_quote(attr.values[int(dataset.y[r])]))
        else:
            cells.append(_cell(attr, float(dataset.X[r, col])))
            col += 1
    return cells


def schema_to_arff_header(schema: DatasetSchema) -> str:
    out = [f"@relation {_quote(schema.relation)}", ""]
    for a in schema.attributes:
        if a.is_numeric:
            out.append(f"@attribute {_quote(a.name)} numeric")
        else:
            out.append(f"@attribute {_quote(a.name)} {{{','.join(_quote(v) for v in a.values)}}}")
    out += ["", "@data"]
    return "\n".join(out) + "\n"


def dump_arff(dataset: Dataset) -> str:
    buf = io.StringIO()
    buf.write(schema_to_arff_header(dataset.schema))
    for r in range(len(dataset)):
        buf.write(",".join(_row_cells(dataset, r)) + "\n")
    return buf.getvalue()


def load_arff(path, class_attribute: str | int | None = None) -> Dataset:
    with open(path, "rb") as f:
        return parse_arff(f.read(), class_attribute)


# -- CSV --------------------------------------------------------------------

def parse_csv(text, schema: DatasetSchema, header: bool = True) -> Dataset:
    """Parse comma-separated rows laid out in ``schema`` attribute order.

    With ``header=True`` the first non-empty row must list the attribute
    names.  ``?`` and empty cells are missing values.
    """
    text = _to_text(text)
    try:
        records = list(csv.reader(io.StringIO(text, newline=""), skipinitialspace=True))
    except csv.Error as e:
        raise ParseError(f"malformed CSV: {e}") from None
    rows, labels = [], []
    expect_header = header
    for i, rec in enumerate(records):
        lineno = i + 1
        if not rec or all(not c.strip() for c in rec):
            continue
        rec = [c.strip() for c in rec]
        if expect_header:
            names = [a.name for a in schema.attributes]
            if rec != names:
                raise ParseError(f"header {rec[:5]!r}... does not match schema", lineno)
            expect_header = False
            continue
        row, label = _decode_row(schema, rec, lineno)
        rows.append(row)
        labels.append(label)
    if expect_header:
        raise ParseError("missing CSV header")
    X = np.vstack(rows) if rows else np.empty((0, schema.num_features))
    return Dataset(schema, X, np.asarray(labels, dtype=np.int64))


def dump_csv(dataset: Dataset, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow([a.name for a in dataset.schema.attributes])
    schema = dataset.schema
    for r in range(len(dataset)):
        cells, col = [], 0
        for pos, attr in enumerate(schema.attributes):
            if pos == schema.class_index:
                cells.append(attr.values[int(dataset.y[r])])
            else:
                v = float(dataset.X[r, col])
                col += 1
                if math.isnan(v):
                    cells.append("?")
                elif attr.is_numeric:
                    cells.append(format_number(v))
                else:
                    cells.append(attr.values[int(v)])
        w.writerow(cells)
    return buf.getvalue()


def load_dataset(path, schema_path=None, class_attribute=None, header: bool = True) -> Dataset:
    """Load ``.arff`` directly, or ``.csv`` against a header-only ARFF schema."""
    p = str(path)
    if p.lower().endswith(".arff"):
        return load_arff(p, class_attribute)
    if p.lower().endswith(".csv"):
        if schema_path is None:
            raise ValueError("CSV input needs a schema (header-only ARFF file)")
        with open(schema_path, "rb") as f:
            schema, _ = parse_arff_header(f.read(), class_attribute)
        with open(p, "rb") as f:
            return parse_csv(f.read(), schema, header=header)
    raise ValueError(f"unrecognised data file extension: {p}")

