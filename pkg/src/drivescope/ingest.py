"""Loading, validation and round-trip serialization of raw telemetry.

A measurement is an ordered sequence of frames (~10 Hz), each frame a map of
named signal values. Two on-disk layouts are supported:

- CSV: first column ``timestamp``, remaining columns named per schema,
  empty cell = missing value.
- JSON lines: one object per frame, ``{"t": <seconds>, "v": {<signal>: <value>}}``.

Missing values survive ingestion untouched; the feature pipeline decides how
to resolve them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NonMonotoneTimestamp, SchemaViolation

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class SignalSpec:
    name: str
    kind: str  # "continuous" | "categorical"
    allowed_categories: tuple[str, ...] = ()
    unit: str = ""


@dataclass(frozen=True)
class SignalSchema:
    signals: tuple[SignalSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {s.name: s for s in self.signals})

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.signals]

    def __getitem__(self, name: str) -> SignalSpec:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def to_dict(self) -> dict:
        return {
            "signals": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "categories": list(s.allowed_categories),
                    "unit": s.unit,
                }
                for s in self.signals
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SignalSchema":
        return cls(
            signals=tuple(
                SignalSpec(
                    name=d["name"],
                    kind=d["kind"],
                    allowed_categories=tuple(d.get("categories") or ()),
                    unit=d.get("unit", ""),
                )
                for d in doc["signals"]
            )
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SignalSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def validate_schema(schema: SignalSchema) -> list[str]:
    """Return all schema violations; empty list iff the schema is valid."""
    violations = []
    seen = set()
    for s in schema.signals:
        if s.name in seen:
            violations.append(f"duplicate signal name {s.name!r}")
        seen.add(s.name)
        if s.kind not in (CONTINUOUS, CATEGORICAL):
            violations.append(f"signal {s.name!r}: unknown kind {s.kind!r}")
        if s.kind == CATEGORICAL and not s.allowed_categories:
            violations.append(f"signal {s.name!r}: categorical with empty category list")
    return violations


@dataclass(frozen=True)
class Frame:
    timestamp: float
    values: dict  # signal name -> float | str; missing signals absent


@dataclass
class TimeSeriesMeasurement:
    id: str
    schema: SignalSchema
    frames: list[Frame] = field(default_factory=list)
    nominal_rate_hz: float = 10.0

    @property
    def span_seconds(self) -> float:
        if len(self.frames) < 2:
            return 0.0
        return self.frames[-1].timestamp - self.frames[0].timestamp


def _check_value(schema: SignalSchema, row_idx: int, name: str, raw):
    """Validate one raw cell value; returns the typed value or raises."""
    spec = schema[name]
    if spec.kind == CONTINUOUS:
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise SchemaViolation(row_idx, name, f"not a number: {raw!r}")
        if not math.isfinite(v):
            raise SchemaViolation(row_idx, name, f"non-finite value {raw!r}")
        return v
    if raw not in spec.allowed_categories:
        raise SchemaViolation(
            row_idx, name, f"category {raw!r} not in {list(spec.allowed_categories)}"
        )
    return raw


def _rows_from_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if header[0] != "timestamp":
            raise SchemaViolation(0, header[0], "first CSV column must be 'timestamp'")
        names = header[1:]
        for i, row in enumerate(reader):
            raw = {}
            for name, cell in zip(names, row[1:]):
                if cell != "":
                    raw[name] = cell
            yield i, row[0], raw


def _rows_from_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            raw = {k: v for k, v in obj.get("v", {}).items() if v is not None}
            yield i, obj.get("t"), raw


def _parse_rows(rows, schema, strict):
    frames = []
    violations = []
    last_t = None
    for row_idx, raw_t, raw_values in rows:
        try:
            try:
                t = float(raw_t)
            except (TypeError, ValueError):
                raise SchemaViolation(row_idx, "timestamp", f"not a number: {raw_t!r}")
            if not math.isfinite(t):
                raise SchemaViolation(row_idx, "timestamp", f"non-finite: {raw_t!r}")
            if last_t is not None and t <= last_t:
                raise NonMonotoneTimestamp(row_idx, t)
            values = {}
            for name, raw in raw_values.items():
                if name not in schema:
                    raise SchemaViolation(row_idx, name, "signal not in schema")
                values[name] = _check_value(schema, row_idx, name, raw)
        except (SchemaViolation, NonMonotoneTimestamp) as err:
            if strict:
                raise
            violations.append(err)
            continue
        last_t = t
        frames.append(Frame(timestamp=t, values=values))
    return frames, violations


def _load(path, schema, strict, measurement_id, nominal_rate_hz):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".jsonl":
        rows = _rows_from_jsonl(path)
    else:
        rows = _rows_from_csv(path)
    frames, violations = _parse_rows(rows, schema, strict)
    measurement = TimeSeriesMeasurement(
        id=measurement_id or path.stem,
        schema=schema,
        frames=frames,
        nominal_rate_hz=nominal_rate_hz,
    )
    return measurement, violations


def load_measurement(path, schema: SignalSchema, measurement_id: str | None = None,
                     nominal_rate_hz: float = 10.0) -> TimeSeriesMeasurement:
    """Strict load: the first violating row aborts with the offending row index."""
    measurement, _ = _load(path, schema, True, measurement_id, nominal_rate_hz)
    return measurement


def load_measurement_permissive(path, schema: SignalSchema, measurement_id: str | None = None,
                                nominal_rate_hz: float = 10.0):
    """Permissive load: invalid rows are collected, valid rows kept.

    Returns (measurement, violations); len(frames) + len(violations) equals the
    number of data rows in the file.
    """
    return _load(path, schema, False, measurement_id, nominal_rate_hz)


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_measurement_csv(measurement: TimeSeriesMeasurement, path) -> None:
    names = measurement.schema.names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + names)
        for frame in measurement.frames:
            row = [repr(frame.timestamp)]
            for name in names:
                v = frame.values.get(name)
                row.append("" if v is None else _format_value(v))
            writer.writerow(row)


def save_measurement_jsonl(measurement: TimeSeriesMeasurement, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in measurement.frames:
            fh.write(json.dumps({"t": frame.timestamp, "v": frame.values}) + "\n")
