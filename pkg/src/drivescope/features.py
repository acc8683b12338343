"""Sliding-window segmentation and feature aggregation.

Turns measurements into the tabular window dataset consumed by the detectors:
one row per 6-second window (3-second step by default), columns are the
standardized continuous features followed by one-hot blocks. The raw
(pre-standardization) feature values are kept alongside each row because the
proxy labeler thresholds only make sense in natural units.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    EmptyResult,
    MeasurementTooShort,
    MissingSignal,
    UnknownCategory,
)
from .ingest import CATEGORICAL, CONTINUOUS, SignalSchema, SignalSpec, TimeSeriesMeasurement

log = logging.getLogger(__name__)

SPEED = "speed"
RAIN = "rain"
SUNRAY = "sunray"
BLUR = "blur"
ROAD_TYPE = "road_type"
LANE_SIGNALS = ("lane_left_safe", "lane_center_safe", "lane_right_safe")
TTC = "ttc"
LATERAL = "lateral_position"

LANE_KEEPING = "lane_keeping_quality"
LANE_LEVELS = ("Good", "Bad", "Worst")

# Lateral corridor half-width (meters) in the collision riskiness formula.
RISK_LATERAL_WIDTH = 2.2


def default_signal_schema() -> SignalSchema:
    """Raw telemetry signals backing the window feature set."""
    return SignalSchema(signals=(
        SignalSpec(SPEED, CONTINUOUS, unit="km/h"),
        SignalSpec(RAIN, CATEGORICAL, ("Severe", "Normal")),
        SignalSpec(SUNRAY, CATEGORICAL, ("Severe", "Normal")),
        SignalSpec(BLUR, CATEGORICAL, ("Severe", "Normal")),
        SignalSpec(ROAD_TYPE, CATEGORICAL, ("Dry", "Wet", "Snow-covered")),
        SignalSpec("lane_left_safe", CATEGORICAL, ("Safe", "Unsafe")),
        SignalSpec("lane_center_safe", CATEGORICAL, ("Safe", "Unsafe")),
        SignalSpec("lane_right_safe", CATEGORICAL, ("Safe", "Unsafe")),
        SignalSpec(TTC, CONTINUOUS, unit="s"),
        SignalSpec(LATERAL, CONTINUOUS, unit="m"),
    ))


@dataclass(frozen=True)
class WindowSpec:
    window_seconds: float = 6.0
    step_seconds: float = 3.0

    def __post_init__(self):
        if self.window_seconds <= 0 or self.step_seconds <= 0:
            raise ValueError("window and step must be positive")
        if self.step_seconds > self.window_seconds:
            raise ValueError("step_seconds must not exceed window_seconds")


@dataclass(frozen=True)
class Window:
    measurement_id: str
    start_time: float
    end_time: float
    frames: tuple  # contiguous slice of Frame


def segment(measurement: TimeSeriesMeasurement, spec: WindowSpec) -> list[Window]:
    """Emit all windows fully contained in the measurement span.

    Window k starts at t0 + k*step; for span S the count is
    floor((S - window)/step) + 1.
    """
    frames = measurement.frames
    if len(frames) < 2:
        raise MeasurementTooShort(f"measurement {measurement.id}: fewer than 2 frames")
    t0 = frames[0].timestamp
    span = frames[-1].timestamp - t0
    eps = 1e-9
    if span + eps < spec.window_seconds:
        raise MeasurementTooShort(
            f"measurement {measurement.id}: span {span:.3f}s < window {spec.window_seconds}s"
        )
    times = [f.timestamp for f in frames]
    windows = []
    k = 0
    while t0 + k * spec.step_seconds + spec.window_seconds <= t0 + span + eps:
        start = t0 + k * spec.step_seconds
        end = start + spec.window_seconds
        lo = bisect_left(times, start - eps)
        hi = bisect_right(times, end + eps)
        if hi - lo >= 2:
            windows.append(Window(measurement.id, start, end, tuple(frames[lo:hi])))
        k += 1
    return windows


def _present(window: Window, signal: str) -> list:
    return [f.values[signal] for f in window.frames if signal in f.values]


def relative_speed_range(window: Window) -> float:
    """(max - min) / max of |speed| over the window; 0 for a stationary window."""
    speeds = [abs(v) for v in _present(window, SPEED)]
    if not speeds:
        raise MissingSignal(f"no {SPEED!r} value in window at {window.start_time}")
    hi = max(speeds)
    if hi == 0.0:
        return 0.0
    return (hi - min(speeds)) / hi


def mode_feature(window: Window, signal: str, schema: SignalSchema) -> str:
    """Most frequent category in the window; ties broken by schema order."""
    values = _present(window, signal)
    if not values:
        raise MissingSignal(f"no {signal!r} value in window at {window.start_time}")
    categories = schema[signal].allowed_categories
    counts = {c: 0 for c in categories}
    for v in values:
        counts[v] += 1
    return max(categories, key=lambda c: (counts[c], -categories.index(c)))


def lane_keeping_quality(window: Window) -> str:
    """Good / Bad / Worst from the three per-boundary safety signals.

    A boundary counts as unsafe if it is unsafe in any frame of the window;
    0 unsafe -> Good, 3 -> Worst, 1 or 2 -> Bad.
    """
    unsafe = 0
    for signal in LANE_SIGNALS:
        values = _present(window, signal)
        if not values:
            raise MissingSignal(f"no {signal!r} value in window at {window.start_time}")
        if any(v == "Unsafe" for v in values):
            unsafe += 1
    if unsafe == 0:
        return "Good"
    if unsafe == 3:
        return "Worst"
    return "Bad"


def ttc_riskiness(ttc: float, lateral_position: float) -> float:
    """(1/TTC) * max(0, (2.2 - |lateral|)/2.2) for a single (frame, vehicle) pair."""
    if ttc <= 0:
        raise DomainError(f"ttc must be positive, got {ttc}")
    return (1.0 / ttc) * max(0.0, (RISK_LATERAL_WIDTH - abs(lateral_position)) / RISK_LATERAL_WIDTH)


def window_ttc_riskiness(window: Window) -> float:
    """Worst-case riskiness over the window, clamped to [0, 1]; 0 if no vehicle."""
    best = 0.0
    for frame in window.frames:
        if TTC in frame.values and LATERAL in frame.values:
            best = max(best, ttc_riskiness(frame.values[TTC], frame.values[LATERAL]))
    return min(best, 1.0)


CONTINUOUS_FEATURES = ("relative_speed_range", "ttc_riskiness")
CATEGORICAL_FEATURES = (
    (RAIN, ("Severe", "Normal")),
    (SUNRAY, ("Severe", "Normal")),
    (BLUR, ("Severe", "Normal")),
    (ROAD_TYPE, ("Dry", "Wet", "Snow-covered")),
    (LANE_KEEPING, LANE_LEVELS),
)


def compute_window_features(window: Window, schema: SignalSchema) -> dict:
    """Raw (unstandardized, unencoded) feature values for one window."""
    return {
        "relative_speed_range": relative_speed_range(window),
        "ttc_riskiness": window_ttc_riskiness(window),
        RAIN: mode_feature(window, RAIN, schema),
        SUNRAY: mode_feature(window, SUNRAY, schema),
        BLUR: mode_feature(window, BLUR, schema),
        ROAD_TYPE: mode_feature(window, ROAD_TYPE, schema),
        LANE_KEEPING: lane_keeping_quality(window),
    }


@dataclass
class FeatureSchema:
    """Fitted encoding: standardization statistics plus one-hot category lists."""
    continuous_features: list[str]
    categorical_features: list[tuple[str, tuple[str, ...]]]
    means: dict[str, float]
    stds: dict[str, float]

    @property
    def column_names(self) -> list[str]:
        cols = list(self.continuous_features)
        for name, cats in self.categorical_features:
            cols.extend(f"{name}={c}" for c in cats)
        return cols

    @property
    def n_columns(self) -> int:
        return len(self.continuous_features) + sum(
            len(cats) for _, cats in self.categorical_features
        )

    def standardize(self, name: str, value: float) -> float:
        return (value - self.means[name]) / self.stds[name]

    def destandardize(self, name: str, value: float) -> float:
        return value * self.stds[name] + self.means[name]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "continuous_features": list(self.continuous_features),
            "categorical_features": [
                {"name": n, "categories": list(c)} for n, c in self.categorical_features
            ],
            "means": self.means,
            "stds": self.stds,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls(
            continuous_features=list(doc["continuous_features"]),
            categorical_features=[
                (d["name"], tuple(d["categories"])) for d in doc["categorical_features"]
            ],
            means=dict(doc["means"]),
            stds=dict(doc["stds"]),
        )


def transform(schema: FeatureSchema, raw: dict, strict: bool = True) -> np.ndarray:
    """Encode one window's raw feature dict with a fitted schema."""
    out = np.zeros(schema.n_columns)
    for i, name in enumerate(schema.continuous_features):
        out[i] = schema.standardize(name, raw[name])
    offset = len(schema.continuous_features)
    for name, cats in schema.categorical_features:
        value = raw[name]
        if value in cats:
            out[offset + cats.index(value)] = 1.0
        elif strict:
            raise UnknownCategory(f"{name!r} value {value!r} not in {list(cats)}")
        else:
            log.warning("unknown category %r for %r encoded as all-zero block", value, name)
        offset += len(cats)
    return out


@dataclass
class FeatureMatrix:
    schema: FeatureSchema
    values: np.ndarray                    # n_rows x n_columns, encoded
    window_refs: list[tuple[str, float]]  # (measurement_id, window_start)
    raw: list[dict] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def build_feature_matrix(measurements, spec: WindowSpec, sample_seed: int,
                         sample_fraction: float = 1.0) -> FeatureMatrix:
    """Segment, featurize, subsample, standardize and one-hot encode.

    Windows are shuffled with ``sample_seed`` and truncated to
    ``sample_fraction``; standardization statistics are fitted on the sampled
    rows themselves. Deterministic given identical inputs and seed.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in (0, 1]")
    rows = []
    refs = []
    for m in measurements:
        for window in segment(m, spec):
            try:
                raw = compute_window_features(window, m.schema)
            except MissingSignal as err:
                log.warning("dropping window: %s", err)
                continue
            rows.append(raw)
            refs.append((m.id, window.start_time))
    if not rows:
        raise EmptyResult("no window survived segmentation and feature extraction")

    rng = np.random.default_rng(sample_seed)
    order = rng.permutation(len(rows))
    n_keep = max(1, math.ceil(sample_fraction * len(rows)))
    order = order[:n_keep]
    rows = [rows[i] for i in order]
    refs = [refs[i] for i in order]

    means, stds = {}, {}
    kept_continuous = []
    for name in CONTINUOUS_FEATURES:
        col = np.array([r[name] for r in rows], dtype=float)
        mu, sd = float(col.mean()), float(col.std())
        if sd <= 0.0:
            log.warning("dropping degenerate continuous feature %r (zero variance)", name)
            continue
        kept_continuous.append(name)
        means[name], stds[name] = mu, sd

    schema = FeatureSchema(
        continuous_features=kept_continuous,
        categorical_features=[(n, c) for n, c in CATEGORICAL_FEATURES],
        means=means,
        stds=stds,
    )
    values = np.stack([transform(schema, r) for r in rows]) if rows else np.zeros((0, 0))
    return FeatureMatrix(schema=schema, values=values, window_refs=refs, raw=rows)


# --- persistence: encoded CSV + raw sidecar columns + schema JSON ---

def save_feature_matrix(matrix: FeatureMatrix, csv_path, schema_path) -> None:
    raw_names = list(CONTINUOUS_FEATURES) + [n for n, _ in matrix.schema.categorical_features]
    header = (["measurement_id", "window_start"] + matrix.schema.column_names
              + [f"raw_{n}" for n in raw_names])
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for (mid, start), row, raw in zip(matrix.window_refs, matrix.values, matrix.raw):
            cells = [mid, repr(start)]
            cells.extend(repr(float(v)) for v in row)
            for name in raw_names:
                v = raw[name]
                cells.append(repr(v) if isinstance(v, float) else str(v))
            writer.writerow(cells)
    Path(schema_path).write_text(json.dumps(matrix.schema.to_dict(), indent=2) + "\n")


def load_feature_matrix(csv_path, schema_path) -> FeatureMatrix:
    schema = FeatureSchema.from_dict(json.loads(Path(schema_path).read_text()))
    n_cols = schema.n_columns
    cat_names = {n for n, _ in schema.categorical_features}
    values, refs, raws = [], [], []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw_names = [h[4:] for h in header if h.startswith("raw_")]
        for row in reader:
            refs.append((row[0], float(row[1])))
            values.append([float(v) for v in row[2:2 + n_cols]])
            raw = {}
            for name, cell in zip(raw_names, row[2 + n_cols:]):
                raw[name] = cell if name in cat_names else float(cell)
            raws.append(raw)
    return FeatureMatrix(
        schema=schema,
        values=np.array(values, dtype=float).reshape(len(values), n_cols),
        window_refs=refs,
        raw=raws,
    )
