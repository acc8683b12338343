"""Synthetic telemetry with planted anomalies, plus hard-anomaly point clouds.

The generator is deliberately simple: bounded random walks for speed and TTC,
regime-persistent categoricals, and five injection kinds that map one-to-one
onto the proxy rule families, so experiments with known ground truth are
possible. Realism is a non-goal; controllability is the point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .features import default_signal_schema
from .ingest import Frame, TimeSeriesMeasurement, save_measurement_csv

HARD_BRAKE = "hard-brake"
WEATHER_MISMATCH = "severe-weather-mismatch"
LANE_DEPARTURE = "lane-departure"
NEAR_COLLISION = "near-collision"
SENSOR_BLUR = "sensor-blur"

INJECTION_KINDS = (HARD_BRAKE, WEATHER_MISMATCH, LANE_DEPARTURE, NEAR_COLLISION,
                   SENSOR_BLUR)

# Injection kind -> proxy rule family it must trip.
KIND_FAMILY = {
    HARD_BRAKE: "extreme-speed",
    WEATHER_MISMATCH: "unusual-combination",
    SENSOR_BLUR: "unusual-combination",
    LANE_DEPARTURE: "risky-event",
    NEAR_COLLISION: "risky-event",
}

SPAN_SECONDS = 12.0   # length of one injected span
SLOT_SECONDS = 20.0   # spacing of candidate injection slots


@dataclass(frozen=True)
class InjectionSpec:
    kind: str
    rate: float  # probability that a candidate slot receives this injection
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InjectionRecord:
    measurement_id: str
    start: float
    end: float
    kind: str


@dataclass
class ScenarioConfig:
    n_measurements: int = 90
    duration_seconds: float = 340.0
    rate_hz: float = 10.0
    seed: int = 0
    injections: list[InjectionSpec] = field(default_factory=lambda: default_injections())

    def validate(self) -> None:
        if self.n_measurements < 1:
            raise InvalidConfig("n_measurements must be >= 1")
        if self.duration_seconds <= 0:
            raise InvalidConfig("duration_seconds must be positive")
        if self.rate_hz <= 0:
            raise InvalidConfig("rate_hz must be positive")
        total = 0.0
        for spec in self.injections:
            if spec.kind not in INJECTION_KINDS:
                raise InvalidConfig(f"unknown injection kind {spec.kind!r}")
            if not 0.0 <= spec.rate <= 1.0:
                raise InvalidConfig(f"injection rate must be in [0, 1], got {spec.rate}")
            total += spec.rate
        if total > 1.0:
            raise InvalidConfig(f"injection rates sum to {total} > 1")


def default_injections(rate: float = 0.009) -> list[InjectionSpec]:
    return [InjectionSpec(kind, rate) for kind in INJECTION_KINDS]


_ROAD_REGIMES = (
    # (road type, probability, cruise mean km/h, cruise sd, cruise bounds)
    ("Dry", 0.70, 110.0, 15.0, (60.0, 140.0)),
    ("Wet", 0.20, 85.0, 12.0, (50.0, 110.0)),
    ("Snow-covered", 0.10, 60.0, 10.0, (35.0, 85.0)),
)


def _markov_spans(n: int, p_enter: float, p_exit: float, rng) -> np.ndarray:
    """Boolean regime signal with geometric dwell times."""
    active = np.zeros(n, dtype=bool)
    state = False
    u = rng.random(n)
    for j in range(n):
        if state:
            state = u[j] >= p_exit
        else:
            state = u[j] < p_enter
        active[j] = state
    return active


def _baseline_signals(n: int, rng) -> dict:
    probs = np.array([r[1] for r in _ROAD_REGIMES])
    regime = _ROAD_REGIMES[rng.choice(len(_ROAD_REGIMES), p=probs)]
    road, _, mu, sd, bounds = regime
    cruise = float(np.clip(rng.normal(mu, sd), *bounds))

    speed = np.empty(n)
    speed[0] = cruise
    noise = rng.normal(0.0, 0.25, size=n)
    for j in range(1, n):
        speed[j] = speed[j - 1] + 0.02 * (cruise - speed[j - 1]) + noise[j]
    speed = np.clip(speed, 1.0, None)

    rain_severe = (_markov_spans(n, 0.002, 0.02, rng) if road == "Wet"
                   else np.zeros(n, dtype=bool))

    lead_present = _markov_spans(n, 0.01, 0.01, rng)
    ttc = np.empty(n)
    ttc[0] = 8.0
    tnoise = rng.normal(0.0, 0.3, size=n)
    for j in range(1, n):
        ttc[j] = ttc[j - 1] + 0.02 * (8.0 - ttc[j - 1]) + tnoise[j]
    ttc = np.clip(ttc, 2.5, 30.0)

    lateral = np.empty(n)
    lateral[0] = 0.0
    lnoise = rng.normal(0.0, 0.15, size=n)
    for j in range(1, n):
        lateral[j] = lateral[j - 1] - 0.05 * lateral[j - 1] + lnoise[j]
    lateral = np.clip(lateral, -3.0, 3.0)

    return {
        "road": np.full(n, road, dtype=object),
        "speed": speed,
        "rain_severe": rain_severe,
        "sunray_severe": np.zeros(n, dtype=bool),
        "blur_severe": np.zeros(n, dtype=bool),
        "lane_unsafe": np.zeros((n, 3), dtype=bool),
        "lead_present": lead_present,
        "ttc": ttc,
        "lateral": lateral,
    }


def _inject(signals: dict, kind: str, j0: int, j1: int, rate_hz: float, rng) -> None:
    """Perturb signals in frame span [j0, j1); spans are SPAN_SECONDS long."""
    t = (np.arange(j0, j1) - j0) / rate_hz  # seconds since span start
    if kind == HARD_BRAKE:
        v0 = signals["speed"][j0]
        v_low = 0.28 * v0
        v_end = signals["speed"][min(j1, len(signals["speed"]) - 1)]
        profile = np.empty(len(t))
        profile[t < 2.0] = v0
        decel = (t >= 2.0) & (t < 6.0)
        profile[decel] = v0 + (v_low - v0) * (t[decel] - 2.0) / 4.0
        hold = (t >= 6.0) & (t < 9.0)
        profile[hold] = v_low
        recover = t >= 9.0
        profile[recover] = v_low + (v_end - v_low) * (t[recover] - 9.0) / 3.0
        signals["speed"][j0:j1] = np.clip(profile, 1.0, None)
    elif kind == WEATHER_MISMATCH:
        signals["rain_severe"][j0:j1] = True
        signals["road"][j0:j1] = "Dry"
    elif kind == SENSOR_BLUR:
        signals["sunray_severe"][j0:j1] = True
        signals["blur_severe"][j0:j1] = True
    elif kind == LANE_DEPARTURE:
        n_unsafe = int(rng.integers(1, 4))  # 1..3 boundaries drift unsafe
        boundaries = rng.choice(3, size=n_unsafe, replace=False)
        for b in boundaries:
            signals["lane_unsafe"][j0:j1, b] = True
        signals["rain_severe"][j0:j1] = True
    elif kind == NEAR_COLLISION:
        signals["lead_present"][j0:j1] = True
        ttc = signals["ttc"][j0:j1].copy()
        approach = (t >= 2.0) & (t < 4.0)
        ttc[approach] = 3.0 + (0.9 - 3.0) * (t[approach] - 2.0) / 2.0
        close = (t >= 4.0) & (t < 8.0)
        ttc[close] = 0.9
        depart = t >= 8.0
        ttc[depart] = 0.9 + (6.0 - 0.9) * (t[depart] - 8.0) / 4.0
        signals["ttc"][j0:j1] = ttc
        risky = (t >= 2.0) & (t < 8.0)
        signals["lateral"][j0:j1][risky] = 0.2
    else:
        raise InvalidConfig(f"unknown injection kind {kind!r}")


def _frames_from_signals(signals: dict, rate_hz: float) -> list[Frame]:
    n = len(signals["speed"])
    frames = []
    for j in range(n):
        values = {
            "speed": float(signals["speed"][j]),
            "rain": "Severe" if signals["rain_severe"][j] else "Normal",
            "sunray": "Severe" if signals["sunray_severe"][j] else "Normal",
            "blur": "Severe" if signals["blur_severe"][j] else "Normal",
            "road_type": str(signals["road"][j]),
            "lane_left_safe": "Unsafe" if signals["lane_unsafe"][j, 0] else "Safe",
            "lane_center_safe": "Unsafe" if signals["lane_unsafe"][j, 1] else "Safe",
            "lane_right_safe": "Unsafe" if signals["lane_unsafe"][j, 2] else "Safe",
        }
        if signals["lead_present"][j]:
            values["ttc"] = float(signals["ttc"][j])
            values["lateral_position"] = float(signals["lateral"][j])
        frames.append(Frame(timestamp=j / rate_hz, values=values))
    return frames


def generate_measurements(config: ScenarioConfig):
    """Returns (measurements, injection records); deterministic given the seed."""
    config.validate()
    schema = default_signal_schema()
    measurements = []
    records = []
    n_frames = int(round(config.duration_seconds * config.rate_hz)) + 1
    for i in range(config.n_measurements):
        mid = f"m{i:04d}"
        rng = np.random.default_rng([config.seed, 10, i])
        signals = _baseline_signals(n_frames, rng)

        inj_rng = np.random.default_rng([config.seed, 20, i])
        slot = 0
        while True:
            start = 10.0 + slot * SLOT_SECONDS
            if start + SPAN_SECONDS + 2.0 > config.duration_seconds:
                break
            u = inj_rng.random()
            cumulative = 0.0
            for spec in config.injections:
                cumulative += spec.rate
                if u < cumulative:
                    jitter = inj_rng.uniform(0.0, SLOT_SECONDS - SPAN_SECONDS - 2.0)
                    s = start + jitter
                    j0 = int(round(s * config.rate_hz))
                    j1 = j0 + int(round(SPAN_SECONDS * config.rate_hz))
                    _inject(signals, spec.kind, j0, j1, config.rate_hz, inj_rng)
                    records.append(InjectionRecord(mid, j0 / config.rate_hz,
                                                   j1 / config.rate_hz, spec.kind))
                    break
            slot += 1

        measurements.append(TimeSeriesMeasurement(
            id=mid,
            schema=schema,
            frames=_frames_from_signals(signals, config.rate_hz),
            nominal_rate_hz=config.rate_hz,
        ))
    return measurements, records


def save_dataset(measurements, records, out_dir) -> None:
    out_dir = Path(out_dir)
    meas_dir = out_dir / "measurements"
    meas_dir.mkdir(parents=True, exist_ok=True)
    if measurements:
        measurements[0].schema.save(out_dir / "schema.json")
    for m in measurements:
        save_measurement_csv(m, meas_dir / f"{m.id}.csv")
    with open(out_dir / "injections.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measurement_id", "start", "end", "kind"])
        for r in records:
            writer.writerow([r.measurement_id, repr(r.start), repr(r.end), r.kind])


def load_injections(path) -> list[InjectionRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            records.append(InjectionRecord(row[0], float(row[1]), float(row[2]), row[3]))
    return records


# --- Hard-anomaly point clouds (non-linearly separable toy data) ---

@dataclass
class HardAnomalyCloud:
    points: np.ndarray  # n x 2
    labels: np.ndarray  # boolean, True = planted anomaly


def generate_hard_anomaly_cloud(n_inliers: int, n_anomalies: int,
                                shape: str = "two-rings", noise: float = 0.05,
                                seed: int = 0) -> HardAnomalyCloud:
    """Inliers on curved manifolds, anomalies in enclosed/in-between regions
    that no single axis-parallel split can isolate."""
    if n_inliers < 2 or n_anomalies < 0:
        raise InvalidConfig("need n_inliers >= 2 and n_anomalies >= 0")
    if noise < 0:
        raise InvalidConfig("noise must be non-negative")
    rng = np.random.default_rng(seed)
    if shape == "two-rings":
        # Sparse small inner ring, dense large outer ring, anomalies in the
        # annulus between them near the inner ring: in the original space the
        # anomalies sit next to the inner cluster and no axis-parallel split
        # isolates them, while random nonlinear projections spread them out.
        r_inner, r_outer = 0.2, 6.0
        n_outer = int(0.9 * n_inliers)
        n_inner = n_inliers - n_outer
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_inliers)
        radii = np.concatenate([
            r_inner + noise * rng.standard_normal(n_inner),
            r_outer + noise * rng.standard_normal(n_outer),
        ])
        inliers = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
        a_radii = rng.uniform(0.5, 1.0, size=n_anomalies)
        a_angles = rng.uniform(0.0, 2.0 * np.pi, size=n_anomalies)
        anomalies = np.column_stack([a_radii * np.cos(a_angles),
                                     a_radii * np.sin(a_angles)])
    elif shape == "two-moons":
        n1 = n_inliers // 2
        t1 = rng.uniform(0.0, np.pi, size=n1)
        t2 = rng.uniform(0.0, np.pi, size=n_inliers - n1)
        moon1 = np.column_stack([np.cos(t1), np.sin(t1)])
        moon2 = np.column_stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)])
        inliers = np.vstack([moon1, moon2])
        inliers += noise * rng.standard_normal(inliers.shape)
        # pocket between the two arcs
        a_angles = rng.uniform(0.0, 2.0 * np.pi, size=n_anomalies)
        a_radii = 0.15 * np.sqrt(rng.uniform(0.0, 1.0, size=n_anomalies))
        anomalies = np.column_stack([
            0.5 + a_radii * np.cos(a_angles),
            0.25 + a_radii * np.sin(a_angles),
        ])
    else:
        raise InvalidConfig(f"unknown cloud shape {shape!r}")
    points = np.vstack([inliers, anomalies]) if n_anomalies else inliers
    labels = np.concatenate([np.zeros(n_inliers, dtype=bool),
                             np.ones(n_anomalies, dtype=bool)])
    return HardAnomalyCloud(points=points, labels=labels)


def save_cloud_csv(cloud: HardAnomalyCloud, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(cloud.points, cloud.labels):
            writer.writerow([repr(float(x)), repr(float(y)), int(label)])
