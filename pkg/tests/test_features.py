import math

import numpy as np
import pytest

from drivescope.errors import (
    DomainError,
    MeasurementTooShort,
    MissingSignal,
    UnknownCategory,
)
from drivescope.features import (
    CATEGORICAL_FEATURES,
    CONTINUOUS_FEATURES,
    FeatureSchema,
    Window,
    WindowSpec,
    build_feature_matrix,
    compute_window_features,
    default_signal_schema,
    lane_keeping_quality,
    load_feature_matrix,
    mode_feature,
    relative_speed_range,
    save_feature_matrix,
    segment,
    transform,
    ttc_riskiness,
    window_ttc_riskiness,
)
from drivescope.ingest import Frame, TimeSeriesMeasurement

SCHEMA = default_signal_schema()


def frame(t, **values):
    return Frame(timestamp=t, values=values)


def make_window(frames):
    return Window("m", frames[0].timestamp, frames[-1].timestamp, tuple(frames))


def full_frame(t, speed=100.0, rain="Normal", sunray="Normal", blur="Normal",
               road="Dry", lanes=("Safe", "Safe", "Safe"), ttc=None, lateral=None):
    values = {
        "speed": speed, "rain": rain, "sunray": sunray, "blur": blur,
        "road_type": road, "lane_left_safe": lanes[0],
        "lane_center_safe": lanes[1], "lane_right_safe": lanes[2],
    }
    if ttc is not None:
        values["ttc"] = ttc
        values["lateral_position"] = lateral
    return Frame(timestamp=t, values=values)


def uniform_measurement(span, rate_hz=10.0, mid="m"):
    n = int(round(span * rate_hz)) + 1
    frames = [full_frame(j / rate_hz) for j in range(n)]
    return TimeSeriesMeasurement(id=mid, schema=SCHEMA, frames=frames)


# --- relative speed range ---

def test_relative_speed_range_braking_examples():
    w = make_window([frame(0.0, speed=200.0), frame(0.1, speed=180.0)])
    assert relative_speed_range(w) == pytest.approx(0.1)
    w = make_window([frame(0.0, speed=30.0), frame(0.1, speed=10.0)])
    assert relative_speed_range(w) == pytest.approx(0.67, abs=1e-2)
    assert relative_speed_range(w) == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_relative_speed_range_uses_absolute_speeds():
    w = make_window([frame(0.0, speed=-10.0), frame(0.1, speed=5.0)])
    # |speeds| = {10, 5} -> (10 - 5) / 10
    assert relative_speed_range(w) == pytest.approx(0.5)


def test_relative_speed_range_stationary_window():
    w = make_window([frame(0.0, speed=0.0), frame(0.1, speed=0.0)])
    assert relative_speed_range(w) == 0.0


def test_relative_speed_range_requires_speed():
    w = make_window([frame(0.0), frame(0.1)])
    with pytest.raises(MissingSignal):
        relative_speed_range(w)


# --- mode features ---

def test_mode_feature_majority():
    w = make_window([frame(0.0, rain="Severe"), frame(0.1, rain="Severe"),
                     frame(0.2, rain="Normal")])
    assert mode_feature(w, "rain", SCHEMA) == "Severe"


def test_mode_feature_tie_breaks_by_schema_order():
    w = make_window([frame(0.0, road_type="Wet"), frame(0.1, road_type="Dry")])
    # tie: "Dry" comes first in the schema
    assert mode_feature(w, "road_type", SCHEMA) == "Dry"


def test_mode_feature_skips_missing_frames():
    w = make_window([frame(0.0, rain="Severe"), frame(0.1), frame(0.2)])
    assert mode_feature(w, "rain", SCHEMA) == "Severe"


# --- lane keeping quality ---

@pytest.mark.parametrize("lanes, expected", [
    (("Safe", "Safe", "Safe"), "Good"),
    (("Unsafe", "Safe", "Safe"), "Bad"),
    (("Unsafe", "Unsafe", "Safe"), "Bad"),
    (("Unsafe", "Unsafe", "Unsafe"), "Worst"),
])
def test_lane_keeping_levels(lanes, expected):
    w = make_window([full_frame(0.0, lanes=lanes), full_frame(0.1, lanes=lanes)])
    assert lane_keeping_quality(w) == expected


def test_lane_boundary_unsafe_in_any_frame_counts():
    w = make_window([
        full_frame(0.0, lanes=("Safe", "Safe", "Safe")),
        full_frame(0.1, lanes=("Unsafe", "Safe", "Safe")),
    ])
    assert lane_keeping_quality(w) == "Bad"


# --- collision riskiness ---

def test_ttc_riskiness_formula():
    assert ttc_riskiness(2.0, 0.0) == pytest.approx(0.5)
    assert ttc_riskiness(1.0, 1.1) == pytest.approx(0.5)
    assert ttc_riskiness(4.0, 1.1) == pytest.approx(0.125)
    assert ttc_riskiness(5.0, 2.2) == 0.0
    assert ttc_riskiness(5.0, -4.0) == 0.0  # outside corridor on either side


def test_ttc_riskiness_rejects_nonpositive_ttc():
    with pytest.raises(DomainError):
        ttc_riskiness(0.0, 0.0)
    with pytest.raises(DomainError):
        ttc_riskiness(-1.0, 0.0)


def test_window_riskiness_takes_worst_frame_and_clamps():
    w = make_window([
        full_frame(0.0, ttc=10.0, lateral=0.0),
        full_frame(0.1, ttc=0.5, lateral=0.0),  # raw value 2.0, clamps to 1
    ])
    assert window_ttc_riskiness(w) == 1.0


def test_window_riskiness_zero_without_vehicle():
    w = make_window([full_frame(0.0), full_frame(0.1)])
    assert window_ttc_riskiness(w) == 0.0


# --- segmentation ---

def test_sixty_second_measurement_gives_19_windows():
    m = uniform_measurement(60.0)
    windows = segment(m, WindowSpec(6.0, 3.0))
    assert len(windows) == 19
    assert windows[0].start_time == 0.0
    assert windows[-1].start_time == pytest.approx(54.0)


def test_windows_fully_contained():
    m = uniform_measurement(20.0)
    for w in segment(m, WindowSpec(6.0, 3.0)):
        assert w.frames[0].timestamp >= w.start_time - 1e-9
        assert w.frames[-1].timestamp <= w.end_time + 1e-9
        assert w.end_time <= 20.0 + 1e-9


def test_segment_rejects_short_measurement():
    with pytest.raises(MeasurementTooShort):
        segment(uniform_measurement(4.0), WindowSpec(6.0, 3.0))


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec(6.0, 7.0)
    with pytest.raises(ValueError):
        WindowSpec(0.0, 0.0)


# --- encoding ---

def test_compute_window_features_keys():
    w = make_window([full_frame(0.0), full_frame(0.1)])
    raw = compute_window_features(w, SCHEMA)
    expected = set(CONTINUOUS_FEATURES) | {name for name, _ in CATEGORICAL_FEATURES}
    assert set(raw) == expected


def test_one_hot_blocks_sum_to_one():
    m = uniform_measurement(30.0)
    matrix = build_feature_matrix([m], WindowSpec(), sample_seed=0)
    offset = len(matrix.schema.continuous_features)
    for _, cats in matrix.schema.categorical_features:
        block = matrix.values[:, offset:offset + len(cats)]
        np.testing.assert_allclose(block.sum(axis=1), 1.0)
        offset += len(cats)


def test_standardized_columns_have_zero_mean_unit_std():
    rng = np.random.default_rng(3)
    frames = [full_frame(j / 10.0, speed=float(rng.uniform(50, 150)),
                         ttc=float(rng.uniform(1, 20)), lateral=float(rng.uniform(-3, 3)))
              for j in range(601)]
    m = TimeSeriesMeasurement(id="m", schema=SCHEMA, frames=frames)
    matrix = build_feature_matrix([m], WindowSpec(), sample_seed=0)
    for j, name in enumerate(matrix.schema.continuous_features):
        col = matrix.values[:, j]
        assert col.mean() == pytest.approx(0.0, abs=1e-12)
        assert col.std() == pytest.approx(1.0)


def test_degenerate_continuous_feature_dropped():
    # constant speed and no lead vehicle: both continuous features are constant
    m = uniform_measurement(30.0)
    matrix = build_feature_matrix([m], WindowSpec(), sample_seed=0)
    assert matrix.schema.continuous_features == []
    assert matrix.values.shape[1] == matrix.schema.n_columns


def test_sample_fraction_truncates_deterministically():
    m = uniform_measurement(120.0)
    full = build_feature_matrix([m], WindowSpec(), sample_seed=5)
    half = build_feature_matrix([m], WindowSpec(), sample_seed=5, sample_fraction=0.5)
    assert half.n_rows == math.ceil(0.5 * full.n_rows)
    assert half.window_refs == full.window_refs[:half.n_rows]
    again = build_feature_matrix([m], WindowSpec(), sample_seed=5, sample_fraction=0.5)
    assert again.window_refs == half.window_refs


def test_standardize_reference_points():
    schema = FeatureSchema(
        continuous_features=["x"], means={"x": 4.0}, stds={"x": 2.0},
        categorical_features=[],
    )
    assert schema.standardize("x", 4.0) == 0.0
    assert schema.standardize("x", 6.0) == 1.0
    assert schema.destandardize("x", 1.0) == 6.0


def test_one_hot_position():
    schema = FeatureSchema(
        continuous_features=[], means={}, stds={},
        categorical_features=[("road_type", ("Dry", "Wet", "Snow-covered"))],
    )
    row = transform(schema, {"road_type": "Snow-covered"})
    np.testing.assert_array_equal(row, [0.0, 0.0, 1.0])


def test_transform_strict_rejects_unknown_category():
    schema = FeatureSchema(
        continuous_features=[], means={}, stds={},
        categorical_features=[("rain", ("Severe", "Normal"))],
    )
    with pytest.raises(UnknownCategory):
        transform(schema, {"rain": "Drizzle"})
    row = transform(schema, {"rain": "Drizzle"}, strict=False)
    np.testing.assert_array_equal(row, [0.0, 0.0])


def test_feature_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    frames = [full_frame(j / 10.0, speed=float(rng.uniform(50, 150)),
                         ttc=float(rng.uniform(1, 20)), lateral=float(rng.uniform(-3, 3)))
              for j in range(301)]
    m = TimeSeriesMeasurement(id="m", schema=SCHEMA, frames=frames)
    matrix = build_feature_matrix([m], WindowSpec(), sample_seed=1)
    csv_path, schema_path = tmp_path / "f.csv", tmp_path / "s.json"
    save_feature_matrix(matrix, csv_path, schema_path)
    loaded = load_feature_matrix(csv_path, schema_path)
    np.testing.assert_array_equal(loaded.values, matrix.values)
    assert loaded.window_refs == matrix.window_refs
    assert loaded.raw == matrix.raw
    assert loaded.schema.means == matrix.schema.means
