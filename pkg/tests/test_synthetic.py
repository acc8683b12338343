import numpy as np
import pytest

from drivescope.errors import InvalidConfig
from drivescope.features import WindowSpec, build_feature_matrix, default_signal_schema
from drivescope.ingest import load_measurement
from drivescope.proxy import RULE_FAMILIES, apply_rules, default_ruleset
from drivescope.synthetic import (
    HARD_BRAKE,
    INJECTION_KINDS,
    KIND_FAMILY,
    InjectionSpec,
    ScenarioConfig,
    generate_hard_anomaly_cloud,
    generate_measurements,
    load_injections,
    save_cloud_csv,
    save_dataset,
)


def small_config(**kwargs):
    defaults = dict(n_measurements=3, duration_seconds=60.0, rate_hz=10.0, seed=0)
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


def test_generation_is_deterministic():
    a, ra = generate_measurements(small_config())
    b, rb = generate_measurements(small_config())
    assert ra == rb
    for ma, mb in zip(a, b):
        assert ma.frames == mb.frames
    c, _ = generate_measurements(small_config(seed=1))
    assert c[0].frames != a[0].frames


def test_frame_count_and_timestamps():
    ms, _ = generate_measurements(small_config())
    assert len(ms) == 3
    for m in ms:
        assert len(m.frames) == 601
        assert m.frames[0].timestamp == 0.0
        assert m.frames[-1].timestamp == pytest.approx(60.0)


def test_frames_conform_to_schema():
    ms, _ = generate_measurements(small_config(seed=4))
    schema = default_signal_schema()
    for m in ms:
        assert m.schema == schema
        for f in m.frames[::50]:
            for name, value in f.values.items():
                spec = schema[name]
                if spec.allowed_categories:
                    assert value in spec.allowed_categories
                else:
                    assert np.isfinite(value)
            # ttc and lateral appear together or not at all
            assert ("ttc" in f.values) == ("lateral_position" in f.values)


def test_injection_records_stay_inside_measurement():
    cfg = small_config(n_measurements=10, duration_seconds=120.0, seed=2,
                       injections=[InjectionSpec(HARD_BRAKE, 0.5)])
    ms, records = generate_measurements(cfg)
    assert records
    ids = {m.id for m in ms}
    for r in records:
        assert r.measurement_id in ids
        assert 0.0 <= r.start < r.end <= 120.0
        assert r.end - r.start == pytest.approx(12.0, abs=0.1)


@pytest.mark.parametrize("kind", INJECTION_KINDS)
def test_each_injection_kind_trips_its_rule_family(kind):
    cfg = small_config(n_measurements=4, duration_seconds=60.0, seed=11,
                       injections=[InjectionSpec(kind, 1.0)])
    ms, records = generate_measurements(cfg)
    assert records, f"no {kind} injection was placed"
    matrix = build_feature_matrix(ms, WindowSpec(), sample_seed=0)
    labeling = apply_rules(default_ruleset(), matrix)
    family = KIND_FAMILY[kind]
    for record in records:
        hit = False
        for i, (mid, start) in enumerate(matrix.window_refs):
            if mid != record.measurement_id:
                continue
            if start >= record.end or start + 6.0 <= record.start:
                continue
            if any(RULE_FAMILIES[name] == family
                   for name in labeling.matched_rules[i]):
                hit = True
                break
        assert hit, f"{kind} injection at {record.start}s tripped no {family} rule"


def test_hard_brake_raises_speed_range_over_baseline():
    base_cfg = small_config(n_measurements=2, seed=9, injections=[])
    brake_cfg = small_config(n_measurements=2, seed=9,
                             injections=[InjectionSpec(HARD_BRAKE, 1.0)])
    base_ms, _ = generate_measurements(base_cfg)
    brake_ms, records = generate_measurements(brake_cfg)
    assert records
    base = {m.id: build_feature_matrix([m], WindowSpec(), sample_seed=0)
            for m in base_ms}
    brake = {m.id: build_feature_matrix([m], WindowSpec(), sample_seed=0)
             for m in brake_ms}
    for record in records:
        def span_max(matrix):
            values = [matrix.raw[i]["relative_speed_range"]
                      for i, (mid, start) in enumerate(matrix.window_refs)
                      if start < record.end and start + 6.0 > record.start]
            return max(values)
        assert (span_max(brake[record.measurement_id])
                > span_max(base[record.measurement_id]))


def test_clean_config_yields_low_proxy_rate():
    cfg = small_config(n_measurements=10, duration_seconds=120.0, seed=3,
                       injections=[])
    ms, records = generate_measurements(cfg)
    assert records == []
    matrix = build_feature_matrix(ms, WindowSpec(), sample_seed=0)
    labeling = apply_rules(default_ruleset(), matrix)
    assert labeling.n_flagged / matrix.n_rows < 0.05


def test_config_validation():
    with pytest.raises(InvalidConfig):
        small_config(n_measurements=0).validate()
    with pytest.raises(InvalidConfig):
        small_config(duration_seconds=-1.0).validate()
    with pytest.raises(InvalidConfig):
        small_config(injections=[InjectionSpec("teleport", 0.1)]).validate()
    with pytest.raises(InvalidConfig):
        small_config(injections=[InjectionSpec(HARD_BRAKE, 1.5)]).validate()
    with pytest.raises(InvalidConfig):
        small_config(injections=[InjectionSpec(k, 0.3) for k in INJECTION_KINDS]).validate()


def test_dataset_roundtrip(tmp_path):
    cfg = small_config(seed=5, injections=[InjectionSpec(HARD_BRAKE, 0.5)])
    ms, records = generate_measurements(cfg)
    save_dataset(ms, records, tmp_path)
    schema = default_signal_schema()
    for m in ms:
        loaded = load_measurement(tmp_path / "measurements" / f"{m.id}.csv", schema)
        assert loaded.frames == m.frames
    assert load_injections(tmp_path / "injections.csv") == records


def test_two_rings_cloud_geometry():
    cloud = generate_hard_anomaly_cloud(2000, 40, seed=0)
    assert cloud.points.shape == (2040, 2)
    assert int(cloud.labels.sum()) == 40
    radii = np.linalg.norm(cloud.points, axis=1)
    anomaly_r = radii[cloud.labels]
    inlier_r = radii[~cloud.labels]
    # anomalies sit strictly between the two rings
    assert anomaly_r.min() >= 0.5 and anomaly_r.max() <= 1.0
    assert (inlier_r < 0.45).any() and (inlier_r > 5.0).any()
    assert not ((inlier_r > 0.5) & (inlier_r < 1.0)).any()


def test_two_rings_noise_zero_radii_exact():
    cloud = generate_hard_anomaly_cloud(100, 0, noise=0.0, seed=2)
    radii = np.linalg.norm(cloud.points, axis=1)
    on_ring = np.isclose(radii, 0.2) | np.isclose(radii, 6.0)
    assert on_ring.all()


def test_two_moons_cloud():
    cloud = generate_hard_anomaly_cloud(500, 20, shape="two-moons", seed=1)
    assert cloud.points.shape == (520, 2)
    pocket = cloud.points[cloud.labels]
    assert np.all(np.linalg.norm(pocket - [0.5, 0.25], axis=1) <= 0.15 + 1e-9)


def test_cloud_validation_and_export(tmp_path):
    with pytest.raises(InvalidConfig):
        generate_hard_anomaly_cloud(1, 5)
    with pytest.raises(InvalidConfig):
        generate_hard_anomaly_cloud(10, 5, shape="spiral")
    with pytest.raises(InvalidConfig):
        generate_hard_anomaly_cloud(10, 5, noise=-0.1)
    cloud = generate_hard_anomaly_cloud(10, 2, seed=3)
    path = tmp_path / "cloud.csv"
    save_cloud_csv(cloud, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,label"
    assert len(lines) == 13
