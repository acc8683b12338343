import numpy as np
import pytest

from drivescope.dif import (
    DeepIsolationForest,
    RepresentationNetwork,
    dif_from_dict,
    dif_to_dict,
    load_dif,
    save_dif,
)
from drivescope.errors import DegenerateData, DimensionMismatch, EmptyData


def test_network_weights_are_standard_normal():
    net = RepresentationNetwork(input_dim=30, seed=0)
    flat = np.concatenate([w.ravel() for w in net.weights])
    assert flat.mean() == pytest.approx(0.0, abs=0.02)
    assert flat.std() == pytest.approx(1.0, abs=0.02)
    shapes = [w.shape for w in net.weights]
    assert shapes == [(30, 500), (500, 100), (100, 20)]


def test_network_projection_is_deterministic():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((50, 10))
    a = RepresentationNetwork(10, seed=[3, 1, 0]).project(X)
    b = RepresentationNetwork(10, seed=[3, 1, 0]).project(X)
    np.testing.assert_array_equal(a, b)
    c = RepresentationNetwork(10, seed=[3, 1, 1]).project(X)
    assert not np.array_equal(a, c)


def test_projection_independent_of_batch_size():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((130, 8))
    net = RepresentationNetwork(8, seed=5)
    np.testing.assert_allclose(net.project(X, batch_size=64),
                               net.project(X, batch_size=130), atol=1e-10)


def test_zero_input_with_zero_biases_yields_output_bias():
    net = RepresentationNetwork(6, seed=2)
    for b in net.biases[:-1]:
        b[:] = 0.0
    out = net.project(np.zeros((1, 6)))
    np.testing.assert_allclose(out[0], net.biases[-1], atol=1e-12)


def test_projection_rejects_wrong_width():
    net = RepresentationNetwork(8, seed=0)
    with pytest.raises(DimensionMismatch):
        net.project(np.zeros((3, 9)))


def test_network_options():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((20, 6))
    plain = RepresentationNetwork(6, seed=1).project(X)
    skip = RepresentationNetwork(6, seed=1, skip_connections=True).project(X)
    assert not np.allclose(plain, skip)
    drop = RepresentationNetwork(6, seed=1, dropout_rate=0.3)
    np.testing.assert_array_equal(drop.project(X), drop.project(X))
    with pytest.raises(ValueError):
        RepresentationNetwork(6, seed=1, dropout_rate=1.0)


def test_dif_fit_and_score():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.standard_normal((300, 5)), [[12.0] * 5]])
    model = DeepIsolationForest(n_networks=8, random_state=0).fit(X)
    assert model.n_trees_total == 48
    assert len(model.networks_) == 8
    assert all(len(trees) == 6 for trees in model.forests_)
    scores = model.score_samples(X)
    assert scores.shape == (301,)
    assert np.all((scores > 0) & (scores < 1))
    assert scores[-1] > np.median(scores[:-1])


def test_single_network_single_tree_is_one_projected_tree():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((60, 4))
    model = DeepIsolationForest(n_networks=1, trees_per_network=1,
                                random_state=0).fit(X)
    assert model.n_trees_total == 1
    tree = model.forests_[0][0]
    Xu = model.networks_[0].project(X)
    np.testing.assert_array_equal(model.mean_path_lengths(X),
                                  tree.path_lengths(Xu))


def test_dif_deterministic_and_seed_sensitive():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((80, 4))
    a = DeepIsolationForest(n_networks=3, random_state=1).fit_predict_scores(X)
    b = DeepIsolationForest(n_networks=3, random_state=1).fit_predict_scores(X)
    np.testing.assert_array_equal(a, b)
    c = DeepIsolationForest(n_networks=3, random_state=2).fit_predict_scores(X)
    assert not np.array_equal(a, c)


def test_dif_fit_error_cases():
    with pytest.raises(EmptyData):
        DeepIsolationForest().fit(np.zeros((1, 3)))
    with pytest.raises(DegenerateData):
        DeepIsolationForest().fit(np.ones((40, 3)))
    model = DeepIsolationForest(n_networks=2, random_state=0)
    model.fit(np.random.default_rng(0).standard_normal((30, 3)))
    with pytest.raises(DimensionMismatch):
        model.score_samples(np.zeros((4, 5)))


def test_dif_serialization_regenerates_networks(tmp_path):
    rng = np.random.default_rng(6)
    X = rng.standard_normal((120, 5))
    model = DeepIsolationForest(n_networks=4, random_state=7).fit(X)
    path = tmp_path / "dif.json"
    save_dif(model, path)
    loaded = load_dif(path)
    # weights are not stored, only the seed; scores must still match exactly
    np.testing.assert_array_equal(loaded.score_samples(X), model.score_samples(X))
    doc = dif_to_dict(model)
    assert "weights" not in str(doc.keys())
    np.testing.assert_array_equal(dif_from_dict(doc).score_samples(X),
                                  model.score_samples(X))


def test_dif_from_dict_rejects_wrong_type():
    with pytest.raises(ValueError):
        dif_from_dict({"type": "isolation_forest"})


def test_dif_param_interface():
    model = DeepIsolationForest(n_networks=10, trees_per_network=4)
    params = model.get_params()
    assert params["n_networks"] == 10
    assert params["trees_per_network"] == 4
    assert params["subsample_size"] == 256
    clone_like = DeepIsolationForest(**params)
    assert clone_like.get_params() == params
