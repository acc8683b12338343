"""Deep isolation forest: frozen random MLP projections + isolation trees.

Each of the n networks maps the input table into a 20-dimensional space; t
axis-parallel isolation trees are fitted per projected space and path lengths
are pooled over all T = n*t trees before normalization. The networks are
never trained: weights are drawn N(0, 1) once from the seed and stay fixed,
so a model can be serialized as architecture + seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateData, DimensionMismatch, EmptyData
from .iforest import IsolationTree, TreeNode, scores_from_path_lengths


class RepresentationNetwork:
    """Randomly initialized MLP with tanh hidden layers and an affine output.

    All weights and biases are N(0, 1) i.i.d. from the seed. Dropout, when
    enabled, is a fixed seed-derived unit mask applied identically at every
    call so projection stays deterministic. Skip connections add the layer
    input back (via a seed-derived random linear map when dimensions differ).
    """

    def __init__(self, input_dim: int, seed, hidden_dims=(500, 100),
                 output_dim: int = 20, skip_connections: bool = False,
                 dropout_rate: float = 0.0):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        self.input_dim = input_dim
        self.hidden_dims = tuple(hidden_dims)
        self.output_dim = output_dim
        self.skip_connections = skip_connections
        self.dropout_rate = dropout_rate
        self.seed = seed

        rng = np.random.default_rng(seed)
        dims = [input_dim, *self.hidden_dims, output_dim]
        self.weights = []
        self.biases = []
        for din, dout in zip(dims[:-1], dims[1:]):
            self.weights.append(rng.standard_normal((din, dout)))
            self.biases.append(rng.standard_normal(dout))
        self._skip_maps = []
        if skip_connections:
            for din, dout in zip(dims[:-2], dims[1:-1]):
                self._skip_maps.append(
                    None if din == dout else rng.standard_normal((din, dout))
                )
        self._dropout_masks = []
        if dropout_rate > 0.0:
            keep = 1.0 - dropout_rate
            for dout in dims[1:-1]:
                mask = (rng.random(dout) < keep).astype(float) / keep
                self._dropout_masks.append(mask)

    def _forward(self, X: np.ndarray) -> np.ndarray:
        h = X
        for i in range(len(self.hidden_dims)):
            z = h @ self.weights[i] + self.biases[i]
            a = np.tanh(z)
            if self.skip_connections:
                skip = self._skip_maps[i]
                a = a + (h if skip is None else h @ skip)
            if self._dropout_masks:
                a = a * self._dropout_masks[i]
            h = a
        return h @ self.weights[-1] + self.biases[-1]

    def project(self, X, batch_size: int = 64) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"expected {self.input_dim} input features, got {X.shape[1]}"
            )
        if X.shape[0] == 0:
            return np.zeros((0, self.output_dim))
        chunks = [self._forward(X[i:i + batch_size])
                  for i in range(0, X.shape[0], batch_size)]
        return np.vstack(chunks)


class DeepIsolationForest(BaseEstimator):
    """n random representations x t isolation trees each, scores pooled.

    Defaults follow the reference configuration: 50 representations, 6 trees
    per representation (300 trees total), subsample 256, MLP 500-100-20 with
    tanh, batch size 64.
    """

    def __init__(self, n_networks: int = 50, trees_per_network: int = 6,
                 subsample_size: int = 256, random_state: int = 0,
                 batch_size: int = 64, hidden_dims=(500, 100),
                 output_dim: int = 20, skip_connections: bool = False,
                 dropout_rate: float = 0.0):
        self.n_networks = n_networks
        self.trees_per_network = trees_per_network
        self.subsample_size = subsample_size
        self.random_state = random_state
        self.batch_size = batch_size
        self.hidden_dims = hidden_dims
        self.output_dim = output_dim
        self.skip_connections = skip_connections
        self.dropout_rate = dropout_rate

    @property
    def n_trees_total(self) -> int:
        return self.n_networks * self.trees_per_network

    def _make_network(self, u: int, input_dim: int) -> RepresentationNetwork:
        return RepresentationNetwork(
            input_dim=input_dim,
            seed=[self.random_state, 1, u],
            hidden_dims=self.hidden_dims,
            output_dim=self.output_dim,
            skip_connections=self.skip_connections,
            dropout_rate=self.dropout_rate,
        )

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("expected a 2-D feature matrix")
        n = X.shape[0]
        if n < 2:
            raise EmptyData(f"need at least 2 rows, got {n}")
        if bool(np.all(X == X[0])):
            raise DegenerateData("all rows identical; no valid split exists")
        self.n_features_in_ = X.shape[1]
        self.psi_effective_ = min(self.subsample_size, n)
        self.networks_ = [self._make_network(u, X.shape[1])
                          for u in range(self.n_networks)]
        self.forests_ = []
        for u, net in enumerate(self.networks_):
            Xu = net.project(X, self.batch_size)
            trees = []
            for j in range(self.trees_per_network):
                rng = np.random.default_rng([self.random_state, 2, u, j])
                idx = rng.choice(n, size=self.psi_effective_, replace=False)
                trees.append(IsolationTree.fit(Xu[idx], rng))
            self.forests_.append(trees)
        return self

    def mean_path_lengths(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        if X.shape[0] == 0:
            return np.zeros(0)
        total = np.zeros(X.shape[0])
        for net, trees in zip(self.networks_, self.forests_):
            Xu = net.project(X, self.batch_size)
            for tree in trees:
                total += tree.path_lengths(Xu)
        return total / self.n_trees_total

    def score_samples(self, X) -> np.ndarray:
        """Anomaly scores in (0, 1) from the pooled mean path length."""
        return scores_from_path_lengths(self.mean_path_lengths(X), self.psi_effective_)

    def fit_predict_scores(self, X) -> np.ndarray:
        return self.fit(X).score_samples(X)


# --- serialization: networks stored as seed + architecture ---

def dif_to_dict(model: DeepIsolationForest) -> dict:
    return {
        "format_version": 1,
        "type": "deep_isolation_forest",
        "n_networks": model.n_networks,
        "trees_per_network": model.trees_per_network,
        "subsample_size": model.subsample_size,
        "random_state": model.random_state,
        "batch_size": model.batch_size,
        "hidden_dims": list(model.hidden_dims),
        "output_dim": model.output_dim,
        "skip_connections": model.skip_connections,
        "dropout_rate": model.dropout_rate,
        "psi_effective": model.psi_effective_,
        "n_features": model.n_features_in_,
        "forests": [
            [{"height_limit": t.height_limit, "sample_size": t.sample_size,
              "root": t.root.to_dict()} for t in trees]
            for trees in model.forests_
        ],
    }


def dif_from_dict(doc: dict) -> DeepIsolationForest:
    if doc.get("type") != "deep_isolation_forest":
        raise ValueError(f"not a deep isolation forest document: {doc.get('type')!r}")
    model = DeepIsolationForest(
        n_networks=doc["n_networks"],
        trees_per_network=doc["trees_per_network"],
        subsample_size=doc["subsample_size"],
        random_state=doc["random_state"],
        batch_size=doc["batch_size"],
        hidden_dims=tuple(doc["hidden_dims"]),
        output_dim=doc["output_dim"],
        skip_connections=doc["skip_connections"],
        dropout_rate=doc["dropout_rate"],
    )
    model.psi_effective_ = doc["psi_effective"]
    model.n_features_in_ = doc["n_features"]
    model.networks_ = [model._make_network(u, doc["n_features"])
                       for u in range(model.n_networks)]
    model.forests_ = [
        [IsolationTree(root=TreeNode.from_dict(t["root"]),
                       height_limit=t["height_limit"],
                       sample_size=t["sample_size"])
         for t in trees]
        for trees in doc["forests"]
    ]
    return model


def save_dif(model: DeepIsolationForest, path) -> None:
    Path(path).write_text(json.dumps(dif_to_dict(model)) + "\n")


def load_dif(path) -> DeepIsolationForest:
    return dif_from_dict(json.loads(Path(path).read_text()))
