"""Exact (O(n^2)) t-SNE with perplexity binary search.

Kept exact rather than Barnes-Hut so the gradient can be checked against
finite differences and affinities against a direct entropy recomputation.
Defaults are the canonical published settings: perplexity 30, 1000 iterations,
learning rate 200, early exaggeration 12 for the first 250 iterations,
momentum 0.5 then 0.8.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DivergenceDetected,
    LengthMismatch,
    NonFiniteDistance,
    TooFewPoints,
)

_MIN_PROB = 1e-12


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    n_iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration_factor: float = 12.0
    exaggeration_iterations: int = 250
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iteration: int = 250
    seed: int = 0


@dataclass
class Embedding:
    coords: np.ndarray       # n x 2, aligned with input rows
    final_kl: float
    kl_history: list[float] = field(default_factory=list)


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D2, 0.0)
    return np.maximum(D2, 0.0)


def _conditional_row(d2_row: np.ndarray, beta: float):
    """Conditional probabilities and Shannon entropy (nats) for one bandwidth."""
    p = np.exp(-d2_row * beta)
    sum_p = p.sum()
    if sum_p <= 0.0:
        return np.zeros_like(p), 0.0
    entropy = math.log(sum_p) + beta * float((d2_row * p).sum()) / sum_p
    return p / sum_p, entropy


def pairwise_affinities(X, perplexity: float = 30.0, tol: float = 1e-5,
                        max_iter: int = 200) -> np.ndarray:
    """Symmetrized joint probabilities P with per-point bandwidths found by
    binary search so each conditional distribution hits the target perplexity."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 3 * perplexity + 1:
        raise TooFewPoints(f"need at least {math.ceil(3 * perplexity + 1)} rows "
                           f"for perplexity {perplexity}, got {n}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteDistance("input rows contain non-finite values")
    D2 = _squared_distances(X)
    if not np.all(np.isfinite(D2)):
        raise NonFiniteDistance("pairwise distances contain non-finite values")
    target = math.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d2 = np.delete(D2[i], i)
        beta, beta_lo, beta_hi = 1.0, 0.0, math.inf
        p, entropy = _conditional_row(d2, beta)
        for _ in range(max_iter):
            if abs(entropy - target) < tol:
                break
            if entropy > target:
                beta_lo = beta
                beta = beta * 2.0 if beta_hi == math.inf else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = (beta + beta_lo) / 2.0
            p, entropy = _conditional_row(d2, beta)
        P[i, np.arange(n) != i] = p
    P = (P + P.T) / (2.0 * n)
    return P


def _low_dim_kernel(Y: np.ndarray):
    """Student-t numerators and normalized Q for the current embedding."""
    num = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    return num, np.maximum(Q, _MIN_PROB)


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    _, Q = _low_dim_kernel(Y)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Analytic gradient of KL(P || Q) with respect to the embedding coords."""
    num, Q = _low_dim_kernel(Y)
    W = (P - Q) * num
    return 4.0 * (np.diag(W.sum(axis=1)) @ Y - W @ Y)


def embed(X, config: TsneConfig = TsneConfig()) -> Embedding:
    """Momentum gradient descent on KL(P || Q) with early exaggeration.

    Coordinates are mean-centered every iteration; the recorded KL history is
    always measured against the un-exaggerated P.
    """
    P = pairwise_affinities(X, config.perplexity)
    n = P.shape[0]
    rng = np.random.default_rng(config.seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_history = []
    for it in range(config.n_iterations):
        P_eff = (P * config.early_exaggeration_factor
                 if it < config.exaggeration_iterations else P)
        grad = kl_gradient(P_eff, Y)
        momentum = (config.initial_momentum
                    if it < config.momentum_switch_iteration
                    else config.final_momentum)
        # adaptive per-coordinate gains as in the reference implementation
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - config.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        kl = kl_divergence(P, Y)
        if not math.isfinite(kl):
            raise DivergenceDetected(f"KL became non-finite at iteration {it}")
        kl_history.append(kl)
    return Embedding(coords=Y, final_kl=kl_history[-1], kl_history=kl_history)


def export_embedding(embedding: Embedding, flags, window_refs, path) -> None:
    """CSV of (x, y, flag, window_ref) for external plotting."""
    flags = np.asarray(flags, dtype=bool)
    n = embedding.coords.shape[0]
    if len(flags) != n or len(window_refs) != n:
        raise LengthMismatch(
            f"coords ({n}), flags ({len(flags)}) and refs ({len(window_refs)}) disagree"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "flag", "measurement_id", "window_start"])
        for (x, y), flag, (mid, start) in zip(embedding.coords, flags, window_refs):
            writer.writerow([repr(float(x)), repr(float(y)), int(flag), mid, repr(start)])


def save_run_report(embedding: Embedding, config: TsneConfig, path) -> None:
    Path(path).write_text(json.dumps({
        "config": {
            "perplexity": config.perplexity,
            "n_iterations": config.n_iterations,
            "learning_rate": config.learning_rate,
            "early_exaggeration_factor": config.early_exaggeration_factor,
            "exaggeration_iterations": config.exaggeration_iterations,
            "seed": config.seed,
        },
        "final_kl": embedding.final_kl,
        "iterations_run": len(embedding.kl_history),
    }, indent=2) + "\n")
