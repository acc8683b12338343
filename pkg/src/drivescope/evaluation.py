"""Evaluation harness: score distributions, top-K overlap, ROC-AUC, exports.

Both detectors are evaluated from one ScoreReport so all comparisons share
identical windows and labels. Every top-k selection breaks score ties by
window_ref (measurement id, window start) for determinism.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    EmptyNormalSet,
    EmptyProxySet,
    LengthMismatch,
    SingleClass,
    TooFewWindows,
)

DETECTORS = ("dif", "if")


@dataclass
class ScoreReport:
    window_refs: list[tuple[str, float]]
    score_dif: np.ndarray
    score_if: np.ndarray
    proxy_flags: np.ndarray | None = None      # boolean, aligned
    injection_flags: np.ndarray | None = None  # boolean, aligned

    def __post_init__(self):
        n = len(self.window_refs)
        for name in ("score_dif", "score_if", "proxy_flags", "injection_flags"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise LengthMismatch(f"{name} has length {len(v)}, expected {n}")

    @property
    def n_windows(self) -> int:
        return len(self.window_refs)

    def scores(self, detector: str) -> np.ndarray:
        if detector == "dif":
            return self.score_dif
        if detector == "if":
            return self.score_if
        raise ValueError(f"unknown detector {detector!r}")


def save_report(report: ScoreReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measurement_id", "window_start", "score_dif", "score_if",
                         "proxy_label", "injection_label"])
        for i, (mid, start) in enumerate(report.window_refs):
            proxy = ("" if report.proxy_flags is None
                     else ("proxy-anomaly" if report.proxy_flags[i] else "normal"))
            inj = ("" if report.injection_flags is None
                   else ("injected" if report.injection_flags[i] else "clean"))
            writer.writerow([mid, repr(start), repr(float(report.score_dif[i])),
                             repr(float(report.score_if[i])), proxy, inj])


def load_report(path) -> ScoreReport:
    refs, s_dif, s_if, proxy, inj = [], [], [], [], []
    have_proxy = have_inj = False
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            refs.append((row[0], float(row[1])))
            s_dif.append(float(row[2]))
            s_if.append(float(row[3]))
            if row[4]:
                have_proxy = True
            proxy.append(row[4] == "proxy-anomaly")
            if row[5]:
                have_inj = True
            inj.append(row[5] == "injected")
    return ScoreReport(
        window_refs=refs,
        score_dif=np.array(s_dif),
        score_if=np.array(s_if),
        proxy_flags=np.array(proxy, dtype=bool) if have_proxy else None,
        injection_flags=np.array(inj, dtype=bool) if have_inj else None,
    )


@dataclass
class DistributionSummary:
    detector: str
    proxy_scores: np.ndarray
    normal_scores: np.ndarray
    bin_edges: np.ndarray
    proxy_counts: np.ndarray
    normal_counts: np.ndarray

    @property
    def proxy_mean(self) -> float:
        return float(self.proxy_scores.mean())

    @property
    def normal_mean(self) -> float:
        return float(self.normal_scores.mean())

    @property
    def proxy_median(self) -> float:
        return float(np.median(self.proxy_scores))

    @property
    def normal_median(self) -> float:
        return float(np.median(self.normal_scores))


def distribution_comparison(report: ScoreReport, detector: str, sample_seed: int,
                            n_bins: int = 30) -> DistributionSummary:
    """Proxy-set scores against an equal-size random sample of non-proxy scores."""
    if report.proxy_flags is None or not report.proxy_flags.any():
        raise EmptyProxySet("no proxy-labeled windows in the report")
    scores = report.scores(detector)
    proxy_idx = np.nonzero(report.proxy_flags)[0]
    normal_idx = np.nonzero(~report.proxy_flags)[0]
    if normal_idx.size < proxy_idx.size:
        raise EmptyNormalSet(
            f"cannot sample {proxy_idx.size} normal windows from {normal_idx.size}"
        )
    rng = np.random.default_rng(sample_seed)
    sampled = rng.choice(normal_idx, size=proxy_idx.size, replace=False)
    proxy_scores = scores[proxy_idx]
    normal_scores = scores[sampled]
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return DistributionSummary(
        detector=detector,
        proxy_scores=proxy_scores,
        normal_scores=normal_scores,
        bin_edges=edges,
        proxy_counts=np.histogram(proxy_scores, bins=edges)[0],
        normal_counts=np.histogram(normal_scores, bins=edges)[0],
    )


def save_histogram_csv(summary: DistributionSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count_proxy", "count_normal"])
        for left, right, cp, cn in zip(summary.bin_edges[:-1], summary.bin_edges[1:],
                                       summary.proxy_counts, summary.normal_counts):
            writer.writerow([repr(float(left)), repr(float(right)), int(cp), int(cn)])


def top_k_indices(scores: np.ndarray, window_refs, k: int) -> np.ndarray:
    """Indices of the k highest scores; ties broken by window_ref order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], window_refs[i]))
    return np.array(order[:k], dtype=int)


@dataclass
class OverlapTable:
    k: int
    rows: dict[str, tuple[int, int]]  # label -> (in_normal, in_proxy)

    def render(self) -> str:
        lines = [f"{'Events':<22}{'Normal set':>12}{'Proxy set':>12}"]
        for label, (normal, proxy) in self.rows.items():
            lines.append(f"{label:<22}{normal:>12}{proxy:>12}")
        return "\n".join(lines)


def top_k_overlap(report: ScoreReport, k: int = 100, seed: int = 0) -> OverlapTable:
    """Top-k proxy overlap for each detector plus a random-k baseline."""
    if report.proxy_flags is None:
        raise EmptyProxySet("report has no proxy labels")
    n = report.n_windows
    if n < k:
        raise TooFewWindows(f"need at least k={k} windows, got {n}")
    rows = {}
    for detector, label in (("dif", "Top %d of DIF"), ("if", "Top %d of IF")):
        idx = top_k_indices(report.scores(detector), report.window_refs, k)
        in_proxy = int(report.proxy_flags[idx].sum())
        rows[label % k] = (k - in_proxy, in_proxy)
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=False)
    in_proxy = int(report.proxy_flags[idx].sum())
    rows[f"Random {k}"] = (k - in_proxy, in_proxy)
    return OverlapTable(k=k, rows=rows)


def save_overlap_csv(table: OverlapTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["events", "normal_set", "proxy_set"])
        for label, (normal, proxy) in table.rows.items():
            writer.writerow([label, normal, proxy])


def roc_auc(scores, truth) -> float:
    """Rank-based (Mann-Whitney) AUC; ties contribute 0.5."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if len(scores) != len(truth):
        raise LengthMismatch(f"{len(scores)} scores vs {len(truth)} labels")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("both classes must be present")
    ranks = rankdata(scores)
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def export_top_windows(report: ScoreReport, matrix, labeling, k: int, path,
                       window_seconds: float = 6.0) -> None:
    """CSV of the k highest-DIF-scoring windows with raw feature values,
    matched proxy rules and the source time span, for human inspection."""
    if report.n_windows < k:
        raise TooFewWindows(f"need at least k={k} windows, got {report.n_windows}")
    raw_names = list(matrix.raw[0]) if matrix.raw else []
    idx = top_k_indices(report.score_dif, report.window_refs, k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "measurement_id", "window_start", "window_end",
                         "score_dif", "score_if", "matched_rules"] + raw_names)
        for rank, i in enumerate(idx, start=1):
            mid, start = report.window_refs[i]
            rules = ";".join(labeling.matched_rules[i]) if labeling is not None else ""
            row = [rank, mid, repr(start), repr(start + window_seconds),
                   repr(float(report.score_dif[i])), repr(float(report.score_if[i])),
                   rules]
            for name in raw_names:
                v = matrix.raw[i][name]
                row.append(repr(v) if isinstance(v, float) else str(v))
            writer.writerow(row)
