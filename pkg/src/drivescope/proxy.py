"""Rule-based proxy ground-truth labeling.

Rules are conjunctions of atomic conditions over the raw (pre-standardization)
window feature values; a window is a proxy anomaly iff at least one rule
matches. Rules load from / save to a declarative JSON list so threshold
experiments are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnknownFeature
from .features import FeatureMatrix

OPS = (">", "<", "=", "in-category")


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str  # ">", "<", "=", "in-category"
    value: object  # threshold, category, or list of categories

    def matches(self, raw: dict) -> bool:
        v = raw[self.feature]
        if self.op == ">":
            return v > self.value
        if self.op == "<":
            return v < self.value
        if self.op == "=":
            return v == self.value
        if self.op == "in-category":
            return v in self.value
        raise ValueError(f"unknown comparator {self.op!r}")


@dataclass(frozen=True)
class ProxyRule:
    name: str
    all_of: tuple[Condition, ...]

    def __post_init__(self):
        if not self.all_of:
            raise ValueError(f"rule {self.name!r} has an empty conjunction")

    def matches(self, raw: dict) -> bool:
        return all(c.matches(raw) for c in self.all_of)


@dataclass(frozen=True)
class ProxyRuleSet:
    rules: tuple[ProxyRule, ...]

    def __post_init__(self):
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError("rule names must be unique")

    def to_json(self) -> str:
        return json.dumps(
            [
                {
                    "name": r.name,
                    "all_of": [
                        {"feature": c.feature, "op": c.op, "value": c.value}
                        for c in r.all_of
                    ],
                }
                for r in self.rules
            ],
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ProxyRuleSet":
        return cls(rules=tuple(
            ProxyRule(
                name=d["name"],
                all_of=tuple(
                    Condition(c["feature"], c["op"],
                              tuple(c["value"]) if isinstance(c["value"], list)
                              else c["value"])
                    for c in d["all_of"]
                ),
            )
            for d in json.loads(text)
        ))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "ProxyRuleSet":
        return cls.from_json(Path(path).read_text())


@dataclass
class ProxyLabeling:
    flags: np.ndarray              # boolean, aligned with matrix rows
    matched_rules: list[list[str]]  # per row, names of matching rules

    @property
    def n_flagged(self) -> int:
        return int(self.flags.sum())


def apply_rules(ruleset: ProxyRuleSet, matrix: FeatureMatrix) -> ProxyLabeling:
    """Evaluate every rule against every row's raw feature values."""
    if matrix.raw:
        known = set(matrix.raw[0])
        for rule in ruleset.rules:
            for cond in rule.all_of:
                if cond.feature not in known:
                    raise UnknownFeature(rule.name, cond.feature)
    flags = np.zeros(matrix.n_rows, dtype=bool)
    matched = []
    for i, raw in enumerate(matrix.raw):
        names = [r.name for r in ruleset.rules if r.matches(raw)]
        matched.append(names)
        flags[i] = bool(names)
    return ProxyLabeling(flags=flags, matched_rules=matched)


# Default thresholds: "extremely high" relative speed range and "high"
# collision riskiness, calibrated so the synthetic benchmark flags ~2% of
# windows.
RSR_EXTREME = 0.6
RSR_HIGH = 0.4
RISKINESS_HIGH = 0.8

BAD_LANE = ("Bad", "Worst")


def default_ruleset(rsr_extreme: float = RSR_EXTREME, rsr_high: float = RSR_HIGH,
                    riskiness_high: float = RISKINESS_HIGH) -> ProxyRuleSet:
    """The three built-in rule families: extreme speed variations, unusual
    signal combinations, and risky events."""
    return ProxyRuleSet(rules=(
        ProxyRule("extreme-speed-variation", (
            Condition("relative_speed_range", ">", rsr_extreme),
        )),
        ProxyRule("severe-rain-on-dry-road", (
            Condition("rain", "=", "Severe"),
            Condition("road_type", "=", "Dry"),
        )),
        ProxyRule("severe-rain-with-severe-sunray", (
            Condition("rain", "=", "Severe"),
            Condition("sunray", "=", "Severe"),
        )),
        ProxyRule("severe-sunray-with-blur", (
            Condition("sunray", "=", "Severe"),
            Condition("blur", "=", "Severe"),
        )),
        ProxyRule("bad-lane-keeping-under-severe-rain", (
            Condition("lane_keeping_quality", "in-category", BAD_LANE),
            Condition("rain", "=", "Severe"),
        )),
        ProxyRule("bad-lane-keeping-with-high-speed-range", (
            Condition("lane_keeping_quality", "in-category", BAD_LANE),
            Condition("relative_speed_range", ">", rsr_high),
        )),
        ProxyRule("high-speed-range-on-slippery-road", (
            Condition("relative_speed_range", ">", rsr_high),
            Condition("road_type", "in-category", ("Wet", "Snow-covered")),
        )),
        ProxyRule("high-collision-riskiness", (
            Condition("ttc_riskiness", ">", riskiness_high),
        )),
    ))


RULE_FAMILIES = {
    "extreme-speed-variation": "extreme-speed",
    "severe-rain-on-dry-road": "unusual-combination",
    "severe-rain-with-severe-sunray": "unusual-combination",
    "severe-sunray-with-blur": "unusual-combination",
    "bad-lane-keeping-under-severe-rain": "risky-event",
    "bad-lane-keeping-with-high-speed-range": "risky-event",
    "high-speed-range-on-slippery-road": "risky-event",
    "high-collision-riskiness": "risky-event",
}


def save_labeling(labeling: ProxyLabeling, matrix: FeatureMatrix, path) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measurement_id", "window_start", "label", "matched_rules"])
        for (mid, start), flag, names in zip(matrix.window_refs, labeling.flags,
                                             labeling.matched_rules):
            writer.writerow([mid, repr(start),
                             "proxy-anomaly" if flag else "normal",
                             ";".join(names)])


def load_labeling(path) -> ProxyLabeling:
    import csv
    flags, matched = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            flags.append(row[2] == "proxy-anomaly")
            matched.append(row[3].split(";") if row[3] else [])
    return ProxyLabeling(flags=np.array(flags, dtype=bool), matched_rules=matched)
