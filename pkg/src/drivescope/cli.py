"""Command-line pipeline: generate -> ingest -> featurize -> label -> detect
-> eval -> embed.

Configuration comes from one TOML or JSON file; ``--seed`` and ``--out``
flags override it. A single top-level seed fans out to every stage, so a rerun
with identical config produces byte-identical outputs. Exit codes: 0 ok,
2 config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import evaluation, features, ingest, proxy, synthetic, tsne
from .dif import DeepIsolationForest, save_dif
from .errors import ConfigError, DataError, MissingInput
from .iforest import IsolationForest, save_forest, threshold_by_contamination

log = logging.getLogger("drivescope")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class RunConfig:
    """Validated view over the raw config document with defaults applied."""

    def __init__(self, doc: dict, seed_override=None, out_override=None):
        self.doc = doc
        seed = seed_override if seed_override is not None else doc.get("seed")
        if seed is None:
            raise ConfigError("a seed is required (config key 'seed' or --seed)")
        self.seed = int(seed)
        out = out_override if out_override is not None else doc.get("output_dir")
        if out is None:
            raise ConfigError("an output directory is required "
                              "(config key 'output_dir' or --out)")
        self.output_dir = Path(out)
        self.threads = int(doc.get("threads", 1))

    def section(self, name: str) -> dict:
        return self.doc.get(name, {})

    # stage paths
    @property
    def data_dir(self) -> Path:
        return self.output_dir / "data"

    @property
    def features_csv(self) -> Path:
        return self.output_dir / "features.csv"

    @property
    def feature_schema_json(self) -> Path:
        return self.output_dir / "feature_schema.json"

    @property
    def labels_csv(self) -> Path:
        return self.output_dir / "labels.csv"

    @property
    def report_csv(self) -> Path:
        return self.output_dir / "report.csv"

    def scenario_config(self) -> synthetic.ScenarioConfig:
        g = self.section("generator")
        injections = synthetic.default_injections(rate=g.get("injection_rate", 0.009))
        if "injections" in g:
            injections = [synthetic.InjectionSpec(d["kind"], d["rate"],
                                                  d.get("parameters", {}))
                          for d in g["injections"]]
        return synthetic.ScenarioConfig(
            n_measurements=int(g.get("n_measurements", 90)),
            duration_seconds=float(g.get("duration_seconds", 340.0)),
            rate_hz=float(g.get("rate_hz", 10.0)),
            seed=self.seed,
            injections=injections,
        )

    def window_spec(self) -> features.WindowSpec:
        w = self.section("window")
        return features.WindowSpec(
            window_seconds=float(w.get("window_seconds", 6.0)),
            step_seconds=float(w.get("step_seconds", 3.0)),
        )

    def tsne_config(self) -> tsne.TsneConfig:
        t = self.section("tsne")
        return tsne.TsneConfig(
            perplexity=float(t.get("perplexity", 30.0)),
            n_iterations=int(t.get("n_iterations", 1000)),
            learning_rate=float(t.get("learning_rate", 200.0)),
            early_exaggeration_factor=float(t.get("early_exaggeration_factor", 12.0)),
            seed=self.seed,
        )


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    raise ConfigError(f"unsupported config format: {path.suffix!r} (use .toml or .json)")


def _load_measurements(config: RunConfig):
    schema_path = config.data_dir / "schema.json"
    meas_dir = config.data_dir / "measurements"
    if not schema_path.exists() or not meas_dir.is_dir():
        raise MissingInput(f"no dataset under {config.data_dir}; run 'generate' "
                           "or place measurements + schema.json there")
    schema = ingest.SignalSchema.load(schema_path)
    return [ingest.load_measurement(p, schema)
            for p in sorted(meas_dir.glob("*.csv")) + sorted(meas_dir.glob("*.jsonl"))]


def cmd_generate(config: RunConfig) -> None:
    scenario = config.scenario_config()
    measurements, records = synthetic.generate_measurements(scenario)
    synthetic.save_dataset(measurements, records, config.data_dir)
    log.info("wrote %d measurements and %d injections to %s",
             len(measurements), len(records), config.data_dir)


def cmd_ingest(config: RunConfig) -> None:
    measurements = _load_measurements(config)
    n_frames = sum(len(m.frames) for m in measurements)
    log.info("validated %d measurements (%d frames)", len(measurements), n_frames)


def cmd_featurize(config: RunConfig) -> None:
    measurements = _load_measurements(config)
    f = config.section("features")
    matrix = features.build_feature_matrix(
        measurements,
        config.window_spec(),
        sample_seed=config.seed,
        sample_fraction=float(f.get("sample_fraction", 1.0)),
    )
    features.save_feature_matrix(matrix, config.features_csv, config.feature_schema_json)
    log.info("wrote %d feature rows to %s", matrix.n_rows, config.features_csv)


def _require(path: Path, hint: str) -> None:
    if not path.exists():
        raise MissingInput(f"{path} not found; run '{hint}' first")


def _load_ruleset(config: RunConfig) -> proxy.ProxyRuleSet:
    p = config.section("proxy")
    if "rules_path" in p:
        return proxy.ProxyRuleSet.load(p["rules_path"])
    return proxy.default_ruleset()


def cmd_label(config: RunConfig) -> None:
    _require(config.features_csv, "featurize")
    matrix = features.load_feature_matrix(config.features_csv, config.feature_schema_json)
    ruleset = _load_ruleset(config)
    ruleset.save(config.output_dir / "rules.json")
    labeling = proxy.apply_rules(ruleset, matrix)
    proxy.save_labeling(labeling, matrix, config.labels_csv)
    log.info("flagged %d of %d windows (%.2f%%)", labeling.n_flagged, matrix.n_rows,
             100.0 * labeling.n_flagged / matrix.n_rows)


def _injection_flags(matrix, records, window_seconds: float) -> np.ndarray:
    spans = {}
    for r in records:
        spans.setdefault(r.measurement_id, []).append((r.start, r.end))
    flags = np.zeros(matrix.n_rows, dtype=bool)
    for i, (mid, start) in enumerate(matrix.window_refs):
        end = start + window_seconds
        flags[i] = any(start < s_end and end > s_start
                       for s_start, s_end in spans.get(mid, ()))
    return flags


def cmd_detect(config: RunConfig) -> None:
    _require(config.features_csv, "featurize")
    matrix = features.load_feature_matrix(config.features_csv, config.feature_schema_json)
    d = config.section("detector")
    X = matrix.values

    dif_model = DeepIsolationForest(
        n_networks=int(d.get("n_networks", 50)),
        trees_per_network=int(d.get("trees_per_network", 6)),
        subsample_size=int(d.get("subsample_size", 256)),
        random_state=config.seed,
    ).fit(X)
    score_dif = dif_model.score_samples(X)
    if_model = IsolationForest(
        n_trees=int(d.get("n_trees_if", 300)),
        subsample_size=int(d.get("subsample_size", 256)),
        random_state=config.seed,
    ).fit(X)
    score_if = if_model.score_samples(X)

    proxy_flags = None
    if config.labels_csv.exists():
        proxy_flags = proxy.load_labeling(config.labels_csv).flags
    injection_flags = None
    injections_csv = config.data_dir / "injections.csv"
    if injections_csv.exists():
        records = synthetic.load_injections(injections_csv)
        injection_flags = _injection_flags(matrix, records,
                                           config.window_spec().window_seconds)

    report = evaluation.ScoreReport(
        window_refs=matrix.window_refs,
        score_dif=score_dif,
        score_if=score_if,
        proxy_flags=proxy_flags,
        injection_flags=injection_flags,
    )
    evaluation.save_report(report, config.report_csv)
    save_dif(dif_model, config.output_dir / "model_dif.json")
    save_forest(if_model, config.output_dir / "model_if.json")
    log.info("scored %d windows -> %s", report.n_windows, config.report_csv)


def cmd_eval(config: RunConfig) -> None:
    _require(config.report_csv, "detect")
    report = evaluation.load_report(config.report_csv)
    e = config.section("eval")
    k = int(e.get("top_k", 100))

    table = evaluation.top_k_overlap(report, k=k, seed=config.seed)
    evaluation.save_overlap_csv(table, config.output_dir / "overlap.csv")
    (config.output_dir / "overlap.txt").write_text(table.render() + "\n")

    summary = {"top_k": k, "overlap": {label: {"normal": r[0], "proxy": r[1]}
                                       for label, r in table.rows.items()}}
    for detector in evaluation.DETECTORS:
        dist = evaluation.distribution_comparison(report, detector, config.seed)
        evaluation.save_histogram_csv(
            dist, config.output_dir / f"histogram_{detector}.csv")
        summary[detector] = {
            "proxy_mean": dist.proxy_mean,
            "normal_mean": dist.normal_mean,
            "proxy_median": dist.proxy_median,
            "normal_median": dist.normal_median,
            "auc_vs_proxy": evaluation.roc_auc(report.scores(detector),
                                               report.proxy_flags),
        }
        if report.injection_flags is not None and report.injection_flags.any():
            summary[detector]["auc_vs_injections"] = evaluation.roc_auc(
                report.scores(detector), report.injection_flags)

    matrix = labeling = None
    if config.features_csv.exists():
        matrix = features.load_feature_matrix(config.features_csv,
                                              config.feature_schema_json)
        if config.labels_csv.exists():
            labeling = proxy.load_labeling(config.labels_csv)
        evaluation.export_top_windows(report, matrix, labeling, k,
                                      config.output_dir / "top_windows.csv",
                                      config.window_spec().window_seconds)

    (config.output_dir / "eval_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("evaluation artifacts written to %s", config.output_dir)
    print(table.render())


def cmd_embed(config: RunConfig) -> None:
    _require(config.features_csv, "featurize")
    matrix = features.load_feature_matrix(config.features_csv, config.feature_schema_json)
    t = config.section("tsne")
    max_points = int(t.get("max_points", 1000))
    idx = np.arange(matrix.n_rows)
    if matrix.n_rows > max_points:
        idx = np.sort(np.random.default_rng(config.seed).choice(
            matrix.n_rows, size=max_points, replace=False))
    X = matrix.values[idx]
    refs = [matrix.window_refs[i] for i in idx]

    flags = np.zeros(len(idx), dtype=bool)
    if config.report_csv.exists():
        report = evaluation.load_report(config.report_csv)
        contamination = float(config.section("detector").get("contamination", 0.02))
        _, all_flags = threshold_by_contamination(report.score_dif, contamination)
        flags = all_flags[idx]

    embedding = tsne.embed(X, config.tsne_config())
    tsne.export_embedding(embedding, flags, refs, config.output_dir / "embedding.csv")
    tsne.save_run_report(embedding, config.tsne_config(),
                         config.output_dir / "tsne_report.json")
    log.info("embedded %d rows (final KL %.4f)", len(idx), embedding.final_kl)


COMMANDS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "label": cmd_label,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "embed": cmd_embed,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivescope",
        description="Unsupervised detection of rare driving scenarios.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (currently informational)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig(load_config(args.config), seed_override=args.seed,
                           out_override=args.out)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config)
    except ConfigError as err:
        log.error("config error: %s", err)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as err:
        log.error("data error: %s", err)
        return EXIT_DATA
    except Exception:  # pragma: no cover
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
