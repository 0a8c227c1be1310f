"""Command-line entry point: generate, run and summarize.

A run is driven by a plain-text YAML manifest so the whole experiment
(database, drugs, algorithm configurations, seed, output directory) is an
archival artifact; rerunning the same manifest and seed reproduces the
output tree byte for byte, independent of the worker count.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import synthgen
from .evaluation import (AdrDictionary, SignificanceResult, compare_algorithms,
                         emit_report, evaluate)
from .mutara import rank_hunt, rank_mutara
from .ranking import RankedSignalList
from .srs import rank_ror
from .store import Database, DataFormatError, StudyConfig, load_database
from .temporal_ic import rank_oe

log = logging.getLogger(__name__)

ALGORITHM_IDS = ("ror05", "oe1", "oe2", "mutara60", "mutara180",
                 "hunt60", "hunt180")


def _score(db: Database, algorithm_id: str,
           config: StudyConfig) -> RankedSignalList:
    if algorithm_id == "ror05":
        ranked = rank_ror(db, config)
    elif algorithm_id in ("oe1", "oe2"):
        ranked = rank_oe(db, config, variant=int(algorithm_id[-1]))
    elif algorithm_id.startswith("mutara"):
        ranked = rank_mutara(db, config)
    elif algorithm_id.startswith("hunt"):
        ranked = rank_hunt(db, config)
    else:
        raise ValueError(f"unknown algorithm id {algorithm_id!r}")
    ranked.algorithm = algorithm_id
    return ranked


def _base_config(algorithm_id: str, drug: str, seed: int,
                 overrides: dict) -> StudyConfig:
    kwargs = {"drug_code": drug, "rng_seed": seed}
    if algorithm_id.endswith("60"):
        kwargs["pre_window"] = 60
    elif algorithm_id.endswith("180"):
        kwargs["pre_window"] = 180
    kwargs.update(overrides or {})
    if "excluded_event_codes" in kwargs:
        kwargs["excluded_event_codes"] = frozenset(
            kwargs["excluded_event_codes"])
    return StudyConfig(**kwargs)


@dataclass
class RunManifest:
    database_dir: str
    drugs: list[str]
    algorithms: list[str]
    output_dir: str
    seed: int = 0
    ground_truth: str | None = None
    overrides: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
        manifest = cls(**raw)
        if len(set(manifest.algorithms)) != len(manifest.algorithms):
            raise ValueError("duplicate algorithm ids in manifest")
        bad = [a for a in manifest.algorithms if a not in ALGORITHM_IDS]
        if bad:
            raise ValueError(f"unknown algorithm ids {bad}; valid ids: "
                             f"{list(ALGORITHM_IDS)}")
        if not manifest.drugs:
            raise ValueError("manifest lists no drugs")
        return manifest

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_WORKER_DB: Database | None = None


def _load_db(database_dir) -> Database:
    data = Path(database_dir)
    return load_database(data / "prescriptions.csv", data / "events.csv",
                         data / "patients.csv")


def _init_worker(database_dir: str) -> None:
    # each worker loads its own copy, so no start-method assumptions
    global _WORKER_DB
    _WORKER_DB = _load_db(database_dir)


def _score_unit(args):
    drug, algorithm_id, seed, overrides = args
    config = _base_config(algorithm_id, drug, seed, overrides)
    return _score(_WORKER_DB, algorithm_id, config)


def run(manifest: RunManifest, jobs: int = 1) -> int:
    """Execute every (drug, algorithm) unit and write all artifacts."""
    global _WORKER_DB
    db = _load_db(manifest.database_dir)
    dictionary = None
    if manifest.ground_truth is not None:
        dictionary = AdrDictionary.from_csv(manifest.ground_truth)

    units = [(drug, algo, manifest.seed,
              manifest.overrides.get(algo, {}))
             for drug in manifest.drugs for algo in manifest.algorithms]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(str(manifest.database_dir),)) as pool:
            ranked_lists = list(pool.map(_score_unit, units))
    else:
        _WORKER_DB = db
        ranked_lists = [_score_unit(u) for u in units]
        _WORKER_DB = None

    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if dictionary is not None:
        reports = [evaluate(r, dictionary) for r in ranked_lists]
        emit_report(out, ranked_lists, dictionary, reports)
        if len(manifest.algorithms) >= 2 and len(manifest.drugs) >= 2:
            for metric in ("precision_10", "precision_50", "map_all"):
                result = compare_algorithms(reports, metric)
                _write_significance(out / f"significance_{metric}.csv",
                                    result)
    else:
        from .evaluation import truth_vector, write_ranked_csv, \
            ranked_csv_path
        for ranked in ranked_lists:
            write_ranked_csv(ranked_csv_path(out, ranked.drug_code,
                                             ranked.algorithm),
                             ranked, [0] * len(ranked.entries))

    resolved = manifest.to_dict()
    with open(out / "manifest_resolved.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True)
    return 0


def _write_significance(path, result: SignificanceResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "algorithm_a", "algorithm_b", "p_raw",
                         "p_adjusted", "significant", "degenerate"])
        for (a, b) in sorted(result.p_raw):
            writer.writerow([result.metric, a, b,
                             repr(result.p_raw[(a, b)]),
                             repr(result.p_adjusted[(a, b)]),
                             str(result.significant[(a, b)]).lower(),
                             str(result.degenerate[(a, b)]).lower()])


# -- summarize ------------------------------------------------------------

def summarize(output_dir) -> int:
    """Pivot the metric summary into per-drug tables and chart data files."""
    out = Path(output_dir)
    metrics_path = out / "metrics_summary.csv"
    if not metrics_path.exists():
        log.error("no metrics_summary.csv in %s", out)
        return 1
    with open(metrics_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    warnings = 0
    algorithms = sorted({r["algorithm"] for r in rows})
    drugs = sorted({r["drug_code"] for r in rows})

    for metric in ("precision_10", "precision_50"):
        values = {(r["algorithm"], r["drug_code"]):
                  (float(r[metric]) if r[metric] else None) for r in rows}
        path = out / f"table_{metric}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["drug"] + algorithms)
            for drug in drugs:
                line = [drug]
                for algo in algorithms:
                    v = values.get((algo, drug))
                    if v is None:
                        warnings += 1
                        line.append("")
                    else:
                        line.append(f"{v:.3f}")
                writer.writerow(line)
            means = []
            for algo in algorithms:
                col = [values[(algo, d)] for d in drugs
                       if values.get((algo, d)) is not None]
                means.append(f"{sum(col) / len(col):.3f}" if col else "")
            writer.writerow(["Mean (3dp)"] + means)

    for panel, column in (("all", "map_all"), ("rare", "map_rare"),
                          ("reaction_codes", "map_reaction_codes")):
        path = out / f"chart_map_{panel}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["panel", "drug", "algorithm", "map"])
            for r in sorted(rows, key=lambda r: (r["drug_code"],
                                                 r["algorithm"])):
                if not r[column]:
                    warnings += 1
                writer.writerow([panel, r["drug_code"], r["algorithm"],
                                 r[column]])
    if warnings:
        log.warning("summary has %d missing metric values", warnings)
    return 0


# -- generation -----------------------------------------------------------

def demo_synth_config(seed: int = 7) -> synthgen.SynthConfig:
    """Small bundled demo configuration (two drugs, mixed signal kinds)."""
    noise = {f"noise_{i:02d}": 0.25 for i in range(8)}
    rates = dict(noise)
    rates.update({"adr_alpha": 0.1, "adr_beta": 0.1, "failure_gamma": 0.2,
                  "day0_delta": 0.1, "indication_x": 0.3})
    return synthgen.SynthConfig(
        n_patients=2000,
        years_span=4,
        background_event_rates=rates,
        drug_models={
            "drug_x": synthgen.DrugModel(0.35, ("indication_x", 4.0), 0.3),
            "drug_other": synthgen.DrugModel(0.4, None, 0.2),
        },
        injections=[
            synthgen.Injection("drug_x", "adr_alpha", 8.0, 30, "adr"),
            synthgen.Injection("drug_x", "adr_beta", 6.0, 20, "adr",
                               is_reaction_code=True),
            synthgen.Injection("drug_x", "failure_gamma", 6.0, 30,
                               "therapeutic_failure"),
            synthgen.Injection("drug_x", "day0_delta", 10.0, 30,
                               "day0_artifact"),
        ],
        rng_seed=seed,
    )


def synth_config_from_dict(raw: dict) -> synthgen.SynthConfig:
    models = {}
    for drug, spec in (raw.get("drug_models") or {}).items():
        indication = spec.get("indication_event")
        if indication is not None:
            indication = (str(indication[0]), float(indication[1]))
        models[drug] = synthgen.DrugModel(
            float(spec["prescription_rate"]), indication,
            float(spec.get("repeat_rate", 0.0)))
    injections = [synthgen.Injection(
        j["drug_code"], j["event_code"], float(j["relative_risk"]),
        int(j.get("latency_window_days", 30)), j.get("kind", "adr"),
        bool(j.get("is_reaction_code", False)))
        for j in raw.get("injections") or []]
    return synthgen.SynthConfig(
        n_patients=int(raw["n_patients"]),
        years_span=int(raw["years_span"]),
        background_event_rates={k: float(v) for k, v in
                                raw["background_event_rates"].items()},
        drug_models=models,
        injections=injections,
        rng_seed=int(raw.get("rng_seed", 0)),
    )


def generate(config_path, output_dir, demo: bool = False,
             seed: int | None = None) -> int:
    if demo:
        config = demo_synth_config()
    else:
        with open(config_path, encoding="utf-8") as fh:
            config = synth_config_from_dict(yaml.safe_load(fh))
    if seed is not None:
        config = dataclasses.replace(config, rng_seed=seed)
    paths = synthgen.generate(config, output_dir)
    for name, path in paths.items():
        log.info("wrote %s: %s", name, path)
    return 0


# -- argument parsing -----------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lodsig",
        description="ADR signal detection over longitudinal observational "
                    "databases")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate",
                           help="generate a synthetic database")
    p_gen.add_argument("--config", help="synthetic-config YAML path")
    p_gen.add_argument("--demo", action="store_true",
                       help="use the bundled demo configuration")
    p_gen.add_argument("--output", required=True, help="output directory")
    p_gen.add_argument("--seed", type=int, default=None)

    p_run = sub.add_parser("run", help="run algorithms per the manifest")
    p_run.add_argument("--manifest", help="run-manifest YAML path")
    p_run.add_argument("--generate-demo", action="store_true",
                       help="generate demo data first and run everything "
                            "on it")
    p_run.add_argument("--all-algorithms", action="store_true",
                       help="override the manifest algorithm list with all "
                            "seven configurations")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the manifest seed")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--output", default=None,
                       help="override the manifest output directory")

    p_sum = sub.add_parser("summarize", help="pivot metrics into tables")
    p_sum.add_argument("output_dir")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("LODSIG_LOG", "warn").upper()
        .replace("WARN", "WARNING"),
        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.command == "generate":
        if not args.demo and not args.config:
            parser.error("generate needs --config or --demo")
        return generate(args.config, args.output, args.demo, args.seed)

    if args.command == "run":
        if args.generate_demo:
            if not args.output:
                parser.error("run --generate-demo needs --output")
            data_dir = Path(args.output) / "data"
            generate(None, data_dir, demo=True, seed=args.seed)
            manifest = RunManifest(
                database_dir=str(data_dir),
                drugs=["drug_x"],
                algorithms=list(ALGORITHM_IDS),
                output_dir=str(Path(args.output) / "results"),
                seed=args.seed if args.seed is not None else 7,
                ground_truth=str(data_dir / "ground_truth.csv"))
        else:
            if not args.manifest:
                parser.error("run needs --manifest or --generate-demo")
            try:
                manifest = RunManifest.from_file(args.manifest)
            except (ValueError, TypeError) as exc:
                parser.error(str(exc))
        if args.all_algorithms:
            manifest.algorithms = list(ALGORITHM_IDS)
        if args.seed is not None:
            manifest.seed = args.seed
        # in demo mode --output already shaped the data/results layout
        if args.output is not None and not args.generate_demo:
            manifest.output_dir = args.output
        try:
            return run(manifest, jobs=args.jobs)
        except (OSError, DataFormatError) as exc:
            log.error("run failed: %s", exc)
            return 1

    if args.command == "summarize":
        return summarize(args.output_dir)
    return 2


if __name__ == "__main__":
    sys.exit(main())
