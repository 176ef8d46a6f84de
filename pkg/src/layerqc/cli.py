"""Command-line front end: encode data, train, sweep, scan, and re-report.

Every command takes one JSON config document (``--config``), applies
``--set key=value`` overrides to top-level fields, validates, runs, and
writes CSV/JSON outputs plus a ``<command>.config.json`` snapshot of the
exact resolved configuration into the output directory. Seeds live in the
config, so a command is deterministic given its config file.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from . import experiments
from .data import (
    DATA_DIR_ENV,
    IdxParseError,
    build_encoded_splits,
    load_corpus,
    write_encoded_csv,
)
from .experiments import (
    AggregateStats,
    RunConfig,
    execute_run,
    run_id,
    write_curves_csv,
    write_runs_csv,
    write_variance_csv,
)

DEFAULT_THRESHOLDS = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; the message names the field."""


def _load_config(path: str | None, overrides: list[str], defaults: dict) -> dict:
    config = dict(defaults)
    if path:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be a JSON object")
        config.update(loaded)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[key] = value
    return config


def _reject_unknown(config: dict, allowed: set, context: str) -> None:
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise ConfigError(f"unknown {context} field(s): {', '.join(unknown)}")


def _out_dir(config: dict) -> Path:
    out = Path(config.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(config: dict, out: Path, command: str) -> None:
    (out / f"{command}.config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _run_config_from(config: dict, context: str) -> RunConfig:
    fields = set(RunConfig.__dataclass_fields__)
    _reject_unknown(config, fields, context)
    try:
        rc = RunConfig.from_dict(config)
        rc.schedule()  # validates the schedule arithmetic early
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    if rc.n_qubits < 2:
        raise ConfigError(f"n_qubits: got {rc.n_qubits}, need >= 2 for an entangling circuit")
    if rc.shots is not None and rc.shots < 1:
        raise ConfigError(f"shots: got {rc.shots}, need >= 1 or null for exact mode")
    return rc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

SCAN_DEFAULTS = {
    "qubits": [2, 4, 6, 8],
    "layers": [5, 20, 50],
    "trials": 200,
    "seed": 7,
    "target": "slot0",
    "workers": 1,
    "out_dir": ".",
}


def cmd_variance_scan(config: dict) -> int:
    _reject_unknown(config, set(SCAN_DEFAULTS), "variance-scan config")
    for qubits in config["qubits"]:
        if qubits < 2:
            raise ConfigError(f"qubits: got {qubits}, scan circuits need >= 2 qubits")
    if config["trials"] < 2:
        raise ConfigError(f"trials: got {config['trials']}, need >= 2")
    out = _out_dir(config)
    _snapshot(config, out, "variance-scan")
    result = experiments.variance_scan(
        config["qubits"], config["layers"], config["trials"],
        seed=config["seed"], target=config["target"], workers=config["workers"],
    )
    write_variance_csv(result, out / "variance_scan.csv")
    print(f"wrote {out / 'variance_scan.csv'} ({len(result.cells)} cells)")
    return 0


ENCODE_DEFAULTS = {
    "source": "idx",
    "data_dir": None,
    "classes": [6, 9],
    "per_class_train": 50,
    "per_class_test": 50,
    "n_components": 8,
    "seed": 42,
    "pca_on": "train",
    "out_dir": ".",
}


def cmd_encode(config: dict) -> int:
    _reject_unknown(config, set(ENCODE_DEFAULTS), "encode config")
    out = _out_dir(config)
    _snapshot(config, out, "encode")
    raw = load_corpus(config["source"], config["data_dir"])
    train_ds, test_ds, model = build_encoded_splits(
        raw,
        n_components=config["n_components"],
        classes=tuple(config["classes"]),
        per_class_train=config["per_class_train"],
        per_class_test=config["per_class_test"],
        seed=config["seed"],
        pca_on=config["pca_on"],
    )
    write_encoded_csv(train_ds, out / "encoded_train.csv")
    write_encoded_csv(test_ds, out / "encoded_test.csv")
    (out / "pca_model.json").write_text(model.to_json(), encoding="utf-8")
    print(f"wrote {out / 'encoded_train.csv'} ({train_ds.features.shape[0]} rows), "
          f"{out / 'encoded_test.csv'} ({test_ds.features.shape[0]} rows), "
          f"{out / 'pca_model.json'}")
    return 0


TRAIN_EXTRA_DEFAULTS = {"seed": 1, "run_index": 0, "out_dir": "."}


def cmd_train(config: dict) -> int:
    extras = {k: config.pop(k, v) for k, v in TRAIN_EXTRA_DEFAULTS.items()}
    rc = _run_config_from(config, "train config")
    out = Path(extras["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _snapshot({**config, **extras}, out, "train")
    record = execute_run(rc, extras["run_index"], extras["seed"])
    write_runs_csv([record], out / "runs.csv")
    summary = {
        "run_id": record.config["run_id"],
        "strategy": record.strategy,
        "diverged": record.diverged,
        "epochs": len(record.rows),
        "final_test_error": record.final_test_error,
        "final_train_loss": record.final_train_loss,
        "total_measurements": record.total_measurements,
        "estimated_wall_seconds": experiments.runtime_estimate(record.total_measurements),
        "config": rc.to_dict(),
        "seed": extras["seed"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"run {record.config['run_id']}: {len(record.rows)} epochs, "
          f"final test error {record.final_test_error:.3f} -> {out / 'runs.csv'}")
    return 0


SWEEP_DEFAULTS = {
    "configurations": [{"strategy": "ll"}, {"strategy": "cdl-zero", "eta": 0.005}],
    "base": {},
    "n_runs": 20,
    "seed": 1,
    "thresholds": DEFAULT_THRESHOLDS,
    "workers": None,
    "out_dir": ".",
}


def cmd_sweep(config: dict) -> int:
    _reject_unknown(config, set(SWEEP_DEFAULTS), "sweep config")
    out = _out_dir(config)
    _snapshot(config, out, "sweep")
    workers = config["workers"] or experiments.default_workers()
    fragments_dir = out / "runs"
    fragments_dir.mkdir(exist_ok=True)

    run_configs = []
    for override in config["configurations"]:
        merged = {**config["base"], **override}
        run_configs.append(_run_config_from(merged, "sweep configuration"))

    datasets = {}
    tasks = []
    for rc in run_configs:
        data_key = (rc.source, rc.data_dir, rc.n_qubits, rc.classes, rc.per_class_train,
                    rc.per_class_test, rc.data_seed, rc.pca_on)
        if data_key not in datasets:
            train_ds, test_ds, _ = experiments.prepare_dataset(rc)
            datasets[data_key] = (train_ds, test_ds)
        for i in range(config["n_runs"]):
            rid = run_id(rc, i)
            fragment = fragments_dir / f"{rid}.csv"
            if fragment.exists():
                continue
            tasks.append((rc, i, config["seed"], datasets[data_key], fragment))

    print(f"{len(tasks)} runs to execute ({len(run_configs)} configurations x "
          f"{config['n_runs']} runs, resuming past {len(run_configs) * config['n_runs'] - len(tasks)})")
    _execute_sweep_tasks(tasks, workers)

    stats_by_label: dict[str, AggregateStats] = {}
    all_records = []
    for rc in run_configs:
        records = []
        for i in range(config["n_runs"]):
            fragment = fragments_dir / f"{run_id(rc, i)}.csv"
            records.extend(experiments.read_runs_csv(fragment))
        stats_by_label[rc.label()] = AggregateStats(records=records)
        all_records.extend(records)
    write_runs_csv_from_fragments(all_records, out / "runs.csv")
    write_curves_csv(stats_by_label, config["thresholds"], out / "curves.csv")
    for label, stats in stats_by_label.items():
        p65 = stats.success_probability(0.65)
        print(f"  {label}: success@0.65 = {p65:.2f}")
    print(f"wrote {out / 'runs.csv'} and {out / 'curves.csv'}")
    return 0


def write_runs_csv_from_fragments(records, path):
    write_runs_csv(records, path)


def _sweep_task(args):
    rc, index, seed, dataset = args
    return execute_run(rc, index, seed, dataset=dataset)


def _execute_sweep_tasks(tasks, workers: int) -> None:
    if not tasks:
        return
    done = 0
    if workers <= 1:
        for rc, i, seed, dataset, fragment in tasks:
            record = execute_run(rc, i, seed, dataset=dataset)
            write_runs_csv([record], fragment)
            done += 1
            print(f"  [{done}/{len(tasks)}] {record.config['run_id']} "
                  f"final_err={record.final_test_error:.3f}")
        return
    with ProcessPoolExecutor(
        max_workers=workers, initializer=experiments._single_threaded_blas
    ) as pool:
        futures = {
            pool.submit(_sweep_task, (rc, i, seed, dataset)): fragment
            for rc, i, seed, dataset, fragment in tasks
        }
        for future in as_completed(futures):
            record = future.result()
            write_runs_csv([record], futures[future])
            done += 1
            print(f"  [{done}/{len(tasks)}] {record.config['run_id']} "
                  f"final_err={record.final_test_error:.3f}")


REPORT_DEFAULTS = {"runs_csv": "runs.csv", "thresholds": DEFAULT_THRESHOLDS, "out_dir": "."}


def cmd_report(config: dict) -> int:
    _reject_unknown(config, set(REPORT_DEFAULTS), "report config")
    out = _out_dir(config)
    records = experiments.read_runs_csv(config["runs_csv"])
    if not records:
        raise ConfigError(f"runs_csv: no runs found in {config['runs_csv']}")
    stats_by_label: dict[str, AggregateStats] = {}
    for record in records:
        label = record.config.get("label") or record.strategy
        stats_by_label.setdefault(label, AggregateStats()).records.append(record)
    write_curves_csv(stats_by_label, config["thresholds"], out / "curves.csv")
    print(f"wrote {out / 'curves.csv'} ({len(records)} runs, {len(stats_by_label)} configurations)")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="layerqc",
        description="Layerwise circuit training experiments (variance scan, "
                    "training runs, sweeps, data encoding).",
        epilog=f"MNIST-format IDX files are looked up in ${DATA_DIR_ENV} when "
               f"no data_dir is configured; source='bundled' uses the built-in digits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "variance-scan": (cmd_variance_scan, SCAN_DEFAULTS, "gradient-variance grid scan"),
        "train": (cmd_train, None, "one training run"),
        "sweep": (cmd_sweep, SWEEP_DEFAULTS, "repeated runs across configurations"),
        "encode": (cmd_encode, ENCODE_DEFAULTS, "build the encoded dataset CSVs"),
        "report": (cmd_report, REPORT_DEFAULTS, "recompute curves.csv from runs.csv"),
    }
    for name, (_, _, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                       help="override a top-level config field (JSON-parsed value)")
    args = parser.parse_args(argv)
    command, defaults, _ = specs[args.command]
    try:
        config = _load_config(args.config, args.overrides, defaults or {})
        return command(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IdxParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
