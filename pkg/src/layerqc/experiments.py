"""Experiment harnesses: gradient-variance scan, repeated-run statistics, CSVs.

Three front ends mirror the study's figures: a variance scan of the readout
gradient over random circuits (concentration with qubits/layers), repeated
noisy training runs aggregated into success-probability and expected-restart
curves, and runtime estimates from the cumulative measurement ledger at an
assumed readout rate.

Every harness is deterministic under its seed: work items draw from named
substreams keyed by their grid position or run index, so a worker pool
changes wall time but never results.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import seeding
from .circuits import Layer, random_layer
from .circuits import CircuitTemplate
from .data import build_encoded_splits, load_corpus
from .gradients import shift_grad
from .training import SAMPLING_RATE_HZ, EpochRow, RunRecord, cdl_schedule, ll_schedule, train


def runtime_estimate(measurements: float, rate: float = SAMPLING_RATE_HZ) -> float:
    """Seconds to take ``measurements`` readouts at ``rate`` per second."""
    if rate <= 0:
        raise ValueError("sampling rate must be positive")
    return measurements / rate


# ---------------------------------------------------------------------------
# variance scan
# ---------------------------------------------------------------------------

def scan_trial(n_qubits: int, n_layers: int, seed: int, trial: int) -> tuple[CircuitTemplate, np.ndarray]:
    """The trial'th random scan circuit for a grid cell, reproducible by key.

    Hadamard wall prefix, uniform axes with slot 0 forced to Y, angles
    uniform in [0, 2pi). The forced Y keeps slot 0 sensitive: on the
    Hadamard-wall input |+...+>, an X rotation of qubit 0 is a global phase
    (zero gradient identically), and on |0...0> a Z rotation would be; a Y
    rotation acts nontrivially on both.
    """
    rng = seeding.substream(seed, seeding.SCAN, n_qubits, n_layers, trial)
    layers = [random_layer(n_qubits, rng) for _ in range(n_layers)]
    first = layers[0]
    layers[0] = Layer(("y",) + first.axes[1:], first.cz_pairs)
    template = CircuitTemplate(n_qubits=n_qubits, layers=tuple(layers), prefix="hadamard")
    values = rng.uniform(0.0, 2.0 * np.pi, template.n_params)
    return template, values


@dataclass(frozen=True)
class VarianceCell:
    n_qubits: int
    n_layers: int
    trials: int
    mean_gradient: float
    variance: float
    stderr: float  # standard error of the mean gradient


@dataclass(frozen=True)
class VarianceScanResult:
    cells: tuple[VarianceCell, ...]
    seed: int
    target: str

    def cell(self, n_qubits: int, n_layers: int) -> VarianceCell:
        for c in self.cells:
            if (c.n_qubits, c.n_layers) == (n_qubits, n_layers):
                return c
        raise KeyError((n_qubits, n_layers))


def _scan_cell(args) -> VarianceCell:
    n, L, trials, seed, target = args
    grads = []
    for t in range(trials):
        template, values = scan_trial(n, L, seed, t)
        if target == "slot0":
            grads.append(shift_grad(template, values, 0))
        elif target == "all_slots":
            grads.extend(shift_grad(template, values, s) for s in range(template.n_params))
        else:
            raise ValueError(f"unknown scan target {target!r}")
    arr = np.array(grads)
    return VarianceCell(
        n_qubits=n,
        n_layers=L,
        trials=trials,
        mean_gradient=float(arr.mean()),
        variance=float(arr.var(ddof=1)),
        stderr=float(arr.std(ddof=1) / math.sqrt(arr.size)),
    )


def variance_scan(
    qubit_counts: list[int],
    layer_counts: list[int],
    trials: int = 1000,
    seed: int = 0,
    target: str = "slot0",
    workers: int = 1,
) -> VarianceScanResult:
    """Sample variance of the readout-Z gradient over random circuits.

    One cell per (n_qubits, n_layers) pair; each cell draws ``trials``
    independent circuits and differentiates parameter slot 0 exactly
    (``target='all_slots'`` pools the gradients of every slot instead).
    """
    if trials < 2:
        raise ValueError("variance needs at least 2 trials")
    tasks = [(n, L, trials, seed, target) for n in qubit_counts for L in layer_counts]
    cells = _parallel_map(_scan_cell, tasks, workers)
    return VarianceScanResult(tuple(cells), seed=seed, target=target)


# ---------------------------------------------------------------------------
# repeated training runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one training configuration."""

    strategy: str = "ll"            # "ll" | "cdl-zero" | "cdl-random"
    n_qubits: int = 8
    n_layers: int = 21
    start_layers: int = 1
    grow_step: int = 2
    freeze_window: int = 2
    epochs_per_segment: int = 10
    partition_fraction: float = 0.5
    sweeps: int = 2
    epochs: int = 150               # cdl strategies only
    max_epochs: int | None = None   # overall epoch budget cap (any strategy)
    eta: float = 0.01
    batch_size: int = 20
    shots: int | None = 10          # None = exact expectations
    circuit_seed: int = 2020
    data_seed: int = 42
    source: str = "bundled"         # "bundled" | "idx"
    data_dir: str | None = None
    classes: tuple[int, int] = (6, 9)
    per_class_train: int = 50
    per_class_test: int = 50
    pca_on: str = "train"
    initial_always_active: bool = True

    def schedule(self):
        if self.strategy == "ll":
            return ll_schedule(
                self.n_layers, self.start_layers, self.grow_step, self.freeze_window,
                self.epochs_per_segment, self.partition_fraction, self.sweeps,
                self.initial_always_active,
            )
        if self.strategy == "cdl-zero":
            return cdl_schedule(self.n_layers, self.epochs, "zero")
        if self.strategy == "cdl-random":
            return cdl_schedule(self.n_layers, self.epochs, "random")
        raise ValueError(f"unknown strategy {self.strategy!r}")

    def label(self) -> str:
        """Human-readable configuration key, hash-suffixed so it is unique."""
        shots = "exact" if self.shots is None else f"m{self.shots}"
        digest = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:6]
        return f"{self.strategy}_eta{self.eta:g}_{shots}_b{self.batch_size}_{digest}"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["classes"] = list(self.classes)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if "classes" in kwargs:
            kwargs["classes"] = tuple(kwargs["classes"])
        return cls(**kwargs)


def run_id(config: RunConfig, run_index: int) -> str:
    """Stable short id of (config, run index) for resumable sweeps."""
    payload = json.dumps(config.to_dict(), sort_keys=True) + f"#{run_index}"
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def run_seed(master_seed: int, run_index: int) -> int:
    """Per-run seed independent of execution order."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(seeding.RUN, run_index))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def prepare_dataset(config: RunConfig):
    raw = load_corpus(config.source, config.data_dir)
    return build_encoded_splits(
        raw,
        n_components=config.n_qubits,
        classes=config.classes,
        per_class_train=config.per_class_train,
        per_class_test=config.per_class_test,
        seed=config.data_seed,
        pca_on=config.pca_on,
    )


def execute_run(config: RunConfig, run_index: int, master_seed: int, dataset=None) -> RunRecord:
    """One full training run; dataset is rebuilt from config when not given."""
    if dataset is None:
        train_ds, test_ds, _ = prepare_dataset(config)
    else:
        train_ds, test_ds = dataset
    record = train(
        config.schedule(),
        config.n_qubits,
        config.circuit_seed,
        train_ds.features,
        train_ds.labels,
        test_ds.features,
        test_ds.labels,
        shots=config.shots,
        eta=config.eta,
        batch_size=config.batch_size,
        seed=run_seed(master_seed, run_index),
        strategy=config.strategy,
        max_epochs=config.max_epochs,
    )
    record.config["run_index"] = run_index
    record.config["run_id"] = run_id(config, run_index)
    record.config["master_seed"] = master_seed
    record.config["label"] = config.label()
    return record


def _run_task(args) -> RunRecord:
    config, run_index, master_seed, train_ds, test_ds = args
    return execute_run(config, run_index, master_seed, dataset=(train_ds, test_ds))


@dataclass
class AggregateStats:
    """Run collection plus the derived success/repetition curves."""

    records: list[RunRecord] = field(default_factory=list)

    @property
    def n_runs(self) -> int:
        return len(self.records)

    def final_errors(self) -> np.ndarray:
        """Final test error per run (mean of the last ten epochs; nan if diverged)."""
        return np.array([r.final_test_error for r in self.records])

    def success_probability(self, accuracy_threshold: float) -> float:
        """Fraction of runs with final accuracy (1 - error) >= threshold."""
        if not 0.5 <= accuracy_threshold <= 1.0:
            raise ValueError("accuracy threshold must be in [0.5, 1]")
        if not self.records:
            raise ValueError("no runs recorded")
        errors = self.final_errors()
        succeeded = np.where(np.isnan(errors), False, (1.0 - errors) >= accuracy_threshold)
        return float(np.mean(succeeded))

    def expected_repetitions(self, accuracy_threshold: float) -> float:
        """Expected restarts until one run reaches the threshold: 1/probability."""
        p = self.success_probability(accuracy_threshold)
        return math.inf if p == 0.0 else 1.0 / p

    def curve(self, thresholds) -> list[tuple[float, float, float]]:
        return [
            (float(t), self.success_probability(t), self.expected_repetitions(t))
            for t in thresholds
        ]

    def error_vs_runtime(self) -> list[tuple[int, float, float]]:
        """Mean test error and runtime per epoch over non-random-guessing runs.

        Runs whose final error is >= 0.5 (or that diverged) are excluded, as
        are runs shorter than the epoch in question.
        """
        included = [
            r for r in self.records
            if not r.diverged and r.rows and r.final_test_error < 0.5
        ]
        if not included:
            return []
        n_epochs = max(len(r.rows) for r in included)
        out = []
        for e in range(n_epochs):
            rows = [r.rows[e] for r in included if len(r.rows) > e]
            out.append((
                e,
                float(np.mean([row.test_error for row in rows])),
                float(np.mean([runtime_estimate(row.cumulative_measurements) for row in rows])),
            ))
        return out


def multi_run(
    config: RunConfig,
    n_runs: int,
    seed: int,
    workers: int = 1,
    dataset=None,
) -> AggregateStats:
    """n independent runs of one configuration, aggregated in index order.

    Results are identical for any worker count; failed (diverged) runs stay
    in the collection and count against success probability.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if dataset is None:
        train_ds, test_ds, _ = prepare_dataset(config)
    else:
        train_ds, test_ds = dataset
    tasks = [(config, i, seed, train_ds, test_ds) for i in range(n_runs)]
    records = _parallel_map(_run_task, tasks, workers)
    return AggregateStats(records=list(records))


def _single_threaded_blas():
    # one BLAS thread per pool worker; the workers provide the parallelism
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except ImportError:
        pass


def _parallel_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(
        max_workers=min(workers, len(tasks)), initializer=_single_threaded_blas
    ) as pool:
        return list(pool.map(fn, tasks))


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

RUNS_CSV_COLUMNS = [
    "run_id", "strategy", "epoch", "segment", "n_trainable", "train_loss",
    "test_error", "cumulative_measurements", "wall_seconds_estimate",
    "cumulative_forward_measurements", "run_index", "seed", "diverged",
    "configuration",
]


def write_variance_csv(result: VarianceScanResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_qubits", "n_layers", "variance", "stderr", "mean_gradient", "trials"])
        for c in result.cells:
            writer.writerow([
                c.n_qubits, c.n_layers, f"{c.variance:.17g}", f"{c.stderr:.17g}",
                f"{c.mean_gradient:.17g}", c.trials,
            ])


def record_csv_rows(record: RunRecord) -> list[dict]:
    rid = record.config.get("run_id", "")
    rows = []
    for row in record.rows:
        rows.append({
            "run_id": rid,
            "strategy": record.strategy,
            "epoch": row.epoch,
            "segment": row.segment,
            "n_trainable": row.n_trainable,
            "train_loss": f"{row.train_loss:.17g}",
            "test_error": f"{row.test_error:.17g}",
            "cumulative_measurements": row.cumulative_measurements,
            "wall_seconds_estimate": f"{row.wall_seconds_estimate:.17g}",
            "cumulative_forward_measurements": row.cumulative_forward_measurements,
            "run_index": record.config.get("run_index", ""),
            "seed": record.seed,
            "diverged": int(record.diverged),
            "configuration": record.config.get("label", ""),
        })
    if not record.rows:  # keep diverged-before-first-epoch runs visible
        rows.append({
            "run_id": rid, "strategy": record.strategy, "epoch": -1, "segment": -1,
            "n_trainable": 0, "train_loss": "nan", "test_error": "nan",
            "cumulative_measurements": 0, "wall_seconds_estimate": "0",
            "cumulative_forward_measurements": 0,
            "run_index": record.config.get("run_index", ""),
            "seed": record.seed, "diverged": int(record.diverged),
            "configuration": record.config.get("label", ""),
        })
    return rows


def write_runs_csv(records: list[RunRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RUNS_CSV_COLUMNS)
        writer.writeheader()
        for record in records:
            for row in record_csv_rows(record):
                writer.writerow(row)


def read_runs_csv(path: str | Path) -> list[RunRecord]:
    """Rebuild enough of each run (epoch rows, diverged flag) to redo curves."""
    by_run: dict[str, RunRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = f"{row['run_id']}#{row['run_index']}"
            record = by_run.get(key)
            if record is None:
                record = RunRecord(
                    strategy=row["strategy"],
                    seed=int(row["seed"]) if row["seed"] else 0,
                    config={
                        "run_id": row["run_id"],
                        "run_index": row["run_index"],
                        "label": row.get("configuration", ""),
                    },
                    diverged=bool(int(row["diverged"])),
                )
                by_run[key] = record
            if int(row["epoch"]) >= 0:
                record.rows.append(EpochRow(
                    epoch=int(row["epoch"]),
                    segment=int(row["segment"]),
                    n_trainable=int(row["n_trainable"]),
                    train_loss=float(row["train_loss"]),
                    test_error=float(row["test_error"]),
                    cumulative_measurements=int(row["cumulative_measurements"]),
                    cumulative_forward_measurements=int(row["cumulative_forward_measurements"]),
                ))
    return list(by_run.values())


def write_curves_csv(stats_by_label: dict[str, AggregateStats], thresholds, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["configuration", "threshold", "success_probability", "expected_repetitions"])
        for label, stats in stats_by_label.items():
            for t, p, reps in stats.curve(thresholds):
                writer.writerow([label, f"{t:.17g}", f"{p:.17g}", f"{reps:.17g}" if math.isfinite(reps) else "inf"])
