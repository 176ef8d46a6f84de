"""Cross-entropy training of layered circuits: Adam, schedules, run records.

Two schedule families are provided. The layerwise schedule grows the circuit
in phase one (new layers start at angle zero, older layers freeze outside a
sliding window) and then retrains contiguous layer partitions in phase two.
The complete-depth schedule trains every parameter of the full circuit from
the start, from either zero or uniformly random angles.

Adam state is reset at every segment boundary; parameters outside a
segment's trainable set are never touched. All randomness (shuffles, shot
draws, random init) comes from named substreams of the run seed, so a
(config, seed) pair reproduces a run bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .circuits import PREFIX_DATA, CircuitTemplate, build_template, grow
from .engine import compile_template, forward_checkpoints, initial_states, readout_z
from .gradients import Estimator, batch_loss_grad, clip_unit_interval

SAMPLING_RATE_HZ = 10_000  # assumed readout rate for wall-clock estimates
FINAL_WINDOW = 10          # epochs averaged for a run's final score


class TrainingDiverged(RuntimeError):
    """Raised when a loss, gradient, or parameter stops being finite."""


# ---------------------------------------------------------------------------
# parameters and optimizer
# ---------------------------------------------------------------------------

@dataclass
class ParameterStore:
    """Flat angle vector with a per-slot trainable flag."""

    values: np.ndarray
    trainable: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.trainable = np.asarray(self.trainable, dtype=bool)
        if self.values.shape != self.trainable.shape or self.values.ndim != 1:
            raise ValueError("values and trainable flags must be equal-length vectors")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter values must be finite")

    @classmethod
    def zeros(cls, n: int) -> "ParameterStore":
        return cls(np.zeros(n), np.zeros(n, dtype=bool))

    @property
    def n_params(self) -> int:
        return self.values.size

    def extend_zeros(self, k: int) -> None:
        """Append k zero-angle slots, frozen until a segment claims them."""
        self.values = np.concatenate([self.values, np.zeros(k)])
        self.trainable = np.concatenate([self.trainable, np.zeros(k, dtype=bool)])

    def set_trainable(self, slots) -> None:
        self.trainable[:] = False
        self.trainable[list(slots)] = True

    def trainable_slots(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.trainable)]


@dataclass
class AdamState:
    """First/second moment accumulators for the currently trainable slots."""

    eta: float
    m1: np.ndarray
    m2: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_trainable: int, eta: float) -> "AdamState":
        return cls(eta=eta, m1=np.zeros(n_trainable), m2=np.zeros(n_trainable))


def adam_step(state: AdamState, grads: np.ndarray, params: ParameterStore) -> None:
    """One Adam update of the trainable slots, in place.

    ``grads`` is ordered like the sorted trainable slot indices.
    """
    grads = np.asarray(grads, dtype=float)
    if not np.all(np.isfinite(grads)):
        raise TrainingDiverged("non-finite gradient")
    idx = np.flatnonzero(params.trainable)
    if grads.shape != idx.shape:
        raise ValueError(f"expected {idx.size} gradients, got {grads.shape}")
    state.step += 1
    state.m1 = state.beta1 * state.m1 + (1.0 - state.beta1) * grads
    state.m2 = state.beta2 * state.m2 + (1.0 - state.beta2) * grads * grads
    m_hat = state.m1 / (1.0 - state.beta1**state.step)
    v_hat = state.m2 / (1.0 - state.beta2**state.step)
    params.values[idx] -= state.eta * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(params.values)):
        raise TrainingDiverged("non-finite parameter value")


# ---------------------------------------------------------------------------
# losses and evaluation
# ---------------------------------------------------------------------------

def bce_loss(e: float | np.ndarray, y: float | np.ndarray) -> float | np.ndarray:
    """Binary cross entropy -(y ln E + (1-y) ln(1-E)) with E clipped."""
    e = clip_unit_interval(np.asarray(e, dtype=float))
    y = np.asarray(y, dtype=float)
    out = -(y * np.log(e) + (1.0 - y) * np.log(1.0 - e))
    return float(out) if out.ndim == 0 else out


def predict_proba(template: CircuitTemplate, values: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Exact classifier output E in [0, 1] per sample."""
    feats = np.asarray(features, dtype=float)
    data = feats if template.prefix == PREFIX_DATA else None
    mats = compile_template(template, np.asarray(values, dtype=float))
    states = forward_checkpoints(mats, initial_states(template, feats.shape[0], data))[-1]
    z = readout_z(states, template.readout_qubit, template.n_qubits)
    return (1.0 + z) / 2.0


def dataset_loss(template, values, features, labels) -> float:
    """Mean exact-readout cross entropy over a dataset."""
    e = predict_proba(template, values, features)
    return float(np.mean(bce_loss(e, np.asarray(labels, dtype=float))))


def test_error(template, values, features, labels) -> float:
    """Misclassification rate at threshold 0.5; a tie predicts class 0."""
    features = np.asarray(features, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("empty evaluation set")
    predictions = (predict_proba(template, values, features) > 0.5).astype(float)
    return float(np.mean(predictions != np.asarray(labels, dtype=float)))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    n_layers: int
    trainable_layers: tuple[int, ...]
    epochs: int
    phase: str  # "one" | "two" | "full"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("segment epochs must be >= 1")
        if not self.trainable_layers:
            raise ValueError("segment needs at least one trainable layer")
        if max(self.trainable_layers) >= self.n_layers:
            raise ValueError("trainable layer outside the circuit")

    def trainable_slots(self, n_qubits: int) -> list[int]:
        return [l * n_qubits + q for l in self.trainable_layers for q in range(n_qubits)]


@dataclass(frozen=True)
class TrainingSchedule:
    segments: tuple[Segment, ...]
    n_layers_total: int
    param_init: str = "zero"  # "zero" | "random"

    def __post_init__(self):
        if self.param_init not in ("zero", "random"):
            raise ValueError(f"unknown parameter init {self.param_init!r}")
        covered = set()
        for seg in self.segments:
            covered.update(seg.trainable_layers)
        if covered != set(range(self.n_layers_total)):
            raise ValueError("every layer must be trainable in at least one segment")


def ll_schedule(
    n_layers: int,
    start_layers: int,
    grow_step: int,
    freeze_window: int,
    epochs_per_segment: int,
    partition_fraction: float,
    sweeps: int = 2,
    initial_always_active: bool = True,
) -> TrainingSchedule:
    """Two-phase layerwise schedule.

    Phase one starts with ``start_layers`` trained alone, then repeatedly
    appends ``grow_step`` layers; each growth segment trains the new layers
    plus the most recent ``freeze_window - grow_step`` older ones (and the
    initial layers when ``initial_always_active``). Phase two splits the
    full circuit into ceil(1/partition_fraction) contiguous partitions of
    near-equal size (smaller partitions first) and retrains them front to
    back for ``sweeps`` passes.
    """
    s, p, q = start_layers, grow_step, freeze_window
    if s < 1 or p < 1:
        raise ValueError("start_layers and grow_step must be >= 1")
    if q < p:
        raise ValueError("freeze_window must be >= grow_step")
    if not 0.0 < partition_fraction <= 1.0:
        raise ValueError("partition_fraction must be in (0, 1]")
    if epochs_per_segment < 1:
        raise ValueError("epochs_per_segment must be >= 1")
    if sweeps < 0:
        raise ValueError("sweeps must be >= 0")
    if n_layers < s or (n_layers - s) % p != 0:
        raise ValueError(
            f"n_layers={n_layers} is not start_layers={s} plus a whole number of "
            f"grow_step={p} additions"
        )

    segments = [Segment(s, tuple(range(s)), epochs_per_segment, "one")]
    for depth in range(s + p, n_layers + 1, p):
        new = set(range(depth - p, depth))
        window = set(range(max(0, depth - q), depth - p))
        active = new | window | (set(range(s)) if initial_always_active else set())
        segments.append(Segment(depth, tuple(sorted(active)), epochs_per_segment, "one"))

    n_blocks = math.ceil(1.0 / partition_fraction)
    base, rem = divmod(n_layers, n_blocks)
    sizes = [base] * (n_blocks - rem) + [base + 1] * rem
    blocks, lo = [], 0
    for size in sizes:
        if size > 0:
            blocks.append(tuple(range(lo, lo + size)))
        lo += size
    for _ in range(sweeps):
        for block in blocks:
            segments.append(Segment(n_layers, block, epochs_per_segment, "two"))
    return TrainingSchedule(tuple(segments), n_layers)


def cdl_schedule(n_layers: int, epochs: int, init: str = "zero") -> TrainingSchedule:
    """Single segment training every layer of the full-depth circuit."""
    seg = Segment(n_layers, tuple(range(n_layers)), epochs, "full")
    return TrainingSchedule((seg,), n_layers, param_init=init)


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRow:
    epoch: int
    segment: int
    n_trainable: int
    train_loss: float
    test_error: float
    cumulative_measurements: int
    cumulative_forward_measurements: int

    @property
    def wall_seconds_estimate(self) -> float:
        return self.cumulative_measurements / SAMPLING_RATE_HZ


@dataclass
class RunRecord:
    """Per-epoch training history plus the exact configuration that made it."""

    strategy: str
    seed: int
    config: dict
    rows: list[EpochRow] = field(default_factory=list)
    diverged: bool = False
    final_template: CircuitTemplate | None = None
    final_values: np.ndarray | None = None

    @property
    def final_test_error(self) -> float:
        """Mean test error over the last FINAL_WINDOW epochs (nan if diverged)."""
        if self.diverged or not self.rows:
            return float("nan")
        tail = self.rows[-FINAL_WINDOW:]
        return float(np.mean([r.test_error for r in tail]))

    @property
    def final_train_loss(self) -> float:
        if self.diverged or not self.rows:
            return float("nan")
        tail = self.rows[-FINAL_WINDOW:]
        return float(np.mean([r.train_loss for r in tail]))

    @property
    def total_measurements(self) -> int:
        return self.rows[-1].cumulative_measurements if self.rows else 0


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def _iter_batches(order: np.ndarray, batch_size: int):
    for lo in range(0, order.size, batch_size):
        yield order[lo : lo + batch_size]


def train(
    schedule: TrainingSchedule,
    n_qubits: int,
    circuit_seed: int,
    train_features: np.ndarray,
    train_labels: np.ndarray,
    test_features: np.ndarray,
    test_labels: np.ndarray,
    shots: int | None,
    eta: float,
    batch_size: int,
    seed: int,
    strategy: str = "ll",
    readout: int | None = None,
    max_epochs: int | None = None,
) -> RunRecord:
    """Run a schedule end to end and record exact metrics after every epoch.

    The circuit template is built (and grown, for phase-one segments) from
    ``circuit_seed`` with an X rotation enforced in every trained block of
    layers. New layers always start at angle zero. Gradient measurements
    accumulate as 2 * n_trainable * m * batch per iteration (m = 1 in exact
    mode, counting circuit evaluations); forward-pass measurements are
    ledgered separately. Test error and the recorded train loss always use
    exact expectations.

    ``max_epochs`` caps the total epoch budget: training stops cleanly once
    that many epochs are recorded, even mid-segment.
    """
    train_features = np.asarray(train_features, dtype=float)
    train_labels = np.asarray(train_labels, dtype=float)
    test_features = np.asarray(test_features, dtype=float)
    test_labels = np.asarray(test_labels, dtype=float)
    n_train = train_features.shape[0]
    if batch_size < 1 or batch_size > n_train:
        raise ValueError("batch size must be in [1, train set size]")
    if max_epochs is not None and max_epochs < 1:
        raise ValueError("max_epochs must be >= 1 when set")

    config = {
        "strategy": strategy,
        "n_qubits": n_qubits,
        "n_layers": schedule.n_layers_total,
        "param_init": schedule.param_init,
        "circuit_seed": circuit_seed,
        "shots": shots,
        "eta": eta,
        "batch_size": batch_size,
        "seed": seed,
        "segments": len(schedule.segments),
        "max_epochs": max_epochs,
    }
    record = RunRecord(strategy=strategy, seed=seed, config=config)

    template = build_template(
        n_qubits,
        schedule.segments[0].n_layers,
        circuit_seed,
        prefix=PREFIX_DATA,
        readout=readout,
        enforce_block=True,
    )
    params = ParameterStore.zeros(template.n_params)
    if schedule.param_init == "random":
        init_rng = seeding.substream(seed, seeding.PARAM_INIT)
        params.values[:] = init_rng.uniform(0.0, 2.0 * np.pi, params.n_params)

    est = Estimator() if shots is None else Estimator(shots=shots, rng=seeding.substream(seed, seeding.SHOTS))
    m_eff = 1 if shots is None else shots

    measurements = 0
    forward_measurements = 0
    epoch_index = 0
    budget_exhausted = False
    for seg_index, seg in enumerate(schedule.segments):
        if budget_exhausted:
            break
        if seg.n_layers > template.n_layers:
            added = seg.n_layers - template.n_layers
            template = grow(template, added, enforce_block=True)
            params.extend_zeros(added * n_qubits)
        slots = seg.trainable_slots(n_qubits)
        params.set_trainable(slots)
        adam = AdamState.fresh(len(slots), eta)
        n_p = len(slots)

        for seg_epoch in range(seg.epochs):
            order = seeding.substream(seed, seeding.SHUFFLE, seg_index, seg_epoch).permutation(n_train)
            try:
                for batch in _iter_batches(order, batch_size):
                    grads, loss = batch_loss_grad(
                        template, params.values, slots,
                        train_features[batch], train_labels[batch], est,
                    )
                    measurements += 2 * n_p * m_eff * batch.size
                    forward_measurements += m_eff * batch.size
                    if not math.isfinite(loss):
                        raise TrainingDiverged("non-finite batch loss")
                    adam_step(adam, grads, params)
            except TrainingDiverged:
                record.diverged = True
                record.final_template = template
                record.final_values = params.values.copy()
                return record
            record.rows.append(
                EpochRow(
                    epoch=epoch_index,
                    segment=seg_index,
                    n_trainable=n_p,
                    train_loss=dataset_loss(template, params.values, train_features, train_labels),
                    test_error=test_error(template, params.values, test_features, test_labels),
                    cumulative_measurements=measurements,
                    cumulative_forward_measurements=forward_measurements,
                )
            )
            epoch_index += 1
            if max_epochs is not None and epoch_index >= max_epochs:
                budget_exhausted = True
                break

    record.final_template = template
    record.final_values = params.values.copy()
    return record
