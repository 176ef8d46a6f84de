"""Parameter-shift gradients, exact or shot-sampled, plus a finite-difference check.

The readout expectation <Z> is rescaled to E = (1 + <Z>)/2 in [0, 1] for the
cross-entropy loss, so loss gradients carry an extra factor 0.5 relative to
the raw-Z parameter-shift derivative. E is clipped to
[1e-15, 1 - 1e-15] before both the loss and its derivative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .circuits import PREFIX_DATA, CircuitTemplate
from .sim import expectation_z, run_circuit

CLIP_EPS = 1e-15

SHIFT_SCALE = 0.5          # r in the two-point shift rule
SHIFT_ANGLE = 0.5 * np.pi  # s = pi / (4 r)


def clip_unit_interval(e: np.ndarray | float) -> np.ndarray | float:
    """Keep probabilities away from the log singularities at 0 and 1."""
    return np.clip(e, CLIP_EPS, 1.0 - CLIP_EPS)


@dataclass
class Estimator:
    """Expectation readout: exact (shots=None) or an m-shot binomial estimate.

    In shots mode every call draws fresh samples from ``rng`` and the
    cumulative shot count is tracked in ``samples_used``. Draws are consumed
    in the caller's canonical evaluation order, so a fixed rng seed fixes
    every estimate.
    """

    shots: int | None = None
    rng: np.random.Generator | int | None = None
    samples_used: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.shots is not None:
            if self.shots < 1:
                raise ValueError("shot count must be >= 1")
            if self.rng is None:
                raise ValueError("shots mode needs an rng (seed or Generator)")
        if isinstance(self.rng, (int, np.integer)):
            self.rng = np.random.default_rng(int(self.rng))

    @property
    def exact(self) -> bool:
        return self.shots is None

    def expectation(self, z: np.ndarray | float) -> np.ndarray | float:
        """Estimate of <Z> given its exact value(s)."""
        if self.shots is None:
            return z
        arr = np.asarray(z, dtype=float)
        p = np.clip((1.0 + arr) / 2.0, 0.0, 1.0)
        k = self.rng.binomial(self.shots, p)
        self.samples_used += self.shots * arr.size
        est = 2.0 * k / self.shots - 1.0
        return float(est) if np.isscalar(z) else est

    def readout(self, state: np.ndarray, qubit: int) -> float:
        return float(self.expectation(expectation_z(state, qubit)))


def shift_grad(
    template: CircuitTemplate,
    values: np.ndarray,
    slot: int,
    est: Estimator | None = None,
    state: np.ndarray | None = None,
    data: np.ndarray | None = None,
) -> float:
    """d<Z_readout>/d(slot angle) via the two-point shift rule.

    Evaluates the readout at slot angle +- pi/2 and returns half the
    difference. In shots mode the two evaluations draw independent samples.
    """
    template.slot_position(slot)
    if est is None:
        est = Estimator()
    shifted = np.array(values, dtype=float)
    qubit = template.readout_qubit
    shifted[slot] += SHIFT_ANGLE
    e_plus = est.readout(run_circuit(template, shifted, state, data), qubit)
    shifted[slot] -= 2.0 * SHIFT_ANGLE
    e_minus = est.readout(run_circuit(template, shifted, state, data), qubit)
    return SHIFT_SCALE * (e_plus - e_minus)


def fd_grad(
    template: CircuitTemplate,
    values: np.ndarray,
    slot: int,
    h: float = 1e-5,
    state: np.ndarray | None = None,
    data: np.ndarray | None = None,
) -> float:
    """Central finite difference of the exact readout expectation."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    shifted = np.array(values, dtype=float)
    qubit = template.readout_qubit
    shifted[slot] += h
    e_plus = expectation_z(run_circuit(template, shifted, state, data), qubit)
    shifted[slot] -= 2.0 * h
    e_minus = expectation_z(run_circuit(template, shifted, state, data), qubit)
    return (e_plus - e_minus) / (2.0 * h)


def bce_grad_factor(e: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """dL/dE of the binary cross entropy at (already clipped) E."""
    return -labels / e + (1.0 - labels) / (1.0 - e)


def batch_loss_grad(
    template: CircuitTemplate,
    values: np.ndarray,
    trainable: frozenset[int] | set[int] | list[int],
    features: np.ndarray,
    labels: np.ndarray,
    est: Estimator,
) -> tuple[np.ndarray, float]:
    """Mean cross-entropy gradient over a batch, for trainable slots only.

    Returns (gradient over sorted trainable slots, mean forward loss).
    Frozen slots cost no circuit evaluations. Canonical rng order in shots
    mode: one forward estimate per sample, then per layer (descending), per
    qubit (ascending), the + block then the - block, samples in batch order.
    """
    slots = sorted(set(trainable))
    if not slots:
        raise ValueError("no trainable slots")
    for s in slots:
        template.slot_position(s)
    feats = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2d array of features")
    if y.shape != (feats.shape[0],):
        raise ValueError("labels must match the batch length")
    values = np.asarray(values, dtype=float)
    if values.shape != (template.n_params,):
        raise ValueError(f"expected {template.n_params} parameter values")

    n = template.n_qubits
    batch = feats.shape[0]
    qubit = template.readout_qubit
    data = feats if template.prefix == PREFIX_DATA else None

    mats = engine.compile_template(template, values)
    checkpoints = engine.forward_checkpoints(mats, engine.initial_states(template, batch, data))

    z_fwd = np.asarray(est.expectation(engine.readout_z(checkpoints[-1], qubit, n)))
    e_fwd = clip_unit_interval((1.0 + z_fwd) / 2.0)
    loss = float(np.mean(-(y * np.log(e_fwd) + (1.0 - y) * np.log(1.0 - e_fwd))))
    dl_de = bce_grad_factor(e_fwd, y)

    by_layer: dict[int, list[int]] = {}
    for s in slots:
        layer, q = template.slot_position(s)
        by_layer.setdefault(layer, []).append(q)

    grads = np.zeros(len(slots))
    index_of = {s: i for i, s in enumerate(slots)}
    suffix = None
    for layer_idx in range(template.n_layers - 1, min(by_layer) - 1, -1):
        suffix = mats[layer_idx] if suffix is None else suffix @ mats[layer_idx]
        qubits = by_layer.get(layer_idx)
        if not qubits:
            continue
        block = engine.shift_block(checkpoints[layer_idx], template.layers[layer_idx], qubits, n)
        z = np.asarray(est.expectation(engine.readout_z(suffix @ block, qubit, n)))
        for i, q in enumerate(qubits):
            z_plus = z[2 * i * batch : (2 * i + 1) * batch]
            z_minus = z[(2 * i + 1) * batch : (2 * i + 2) * batch]
            de_dtheta = 0.5 * SHIFT_SCALE * (z_plus - z_minus)
            grads[index_of[layer_idx * n + q]] = float(np.mean(dl_de * de_dtheta))
    return grads, loss
