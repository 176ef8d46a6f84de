"""Fast batched circuit evaluation for training loops.

States are held column-major, shape (2**n, batch), so one BLAS call applies
a layer to every sample at once. Each layer is compiled to a dense unitary
(rotation Kronecker product, CZ signs folded in as row scaling). Gradient
evaluation caches forward checkpoints and a running suffix product of layer
matrices, so the two shifted expectations per slot cost one matrix product
instead of a full re-simulation.

This module must agree with the per-gate reference path in sim.py to float
precision; tests cross-check the two routes.
"""
from __future__ import annotations

import numpy as np

from .circuits import PREFIX_DATA, PREFIX_HADAMARD, PREFIX_NONE, CircuitTemplate, Layer
from .sim import cz_sign_vector, rotation_matrix

_SHIFT = 0.5 * np.pi
_ROT_PLUS = {ax: rotation_matrix(ax, +_SHIFT) for ax in ("x", "y", "z")}
_ROT_MINUS = {ax: rotation_matrix(ax, -_SHIFT) for ax in ("x", "y", "z")}


def layer_matrix(layer: Layer, angles: np.ndarray, n_qubits: int) -> np.ndarray:
    """Dense unitary of one layer: CZ signs applied after the rotations."""
    mat = rotation_matrix(layer.axes[0], angles[0])
    for q in range(1, n_qubits):
        mat = np.kron(mat, rotation_matrix(layer.axes[q], angles[q]))
    if layer.cz_pairs:
        mat = cz_sign_vector(n_qubits, layer.cz_pairs)[:, None] * mat
    return mat


def compile_template(template: CircuitTemplate, values: np.ndarray) -> list[np.ndarray]:
    """One dense unitary per layer, in application order."""
    n = template.n_qubits
    return [
        layer_matrix(layer, values[k * n : (k + 1) * n], n)
        for k, layer in enumerate(template.layers)
    ]


def initial_states(
    template: CircuitTemplate, batch: int, data: np.ndarray | None = None
) -> np.ndarray:
    """Column-major states after the template prefix, shape (2**n, batch).

    For a data prefix, ``data`` has shape (batch, n_qubits) and each column
    becomes the product state with per-qubit factors (cos d, -i sin d).
    """
    n = template.n_qubits
    dim = 1 << n
    if template.prefix == PREFIX_DATA:
        if data is None:
            raise ValueError("template has a data prefix; pass the encoded features")
        d = np.asarray(data, dtype=float)
        if d.shape != (batch, n):
            raise ValueError(f"expected data of shape ({batch}, {n}), got {d.shape}")
        amps = np.ones((batch, 1), dtype=complex)
        for q in range(n):
            factor = np.stack([np.cos(d[:, q]), -1j * np.sin(d[:, q])], axis=1)
            amps = (amps[:, :, None] * factor[:, None, :]).reshape(batch, -1)
        return np.ascontiguousarray(amps.T)
    states = np.zeros((dim, batch), dtype=complex)
    if template.prefix == PREFIX_HADAMARD:
        states[:] = dim ** -0.5
    elif template.prefix == PREFIX_NONE:
        states[0] = 1.0
    else:
        raise ValueError(f"unknown prefix kind {template.prefix!r}")
    return states


def forward_checkpoints(matrices: list[np.ndarray], s0: np.ndarray) -> list[np.ndarray]:
    """States after the prefix and after each layer: length n_layers + 1."""
    states = [s0]
    for mat in matrices:
        states.append(mat @ states[-1])
    return states


def readout_z(states: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """<Z_qubit> per column of a (2**n, batch) state block."""
    rest = 1 << (n_qubits - qubit - 1)
    batch = states.shape[1]
    probs = np.abs(states.reshape(1 << qubit, 2, rest, batch)) ** 2
    marginal = probs.sum(axis=(0, 2))
    return marginal[0] - marginal[1]


def apply_1q_cols(states: np.ndarray, qubit: int, u: np.ndarray, n_qubits: int) -> np.ndarray:
    """Apply a 2x2 matrix to one qubit of column-major (2**n, batch) states."""
    rest_cols = (1 << (n_qubits - qubit - 1)) * states.shape[1]
    x = states.reshape(1 << qubit, 2, rest_cols)
    return np.matmul(u, x).reshape(states.shape)


def shift_block(checkpoint: np.ndarray, layer: Layer, qubits: list[int], n_qubits: int) -> np.ndarray:
    """Concatenate the +pi/2 / -pi/2 pre-rotated states for the given qubits.

    Column order: for each qubit (ascending), first the + block then the -
    block, each as wide as the incoming batch.
    """
    blocks = []
    for q in qubits:
        ax = layer.axes[q]
        blocks.append(apply_1q_cols(checkpoint, q, _ROT_PLUS[ax], n_qubits))
        blocks.append(apply_1q_cols(checkpoint, q, _ROT_MINUS[ax], n_qubits))
    return np.concatenate(blocks, axis=1)
