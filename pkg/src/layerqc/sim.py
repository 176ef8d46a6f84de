"""Dense statevector simulator for few-qubit circuits.

Conventions, used consistently everywhere (including test oracles):

- Qubit 0 is the most significant bit of the basis index: |q0 q1 .. q_{n-1}>
  sits at index q0*2^(n-1) + .. + q_{n-1}.
- Rotation gates use the half-angle convention exp(-i*(angle/2)*P) for
  Pauli P, so the pi/2 parameter-shift rule is exact.
- The data-encoding gate exp(-i*d*X) is an X rotation of angle 2d.

All gate functions accept amplitudes of shape (..., 2**n) and act on the
last axis, so a batch of states is processed at the cost of one.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .circuits import PREFIX_DATA, PREFIX_HADAMARD, CircuitTemplate

_SQRT2_INV = 1.0 / math.sqrt(2.0)
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV


def zero_state(n_qubits: int) -> np.ndarray:
    """|0...0> on n qubits."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim != 2**n:
        raise ValueError(f"amplitude length {dim} is not a power of two")
    return n


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """2x2 matrix of exp(-i*(angle/2)*P) for P in {X, Y, Z}."""
    h = 0.5 * angle
    c, s = math.cos(h), math.sin(h)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "z":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    raise ValueError(f"unknown rotation axis {axis!r}")


def _check_qubit(qubit: int, n: int) -> None:
    if not 0 <= qubit < n:
        raise ValueError(f"qubit index {qubit} out of range for {n} qubits")


def _apply_1q(state: np.ndarray, qubit: int, u: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix to one qubit of (..., 2**n) amplitudes."""
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    rest = 1 << (n - qubit - 1)
    x = np.ascontiguousarray(state).reshape(-1, 2, rest)
    return np.matmul(u, x).reshape(state.shape)


def apply_rotation(state: np.ndarray, qubit: int, axis: str, angle: float) -> np.ndarray:
    """exp(-i*(angle/2)*P_qubit) applied to the state."""
    return _apply_1q(state, qubit, rotation_matrix(axis, angle))


def apply_hadamard(state: np.ndarray, qubit: int) -> np.ndarray:
    return _apply_1q(state, qubit, _HADAMARD)


@lru_cache(maxsize=512)
def cz_sign_vector(n_qubits: int, pairs: tuple[tuple[int, int], ...]) -> np.ndarray:
    """Diagonal of the combined CZ unitary: -1 where both pair bits are 1.

    Cached per (n_qubits, pairs); the returned array is read-only.
    """
    idx = np.arange(1 << n_qubits)
    sign = np.ones(1 << n_qubits)
    for a, b in pairs:
        bit_a = (idx >> (n_qubits - 1 - a)) & 1
        bit_b = (idx >> (n_qubits - 1 - b)) & 1
        sign *= 1.0 - 2.0 * (bit_a & bit_b)
    sign.setflags(write=False)
    return sign


def apply_cz(state: np.ndarray, a: int, b: int) -> np.ndarray:
    """Controlled-Z between qubits a and b."""
    n = n_qubits_of(state)
    _check_qubit(a, n)
    _check_qubit(b, n)
    if a == b:
        raise ValueError("CZ needs two distinct qubits")
    return state * cz_sign_vector(n, ((a, b),))


def apply_data_encoding(state: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Data prefix: exp(-i*d_q*X_q) on every qubit q."""
    n = n_qubits_of(state)
    d = np.asarray(features, dtype=float)
    if d.shape != (n,):
        raise ValueError(f"expected {n} features, got shape {d.shape}")
    for q in range(n):
        state = apply_rotation(state, q, "x", 2.0 * d[q])
    return state


def expectation_z(state: np.ndarray, qubit: int) -> float | np.ndarray:
    """Exact <Z_qubit>. Scalar for a single state, else one value per batch row."""
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    rest = 1 << (n - qubit - 1)
    probs = np.abs(np.ascontiguousarray(state).reshape(-1, 1 << qubit, 2, rest)) ** 2
    marginal = probs.sum(axis=(1, 3))
    z = marginal[:, 0] - marginal[:, 1]
    if state.ndim == 1:
        return float(z[0])
    return z.reshape(state.shape[:-1])


def sample_expectation_z(
    state: np.ndarray, qubit: int, shots: int, rng: np.random.Generator
) -> float | np.ndarray:
    """m-shot estimate of <Z_qubit>: k ~ Binomial(m, (1+<Z>)/2), returns 2k/m - 1."""
    if shots < 1:
        raise ValueError("shot count must be >= 1")
    z = expectation_z(state, qubit)
    p = np.clip((1.0 + np.asarray(z)) / 2.0, 0.0, 1.0)
    k = rng.binomial(shots, p)
    est = 2.0 * k / shots - 1.0
    if np.isscalar(z):
        return float(est)
    return est


def run_circuit(
    template: CircuitTemplate,
    values: np.ndarray,
    state: np.ndarray | None = None,
    data: np.ndarray | None = None,
) -> np.ndarray:
    """Apply prefix then every layer (rotations, then CZ pairs) in order.

    ``values`` is the flat angle vector, one entry per parameter slot.
    Templates with a data prefix need ``data`` (one feature per qubit).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (template.n_params,):
        raise ValueError(
            f"expected {template.n_params} parameter values, got shape {values.shape}"
        )
    n = template.n_qubits
    if state is None:
        state = zero_state(n)
    else:
        if n_qubits_of(state) != n:
            raise ValueError("input state size does not match template")
        state = np.array(state, dtype=complex)

    if template.prefix == PREFIX_HADAMARD:
        for q in range(n):
            state = apply_hadamard(state, q)
    elif template.prefix == PREFIX_DATA:
        if data is None:
            raise ValueError("template has a data prefix; pass the encoded features")
        state = apply_data_encoding(state, data)

    for k, layer in enumerate(template.layers):
        base = k * n
        for q in range(n):
            state = apply_rotation(state, q, layer.axes[q], values[base + q])
        if layer.cz_pairs:
            state = state * cz_sign_vector(n, layer.cz_pairs)
    return state
