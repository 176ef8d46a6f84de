"""Brute-force references, independent of the package's simulation route.

Everything here works with explicit 2^n x 2^n matrices: gate matrices come
from scipy's matrix exponential of Pauli generators, multi-qubit embedding
from explicit Kronecker products (qubit 0 as the most significant bit), and
expectations from a density-matrix trace. Slow on purpose; only for tests.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def rotation(axis: str, angle: float) -> np.ndarray:
    return expm(-0.5j * angle * PAULI[axis])


def data_rotation(d: float) -> np.ndarray:
    return expm(-1j * d * PAULI["x"])


def embed_1q(u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    left = np.eye(2**qubit, dtype=complex)
    right = np.eye(2 ** (n - qubit - 1), dtype=complex)
    return np.kron(np.kron(left, u), right)


def cz_matrix(a: int, b: int, n: int) -> np.ndarray:
    dim = 2**n
    diag = np.ones(dim, dtype=complex)
    for idx in range(dim):
        bit_a = (idx >> (n - 1 - a)) & 1
        bit_b = (idx >> (n - 1 - b)) & 1
        if bit_a and bit_b:
            diag[idx] = -1.0
    return np.diag(diag)


def z_matrix(qubit: int, n: int) -> np.ndarray:
    return embed_1q(PAULI["z"], qubit, n)


def template_unitary(template, values, data=None) -> np.ndarray:
    """Full circuit unitary by multiplying explicitly embedded gate matrices."""
    n = template.n_qubits
    u = np.eye(2**n, dtype=complex)
    if template.prefix == "hadamard":
        for q in range(n):
            u = embed_1q(HADAMARD, q, n) @ u
    elif template.prefix == "data":
        for q in range(n):
            u = embed_1q(data_rotation(data[q]), q, n) @ u
    for k, layer in enumerate(template.layers):
        for q in range(n):
            angle = values[k * n + q]
            u = embed_1q(rotation(layer.axes[q], angle), q, n) @ u
        for a, b in layer.cz_pairs:
            u = cz_matrix(a, b, n) @ u
    return u


def run_template(template, values, state=None, data=None) -> np.ndarray:
    n = template.n_qubits
    if state is None:
        state = np.zeros(2**n, dtype=complex)
        state[0] = 1.0
    return template_unitary(template, values, data) @ state


def expectation_z_density(state: np.ndarray, qubit: int, n: int) -> float:
    """<Z_qubit> as a density-matrix trace tr(rho Z)."""
    rho = np.outer(state, state.conj())
    return float(np.real(np.trace(rho @ z_matrix(qubit, n))))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2)
