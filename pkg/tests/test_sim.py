"""Statevector gate operations against analytic values and the matrix oracle."""
import numpy as np
import pytest

from layerqc import circuits, sim

from oracles import expectation_z_density, fidelity, run_template

PI = np.pi


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return amps / np.linalg.norm(amps)


def random_template(n, layers, seed, prefix="none"):
    return circuits.build_template(n, layers, seed, prefix=prefix)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def test_rx_pi_flips_qubit():
    state = sim.apply_rotation(sim.zero_state(1), 0, "x", PI)
    assert sim.expectation_z(state, 0) == pytest.approx(-1.0)


def test_rz_leaves_z_readout_unchanged():
    for theta in (0.1, 1.0, 2.7, -0.4):
        state = sim.apply_rotation(sim.zero_state(1), 0, "z", theta)
        assert sim.expectation_z(state, 0) == pytest.approx(1.0)


@pytest.mark.parametrize("theta", [0.0, PI / 3, PI / 2])
def test_rx_gives_cosine_readout(theta):
    state = sim.apply_rotation(sim.zero_state(1), 0, "x", theta)
    assert sim.expectation_z(state, 0) == pytest.approx(np.cos(theta), abs=1e-12)


def test_rotation_periodic_in_4pi():
    state = random_state(3, 11)
    for axis in ("x", "y", "z"):
        a = sim.apply_rotation(state, 1, axis, 0.813)
        b = sim.apply_rotation(state, 1, axis, 0.813 + 4 * PI)
        assert np.max(np.abs(a - b)) < 1e-12


def test_rotation_rejects_bad_qubit():
    with pytest.raises(ValueError):
        sim.apply_rotation(sim.zero_state(2), 2, "x", 0.1)
    with pytest.raises(ValueError):
        sim.apply_rotation(sim.zero_state(2), 0, "q", 0.1)


# ---------------------------------------------------------------------------
# cz gate
# ---------------------------------------------------------------------------

def test_cz_fixes_states_without_11():
    state = sim.zero_state(2)
    out = sim.apply_cz(state, 0, 1)
    assert np.allclose(out, state)


def test_cz_negates_11_component():
    state = np.zeros(4, dtype=complex)
    state[[1, 3]] = 1 / np.sqrt(2)  # (|01> + |11>)/sqrt(2)
    out = sim.apply_cz(state, 0, 1)
    expected = np.zeros(4, dtype=complex)
    expected[1] = 1 / np.sqrt(2)
    expected[3] = -1 / np.sqrt(2)
    assert np.allclose(out, expected)


def test_cz_is_involution():
    state = random_state(3, 5)
    out = sim.apply_cz(sim.apply_cz(state, 0, 2), 0, 2)
    assert np.max(np.abs(out - state)) < 1e-12


def test_cz_rejects_equal_qubits():
    with pytest.raises(ValueError):
        sim.apply_cz(sim.zero_state(2), 1, 1)


def test_cz_order_within_layer_is_irrelevant():
    state = random_state(4, 7)
    pairs = circuits.all_to_all_entangler(4)
    perm = list(pairs)[::-1]
    a = state.copy()
    for p, q in pairs:
        a = sim.apply_cz(a, p, q)
    b = state.copy()
    for p, q in perm:
        b = sim.apply_cz(b, p, q)
    assert np.max(np.abs(a - b)) < 1e-12


# ---------------------------------------------------------------------------
# hadamard
# ---------------------------------------------------------------------------

def test_hadamard_balances_readout():
    state = sim.apply_hadamard(sim.zero_state(1), 0)
    assert sim.expectation_z(state, 0) == pytest.approx(0.0, abs=1e-12)


def test_hadamard_is_involution():
    state = random_state(2, 3)
    out = sim.apply_hadamard(sim.apply_hadamard(state, 1), 1)
    assert np.max(np.abs(out - state)) < 1e-12


def test_hadamard_on_one():
    one = np.array([0, 1], dtype=complex)
    out = sim.apply_hadamard(one, 0)
    assert np.allclose(out, np.array([1, -1]) / np.sqrt(2))


# ---------------------------------------------------------------------------
# exact readout
# ---------------------------------------------------------------------------

def test_expectation_all_zero_state():
    state = sim.zero_state(3)
    for q in range(3):
        assert sim.expectation_z(state, q) == pytest.approx(1.0)


def test_expectation_matches_density_matrix_oracle():
    template = random_template(3, 3, seed=42)
    rng = np.random.default_rng(0)
    values = rng.uniform(0, 2 * PI, template.n_params)
    state = sim.run_circuit(template, values)
    ref = run_template(template, values)
    for q in range(3):
        assert abs(sim.expectation_z(state, q) - expectation_z_density(ref, q, 3)) < 1e-10


def test_expectation_batched_rows():
    states = np.stack([sim.zero_state(2), sim.apply_rotation(sim.zero_state(2), 0, "x", PI)])
    z = sim.expectation_z(states, 0)
    assert z.shape == (2,)
    assert z[0] == pytest.approx(1.0)
    assert z[1] == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# sampled readout
# ---------------------------------------------------------------------------

def test_sampling_is_exact_for_degenerate_distribution():
    state = sim.zero_state(2)
    rng = np.random.default_rng(1)
    for m in (1, 3, 1000):
        assert sim.sample_expectation_z(state, 0, m, rng) == 1.0


def test_sampling_grid_and_mean():
    state = sim.apply_hadamard(sim.zero_state(1), 0)  # <Z> = 0
    rng = np.random.default_rng(2)
    reps = 100_000
    batch = np.tile(state, (reps, 1))
    est = sim.sample_expectation_z(batch, 0, 10, rng)
    grid = np.round((est + 1.0) * 5).astype(int)
    assert np.allclose(est, grid / 5.0 - 1.0)  # values on {-1, -0.8, ..., 1}
    assert abs(est.mean()) < 0.01


def test_sampling_variance_matches_binomial():
    theta = np.arccos(0.5)  # <Z> = 0.5
    state = sim.apply_rotation(sim.zero_state(1), 0, "x", theta)
    rng = np.random.default_rng(3)
    reps, m = 100_000, 10
    est = sim.sample_expectation_z(np.tile(state, (reps, 1)), 0, m, rng)
    expected_var = (1 - 0.5**2) / m
    assert abs(est.var() - expected_var) / expected_var < 0.10


def test_sampling_converges_to_exact():
    template = random_template(4, 3, seed=9, prefix="hadamard")
    values = np.random.default_rng(4).uniform(0, 2 * PI, template.n_params)
    state = sim.run_circuit(template, values)
    exact = sim.expectation_z(state, 3)
    rng = np.random.default_rng(5)
    assert abs(sim.sample_expectation_z(state, 3, 10**6, rng) - exact) < 5e-3


def test_sampling_rejects_zero_shots():
    with pytest.raises(ValueError):
        sim.sample_expectation_z(sim.zero_state(1), 0, 0, np.random.default_rng(0))


def test_sampling_deterministic_under_seed():
    state = sim.apply_hadamard(sim.zero_state(1), 0)
    a = sim.sample_expectation_z(state, 0, 50, np.random.default_rng(77))
    b = sim.sample_expectation_z(state, 0, 50, np.random.default_rng(77))
    assert a == b


# ---------------------------------------------------------------------------
# full circuit
# ---------------------------------------------------------------------------

def test_empty_template_is_identity():
    template = circuits.CircuitTemplate(n_qubits=2, layers=())
    state = random_state(2, 8)
    out = sim.run_circuit(template, np.array([]), state=state)
    assert np.allclose(out, state)


def test_zero_angles_fix_computational_zero_state():
    template = random_template(3, 4, seed=10)
    out = sim.run_circuit(template, np.zeros(template.n_params))
    assert np.allclose(out, sim.zero_state(3))


def test_run_circuit_matches_unitary_oracle():
    template = random_template(2, 2, seed=12)
    values = np.random.default_rng(13).uniform(0, 2 * PI, template.n_params)
    ours = sim.run_circuit(template, values)
    ref = run_template(template, values)
    assert fidelity(ours, ref) > 1 - 1e-10


def test_run_circuit_hadamard_prefix_matches_oracle():
    template = random_template(3, 2, seed=21, prefix="hadamard")
    values = np.random.default_rng(22).uniform(0, 2 * PI, template.n_params)
    assert fidelity(sim.run_circuit(template, values), run_template(template, values)) > 1 - 1e-10


def test_run_circuit_rejects_wrong_parameter_count():
    template = random_template(2, 2, seed=14)
    with pytest.raises(ValueError):
        sim.run_circuit(template, np.zeros(template.n_params - 1))


def test_norm_preserved_by_long_gate_sequences():
    template = random_template(4, 12, seed=15, prefix="hadamard")
    values = np.random.default_rng(16).uniform(0, 2 * PI, template.n_params)
    out = sim.run_circuit(template, values)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-10


# ---------------------------------------------------------------------------
# data encoding
# ---------------------------------------------------------------------------

def test_data_encoding_zero_is_identity():
    state = random_state(3, 17)
    out = sim.apply_data_encoding(state, np.zeros(3))
    assert np.allclose(out, state)


def test_data_encoding_half_pi_flips_qubit():
    out = sim.apply_data_encoding(sim.zero_state(1), np.array([PI / 2]))
    assert np.allclose(out, np.array([0, -1j]))
    assert sim.expectation_z(out, 0) == pytest.approx(-1.0)


def test_data_encoding_matches_oracle():
    template = circuits.CircuitTemplate(n_qubits=3, layers=(), prefix="data")
    d = np.random.default_rng(18).uniform(0, 2 * PI, 3)
    ours = sim.run_circuit(template, np.array([]), data=d)
    ref = run_template(template, np.array([]), data=d)
    assert fidelity(ours, ref) > 1 - 1e-10


def test_data_prefix_requires_features():
    template = circuits.CircuitTemplate(n_qubits=2, layers=(), prefix="data")
    with pytest.raises(ValueError):
        sim.run_circuit(template, np.array([]))
