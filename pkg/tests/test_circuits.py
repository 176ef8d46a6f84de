"""Template construction, growth, enforcement, and serialization."""
import numpy as np
import pytest

from layerqc import circuits


def test_all_to_all_pair_counts():
    assert circuits.all_to_all_entangler(2) == ((0, 1),)
    assert len(circuits.all_to_all_entangler(4)) == 6
    assert len(circuits.all_to_all_entangler(8)) == 28


def test_all_to_all_rejects_single_qubit():
    with pytest.raises(ValueError):
        circuits.all_to_all_entangler(1)


def test_random_layer_reproducible():
    a = circuits.random_layer(5, np.random.default_rng(123))
    b = circuits.random_layer(5, np.random.default_rng(123))
    assert a == b


def test_random_layer_has_one_rotation_per_qubit():
    layer = circuits.random_layer(6, np.random.default_rng(0))
    assert len(layer.axes) == 6
    assert layer.cz_pairs == circuits.all_to_all_entangler(6)


def test_random_layer_axis_frequencies():
    # multinomial check: each axis per qubit within 3 sigma of 1/3
    n, draws = 3, 10_000
    rng = np.random.default_rng(99)
    counts = {(q, ax): 0 for q in range(n) for ax in circuits.AXES}
    for _ in range(draws):
        layer = circuits.random_layer(n, rng)
        for q, ax in enumerate(layer.axes):
            counts[(q, ax)] += 1
    sigma = np.sqrt(draws * (1 / 3) * (2 / 3))
    for value in counts.values():
        assert abs(value - draws / 3) < 3 * sigma


def test_enforce_x_keeps_block_with_x():
    layers = [
        circuits.Layer(("z", "x"), ((0, 1),)),
        circuits.Layer(("y", "z"), ((0, 1),)),
    ]
    assert circuits.enforce_x_in_block(layers, np.random.default_rng(1)) == layers


def test_enforce_x_rewrites_exactly_one_slot():
    layers = [circuits.Layer(("z", "z"), ((0, 1),)), circuits.Layer(("z", "z"), ((0, 1),))]
    out = circuits.enforce_x_in_block(layers, np.random.default_rng(2))
    x_count = sum(ax == "x" for layer in out for ax in layer.axes)
    changed = sum(a != b for la, lb in zip(layers, out) for a, b in zip(la.axes, lb.axes))
    assert x_count == 1 and changed == 1


def test_enforce_x_idempotent_once_x_exists():
    layers = [circuits.Layer(("z", "y"), ((0, 1),))]
    once = circuits.enforce_x_in_block(layers, np.random.default_rng(3))
    twice = circuits.enforce_x_in_block(once, np.random.default_rng(4))
    assert once == twice
    assert any(ax == "x" for layer in once for ax in layer.axes)


def test_enforce_x_rejects_empty_block():
    with pytest.raises(ValueError):
        circuits.enforce_x_in_block([], np.random.default_rng(0))


def test_data_layer_validates_shape_and_values():
    d = circuits.data_layer(np.array([0.0, 1.0, 2.0]))
    assert d.shape == (3,)
    with pytest.raises(ValueError):
        circuits.data_layer(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        circuits.data_layer(np.array([np.nan, 0.0]))


def test_grow_appends_layers_and_slots():
    template = circuits.build_template(4, 3, seed=7)
    grown = circuits.grow(template, 2)
    assert grown.n_layers == 5
    assert grown.n_params == template.n_params + 2 * 4
    assert grown.layers[:3] == template.layers


def test_grow_is_schedule_independent():
    base = circuits.build_template(3, 2, seed=11)
    once = circuits.grow(base, 2)
    twice = circuits.grow(circuits.grow(base, 1), 1)
    assert once == twice


def test_grow_requires_positive_step_and_seed():
    template = circuits.build_template(2, 1, seed=0)
    with pytest.raises(ValueError):
        circuits.grow(template, 0)
    unseeded = circuits.CircuitTemplate(2, template.layers)
    with pytest.raises(ValueError):
        circuits.grow(unseeded, 1)


def test_grow_enforced_block_contains_x():
    template = circuits.build_template(2, 1, seed=5, enforce_block=True)
    for _ in range(6):
        template = circuits.grow(template, 2, enforce_block=True)
    start = 1
    for lo, hi in template.enforced_blocks[1:]:
        assert (lo, hi) == (start, start + 2)
        block = template.layers[lo:hi]
        assert any(ax == "x" for layer in block for ax in layer.axes)
        start += 2


def test_slot_layout_is_contiguous():
    template = circuits.build_template(3, 4, seed=8)
    for k in range(4):
        assert list(template.layer_slots(k)) == list(range(k * 3, (k + 1) * 3))
    for slot in range(template.n_params):
        layer, qubit = template.slot_position(slot)
        assert slot == layer * 3 + qubit
    with pytest.raises(ValueError):
        template.slot_position(template.n_params)


def test_readout_defaults_to_last_qubit():
    template = circuits.build_template(5, 1, seed=1)
    assert template.readout_qubit == 4
    override = circuits.build_template(5, 1, seed=1, readout=2)
    assert override.readout_qubit == 2


def test_json_round_trip():
    template = circuits.build_template(4, 3, seed=21, prefix="data", enforce_block=True)
    back = circuits.CircuitTemplate.from_json(template.to_json())
    assert back == template


def test_layer_validation():
    with pytest.raises(ValueError):
        circuits.Layer(("x", "q"), ())
    with pytest.raises(ValueError):
        circuits.Layer(("x", "y"), ((0, 0),))
    with pytest.raises(ValueError):
        circuits.Layer(("x", "y"), ((0, 1), (1, 0)))
    with pytest.raises(ValueError):
        circuits.Layer(("x", "y"), ((0, 2),))


def test_template_validation():
    layer = circuits.Layer(("x", "y"), ((0, 1),))
    with pytest.raises(ValueError):
        circuits.CircuitTemplate(2, (layer,), prefix="wall")
    with pytest.raises(ValueError):
        circuits.CircuitTemplate(2, (layer,), readout=2)
    with pytest.raises(ValueError):
        circuits.CircuitTemplate(3, (layer,))
