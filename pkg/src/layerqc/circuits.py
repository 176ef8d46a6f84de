"""Layered circuit templates: per-qubit rotations plus a fixed CZ entangler.

A template is immutable. Layer k owns parameter slots [k*n, (k+1)*n), slot
k*n + q being the rotation angle of qubit q in layer k. Axes are drawn from
a per-layer RNG substream, so a template regenerated at any depth from the
same seed has identical layers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeding

AXES = ("x", "y", "z")

PREFIX_NONE = "none"
PREFIX_HADAMARD = "hadamard"
PREFIX_DATA = "data"
_PREFIXES = (PREFIX_NONE, PREFIX_HADAMARD, PREFIX_DATA)


@dataclass(frozen=True)
class Layer:
    """One circuit layer: a rotation axis per qubit, then CZ pairs."""

    axes: tuple[str, ...]
    cz_pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = len(self.axes)
        for ax in self.axes:
            if ax not in AXES:
                raise ValueError(f"unknown rotation axis {ax!r}")
        seen = set()
        for a, b in self.cz_pairs:
            if a == b:
                raise ValueError(f"CZ pair ({a}, {b}) must couple distinct qubits")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"CZ pair ({a}, {b}) out of range for {n} qubits")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate CZ pair {key}")
            seen.add(key)


@dataclass(frozen=True)
class CircuitTemplate:
    """Immutable circuit layout: prefix, rotation layers, readout qubit.

    ``seed`` is the entropy source for layer axes; ``enforced_blocks``
    records which contiguous layer ranges had an X rotation enforced.
    """

    n_qubits: int
    layers: tuple[Layer, ...]
    prefix: str = PREFIX_NONE
    readout: int | None = None
    seed: int | None = None
    enforced_blocks: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.prefix not in _PREFIXES:
            raise ValueError(f"unknown prefix kind {self.prefix!r}")
        for layer in self.layers:
            if len(layer.axes) != self.n_qubits:
                raise ValueError("every layer needs exactly one rotation per qubit")
        if self.readout is not None and not 0 <= self.readout < self.n_qubits:
            raise ValueError(f"readout qubit {self.readout} out of range")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return self.n_qubits * len(self.layers)

    @property
    def readout_qubit(self) -> int:
        return self.n_qubits - 1 if self.readout is None else self.readout

    def slot_position(self, slot: int) -> tuple[int, int]:
        """Map a parameter slot to its (layer, qubit)."""
        if not 0 <= slot < self.n_params:
            raise ValueError(f"slot {slot} out of range for {self.n_params} parameters")
        layer, qubit = divmod(slot, self.n_qubits)
        return layer, qubit

    def layer_slots(self, layer: int) -> range:
        return range(layer * self.n_qubits, (layer + 1) * self.n_qubits)

    def to_json(self) -> str:
        doc = {
            "n_qubits": self.n_qubits,
            "prefix": self.prefix,
            "readout": self.readout,
            "readout_qubit": self.readout_qubit,
            "seed": self.seed,
            "enforced_blocks": [list(b) for b in self.enforced_blocks],
            "layers": [
                {"axes": list(l.axes), "cz_pairs": [list(p) for p in l.cz_pairs]}
                for l in self.layers
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CircuitTemplate":
        doc = json.loads(text)
        layers = tuple(
            Layer(tuple(l["axes"]), tuple(tuple(p) for p in l["cz_pairs"]))
            for l in doc["layers"]
        )
        return cls(
            n_qubits=doc["n_qubits"],
            layers=layers,
            prefix=doc["prefix"],
            readout=doc["readout"],
            seed=doc.get("seed"),
            enforced_blocks=tuple(tuple(b) for b in doc.get("enforced_blocks", [])),
        )


def all_to_all_entangler(n_qubits: int) -> tuple[tuple[int, int], ...]:
    """All n(n-1)/2 unordered CZ pairs (i, j) with i < j."""
    if n_qubits < 2:
        raise ValueError("all-to-all entangler needs at least 2 qubits")
    return tuple((i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits))


def random_layer(n_qubits: int, rng: np.random.Generator) -> Layer:
    """Layer with a uniformly random rotation axis per qubit.

    Single-qubit circuits get an empty entangler; otherwise all-to-all CZ.
    """
    axes = tuple(AXES[i] for i in rng.integers(0, 3, size=n_qubits))
    pairs = all_to_all_entangler(n_qubits) if n_qubits >= 2 else ()
    return Layer(axes, pairs)


def enforce_x_in_block(layers: list[Layer], rng: np.random.Generator) -> list[Layer]:
    """Guarantee at least one X rotation within a block of layers.

    If none of the rotations in the block is an X, one uniformly chosen
    rotation slot is reassigned to X; otherwise the block is returned
    unchanged. Idempotent once an X exists.
    """
    if not layers:
        raise ValueError("cannot enforce an X rotation in an empty block")
    if any("x" in layer.axes for layer in layers):
        return list(layers)
    n = len(layers[0].axes)
    pick = int(rng.integers(0, len(layers) * n))
    li, qi = divmod(pick, n)
    axes = list(layers[li].axes)
    axes[qi] = "x"
    out = list(layers)
    out[li] = replace(layers[li], axes=tuple(axes))
    return out


def data_layer(features: np.ndarray) -> np.ndarray:
    """Validated angles for the data-encoding prefix exp(-i*d_q*X_q).

    These rotations use the feature value as the full generator angle and
    are never differentiated.
    """
    d = np.asarray(features, dtype=float)
    if d.ndim != 1:
        raise ValueError("data layer expects a flat feature vector")
    if not np.all(np.isfinite(d)):
        raise ValueError("data layer features must be finite")
    return d


def _draw_layer(n_qubits: int, seed: int, index: int) -> Layer:
    return random_layer(n_qubits, seeding.substream(seed, seeding.LAYER, index))


def build_template(
    n_qubits: int,
    n_layers: int,
    seed: int,
    prefix: str = PREFIX_NONE,
    readout: int | None = None,
    enforce_block: bool = False,
) -> CircuitTemplate:
    """Random template with one substream per layer index.

    With ``enforce_block`` the whole initial range [0, n_layers) is treated
    as one trained block and gets an X rotation enforced.
    """
    layers = [_draw_layer(n_qubits, seed, k) for k in range(n_layers)]
    blocks: tuple[tuple[int, int], ...] = ()
    if enforce_block and n_layers > 0:
        layers = enforce_x_in_block(layers, seeding.substream(seed, seeding.ENFORCE, 0))
        blocks = ((0, n_layers),)
    return CircuitTemplate(
        n_qubits=n_qubits,
        layers=tuple(layers),
        prefix=prefix,
        readout=readout,
        seed=seed,
        enforced_blocks=blocks,
    )


def grow(template: CircuitTemplate, p: int, enforce_block: bool = False) -> CircuitTemplate:
    """Append p freshly drawn layers; existing layers and slots are untouched.

    New parameter slots follow the existing ones. With ``enforce_block`` the
    appended range is treated as a trained block (X rotation enforced, drawn
    from a substream keyed by the block's start layer).
    """
    if p < 1:
        raise ValueError("grow needs p >= 1")
    if template.seed is None:
        raise ValueError("template has no seed recorded; cannot grow deterministically")
    start = template.n_layers
    new_layers = [_draw_layer(template.n_qubits, template.seed, start + i) for i in range(p)]
    blocks = template.enforced_blocks
    if enforce_block:
        rng = seeding.substream(template.seed, seeding.ENFORCE, start)
        new_layers = enforce_x_in_block(new_layers, rng)
        blocks = blocks + ((start, start + p),)
    return replace(template, layers=template.layers + tuple(new_layers), enforced_blocks=blocks)
