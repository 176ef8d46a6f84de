"""Layerwise training of parametrized qubit circuits on a statevector simulator."""

from .classifier import PQCClassifier
from .data import PcaAngleEncoder
from .circuits import (
    CircuitTemplate,
    Layer,
    all_to_all_entangler,
    build_template,
    data_layer,
    enforce_x_in_block,
    grow,
    random_layer,
)
from .gradients import Estimator, batch_loss_grad, fd_grad, shift_grad
from .sim import (
    apply_cz,
    apply_data_encoding,
    apply_hadamard,
    apply_rotation,
    expectation_z,
    run_circuit,
    sample_expectation_z,
    zero_state,
)

__all__ = [
    "PQCClassifier",
    "PcaAngleEncoder",
    "CircuitTemplate",
    "Layer",
    "all_to_all_entangler",
    "build_template",
    "data_layer",
    "enforce_x_in_block",
    "grow",
    "random_layer",
    "Estimator",
    "batch_loss_grad",
    "fd_grad",
    "shift_grad",
    "apply_cz",
    "apply_data_encoding",
    "apply_hadamard",
    "apply_rotation",
    "expectation_z",
    "run_circuit",
    "sample_expectation_z",
    "zero_state",
]

__version__ = "0.1.0"
