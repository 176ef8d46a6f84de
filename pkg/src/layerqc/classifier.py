"""Sklearn-style binary classifier wrapping the circuit training loop.

The estimator consumes angle features (one per qubit, e.g. from
PcaAngleEncoder) and exposes the usual fit/predict/predict_proba/score
surface plus get_params/set_params, so it composes with pipelines and
model-selection utilities.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .training import cdl_schedule, ll_schedule, predict_proba, train

STRATEGIES = ("ll", "cdl-zero", "cdl-random")


def _check_angle_features(X, n_qubits: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2d array of angle features")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if n_qubits is not None and X.shape[1] != n_qubits:
        raise ValueError(f"X has {X.shape[1]} features, model was fitted with {n_qubits}")
    return X


class PQCClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier read out from the last qubit of a layered circuit.

    Parameters
    ----------
    n_layers : total circuit depth.
    strategy : "ll" (layerwise: grow then retrain partitions),
        "cdl-zero" or "cdl-random" (full-depth training from zero or
        uniformly random angles).
    start_layers, grow_step, freeze_window, epochs_per_segment,
    partition_fraction, sweeps : layerwise schedule controls; ignored by the
        cdl strategies.
    epochs : total epochs for the cdl strategies; ignored by "ll".
    shots : measurements per expectation estimate; None trains with exact
        expectations.
    circuit_seed : seed of the random circuit instance.
    random_state : seed for shuffles, shot noise, and random init.
    """

    def __init__(
        self,
        n_layers: int = 21,
        strategy: str = "ll",
        start_layers: int = 1,
        grow_step: int = 2,
        freeze_window: int = 2,
        epochs_per_segment: int = 10,
        partition_fraction: float = 0.5,
        sweeps: int = 2,
        epochs: int = 150,
        max_epochs: int | None = None,
        learning_rate: float = 0.01,
        batch_size: int = 20,
        shots: int | None = 10,
        circuit_seed: int = 0,
        random_state: int = 0,
        initial_always_active: bool = True,
    ):
        self.n_layers = n_layers
        self.strategy = strategy
        self.start_layers = start_layers
        self.grow_step = grow_step
        self.freeze_window = freeze_window
        self.epochs_per_segment = epochs_per_segment
        self.partition_fraction = partition_fraction
        self.sweeps = sweeps
        self.epochs = epochs
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.shots = shots
        self.circuit_seed = circuit_seed
        self.random_state = random_state
        self.initial_always_active = initial_always_active

    def _schedule(self):
        if self.strategy == "ll":
            return ll_schedule(
                self.n_layers,
                self.start_layers,
                self.grow_step,
                self.freeze_window,
                self.epochs_per_segment,
                self.partition_fraction,
                self.sweeps,
                self.initial_always_active,
            )
        if self.strategy == "cdl-zero":
            return cdl_schedule(self.n_layers, self.epochs, "zero")
        if self.strategy == "cdl-random":
            return cdl_schedule(self.n_layers, self.epochs, "random")
        raise ValueError(f"unknown strategy {self.strategy!r} (choose from {STRATEGIES})")

    def fit(self, X, y, eval_set: tuple | None = None):
        """Train the circuit on angle features X and binary labels y.

        ``eval_set=(X_test, y_test)`` supplies the held-out set used for the
        per-epoch test-error curve in ``record_``; the training set is used
        when absent.
        """
        X = _check_angle_features(X)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly two classes, got {self.classes_}")
        y01 = (y == self.classes_[1]).astype(float)
        if eval_set is None:
            X_eval, y_eval01 = X, y01
        else:
            X_eval = _check_angle_features(eval_set[0], X.shape[1])
            y_eval01 = (np.asarray(eval_set[1]) == self.classes_[1]).astype(float)
        self.n_qubits_ = X.shape[1]
        self.record_ = train(
            self._schedule(),
            self.n_qubits_,
            self.circuit_seed,
            X,
            y01,
            X_eval,
            y_eval01,
            shots=self.shots,
            eta=self.learning_rate,
            batch_size=min(self.batch_size, X.shape[0]),
            seed=self.random_state,
            strategy=self.strategy,
            max_epochs=self.max_epochs,
        )
        self.template_ = self.record_.final_template
        self.values_ = self.record_.final_values
        return self

    def predict_proba(self, X):
        """Column-stacked [P(class 0), P(class 1)] from the exact readout."""
        self._check_fitted()
        X = _check_angle_features(X, self.n_qubits_)
        e = predict_proba(self.template_, self.values_, X)
        return np.column_stack([1.0 - e, e])

    def predict(self, X):
        """Readout above 0.5 predicts the second class; ties go to the first."""
        proba = self.predict_proba(X)[:, 1]
        return np.where(proba > 0.5, self.classes_[1], self.classes_[0])

    def _check_fitted(self):
        if not hasattr(self, "values_") or self.values_ is None:
            raise RuntimeError("classifier is not fitted")
