"""Adaptive LQ regulation over a finite family of linear regimes.

Ensembles are plain dicts in the JSON schema used by the command-line tool::

    {"regimes": [{"A": [[0]], "B": [[1]], "C": [[1]], "G": [[1]]}, ...],
     "prior": [0.5, 0.5],
     "x0": [[1], [1]]}
"""

import json

import numpy as np

from . import _adaptive_lqr
from ._adaptive_lqr import (
    NumericalError,
    ValidationError,
    filter_constant_signals,
    is_minimal,
    riccati_algebraic,
    riccati_ode,
)

__all__ = [
    "NumericalError",
    "ValidationError",
    "bellman_residual",
    "commands",
    "filter_constant_signals",
    "is_minimal",
    "riccati_algebraic",
    "riccati_ode",
    "run",
    "solve_feedback",
    "validate_ensemble",
    "value",
]

commands = tuple(_adaptive_lqr.commands)


def _dump(ensemble):
    if isinstance(ensemble, str):
        return ensemble
    return json.dumps(ensemble, default=lambda a: np.asarray(a).tolist())


def _states(x):
    return [np.atleast_1d(np.asarray(v, dtype=float)) for v in x]


def validate_ensemble(ensemble):
    """List of {regime, field, message} diagnostics; empty when valid."""
    return _adaptive_lqr.validate_ensemble(_dump(ensemble))


def solve_feedback(ensemble, tolerance=1e-8):
    """Least-squares F with F G_j = B_j'K_j and its classification."""
    return _adaptive_lqr.solve_feedback(_dump(ensemble), tolerance)


def value(ensemble, x, p, kind="V_ce", lam=1.0):
    return _adaptive_lqr.value(_dump(ensemble), kind, _states(x),
                               np.asarray(p, dtype=float), lam)


def bellman_residual(ensemble, x, p, kind="V_ce", lam=1.0):
    """-L f - H(x, p, grad f): zero for solutions, >= 0 for supersolutions."""
    return _adaptive_lqr.bellman_residual(_dump(ensemble), kind, _states(x),
                                          np.asarray(p, dtype=float), lam)


class ExperimentError(RuntimeError):
    def __init__(self, status, message):
        super().__init__(message)
        self.status = status


def run(command, ensemble=None, **overrides):
    """Runs a command and returns (report dict, csv text).

    Keyword arguments are overrides, e.g. ``run("simulate", fleet, paths=500,
    policy="ce")``. Raises ExperimentError carrying the exit status on
    failure.
    """
    text = "" if ensemble is None else _dump(ensemble)
    status, report, csv, error = _adaptive_lqr.run(
        command, text, {k: str(v) for k, v in overrides.items()})
    if status != 0:
        raise ExperimentError(status, error)
    return json.loads(report), csv
