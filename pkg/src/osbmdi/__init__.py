"""Simulator for orthogonal-state-based MDI direct quantum messaging."""

__version__ = "0.1.0"

from .quantum import (  # noqa: F401
    BellLabel,
    PauliLabel,
    StateVector,
    QubitArena,
    make_bell,
    tensor,
    apply_pauli,
    apply_cnot,
    apply_unitary1q,
    bell_measure,
    comp_measure,
    bell_expand,
    fidelity,
)
