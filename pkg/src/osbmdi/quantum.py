"""Exact pure-state engine for small registers of named qubits.

Amplitude ordering is lexicographic over the register's qubit order, with
the first qubit as the most significant bit and bit 0 meaning |0>.  That
convention is stated here once and relied on everywhere else.

Operations never mutate their inputs: every gate and measurement returns a
new state, so values can be shared freely.  Measurements are destructive —
the measured qubits are removed from the returned register and survive only
as the classical record.

Bell-label convention: psi+/- live on |00> +/- |11>, phi+/- on |01> +/- |10>.
Note this is swapped relative to the more common psi/phi usage; the whole
package follows this labeling.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

ATOL = 1e-9

_SQ2 = 1.0 / np.sqrt(2.0)


class QuantumError(Exception):
    """Base class for register and operator errors."""


class InvalidRegisterError(QuantumError):
    """Register construction is inconsistent (duplicate ids, bad length, norm)."""


class UnknownQubitError(QuantumError):
    """An operation referenced a qubit id not present in the register."""


class InvalidOperatorError(QuantumError):
    """A supplied single-qubit operator is not unitary."""


class BellLabel(enum.Enum):
    """Labels for the four maximally entangled two-qubit states."""

    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"

    @property
    def correlated(self) -> bool:
        """True when computational-basis outcomes on both qubits agree."""
        return self in (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS)

    @classmethod
    def parse(cls, text: str) -> "BellLabel":
        for lab in cls:
            if lab.value == text:
                return lab
        raise ValueError(f"unknown Bell label {text!r}")

    def __str__(self) -> str:  # pragma: no cover - trivial
        return self.value


class PauliLabel(enum.Enum):
    """Encoding operators.  iY is used instead of Y so all matrices are real."""

    I = "I"
    X = "X"
    IY = "iY"
    Z = "Z"

    @property
    def bits(self) -> tuple[int, int]:
        return _PAULI_BITS[self]

    @property
    def symbol(self) -> int:
        """Two-bit symbol as an int in 0..3 (msb first: I=0, X=1, iY=2, Z=3)."""
        b0, b1 = self.bits
        return 2 * b0 + b1

    @classmethod
    def from_symbol(cls, symbol: int) -> "PauliLabel":
        return _PAULI_ORDER[symbol]

    @classmethod
    def parse(cls, text: str) -> "PauliLabel":
        for lab in cls:
            if lab.value == text:
                return lab
        raise ValueError(f"unknown Pauli label {text!r}")

    def __str__(self) -> str:  # pragma: no cover - trivial
        return self.value


_PAULI_ORDER = (PauliLabel.I, PauliLabel.X, PauliLabel.IY, PauliLabel.Z)
_PAULI_BITS = {
    PauliLabel.I: (0, 0),
    PauliLabel.X: (0, 1),
    PauliLabel.IY: (1, 0),
    PauliLabel.Z: (1, 1),
}

# All four matrices are real: iY|0> = -|1>, iY|1> = |0>.
PAULI_MATRICES: dict[PauliLabel, np.ndarray] = {
    PauliLabel.I: np.array([[1, 0], [0, 1]], dtype=complex),
    PauliLabel.X: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliLabel.IY: np.array([[0, 1], [-1, 0]], dtype=complex),
    PauliLabel.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

BELL_VECTORS: dict[BellLabel, np.ndarray] = {
    BellLabel.PSI_PLUS: np.array([_SQ2, 0, 0, _SQ2], dtype=complex),
    BellLabel.PSI_MINUS: np.array([_SQ2, 0, 0, -_SQ2], dtype=complex),
    BellLabel.PHI_PLUS: np.array([0, _SQ2, _SQ2, 0], dtype=complex),
    BellLabel.PHI_MINUS: np.array([0, _SQ2, -_SQ2, 0], dtype=complex),
}


@dataclass(frozen=True)
class StateVector:
    """Pure state over an ordered register of uniquely named qubits.

    The amplitude vector has length 2**k and unit squared norm (within
    ``ATOL``); both are checked at construction.  Treat instances as
    immutable — operations return new states.
    """

    qubit_ids: tuple[str, ...]
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(self.qubit_ids)
        if len(set(ids)) != len(ids):
            raise InvalidRegisterError(f"duplicate qubit ids in register: {ids}")
        object.__setattr__(self, "qubit_ids", ids)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 2 ** len(ids):
            raise InvalidRegisterError(
                f"amplitude length {amps.shape[0]} does not match {len(ids)} qubits"
            )
        norm2 = float(np.real(np.vdot(amps, amps)))
        if abs(norm2 - 1.0) > ATOL:
            raise InvalidRegisterError(f"squared norm {norm2} is not 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return len(self.qubit_ids)

    def axis(self, qubit_id: str) -> int:
        try:
            return self.qubit_ids.index(qubit_id)
        except ValueError:
            raise UnknownQubitError(f"qubit {qubit_id!r} not in register") from None

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.n_qubits)


def single_qubit(qubit_id: str, alpha: complex, beta: complex) -> StateVector:
    """One-qubit state alpha|0> + beta|1> (must be normalized)."""
    return StateVector((qubit_id,), np.array([alpha, beta], dtype=complex))


def basis_state(qubit_ids: tuple[str, ...], bits: tuple[int, ...]) -> StateVector:
    """Computational basis state |bits> over the given register."""
    if len(qubit_ids) != len(bits):
        raise InvalidRegisterError("bits/ids length mismatch")
    amps = np.zeros(2 ** len(qubit_ids), dtype=complex)
    index = 0
    for b in bits:
        index = (index << 1) | (b & 1)
    amps[index] = 1.0
    return StateVector(tuple(qubit_ids), amps)


def make_bell(label: BellLabel, q_a: str, q_b: str) -> StateVector:
    """Two-qubit Bell state for ``label`` on the register (q_a, q_b)."""
    return StateVector((q_a, q_b), BELL_VECTORS[label].copy())


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; qubit id sets must be disjoint."""
    overlap = set(a.qubit_ids) & set(b.qubit_ids)
    if overlap:
        raise InvalidRegisterError(f"overlapping qubit ids: {sorted(overlap)}")
    return StateVector(a.qubit_ids + b.qubit_ids, np.kron(a.amplitudes, b.amplitudes))


def _apply_1q_matrix(s: StateVector, qubit_id: str, matrix: np.ndarray) -> StateVector:
    ax = s.axis(qubit_id)
    t = np.tensordot(matrix, s.tensor_view(), axes=([1], [ax]))
    t = np.moveaxis(t, 0, ax)
    return StateVector(s.qubit_ids, t.reshape(-1))


def apply_pauli(s: StateVector, qubit_id: str, p: PauliLabel) -> StateVector:
    """Apply I, X, iY or Z to one qubit."""
    return _apply_1q_matrix(s, qubit_id, PAULI_MATRICES[p])


def apply_unitary1q(s: StateVector, qubit_id: str, u: np.ndarray) -> StateVector:
    """Apply an arbitrary 2x2 unitary to one qubit."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise InvalidOperatorError(f"operator shape {u.shape} is not 2x2")
    if not np.allclose(u.conj().T @ u, np.eye(2), atol=ATOL):
        raise InvalidOperatorError("operator is not unitary")
    return _apply_1q_matrix(s, qubit_id, u)


def apply_cnot(s: StateVector, control: str, target: str) -> StateVector:
    """Controlled-NOT in the computational basis."""
    if control == target:
        raise InvalidRegisterError("control and target must differ")
    c_ax, t_ax = s.axis(control), s.axis(target)
    t = s.tensor_view().copy()
    sel: list = [slice(None)] * s.n_qubits
    sel[c_ax] = 1
    # Indexing with an int drops the control axis, shifting later axes left.
    sub_t_ax = t_ax - 1 if t_ax > c_ax else t_ax
    t[tuple(sel)] = np.flip(t[tuple(sel)], axis=sub_t_ax)
    return StateVector(s.qubit_ids, t.reshape(-1))


def _bell_branches(
    s: StateVector, q_a: str, q_b: str
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Projection norms and (unnormalized) residual vectors per Bell label."""
    axes = (s.axis(q_a), s.axis(q_b))
    t = s.tensor_view()
    probs = np.empty(4)
    residuals = []
    for i, lab in enumerate(BellLabel):
        bv = BELL_VECTORS[lab].reshape(2, 2).conj()
        v = np.tensordot(bv, t, axes=([0, 1], list(axes)))
        probs[i] = float(np.real(np.vdot(v, v)))
        residuals.append(v)
    return probs, residuals


def bell_measure(
    s: StateVector, q_a: str, q_b: str, rng: np.random.Generator
) -> tuple[BellLabel, StateVector | None]:
    """Destructive Bell-basis measurement of the pair (q_a, q_b).

    The outcome is Born-sampled from ``rng``; the measured qubits are removed
    from the returned register (None when the register is exhausted).
    """
    if q_a == q_b:
        raise InvalidRegisterError("cannot Bell-measure a qubit against itself")
    probs, residuals = _bell_branches(s, q_a, q_b)
    pick = _sample_index(probs, rng)
    label = list(BellLabel)[pick]
    remaining = tuple(q for q in s.qubit_ids if q not in (q_a, q_b))
    if not remaining:
        return label, None
    v = residuals[pick] / np.sqrt(probs[pick])
    return label, StateVector(remaining, v.reshape(-1))


def comp_measure(
    s: StateVector, qubit_id: str, rng: np.random.Generator
) -> tuple[int, StateVector | None]:
    """Destructive computational-basis measurement of one qubit."""
    ax = s.axis(qubit_id)
    t = s.tensor_view()
    v1 = np.take(t, 1, axis=ax)
    p1 = float(np.real(np.vdot(v1, v1)))
    bit = 1 if rng.random() < p1 else 0
    v = v1 if bit else np.take(t, 0, axis=ax)
    p = p1 if bit else 1.0 - p1
    remaining = tuple(q for q in s.qubit_ids if q != qubit_id)
    if not remaining:
        return bit, None
    return bit, StateVector(remaining, (v / np.sqrt(p)).reshape(-1))


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    total = probs.sum()
    r = rng.random() * total
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if r < acc:
            return i
    return int(len(probs) - 1)


@dataclass(frozen=True)
class BellExpansion:
    """Coefficients of a 4-qubit state in a Bell (x) Bell product basis."""

    pairing: tuple[tuple[str, str], tuple[str, str]]
    coeffs: dict[tuple[BellLabel, BellLabel], complex]

    def coeff(self, first: BellLabel, second: BellLabel) -> complex:
        return self.coeffs[(first, second)]

    def nonzero(self, tol: float = 1e-12) -> dict[tuple[BellLabel, BellLabel], complex]:
        return {k: c for k, c in self.coeffs.items() if abs(c) > tol}

    def reconstruct(self) -> StateVector:
        """Re-sum the expansion (register order: pairing flattened)."""
        (a, b), (c, d) = self.pairing
        amps = np.zeros(16, dtype=complex)
        for (l1, l2), coeff in self.coeffs.items():
            amps += coeff * np.kron(BELL_VECTORS[l1], BELL_VECTORS[l2])
        return StateVector((a, b, c, d), amps)


def bell_expand(
    s: StateVector, pairing: tuple[tuple[str, str], tuple[str, str]]
) -> BellExpansion:
    """Expand a 4-qubit state over the Bell bases of two disjoint pairs."""
    if s.n_qubits != 4:
        raise InvalidRegisterError("bell_expand requires exactly 4 qubits")
    (a, b), (c, d) = pairing
    quartet = [a, b, c, d]
    if sorted(quartet) != sorted(s.qubit_ids):
        raise InvalidRegisterError("pairing is not a partition of the register")
    t = np.transpose(s.tensor_view(), [s.axis(q) for q in quartet])
    coeffs: dict[tuple[BellLabel, BellLabel], complex] = {}
    total = 0.0
    for l1 in BellLabel:
        b1 = BELL_VECTORS[l1].reshape(2, 2).conj()
        for l2 in BellLabel:
            b2 = BELL_VECTORS[l2].reshape(2, 2).conj()
            c_val = complex(np.einsum("ab,cd,abcd->", b1, b2, t))
            coeffs[(l1, l2)] = c_val
            total += abs(c_val) ** 2
    if abs(total - 1.0) > ATOL:
        raise InvalidRegisterError(f"expansion norm {total} is not 1")
    return BellExpansion(((a, b), (c, d)), coeffs)


def fidelity(s: StateVector, target: StateVector) -> float:
    """|<target|s>|^2; insensitive to global phase of either argument."""
    if set(s.qubit_ids) != set(target.qubit_ids):
        raise InvalidRegisterError("registers do not match")
    t = np.transpose(
        target.tensor_view(), [target.axis(q) for q in s.qubit_ids]
    ).reshape(-1)
    return float(abs(np.vdot(t, s.amplitudes)) ** 2)


def label_of(s: StateVector, tol: float = ATOL) -> BellLabel | None:
    """Bell label of a 2-qubit state, up to global phase; None if not a Bell state."""
    if s.n_qubits != 2:
        raise InvalidRegisterError("label_of requires a 2-qubit state")
    for lab in BellLabel:
        if abs(np.vdot(BELL_VECTORS[lab], s.amplitudes)) ** 2 > 1.0 - tol:
            return lab
    return None


# ---------------------------------------------------------------------------
# Label algebra derived from the engine itself.
#
# These tables are computed by simulation (not typed in by hand) so that the
# protocol layer's decoding and the reference decode table can cross-check
# each other.
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def swapped_home_label(
    label_a: BellLabel, label_b: BellLabel, announced: BellLabel
) -> BellLabel:
    """Home-pair label implied by Bell-measuring the travel halves.

    Two pairs (a_home, a_travel) and (b_home, b_travel) in ``label_a`` and
    ``label_b``; measuring (a_travel, b_travel) with outcome ``announced``
    leaves (a_home, b_home) in the returned label.  The map announced -> home
    is a bijection for every input product.
    """
    product = tensor(make_bell(label_a, "ah", "at"), make_bell(label_b, "bh", "bt"))
    exp = bell_expand(product, (("ah", "bh"), ("at", "bt")))
    for (home, travel), coeff in exp.coeffs.items():
        if travel is announced and abs(coeff) > 1e-9:
            return home
    raise QuantumError(
        f"no home label for {label_a}x{label_b} given {announced}"
    )  # pragma: no cover - the expansion always covers all four outcomes


@lru_cache(maxsize=None)
def pauli_frame(label: BellLabel, p: PauliLabel, side: int = 0) -> BellLabel:
    """Bell label after applying ``p`` to one qubit (side 0=first, 1=second)."""
    s = make_bell(label, "q0", "q1")
    s = apply_pauli(s, "q1" if side else "q0", p)
    out = label_of(s)
    if out is None:  # pragma: no cover - Pauli action is closed on Bell labels
        raise QuantumError("Pauli action left the Bell manifold")
    return out


@lru_cache(maxsize=None)
def frame_correction(start: BellLabel, end: BellLabel, side: int = 0) -> PauliLabel:
    """The unique Pauli mapping ``start`` to ``end`` on the given side."""
    for p in PauliLabel:
        if pauli_frame(start, p, side) is end:
            return p
    raise QuantumError(
        f"no Pauli maps {start} to {end}"
    )  # pragma: no cover - the frame action is transitive


class QubitArena:
    """Registry of disjoint registers with merge-on-demand and holder tracking.

    A protocol session owns one arena.  Registers are merged lazily when an
    operation spans two of them; measured qubits disappear.  Every qubit id
    is held by exactly one actor at a time; re-registering an id or failing
    a transfer expectation raises immediately.
    """

    def __init__(self) -> None:
        self._registers: dict[str, StateVector] = {}
        self._holders: dict[str, str] = {}

    def add_state(self, state: StateVector, holder: str) -> None:
        for q in state.qubit_ids:
            if q in self._registers:
                raise InvalidRegisterError(f"qubit {q!r} already registered")
        for q in state.qubit_ids:
            self._registers[q] = state
            self._holders[q] = holder

    def has(self, qubit_id: str) -> bool:
        return qubit_id in self._registers

    def state_of(self, qubit_id: str) -> StateVector:
        try:
            return self._registers[qubit_id]
        except KeyError:
            raise UnknownQubitError(f"qubit {qubit_id!r} not in arena") from None

    def holder_of(self, qubit_id: str) -> str:
        if qubit_id not in self._holders:
            raise UnknownQubitError(f"qubit {qubit_id!r} not in arena")
        return self._holders[qubit_id]

    def transfer(self, qubit_id: str, to: str, expect: str | None = None) -> None:
        current = self.holder_of(qubit_id)
        if expect is not None and current != expect:
            raise InvalidRegisterError(
                f"qubit {qubit_id!r} held by {current!r}, expected {expect!r}"
            )
        self._holders[qubit_id] = to

    def _swap_register(self, old: StateVector, new: StateVector | None) -> None:
        for q in old.qubit_ids:
            del self._registers[q]
        if new is not None:
            for q in new.qubit_ids:
                self._registers[q] = new

    def _joint(self, *qubit_ids: str) -> StateVector:
        state = self.state_of(qubit_ids[0])
        for q in qubit_ids[1:]:
            other = self.state_of(q)
            if other is not state:
                merged = tensor(state, other)
                self._swap_register(state, None)
                self._swap_register(other, None)
                for qq in merged.qubit_ids:
                    self._registers[qq] = merged
                state = merged
        return state

    def apply_pauli(self, qubit_id: str, p: PauliLabel) -> None:
        old = self.state_of(qubit_id)
        self._swap_register(old, apply_pauli(old, qubit_id, p))

    def apply_unitary(self, qubit_id: str, u: np.ndarray) -> None:
        old = self.state_of(qubit_id)
        self._swap_register(old, apply_unitary1q(old, qubit_id, u))

    def apply_cnot(self, control: str, target: str) -> None:
        joint = self._joint(control, target)
        self._swap_register(joint, apply_cnot(joint, control, target))

    def bell_measure(self, q_a: str, q_b: str, rng: np.random.Generator) -> BellLabel:
        joint = self._joint(q_a, q_b)
        label, rest = bell_measure(joint, q_a, q_b, rng)
        self._swap_register(joint, rest)
        for q in (q_a, q_b):
            del self._holders[q]
        return label

    def comp_measure(self, qubit_id: str, rng: np.random.Generator) -> int:
        state = self.state_of(qubit_id)
        bit, rest = comp_measure(state, qubit_id, rng)
        self._swap_register(state, rest)
        del self._holders[qubit_id]
        return bit
