"""Protocol-level quantum building blocks.

BB84 and rotated single-qubit states, the four non-orthogonal two-qubit
authentication states, graph states and their stabilizer test, and the H/T
gate sequences used by clients that can only apply gates to blank qubits.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from . import qstate
from .qstate import GateKind, MeasurementBasis, Statevector

_SQ2 = 1 / math.sqrt(2)
MAX_GRAPH = 16


class Bb84Code(enum.Enum):
    Z0 = (0, 0)
    Z1 = (0, 1)
    X0 = (1, 0)
    X1 = (1, 1)

    @property
    def basis_bit(self) -> int:
        return self.value[0]

    @property
    def value_bit(self) -> int:
        return self.value[1]

    @classmethod
    def from_bits(cls, basis_bit: int, value_bit: int) -> "Bb84Code":
        return cls((int(basis_bit), int(value_bit)))

    @property
    def basis(self) -> MeasurementBasis:
        return basis_for(self.basis_bit)

    @property
    def label(self) -> str:
        return ("|0>", "|1>", "|+>", "|->")[2 * self.basis_bit + self.value_bit]


def basis_for(basis_bit: int) -> MeasurementBasis:
    """Basis bit 0 is Z, 1 is X."""
    return MeasurementBasis.x() if basis_bit else MeasurementBasis.z()


class NonOrthoCode(enum.IntEnum):
    """phi- -> 00, psi+ -> 01, Phi- -> 10, Psi+ -> 11 (capitals are the rotated pair)."""

    PHI_MINUS = 0
    PSI_PLUS = 1
    CAP_PHI_MINUS = 2
    CAP_PSI_PLUS = 3

    @property
    def bits(self) -> str:
        return format(int(self), "02b")


@dataclass(frozen=True)
class RotatedK:
    """The state |+_{k pi/4}>."""

    k: int


_BB84_AMPS = {
    Bb84Code.Z0: np.array([1, 0], dtype=complex),
    Bb84Code.Z1: np.array([0, 1], dtype=complex),
    Bb84Code.X0: np.array([_SQ2, _SQ2], dtype=complex),
    Bb84Code.X1: np.array([_SQ2, -_SQ2], dtype=complex),
}


def bb84_amplitudes(code: Bb84Code) -> np.ndarray:
    return _BB84_AMPS[code].copy()


def prepare_bb84(code: Bb84Code, qubit=0) -> Statevector:
    return Statevector(bb84_amplitudes(code), [qubit])


def rotated_amplitudes(k: int) -> np.ndarray:
    if not 0 <= k <= 7:
        raise ValueError(f"rotation index must be in 0..7, got {k}")
    return np.array([1, np.exp(1j * k * math.pi / 4)], dtype=complex) * _SQ2


def prepare_rotated(k: int, qubit=0) -> Statevector:
    return Statevector(rotated_amplitudes(k), [qubit])


def nonortho_amplitudes(code: NonOrthoCode) -> np.ndarray:
    phi_m = np.array([1, 0, 0, -1], dtype=complex) * _SQ2
    psi_p = np.array([0, 1, 1, 0], dtype=complex) * _SQ2
    if code is NonOrthoCode.PHI_MINUS:
        return phi_m
    if code is NonOrthoCode.PSI_PLUS:
        return psi_p
    if code is NonOrthoCode.CAP_PHI_MINUS:
        return (phi_m - psi_p) * _SQ2
    return (phi_m + psi_p) * _SQ2


def prepare_nonortho(code: NonOrthoCode, qubits: Sequence = (0, 1)) -> Statevector:
    return Statevector(nonortho_amplitudes(code), list(qubits))


# -- graphs ----------------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        norm = set()
        for e in self.edges:
            a, b = (int(v) for v in e)
            if a == b:
                raise ValueError(f"self-loop on vertex {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge {(a, b)} references a vertex outside 0..{self.n - 1}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    def neighbors(self, i: int) -> list[int]:
        if not 0 <= i < self.n:
            raise IndexError(f"vertex {i} out of range")
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        return cls(int(d["n"]), frozenset(tuple(e) for e in d.get("edges", [])))

    @classmethod
    def linear(cls, n: int) -> "GraphSpec":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def star(cls, n: int) -> "GraphSpec":
        return cls(n, frozenset((0, i) for i in range(1, n)))

    @classmethod
    def complete(cls, n: int) -> "GraphSpec":
        return cls(n, frozenset((a, b) for a in range(n) for b in range(a + 1, n)))

    @classmethod
    def ladder(cls, cols: int) -> "GraphSpec":
        """2 x cols lattice: two linear rows joined by rungs on every column.

        Vertex (row, col) is ``row * cols + col``.
        """
        edges = set()
        for r in range(2):
            for c in range(cols - 1):
                edges.add((r * cols + c, r * cols + c + 1))
        for c in range(cols):
            edges.add((c, cols + c))
        return cls(2 * cols, frozenset(edges))

    @classmethod
    def parse(cls, text: str) -> "GraphSpec":
        """Parse ``linear:4``, ``star:5``, ``complete:3``, ``ladder:3``."""
        kind, _, size = text.partition(":")
        makers = {"linear": cls.linear, "star": cls.star, "complete": cls.complete, "ladder": cls.ladder}
        if kind not in makers or not size.isdigit():
            raise ValueError(f"unknown graph spec {text!r}")
        return makers[kind](int(size))


def build_graph_state(g: GraphSpec, qubits: Sequence | None = None) -> Statevector:
    if g.n > MAX_GRAPH:
        raise qstate.CapacityError(f"graph of {g.n} vertices exceeds {MAX_GRAPH}")
    n = g.n
    # CZ products are diagonal: amplitude of |x> is (-1)^{sum over edges x_a x_b} / 2^{n/2}
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    parity = np.zeros(1 << n, dtype=np.int64)
    for a, b in g.edges:
        parity ^= bits[:, a] & bits[:, b]
    amps = (1 - 2 * parity).astype(complex) / math.sqrt(1 << n)
    return Statevector(amps, list(range(n)) if qubits is None else list(qubits))


def stabilizer_matrix(g: GraphSpec, i: int) -> np.ndarray:
    """Dense X_i prod_{j in N(i)} Z_j on the n-vertex register."""
    nb = set(g.neighbors(i))
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z = np.diag([1, -1]).astype(complex)
    out = np.ones((1, 1), dtype=complex)
    for v in range(g.n):
        op = x if v == i else z if v in nb else np.eye(2, dtype=complex)
        out = np.kron(out, op)
    return out


@dataclass(frozen=True)
class StabilizerOutcome:
    i: int
    x_i: int
    z_values: dict
    parity: int

    @property
    def passed(self) -> bool:
        return self.parity == 0


def stabilizer_test(state: Statevector, g: GraphSpec, i: int, rng) -> StabilizerOutcome:
    """Measure X on vertex ``i`` and Z on its neighbours; pass on even parity.

    Works on a copy: the tested register is consumed, the caller's value is untouched.
    Register qubit k is graph vertex k.
    """
    if state.n != g.n:
        raise ValueError(f"register has {state.n} qubits, graph has {g.n} vertices")
    nb = g.neighbors(i)
    ids = list(state.qubits)
    st = state
    x_i, st = qstate.measure(st, ids[i], MeasurementBasis.x(), rng)
    z_values = {}
    for j in nb:
        z_values[j], st = qstate.measure(st, ids[j], MeasurementBasis.z(), rng)
    parity = (x_i + sum(z_values.values())) % 2
    return StabilizerOutcome(i, x_i, z_values, parity)


# -- gate-only preparation -------------------------------------------------

Target = Union[Bb84Code, RotatedK]


def gates_for_state(target: Target) -> list[GateKind]:
    """H/T sequence, in application order, taking |0> to ``target`` up to phase.

    |1> = H T^4 H |0>,  |+> = H|0>,  |-> = T^4 H|0>,  |+_{k pi/4}> = T^k H|0>.
    """
    if isinstance(target, RotatedK):
        if not 0 <= target.k <= 7:
            raise ValueError(f"rotation index must be in 0..7, got {target.k}")
        return [GateKind.H] + [GateKind.T] * target.k
    return {
        Bb84Code.Z0: [],
        Bb84Code.Z1: [GateKind.H] + [GateKind.T] * 4 + [GateKind.H],
        Bb84Code.X0: [GateKind.H],
        Bb84Code.X1: [GateKind.H] + [GateKind.T] * 4,
    }[target]


def apply_kinds(state: Statevector, kinds: Iterable[GateKind], qubit=0) -> Statevector:
    for k in kinds:
        state = qstate.apply(state, qstate.Gate(k, (qubit,)))
    return state


def prepared_state(target: Target, qubit=0) -> Statevector:
    if isinstance(target, RotatedK):
        return prepare_rotated(target.k, qubit)
    return prepare_bb84(target, qubit)


_BY_INDEX = (Bb84Code.Z0, Bb84Code.Z1, Bb84Code.X0, Bb84Code.X1)


def random_bb84(rng) -> Bb84Code:
    return _BY_INDEX[int(rng.integers(4))]
