"""Exact pure-state simulation of small qubit registers.

Conventions:
- Big-endian indexing: the first qubit in ``Statevector.qubits`` is the most
  significant bit of the amplitude index.
- Measured qubits are removed from the register.
- ``Rz(a)`` is the phase gate ``diag(1, e^{ia})`` so that ``T == Rz(pi/4)``.

Two layers live here: value-style functions over ``Statevector`` (``apply``,
``measure``, ``measure_bell``, ...) and ``Qubit`` handles, which let qubits
travel independently through a network while sharing one joint state with
whatever they are entangled with.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

MAX_QUBITS = 20
ATOL = 1e-10

_SQ2 = 1 / math.sqrt(2)
TWO_PI = 2 * math.pi


class CapacityError(ValueError):
    """Register larger than the simulator supports."""


class GateKind(enum.Enum):
    H = "H"
    X = "X"
    Z = "Z"
    T = "T"
    RZ = "Rz"
    CZ = "CZ"

    @property
    def arity(self) -> int:
        return 2 if self is GateKind.CZ else 1


_FIXED = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
}


def _is_quarter_pi(angle: float) -> bool:
    k = angle / (math.pi / 4)
    return abs(k - round(k)) < 1e-9


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple
    angle: float = 0.0

    def __post_init__(self):
        if len(self.targets) != self.kind.arity:
            raise ValueError(f"{self.kind.value} takes {self.kind.arity} target(s), got {len(self.targets)}")
        if self.kind is GateKind.CZ and self.targets[0] == self.targets[1]:
            raise ValueError("CZ targets must differ")
        if self.kind is GateKind.RZ and not _is_quarter_pi(self.angle):
            raise ValueError(f"Rz angle must be a multiple of pi/4, got {self.angle}")

    def matrix(self) -> np.ndarray:
        if self.kind is GateKind.RZ:
            return np.array([[1, 0], [0, np.exp(1j * self.angle)]], dtype=complex)
        if self.kind is GateKind.CZ:
            return np.diag([1, 1, 1, -1]).astype(complex)
        return _FIXED[self.kind]


def H(q) -> Gate:
    return Gate(GateKind.H, (q,))


def X(q) -> Gate:
    return Gate(GateKind.X, (q,))


def Z(q) -> Gate:
    return Gate(GateKind.Z, (q,))


def T(q) -> Gate:
    return Gate(GateKind.T, (q,))


def Rz(q, angle: float) -> Gate:
    return Gate(GateKind.RZ, (q,), angle)


def CZ(a, b) -> Gate:
    return Gate(GateKind.CZ, (a, b))


def _check_unitaries() -> None:
    samples = [H(0), X(0), Z(0), T(0), Rz(0, math.pi / 4), CZ(0, 1)]
    for g in samples:
        m = g.matrix()
        if not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=ATOL):
            raise RuntimeError(f"gate {g.kind} is not unitary")


_check_unitaries()


class BasisKind(enum.Enum):
    Z = "Z"
    X = "X"
    PLANAR = "planar"


@dataclass(frozen=True)
class MeasurementBasis:
    """Outcome 0 is the first vector, outcome 1 the second.

    Z: {|0>, |1>};  X: {|+>, |->};  planar(d): {|0> +/- e^{id}|1>}/sqrt2.
    """

    kind: BasisKind
    angle: float = 0.0

    def __post_init__(self):
        if self.kind is BasisKind.PLANAR:
            object.__setattr__(self, "angle", self.angle % TWO_PI)

    @classmethod
    def z(cls) -> "MeasurementBasis":
        return cls(BasisKind.Z)

    @classmethod
    def x(cls) -> "MeasurementBasis":
        return cls(BasisKind.X)

    @classmethod
    def planar(cls, angle: float) -> "MeasurementBasis":
        return cls(BasisKind.PLANAR, angle)

    def vectors(self) -> np.ndarray:
        """Rows are the two basis kets."""
        if self.kind is BasisKind.Z:
            return _Z_VECS
        if self.kind is BasisKind.X:
            return _X_VECS
        ph = np.exp(1j * self.angle)
        return np.array([[1, ph], [1, -ph]], dtype=complex) * _SQ2


_Z_VECS = np.eye(2, dtype=complex)
_X_VECS = np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2


class BellOutcome(enum.IntEnum):
    """Two-bit encoding: Phi+ -> 00, Psi+ -> 01, Phi- -> 10, Psi- -> 11."""

    PHI_PLUS = 0
    PSI_PLUS = 1
    PHI_MINUS = 2
    PSI_MINUS = 3

    @property
    def bits(self) -> str:
        return format(int(self), "02b")


BELL_VECTORS = np.array(
    [
        [1, 0, 0, 1],
        [0, 1, 1, 0],
        [1, 0, 0, -1],
        [0, 1, -1, 0],
    ],
    dtype=complex,
) * _SQ2


@dataclass
class Statevector:
    amplitudes: np.ndarray
    qubits: list

    @classmethod
    def _raw(cls, amplitudes: np.ndarray, qubits: list) -> "Statevector":
        # internal constructor: caller guarantees shape and distinct ids
        obj = object.__new__(cls)
        obj.amplitudes = amplitudes
        obj.qubits = qubits
        return obj

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        self.qubits = list(self.qubits)
        if self.amplitudes.shape[0] != 1 << len(self.qubits):
            raise ValueError(
                f"{len(self.qubits)} qubits need {1 << len(self.qubits)} amplitudes, "
                f"got {self.amplitudes.shape[0]}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("duplicate qubit ids")

    @property
    def n(self) -> int:
        return len(self.qubits)

    def index(self, q: Hashable) -> int:
        try:
            return self.qubits.index(q)
        except ValueError:
            raise IndexError(f"qubit {q!r} not in register") from None

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy(), list(self.qubits))

    def tensor(self, other: "Statevector") -> "Statevector":
        if self.n + other.n > MAX_QUBITS:
            raise CapacityError(f"register of {self.n + other.n} qubits exceeds {MAX_QUBITS}")
        return Statevector._raw(np.outer(self.amplitudes, other.amplitudes).ravel(), self.qubits + other.qubits)

    def permuted(self, order: Sequence) -> "Statevector":
        """Same state with qubits listed in ``order``."""
        axes = [self.index(q) for q in order]
        if len(axes) != self.n:
            raise ValueError("order must list every qubit")
        psi = self.amplitudes.reshape([2] * self.n).transpose(axes)
        return Statevector(psi.reshape(-1), list(order))

    def equals(self, other: "Statevector", up_to_phase: bool = True) -> bool:
        if other.qubits != self.qubits:
            other = other.permuted(self.qubits)
        if up_to_phase:
            return abs(abs(np.vdot(self.amplitudes, other.amplitudes)) - 1) < ATOL
        return bool(np.allclose(self.amplitudes, other.amplitudes, atol=ATOL))


def alloc(n: int, initial: str | None = None, qubits: Sequence | None = None) -> Statevector:
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    initial = "0" * n if initial is None else initial
    if len(initial) != n or set(initial) - {"0", "1"}:
        raise ValueError(f"initial must be a {n}-character bitstring")
    amps = np.zeros(1 << n, dtype=complex)
    amps[int(initial, 2)] = 1
    return Statevector(amps, list(range(n)) if qubits is None else list(qubits))


def from_amplitudes(amplitudes, qubits: Sequence | None = None) -> Statevector:
    amps = np.asarray(amplitudes, dtype=complex)
    amps = amps / np.linalg.norm(amps)
    n = int(round(math.log2(amps.shape[0])))
    return Statevector(amps, list(range(n)) if qubits is None else list(qubits))


def apply(state: Statevector, gate: Gate) -> Statevector:
    n = state.n
    if gate.kind is GateKind.CZ:
        a, b = (state.index(q) for q in gate.targets)
        psi = state.amplitudes.reshape([2] * n).copy()
        idx = [slice(None)] * n
        idx[a] = 1
        idx[b] = 1
        psi[tuple(idx)] *= -1
        return Statevector._raw(psi.reshape(-1), state.qubits)
    axis = state.index(gate.targets[0])
    m = gate.matrix()
    if n == 1:
        return Statevector._raw(m @ state.amplitudes, state.qubits)
    psi = state.amplitudes.reshape(1 << axis, 2, -1)
    psi = np.einsum("ij,ajb->aib", m, psi)
    return Statevector._raw(psi.reshape(-1), state.qubits)


def apply_all(state: Statevector, gates: Sequence[Gate]) -> Statevector:
    for g in gates:
        state = apply(state, g)
    return state


def _sample(probs, rng: np.random.Generator) -> int:
    u = rng.random() * sum(probs)
    acc = 0.0
    last = 0
    for k, p in enumerate(probs):
        if p <= 0:
            continue
        acc += p
        last = k
        if u < acc:
            return k
    return last


def _project(state: Statevector, axes: list[int], vectors: np.ndarray, rng) -> tuple[int, Statevector]:
    n = state.n
    if n == len(axes):
        if n == 2 and axes[0] == 1:
            psi = state.amplitudes[[0, 2, 1, 3]]
        else:
            psi = state.amplitudes
        comps = vectors.conj() @ psi
        probs = (comps.real**2 + comps.imag**2).tolist()
        return _sample(probs, rng), Statevector._raw(np.ones(1, dtype=complex), [])
    rest = [i for i in range(n) if i not in axes]
    psi = state.amplitudes.reshape([2] * n).transpose(axes + rest).reshape(1 << len(axes), -1)
    comps = vectors.conj() @ psi
    probs = np.einsum("ij,ij->i", comps, comps.conj()).real.tolist()
    k = _sample(probs, rng)
    post = comps[k] / math.sqrt(probs[k])
    return k, Statevector._raw(post, [state.qubits[i] for i in rest])


def outcome_probabilities(state: Statevector, qubit: Hashable, basis: MeasurementBasis) -> np.ndarray:
    axis = state.index(qubit)
    psi = state.amplitudes.reshape(1 << axis, 2, -1)
    comps = np.einsum("kj,ajb->kab", basis.vectors().conj(), psi)
    return np.einsum("kab,kab->k", comps, comps.conj()).real


def measure(state: Statevector, qubit: Hashable, basis: MeasurementBasis, rng) -> tuple[int, Statevector]:
    """Born-rule measurement; the measured qubit leaves the register.

    Measuring the last qubit of a register returns an empty register.
    """
    axis = state.index(qubit)
    return _project(state, [axis], basis.vectors(), rng)


def collapse(state: Statevector, qubit: Hashable, basis: MeasurementBasis, outcome: int) -> tuple[float, Statevector | None]:
    """Probability of ``outcome`` and the normalized post-measurement register.

    The register is ``None`` when the outcome has zero probability.
    """
    axis = state.index(qubit)
    rest = [i for i in range(state.n) if i != axis]
    psi = state.amplitudes.reshape([2] * state.n).transpose([axis] + rest).reshape(2, -1)
    comp = basis.vectors()[outcome].conj() @ psi
    prob = float(np.vdot(comp, comp).real)
    if prob < ATOL:
        return 0.0, None
    return prob, Statevector._raw(comp / math.sqrt(prob), [state.qubits[i] for i in rest])


def measure_bell(state: Statevector, q1: Hashable, q2: Hashable, rng) -> tuple[BellOutcome, Statevector]:
    if q1 == q2:
        raise ValueError("Bell measurement needs two distinct qubits")
    k, post = _project(state, [state.index(q1), state.index(q2)], BELL_VECTORS, rng)
    return BellOutcome(k), post


def bell_probabilities(state: Statevector, q1: Hashable, q2: Hashable) -> np.ndarray:
    if q1 == q2:
        raise ValueError("Bell measurement needs two distinct qubits")
    axes = [state.index(q1), state.index(q2)]
    rest = [i for i in range(state.n) if i not in axes]
    psi = state.amplitudes.reshape([2] * state.n).transpose(axes + rest).reshape(4, -1)
    comps = BELL_VECTORS.conj() @ psi
    return np.einsum("ij,ij->i", comps, comps.conj()).real


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    qubits: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if not self.qubits:
            self.qubits = list(range(int(round(math.log2(self.matrix.shape[0])))))

    @property
    def n(self) -> int:
        return len(self.qubits)

    def purity(self) -> float:
        return float(np.einsum("ij,ji->", self.matrix, self.matrix).real)

    def is_valid(self, atol: float = ATOL) -> bool:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=atol):
            return False
        if abs(np.trace(m).real - 1) > atol:
            return False
        return bool(np.linalg.eigvalsh(m).min() >= -1e-9)

    def deviation_from(self, other: np.ndarray) -> float:
        """Largest absolute entry difference."""
        return float(np.abs(self.matrix - other).max())


def projector(state: Statevector) -> DensityMatrix:
    a = state.amplitudes
    return DensityMatrix(np.outer(a, a.conj()), list(state.qubits))


def mixture(states: Sequence[Statevector], weights: Sequence[float] | None = None) -> DensityMatrix:
    if weights is None:
        weights = [1 / len(states)] * len(states)
    rho = sum(w * projector(s).matrix for w, s in zip(weights, states))
    return DensityMatrix(rho, list(states[0].qubits))


def reduced_density(state: Statevector, subset: Sequence[Hashable]) -> DensityMatrix:
    if not subset:
        raise ValueError("subset must be nonempty")
    keep = [state.index(q) for q in subset]
    rest = [i for i in range(state.n) if i not in keep]
    psi = state.amplitudes.reshape([2] * state.n).transpose(keep + rest).reshape(1 << len(keep), -1)
    return DensityMatrix(psi @ psi.conj().T, list(subset))


def depolarize(rho: DensityMatrix, p: float) -> DensityMatrix:
    """Global depolarizing channel: (1-p) rho + p I/d."""
    d = rho.matrix.shape[0]
    return DensityMatrix((1 - p) * rho.matrix + p * np.eye(d) / d, list(rho.qubits))


def fidelity(state_or_density: Statevector | DensityMatrix, target: Statevector) -> float:
    t = target.amplitudes
    if isinstance(state_or_density, Statevector):
        if state_or_density.n != target.n:
            raise ValueError(f"dimension mismatch: {state_or_density.n} vs {target.n} qubits")
        return float(abs(np.vdot(t, state_or_density.amplitudes)) ** 2)
    m = state_or_density.matrix
    if m.shape[0] != t.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape[0]} vs {t.shape[0]}")
    return float(np.vdot(t, m @ t).real)


def expectation(state: Statevector, operator: np.ndarray) -> float:
    return float(np.vdot(state.amplitudes, operator @ state.amplitudes).real)


# -- qubit handles ---------------------------------------------------------


class _System:
    __slots__ = ("state",)

    def __init__(self, state: Statevector):
        self.state = state


class Qubit:
    """A handle on one qubit of a (possibly shared) joint state.

    Handles are the qubit ids inside their system's ``Statevector``. Two-qubit
    operations on qubits from different systems merge the systems first.
    """

    __slots__ = ("system", "name")

    def __init__(self, amplitudes=None, name: str = ""):
        self.name = name
        if amplitudes is not None:
            self.system = _System(Statevector._raw(np.asarray(amplitudes, dtype=complex), [self]))

    def __repr__(self):
        return f"Qubit({self.name or hex(id(self))})"

    @property
    def measured(self) -> bool:
        return self.system is None

    def _require(self):
        if self.system is None:
            raise RuntimeError(f"{self!r} has already been measured")

    def apply(self, kind: GateKind, angle: float = 0.0) -> "Qubit":
        self._require()
        st = self.system.state
        if st.n == 1 and kind is not GateKind.RZ:
            st.amplitudes = _FIXED[kind] @ st.amplitudes
        else:
            self.system.state = apply(st, Gate(kind, (self,), angle))
        return self

    def measure(self, basis: MeasurementBasis, rng) -> int:
        self._require()
        sys_ = self.system
        bit, sys_.state = measure(sys_.state, self, basis, rng)
        self.system = None
        return bit

    def state(self) -> Statevector:
        """The joint state this qubit currently belongs to."""
        self._require()
        return self.system.state

    def density(self) -> DensityMatrix:
        return reduced_density(self.state(), [self])

    def entangled_with(self) -> list["Qubit"]:
        return [q for q in self.state().qubits if q is not self]


def new_qubits(state: Statevector) -> list[Qubit]:
    """Wrap a k-qubit ``Statevector`` into k handles sharing one system."""
    handles = [Qubit(name=str(q)) for q in state.qubits]
    sys_ = _System(Statevector(state.amplitudes.copy(), handles))
    for h in handles:
        h.system = sys_
    return handles


def _merge(a: Qubit, b: Qubit) -> _System:
    a._require()
    b._require()
    if a.system is b.system:
        return a.system
    big, small = (a.system, b.system) if a.system.state.n >= b.system.state.n else (b.system, a.system)
    big.state = big.state.tensor(small.state)
    for q in small.state.qubits:
        q.system = big
    return big


def cz(a: Qubit, b: Qubit) -> None:
    sys_ = _merge(a, b)
    sys_.state = apply(sys_.state, CZ(a, b))


def cnot(control: Qubit, target: Qubit) -> None:
    target.apply(GateKind.H)
    cz(control, target)
    target.apply(GateKind.H)


def bell_measure(a: Qubit, b: Qubit, rng) -> BellOutcome:
    sys_ = _merge(a, b)
    outcome, sys_.state = measure_bell(sys_.state, a, b, rng)
    a.system = None
    b.system = None
    return outcome


def joint_state(qubits: Sequence[Qubit]) -> Statevector:
    """Joint state of ``qubits`` in the given order; they must form a closed system."""
    systems = []
    for q in qubits:
        q._require()
        if q.system not in systems:
            systems.append(q.system)
    state = systems[0].state
    for s in systems[1:]:
        state = state.tensor(s.state)
    if set(state.qubits) != set(qubits):
        raise ValueError("qubits are entangled with qubits outside the requested set")
    return state.permuted(list(qubits))
