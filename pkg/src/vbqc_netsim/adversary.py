"""Insider and outsider attacks.

An ``Adversary`` exposes four hooks that the protocol engines call at fixed
points: channel interceptors, the CA's Bell report, the key a party uses at
authentication, and the server behaviour for the computation phase. The base
class is the honest world; each strategy overrides only what it attacks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netsim import QuantumMessage, Role, make_bb84_qubit
from .primitives import Bb84Code, GraphSpec, basis_for, random_bb84
from .qstate import BellOutcome, MeasurementBasis, Qubit, alloc, cnot
from .registration import RawKey
from .vbqc import HonestServer

POLICIES = ("uniform", "Z", "X")


def intercept_resend(qubit: Qubit, policy: str, rng) -> tuple[Qubit, int, int]:
    """Measure in the policy basis and forward the matching eigenstate.

    Returns (replacement, basis bit, recorded bit).
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    basis = int(rng.integers(2)) if policy == "uniform" else int(policy == "X")
    bit = qubit.measure(basis_for(basis), rng)
    return make_bb84_qubit(Bb84Code.from_bits(basis, bit), "resent"), basis, bit


def entangle_probe(qubit: Qubit, probes: list) -> Qubit:
    """CNOT from the transiting qubit onto a fresh |0> probe the attacker keeps."""
    probe = Qubit([1, 0], "probe")
    cnot(qubit, probe)
    probes.append(probe)
    return qubit


def random_bell_ca(rng) -> BellOutcome:
    return BellOutcome(int(rng.integers(4)))


class Adversary:
    """No attack. Subclasses override the hooks they need."""

    kind = "none"

    def __init__(self, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.records: list = []

    def interceptors(self) -> dict:
        return {}

    def ca_report(self, outcome: BellOutcome, session) -> BellOutcome:
        return outcome

    def auth_key(self, party, key: RawKey, session) -> RawKey:
        return key

    def server(self):
        return HonestServer()

    def classical_tamper(self, label: str) -> str | None:
        """Tag for classical messages this adversary rewrites, if any."""
        return None

    def finish(self, session) -> None:
        """End-of-trial bookkeeping (e.g. reading out probes)."""


class _ChannelHook:
    def __init__(self, adversary: "Adversary", fn):
        self.adversary = adversary
        self.fn = fn

    def intercept(self, msg: QuantumMessage) -> list[str]:
        return self.fn(msg)


class InterceptResend(Adversary):
    kind = "intercept_resend"

    def __init__(self, rng=None, channel: str = "client->lba", policy: str = "uniform"):
        super().__init__(rng)
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.channel = channel
        self.policy = policy

    def _hook(self, msg: QuantumMessage) -> list[str]:
        bits = []
        for i, q in enumerate(msg.payload):
            msg.payload[i], basis, bit = intercept_resend(q, self.policy, self.rng)
            bits.append(2 * basis + bit)
        self.records.append(bits)
        return [f"intercept-resend {self.policy} x{len(bits)}"]

    def interceptors(self):
        return {self.channel: _ChannelHook(self, self._hook)}


class EntangleProbe(Adversary):
    kind = "entangle_probe"

    def __init__(self, rng=None, channel: str = "client->lba"):
        super().__init__(rng)
        self.channel = channel
        self.probes: list[Qubit] = []

    def _hook(self, msg: QuantumMessage) -> list[str]:
        for q in msg.payload:
            entangle_probe(q, self.probes)
        return [f"entangle-probe x{len(msg.payload)}"]

    def interceptors(self):
        return {self.channel: _ChannelHook(self, self._hook)}

    def finish(self, session) -> None:
        z = MeasurementBasis.z()
        bits = [p.measure(z, self.rng) for p in self.probes if not p.measured]
        self.records.append(bits)
        if session is not None and bits:
            session.net.record_action("eve", "probe-readout", f"{len(bits)} probes")
        self.probes = []


class RandomBellCA(Adversary):
    kind = "random_bell_ca"

    def ca_report(self, outcome, session):
        return random_bell_ca(self.rng)

    def classical_tamper(self, label):
        return "random-bell-report" if label == "R_AB" else None


class DishonestBalancer(Adversary):
    """A load balancer that measures ("measure") or swaps ("replace") what it relays or prepares."""

    kind = "dishonest_balancer"
    CHANNELS = {"lba": ("lba->client", "lba->ca"), "lbb": ("lbb->server", "lbb->ca")}

    def __init__(self, rng=None, mode: str = "measure", scope: str = "lba"):
        super().__init__(rng)
        if mode not in ("measure", "replace"):
            raise ValueError(f"unknown balancer mode {mode!r}")
        if scope not in self.CHANNELS:
            raise ValueError(f"unknown balancer scope {scope!r}")
        self.mode = mode
        self.scope = scope

    def _hook(self, msg: QuantumMessage) -> list[str]:
        for i, q in enumerate(msg.payload):
            if self.mode == "measure":
                msg.payload[i] = intercept_resend(q, "uniform", self.rng)[0]
            else:
                msg.payload[i] = make_bb84_qubit(random_bb84(self.rng), "swapped")
        return [f"balancer-{self.mode} x{len(msg.payload)}"]

    def interceptors(self):
        hook = _ChannelHook(self, self._hook)
        return {label: hook for label in self.CHANNELS[self.scope]}


class RandomKeyImpostor(Adversary):
    """Someone without the registered key tries to pass authentication as ``target``."""

    kind = "random_key_impostor"

    def __init__(self, rng=None, target: str = "client"):
        super().__init__(rng)
        self.target = Role(target)

    def auth_key(self, party, key, session):
        if party.role is not self.target:
            return key
        bits = [int(b) for b in self.rng.integers(2, size=len(key))]
        if session is not None:
            session.net.record_action("impostor", "impersonate", str(party))
        return RawKey(bits, key.owner)


# -- dishonest servers -------------------------------------------------------


class WrongGraphServer(HonestServer):
    """Ignores the requested graph state.

    RAM: ``all`` sends |0...0> in every register, ``one`` in a single random one.
    Trap protocols: discards the client's qubits and entangles fresh |+> states.
    """

    name = "wrong-graph"
    deviation = "wrong-graph"

    def __init__(self, rng, replacement: str = "all"):
        if replacement not in ("all", "one"):
            raise ValueError(f"unknown replacement {replacement!r}")
        self.rng = rng
        self.replacement = replacement
        self.corrupted: list[int] = []

    def registers(self, graph: GraphSpec, count: int, rng):
        regs = super().registers(graph, count, rng)
        bad = range(count) if self.replacement == "all" else [int(self.rng.integers(count))]
        self.corrupted = list(bad)
        for i in self.corrupted:
            regs[i] = alloc(graph.n)
        return regs

    def entangle(self, qubits, graph):
        fresh = [Qubit(np.array([1, 1], dtype=complex) / np.sqrt(2), "plus") for _ in qubits]
        return super().entangle(fresh, graph)


class TrapFlipServer(HonestServer):
    name = "trap-flip"
    deviation = None

    def __init__(self, rng, p: float = 0.5):
        if not 0 <= p <= 1:
            raise ValueError("flip probability must lie in [0, 1]")
        self.rng = rng
        self.p = p

    def measure(self, vertex, qubit, delta, rng):
        b = super().measure(vertex, qubit, delta, rng)
        self.flipped = bool(self.rng.random() < self.p)
        return b ^ self.flipped


class WrongGraphAdversary(Adversary):
    kind = "wrong_graph_server"

    def __init__(self, rng=None, replacement: str = "all"):
        super().__init__(rng)
        self._server = WrongGraphServer(self.rng, replacement)

    def server(self):
        return self._server


class TrapFlipAdversary(Adversary):
    kind = "trap_flip_server"

    def __init__(self, rng=None, p: float = 0.5):
        super().__init__(rng)
        self._server = TrapFlipServer(self.rng, p)

    def server(self):
        return self._server


KINDS = {
    "none": Adversary,
    "intercept_resend": InterceptResend,
    "entangle_probe": EntangleProbe,
    "random_bell_ca": RandomBellCA,
    "dishonest_balancer": DishonestBalancer,
    "wrong_graph_server": WrongGraphAdversary,
    "trap_flip_server": TrapFlipAdversary,
    "random_key_impostor": RandomKeyImpostor,
}


@dataclass
class AdversarySpec:
    kind: str = "none"
    params: dict = field(default_factory=dict)

    def build(self, rng) -> Adversary:
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary {self.kind!r}")
        return KINDS[self.kind](rng, **self.params)
