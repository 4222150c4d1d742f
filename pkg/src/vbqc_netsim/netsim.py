"""Simulated network fabric: parties, channels, decoy checks, FIFO dispatch."""
from __future__ import annotations

import enum
import json
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .primitives import Bb84Code, bb84_amplitudes, random_bb84
from .qstate import GateKind, Qubit


class Role(enum.Enum):
    CLIENT = "client"
    SERVER = "server"
    LB_A = "lba"
    LB_B = "lbb"
    CA = "ca"


@dataclass(frozen=True)
class PartyId:
    role: Role
    index: int | None = None

    @property
    def kind(self) -> str:
        return self.role.value

    def __str__(self):
        return self.kind if self.index is None else f"{self.kind}{self.index}"


LB_A = PartyId(Role.LB_A)
LB_B = PartyId(Role.LB_B)
CA = PartyId(Role.CA)


def client(i: int) -> PartyId:
    return PartyId(Role.CLIENT, i)


def server(j: int) -> PartyId:
    return PartyId(Role.SERVER, j)


def server_for(client_index: int, n_servers: int) -> PartyId:
    if n_servers < 1:
        raise ValueError("need at least one server")
    return server(client_index % n_servers)


@dataclass(frozen=True)
class Channel:
    sender: PartyId
    receiver: PartyId

    @property
    def label(self) -> str:
        """Role-level name used to attach adversaries, e.g. ``lba->client``."""
        return f"{self.sender.kind}->{self.receiver.kind}"


@dataclass
class QuantumMessage:
    sender: PartyId
    receiver: PartyId
    payload: list
    tags: list = field(default_factory=list)

    def __post_init__(self):
        if not self.tags:
            self.tags = [str(i) for i in range(len(self.payload))]
        if len(self.tags) != len(self.payload):
            raise ValueError("one tag per payload qubit")


@dataclass
class LogEvent:
    step: int
    sender: str
    receiver: str
    kind: str
    label: str
    size: int
    intercepted: bool = False
    interceptions: list = field(default_factory=list)
    content: object = None

    def to_json(self) -> str:
        d = {
            "step": self.step,
            "sender": self.sender,
            "receiver": self.receiver,
            "kind": self.kind,
            "label": self.label,
            "size": self.size,
            "intercepted": self.intercepted,
        }
        if self.interceptions:
            d["interceptions"] = self.interceptions
        if self.content is not None:
            d["content"] = self.content
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


class ChannelLog:
    """Append-only event log for one trial."""

    def __init__(self):
        self._events: list[LogEvent] = []

    def __len__(self):
        return len(self._events)

    def __iter__(self):
        return iter(self._events)

    @property
    def next_step(self) -> int:
        return len(self._events)

    def append(self, event: LogEvent) -> None:
        if event.step != self.next_step:
            raise ValueError("events must be appended in step order")
        self._events.append(event)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self._events)


class Interceptor(Protocol):
    def intercept(self, msg: QuantumMessage) -> list[str]:
        """Tamper with ``msg.payload`` in place; return descriptions of actions taken."""


class Network:
    """Message fabric for one trial.

    ``interceptors`` maps channel labels to hooks; an explicit interceptor
    passed to ``send_quantum`` takes precedence. Noise is a depolarizing
    channel applied to every transmitted qubit.
    """

    def __init__(self, log: ChannelLog | None = None, noise: float = 0.0, noise_rng=None,
                 interceptors: dict | None = None):
        if not 0 <= noise <= 1:
            raise ValueError("noise must be a probability")
        self.log = ChannelLog() if log is None else log
        self.noise = noise
        self.noise_rng = noise_rng
        self.interceptors = dict(interceptors or {})

    def send_quantum(self, channel: Channel, msg: QuantumMessage, interceptor: Interceptor | None = None) -> QuantumMessage:
        if (msg.sender, msg.receiver) != (channel.sender, channel.receiver):
            raise ValueError(f"message {msg.sender}->{msg.receiver} does not match channel {channel.sender}->{channel.receiver}")
        hook = interceptor if interceptor is not None else self.interceptors.get(channel.label)
        actions = hook.intercept(msg) if hook is not None else []
        if self.noise > 0:
            for q in msg.payload:
                _depolarize(q, self.noise, self.noise_rng)
        self.log.append(LogEvent(self.log.next_step, str(msg.sender), str(msg.receiver), "quantum",
                                 channel.label, len(msg.payload), bool(actions), list(actions)))
        return msg

    def send_classical(self, sender: PartyId, receiver: PartyId, label: str, content, tampered_by: str | None = None):
        """Classical channels are reliable; the content lands in the log verbatim."""
        actions = [tampered_by] if tampered_by else []
        size = len(content) if hasattr(content, "__len__") else 1
        self.log.append(LogEvent(self.log.next_step, str(sender), str(receiver), "classical", label,
                                 size, bool(actions), actions, _jsonable(content)))
        return content

    def record_action(self, actor: PartyId | str, label: str, detail) -> None:
        """Non-message actions by adversarial parties."""
        self.log.append(LogEvent(self.log.next_step, str(actor), str(actor), "action", label, 0,
                                 True, [str(detail)]))


def _jsonable(content):
    if isinstance(content, np.ndarray):
        return content.tolist()
    if isinstance(content, (list, tuple)):
        return [_jsonable(c) for c in content]
    if isinstance(content, dict):
        return {str(k): _jsonable(v) for k, v in content.items()}
    if isinstance(content, (np.integer,)):
        return int(content)
    if isinstance(content, enum.Enum):
        return content.name
    return content


def _depolarize(q: Qubit, p: float, rng) -> None:
    if rng.random() >= p:
        return
    pauli = int(rng.integers(4))  # I, X, Y, Z uniformly: output is I/2 when applied
    if pauli in (1, 2):
        q.apply(GateKind.X)
    if pauli in (2, 3):
        q.apply(GateKind.Z)


# -- decoys ----------------------------------------------------------------


@dataclass
class DecoyPlan:
    positions: list
    codes: list
    threshold: float = 0.0

    def __post_init__(self):
        if len(self.positions) != len(self.codes):
            raise ValueError("one code per decoy position")
        if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
            raise ValueError("decoy positions must be strictly increasing")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must be in [0, 1]")


@dataclass
class DecoyResult:
    passed: bool
    error_rate: float
    errors: int
    stripped: list


def make_bb84_qubit(code: Bb84Code, name: str = "") -> Qubit:
    return Qubit(bb84_amplitudes(code), name)


def insert_decoys(payload: Sequence, d: int, rng, threshold: float = 0.0) -> tuple[list, DecoyPlan]:
    if d < 0:
        raise ValueError("decoy count must be non-negative")
    total = len(payload) + d
    positions = sorted(int(p) for p in rng.choice(total, size=d, replace=False)) if d else []
    codes = [random_bb84(rng) for _ in range(d)]
    out = []
    src = iter(payload)
    decoys = iter(codes)
    pos = set(positions)
    for i in range(total):
        out.append(make_bb84_qubit(next(decoys), "decoy") if i in pos else next(src))
    return out, DecoyPlan(positions, codes, threshold)


def decoy_check(payload: Sequence[Qubit], plan: DecoyPlan, rng) -> DecoyResult:
    """Measure each planned decoy in its preparation basis and strip it out."""
    if plan.positions and (plan.positions[0] < 0 or plan.positions[-1] >= len(payload)):
        raise ValueError("decoy plan positions fall outside the payload")
    errors = 0
    for pos, code in zip(plan.positions, plan.codes):
        if payload[pos].measure(code.basis, rng) != code.value_bit:
            errors += 1
    d = len(plan.positions)
    rate = errors / d if d else 0.0
    skip = set(plan.positions)
    stripped = [q for i, q in enumerate(payload) if i not in skip]
    return DecoyResult(rate <= plan.threshold, rate, errors, stripped)


def default_decoy_count(payload_len: int) -> int:
    return max(8, payload_len // 4)


# -- load balancing --------------------------------------------------------


def fifo_dispatch(requests: Iterable[int], n_servers: int) -> list[tuple[PartyId, PartyId]]:
    """Serve client requests in arrival order, binding client i to server i mod n."""
    if n_servers < 1:
        raise ValueError("need at least one server")
    queue = deque(requests)
    out = []
    while queue:
        i = queue.popleft()
        out.append((client(i), server_for(i, n_servers)))
    return out


# -- per-trial context -----------------------------------------------------


def stream(seed: int, trial: int, name: str) -> np.random.Generator:
    """Counter-based generator for one named party within one trial.

    Streams are keyed on (seed, trial, name), so adding or removing draws in
    one party never shifts another party's randomness.
    """
    tag = zlib.crc32(name.encode())
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(trial), tag))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PartyContext:
    party: PartyId
    rng: np.random.Generator
    keys: dict = field(default_factory=dict)
    inbox: list = field(default_factory=list)


@dataclass
class Session:
    """Everything one client/server pairing needs for one protocol run."""

    net: Network
    client: PartyContext
    server: PartyContext
    lba: PartyContext
    lbb: PartyContext
    ca: PartyContext
    adversary: object

    def tell(self, sender: PartyContext, receiver: PartyContext, label: str, content, tampered_by: str | None = None):
        self.net.send_classical(sender.party, receiver.party, label, content, tampered_by)
        receiver.inbox.append((label, content))
        return content

    def transmit(self, sender: PartyContext, receiver: PartyContext, payload: list, tags: list | None = None) -> list:
        msg = QuantumMessage(sender.party, receiver.party, list(payload), list(tags or []))
        self.net.send_quantum(Channel(sender.party, receiver.party), msg)
        receiver.inbox.append(("qubits", len(msg.payload)))
        return msg.payload
