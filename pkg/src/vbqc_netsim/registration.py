"""Registration phase: distribute raw keys between a client and its server.

Each variant differs only in who prepares the BB84 qubits and who checks the
decoys; all of them end with the CA Bell-measuring pairs and both ends sifting
on the announced outcome.

A kept position always has key bit = basis bit on both sides, so comparing
key bits publicly would never reveal a cheating CA. Instead each side carries
a *witness* per kept bit (the client's prepared value, the server's inverted
prepared value); honest Psi- pairs make the witnesses agree, a random report
makes them disagree half of the time.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from . import qstate
from .netsim import DecoyPlan, Session, decoy_check, default_decoy_count, insert_decoys, make_bb84_qubit
from .primitives import gates_for_state, random_bb84
from .qstate import BellOutcome, Qubit


class Variant(enum.Enum):
    RAM = "ram"
    PAS = "pas"
    CB = "cb"
    SHAN = "shan-baseline"


# stable abort codes, keyed by (variant, stage)
_STEP = {
    (Variant.RAM, "client-decoy"): "A1-2 decoy",
    (Variant.RAM, "lba-decoy"): "A1-2 decoy",
    (Variant.RAM, "lbb-decoy"): "A1-3 decoy",
    (Variant.RAM, "sample"): "A1-6 key-sample",
    (Variant.PAS, "lba-decoy"): "B1-2 decoy",
    (Variant.PAS, "lbb-decoy"): "B1-2 decoy",
    (Variant.PAS, "sample"): "B1-5 key-sample",
    (Variant.CB, "lba-decoy"): "C1-2 decoy",
    (Variant.CB, "lbb-decoy"): "C1-3 decoy",
    (Variant.CB, "sample"): "C1-6 key-sample",
    (Variant.SHAN, "client-decoy"): "S1-2 decoy",
    (Variant.SHAN, "server-decoy"): "S1-2 decoy",
    (Variant.SHAN, "sample"): "S1-5 key-sample",
}
KEY_TOO_SHORT = "key too short"


@dataclass
class RawKey:
    bits: list
    owner: tuple = ()
    witness: list | None = None

    def __post_init__(self):
        self.bits = [int(b) for b in self.bits]
        self.witness = list(self.bits) if self.witness is None else [int(w) for w in self.witness]
        if len(self.witness) != len(self.bits):
            raise ValueError("one witness bit per key bit")

    def __len__(self):
        return len(self.bits)

    def bitstring(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class SiftingRecord:
    basis_a: int
    basis_b: int
    bell_outcome: BellOutcome
    value_a: int | None = None   # prepared values; ground truth for soundness checks
    value_b: int | None = None

    @property
    def kept(self) -> bool:
        return self.bell_outcome is BellOutcome.PSI_MINUS and self.basis_a == self.basis_b

    @property
    def key_bit(self) -> int | None:
        return self.basis_a if self.kept else None


def sift_key(records, owner: tuple = (), side: str | None = None) -> RawKey:
    """Keep positions with outcome 11 and equal bases; key bit is the basis bit.

    ``side`` picks the witness: ``"client"`` uses the client's prepared values,
    ``"server"`` the inverse of the server's; ``None`` uses the key bits.
    """
    kept = [r for r in records if r.kept]
    bits = [r.key_bit for r in kept]
    if side is None:
        witness = None
    elif side == "client":
        witness = [r.value_a for r in kept]
    elif side == "server":
        witness = [1 - r.value_b for r in kept]
    else:
        raise ValueError(f"unknown side {side!r}")
    return RawKey(bits, owner, witness)


@dataclass
class KeySample:
    passed: bool
    rate: float
    positions: list
    key_a: RawKey
    key_b: RawKey


def estimate_key_error(key_a: RawKey, key_b: RawKey, sample_fraction: float, threshold: float, rng) -> KeySample:
    """Publicly compare a random ceil(fraction * len) sample of witnesses, then drop it."""
    if len(key_a) != len(key_b):
        raise ValueError(f"key lengths differ: {len(key_a)} vs {len(key_b)}")
    n = len(key_a)
    size = min(n, math.ceil(sample_fraction * n))
    positions = sorted(int(p) for p in rng.choice(n, size=size, replace=False)) if size else []
    errors = sum(key_a.witness[p] != key_b.witness[p] for p in positions)
    rate = errors / size if size else 0.0
    drop = set(positions)

    def rest(k: RawKey) -> RawKey:
        keep = [i for i in range(n) if i not in drop]
        return RawKey([k.bits[i] for i in keep], k.owner, [k.witness[i] for i in keep])

    return KeySample(rate <= threshold, rate, positions, rest(key_a), rest(key_b))


@dataclass
class RegistrationParams:
    variant: Variant
    m_payload: int = 64
    l: int | None = None   # RAM: decoys the client checks on Load_Balancer_A's sequence
    k: int | None = None   # decoys checked on every other leg
    sample_fraction: float = 0.25
    error_threshold: float = 0.0
    decoy_threshold: float = 0.0
    min_key_length: int = 16
    max_rounds: int = 64

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.l is None:
            self.l = default_decoy_count(self.m_payload)
        if self.k is None:
            self.k = default_decoy_count(self.m_payload)
        if self.m_payload < 1 or self.l < 1 or self.k < 1:
            raise ValueError("m_payload, l and k must be positive")
        if not 0 < self.sample_fraction < 1:
            raise ValueError("sample_fraction must lie in (0, 1)")
        if self.min_key_length < 1 or self.max_rounds < 1:
            raise ValueError("min_key_length and max_rounds must be positive")

    def raw_length_needed(self) -> int:
        """Smallest raw length that still leaves min_key_length after sampling."""
        n = self.min_key_length
        while n - math.ceil(self.sample_fraction * n) < self.min_key_length:
            n += 1
        return n


@dataclass(frozen=True)
class Abort:
    reason: str
    round: int = 0
    sample_rate: float | None = None

    @property
    def is_decoy(self) -> bool:
        return self.reason.endswith("decoy")


@dataclass
class RegistrationResult:
    client_key: RawKey
    server_key: RawKey
    records: list
    rounds: int
    pairs: int
    kept: int
    decoy_rates: list = field(default_factory=list)
    sample_rate: float = 0.0

    @property
    def kept_fraction(self) -> float:
        return self.kept / self.pairs if self.pairs else 0.0


class _Abort(Exception):
    pass


def _check(session: Session, checker, owner, payload, plan: DecoyPlan, label: str, code: str, rates: list) -> list:
    """Owner tells the checker the decoy plan; the checker measures and strips the decoys."""
    session.tell(owner, checker, f"{label}:decoy-plan", {"positions": plan.positions, "codes": [c.name for c in plan.codes]})
    res = decoy_check(payload, plan, checker.rng)
    rates.append(res.error_rate)
    session.tell(checker, owner, f"{label}:decoy-result", {"errors": res.errors, "passed": res.passed})
    if not res.passed:
        raise _Abort(code)
    return res.stripped


def _fresh(codes) -> list[Qubit]:
    return [make_bb84_qubit(c) for c in codes]


def _round(p: RegistrationParams, s: Session, rates: list) -> list[SiftingRecord]:
    v, m = p.variant, p.m_payload
    step = lambda stage: _STEP[(v, stage)]
    cl, sv, lba, lbb, ca = s.client, s.server, s.lba, s.lbb, s.ca

    if v is Variant.RAM:
        codes = [random_bb84(lba.rng) for _ in range(m + p.l + p.k)]
        seq = s.transmit(lba, cl, _fresh(codes))
        # client samples l positions; LB_A discloses their preparation
        picks = sorted(int(i) for i in cl.rng.choice(len(seq), size=p.l, replace=False))
        s.tell(cl, lba, "A1-2:positions", picks)
        plan = DecoyPlan(picks, [codes[i] for i in picks], p.decoy_threshold)
        s.tell(lba, cl, "A1-2:decoy-plan", {"positions": picks, "codes": [c.name for c in plan.codes]})
        res = decoy_check(seq, plan, cl.rng)
        rates.append(res.error_rate)
        if not res.passed:
            raise _Abort(step("client-decoy"))
        left = set(picks)
        codes = [c for i, c in enumerate(codes) if i not in left]
        seq = s.transmit(cl, lba, res.stripped)
        # client names k of the remaining m + k for LB_A to check; the rest is S_A
        picks = sorted(int(i) for i in cl.rng.choice(len(seq), size=p.k, replace=False))
        s.tell(cl, lba, "A1-2:positions", picks)
        plan = DecoyPlan(picks, [codes[i] for i in picks], p.decoy_threshold)
        res = decoy_check(seq, plan, lba.rng)
        rates.append(res.error_rate)
        s.tell(lba, cl, "A1-2:decoy-result", {"errors": res.errors, "passed": res.passed})
        if not res.passed:
            raise _Abort(step("lba-decoy"))
        left = set(picks)
        codes_a = [c for i, c in enumerate(codes) if i not in left]
        s.tell(lba, cl, "A1-2:states", [c.name for c in codes_a])
        s_a = res.stripped

        codes_b = [random_bb84(sv.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_b), p.k, sv.rng, p.decoy_threshold)
        seq = s.transmit(sv, lbb, seq)
        s_b = _check(s, lbb, sv, seq, plan, "A1-3", step("lbb-decoy"), rates)

    elif v is Variant.PAS:
        codes_a = [random_bb84(cl.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_a), p.k, cl.rng, p.decoy_threshold)
        seq = s.transmit(cl, lba, seq)
        s_a = _check(s, lba, cl, seq, plan, "B1-2", step("lba-decoy"), rates)
        codes_b = [random_bb84(sv.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_b), p.k, sv.rng, p.decoy_threshold)
        seq = s.transmit(sv, lbb, seq)
        s_b = _check(s, lbb, sv, seq, plan, "B1-2", step("lbb-decoy"), rates)

    elif v is Variant.CB:
        blanks = s.transmit(lba, cl, [Qubit([1, 0], "blank") for _ in range(m + p.k)])
        codes = [random_bb84(cl.rng) for _ in blanks]
        for q, c in zip(blanks, codes):
            for g in gates_for_state(c):
                q.apply(g)
        picks = sorted(int(i) for i in cl.rng.choice(len(blanks), size=p.k, replace=False))
        plan = DecoyPlan(picks, [codes[i] for i in picks], p.decoy_threshold)
        seq = s.transmit(cl, lba, blanks)
        s_a = _check(s, lba, cl, seq, plan, "C1-2", step("lba-decoy"), rates)
        left = set(picks)
        codes_a = [c for i, c in enumerate(codes) if i not in left]
        codes_b = [random_bb84(sv.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_b), p.k, sv.rng, p.decoy_threshold)
        seq = s.transmit(sv, lbb, seq)
        s_b = _check(s, lbb, sv, seq, plan, "C1-3", step("lbb-decoy"), rates)

    elif v is Variant.SHAN:
        codes_a = [random_bb84(lba.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_a), p.k, lba.rng, p.decoy_threshold)
        seq = s.transmit(lba, cl, seq)
        s_a = _check(s, cl, lba, seq, plan, "S1-2", step("client-decoy"), rates)
        codes_b = [random_bb84(lbb.rng) for _ in range(m)]
        seq, plan = insert_decoys(_fresh(codes_b), p.k, lbb.rng, p.decoy_threshold)
        seq = s.transmit(lbb, sv, seq)
        s_b = _check(s, sv, lbb, seq, plan, "S1-2", step("server-decoy"), rates)
        s.tell(lba, cl, "S1-4:states", [c.name for c in codes_a])
        s.tell(lbb, sv, "S1-4:states", [c.name for c in codes_b])
        s_a = s.transmit(cl, lba, s_a)
        s_b = s.transmit(sv, lbb, s_b)
    else:  # pragma: no cover
        raise ValueError(v)

    s_a = s.transmit(lba, ca, s_a)
    s_b = s.transmit(lbb, ca, s_b)
    truth = [qstate.bell_measure(a, b, ca.rng) for a, b in zip(s_a, s_b)]
    reported = [s.adversary.ca_report(r, s) for r in truth]
    payload = [int(r) for r in reported]
    tag = s.adversary.classical_tamper("R_AB")
    s.tell(ca, lba, "R_AB", payload, tag)
    s.tell(lba, cl, "R_AB", payload)
    s.tell(ca, lbb, "R_AB", payload, tag)
    s.tell(lbb, sv, "R_AB", payload)
    basis_a = [c.basis_bit for c in codes_a]
    basis_b = [c.basis_bit for c in codes_b]
    s.tell(cl, sv, "bases", basis_a)
    s.tell(sv, cl, "bases", basis_b)
    return [
        SiftingRecord(ca_.basis_bit, cb_.basis_bit, BellOutcome(r), ca_.value_bit, cb_.value_bit)
        for ca_, cb_, r in zip(codes_a, codes_b, reported)
    ]


def run_registration(params: RegistrationParams, session: Session) -> RegistrationResult | Abort:
    """Run rounds until the sifted key is long enough, then sample it.

    Returns an ``Abort`` value naming the failed step; decoy failures abort at
    once rather than retrying.
    """
    owner = (session.client.party, session.server.party)
    need = params.raw_length_needed()
    records: list[SiftingRecord] = []
    rates: list[float] = []
    kept = 0
    rounds = 0
    while kept < need:
        if rounds == params.max_rounds:
            return Abort(KEY_TOO_SHORT, rounds)
        rounds += 1
        try:
            batch = _round(params, session, rates)
        except _Abort as exc:
            return Abort(str(exc), rounds)
        records.extend(batch)
        kept += sum(r.kept for r in batch)

    key_a = sift_key(records, owner, "client")
    key_b = sift_key(records, owner, "server")
    sample = estimate_key_error(key_a, key_b, params.sample_fraction, params.error_threshold, session.client.rng)
    session.tell(session.client, session.server, "key-sample",
                 {"positions": sample.positions, "witness": [key_a.witness[i] for i in sample.positions]})
    session.tell(session.server, session.client, "key-sample",
                 {"witness": [key_b.witness[i] for i in sample.positions], "passed": sample.passed})
    if not sample.passed:
        return Abort(_STEP[(params.variant, "sample")], rounds, sample.rate)
    if len(sample.key_a) < params.min_key_length:
        return Abort(KEY_TOO_SHORT, rounds)
    session.client.keys[session.server.party] = sample.key_a
    session.server.keys[session.client.party] = sample.key_b
    return RegistrationResult(sample.key_a, sample.key_b, records, rounds, len(records), kept, rates, sample.rate)

