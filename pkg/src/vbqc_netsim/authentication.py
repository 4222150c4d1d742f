"""Mutual identity authentication between a client and its server.

Two engines share one verdict type:

* entangled: the CA hands out non-orthogonal two-qubit states, both ends
  measure in bases dictated by their key and cross-check revealed results;
* key-encoded: both ends encode key bit pairs as BB84 states, the CA measures
  them in random bases and publishes the results.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from . import qstate
from .netsim import DecoyPlan, Session, decoy_check, default_decoy_count, insert_decoys, make_bb84_qubit
from .primitives import Bb84Code, NonOrthoCode, basis_for, gates_for_state, nonortho_amplitudes
from .qstate import Qubit
from .registration import RawKey


class AuthKind(enum.Enum):
    ENTANGLED = "entangled"
    KEY_ENCODED = "key-encoded"


@dataclass
class AuthRound:
    kind: AuthKind
    broadcast_codes: list | None = None
    M: list | None = None
    revealed: list = field(default_factory=list)
    r_a: list = field(default_factory=list)
    r_b: list = field(default_factory=list)


@dataclass
class AuthVerdict:
    client_accepts_server: bool
    server_accepts_client: bool
    mismatch_positions: list = field(default_factory=list)
    reason: str = ""
    informative: int = 0
    checked: int = 0

    @property
    def mutual(self) -> bool:
        return self.client_accepts_server and self.server_accepts_client


# -- entangled-pair authentication -------------------------------------------


@functools.lru_cache(maxsize=None)
def _joint(code: NonOrthoCode, basis_a: int, basis_b: int) -> tuple:
    """P(R_A, R_B) as a nested tuple, by projecting the pair onto product bases."""
    psi = nonortho_amplitudes(code).reshape(2, 2)
    va = basis_for(basis_a).vectors()
    vb = basis_for(basis_b).vectors()
    amps = va.conj() @ psi @ vb.conj().T
    p = np.abs(amps) ** 2
    p[p < qstate.ATOL] = 0.0
    return tuple(tuple(float(x) for x in row) for row in p)


def correlation_table(code: NonOrthoCode, basis_a: int, basis_b: int) -> dict:
    """Conditional distribution {R_A: {R_B: prob}} for one shared pair.

    Outcomes with zero probability are left out, so a singleton inner dict
    marks a deterministic correlation.
    """
    joint = _joint(NonOrthoCode(code), int(basis_a), int(basis_b))
    out = {}
    for ra in (0, 1):
        total = sum(joint[ra])
        if total > 0:
            out[ra] = {rb: joint[ra][rb] / total for rb in (0, 1) if joint[ra][rb] > 0}
    return out


def _partner_allowed(code, own_basis: int, own_result: int, partner_basis: int, own_is_a: bool) -> dict:
    if own_is_a:
        return correlation_table(code, own_basis, partner_basis).get(own_result, {})
    joint = _joint(NonOrthoCode(code), partner_basis, own_basis)
    col = [joint[ra][own_result] for ra in (0, 1)]
    total = sum(col)
    return {ra: col[ra] / total for ra in (0, 1) if col[ra] > 0} if total else {}


def _cross_check(codes, key: RawKey, own, partner, positions, own_is_a: bool):
    """Check a partner's revealed results, assuming the partner shares our key."""
    bad, informative = [], 0
    for j in positions:
        b = key.bits[j % len(key)]
        allowed = _partner_allowed(codes[j], b, own[j], b, own_is_a)
        if len(allowed) == 1:
            informative += 1
        if partner[j] not in allowed:
            bad.append(j)
    return bad, informative


def _verdict(bad_c, inf_c, bad_s, inf_s, checked) -> AuthVerdict:
    client_ok = not bad_c and inf_c > 0
    server_ok = not bad_s and inf_s > 0
    reason = ""
    if bad_c or bad_s:
        reason = "inconsistent"
    elif not (client_ok and server_ok):
        reason = "insufficient evidence"
    return AuthVerdict(client_ok, server_ok, sorted(set(bad_c) | set(bad_s)), reason, min(inf_c, inf_s), checked)


def _reject(reason: str) -> AuthVerdict:
    return AuthVerdict(False, False, [], reason)


def _relay_decoys(s: Session, lb, party, qubits: list, d: int, step: str):
    """Balancer pads with decoys, forwards, and the recipient checks them."""
    seq, plan = insert_decoys(qubits, d, lb.rng)
    seq = s.transmit(lb, party, seq)
    s.tell(lb, party, f"{step}:decoy-plan", {"positions": plan.positions, "codes": [c.name for c in plan.codes]})
    res = decoy_check(seq, plan, party.rng)
    s.tell(party, lb, f"{step}:decoy-result", {"errors": res.errors, "passed": res.passed})
    return res


def run_auth_entangled(session: Session, key_client: RawKey, key_server: RawKey, k: int = 8,
                       decoys: int | None = None) -> tuple[AuthVerdict, AuthRound]:
    """CA distributes 4k pairs; 3k results are revealed and cross-checked."""
    if not len(key_client) or not len(key_server):
        raise ValueError("authentication needs a non-empty key")
    if k < 1:
        raise ValueError("k must be positive")
    s = session
    cl, sv, ca = s.client, s.server, s.ca
    d = default_decoy_count(4 * k) if decoys is None else decoys
    key_c = s.adversary.auth_key(cl.party, key_client, s)
    key_s = s.adversary.auth_key(sv.party, key_server, s)

    s.tell(cl, s.lba, "A2-1:request", str(sv.party))
    s.tell(s.lba, ca, "A2-1:request", str(sv.party))
    codes = [NonOrthoCode(int(c)) for c in ca.rng.integers(4, size=4 * k)]
    pairs = [qstate.new_qubits(qstate.Statevector(nonortho_amplitudes(c), [0, 1])) for c in codes]
    names = [c.bits for c in codes]
    s.tell(ca, cl, "A2-2:codes", names)
    s.tell(ca, sv, "A2-2:codes", names)
    half_a = s.transmit(ca, s.lba, [p[0] for p in pairs])
    half_b = s.transmit(ca, s.lbb, [p[1] for p in pairs])
    res_a = _relay_decoys(s, s.lba, cl, half_a, d, "A2-2")
    res_b = _relay_decoys(s, s.lbb, sv, half_b, d, "A2-2")
    rnd = AuthRound(AuthKind.ENTANGLED, codes)
    if not res_a.passed or not res_b.passed:
        return _reject("A2-2 decoy"), rnd

    r_a = [q.measure(basis_for(key_c.bits[j % len(key_c)]), cl.rng) for j, q in enumerate(res_a.stripped)]
    r_b = [q.measure(basis_for(key_s.bits[j % len(key_s)]), sv.rng) for j, q in enumerate(res_b.stripped)]
    revealed = sorted(int(j) for j in cl.rng.choice(4 * k, size=3 * k, replace=False))
    s.tell(cl, sv, "A2-3:positions", revealed)
    s.tell(cl, sv, "A2-3:results", [r_a[j] for j in revealed])
    s.tell(sv, cl, "A2-3:results", [r_b[j] for j in revealed])
    rnd.revealed, rnd.r_a, rnd.r_b = revealed, r_a, r_b

    bad_c, inf_c = _cross_check(codes, key_c, r_a, r_b, revealed, own_is_a=True)
    bad_s, inf_s = _cross_check(codes, key_s, r_b, r_a, revealed, own_is_a=False)
    return _verdict(bad_c, inf_c, bad_s, inf_s, len(revealed)), rnd


# -- key-encoded authentication ----------------------------------------------


class Consistency(enum.Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    UNINFORMATIVE = "uninformative"


_PAIR_CODE = {
    (0, 0): Bb84Code.Z0,
    (0, 1): Bb84Code.Z1,
    (1, 0): Bb84Code.X0,
    (1, 1): Bb84Code.X1,
}


def encode_key_qubits(key) -> list[Bb84Code]:
    """Bit pairs 00, 01, 10, 11 become |0>, |1>, |+>, |->."""
    bits = key.bits if isinstance(key, RawKey) else [int(b) for b in key]
    if len(bits) % 2:
        raise ValueError(f"key length {len(bits)} is odd")
    return [_PAIR_CODE[(bits[i], bits[i + 1])] for i in range(0, len(bits), 2)]


def check_key_encoded(pair, m_j: int, announced: int) -> Consistency:
    """Judge one announced CA result against the state our key says was sent."""
    code = _PAIR_CODE[tuple(int(b) for b in pair)]
    if code.basis_bit != int(m_j):
        return Consistency.UNINFORMATIVE
    return Consistency.CONSISTENT if int(announced) == code.value_bit else Consistency.INCONSISTENT


def _judge(key: RawKey, M, announced) -> tuple[list, int]:
    bad, informative = [], 0
    for j, (m_j, r) in enumerate(zip(M, announced)):
        c = check_key_encoded(key.bits[2 * j: 2 * j + 2], m_j, r)
        if c is Consistency.INCONSISTENT:
            bad.append(j)
        elif c is Consistency.CONSISTENT:
            informative += 1
    return bad, informative + len(bad)


def run_auth_key_encoded(session: Session, key_client: RawKey, key_server: RawKey, gate_only: bool = False,
                         decoys: int | None = None) -> tuple[AuthVerdict, AuthRound]:
    """Both ends send key-encoded states; the CA measures each pair in a random basis.

    ``gate_only`` makes the client build its states from blanks supplied by
    Load_Balancer_A instead of preparing them.
    """
    s = session
    cl, sv, lba, lbb, ca = s.client, s.server, s.lba, s.lbb, s.ca
    key_c = s.adversary.auth_key(cl.party, key_client, s)
    key_s = s.adversary.auth_key(sv.party, key_server, s)
    codes_a = encode_key_qubits(key_c)
    codes_b = encode_key_qubits(key_s)
    if len(codes_a) != len(codes_b):
        raise ValueError("client and server keys differ in length")
    n = len(codes_a)
    d = default_decoy_count(n) if decoys is None else decoys

    s.tell(cl, lba, "B2-1:request", str(sv.party))
    s.tell(lba, lbb, "B2-1:request", str(cl.party))
    s.tell(lbb, sv, "B2-1:request", str(cl.party))
    s.tell(lba, ca, "B2-1:request", str(sv.party))

    if gate_only:
        blanks = s.transmit(lba, cl, [Qubit([1, 0], "blank") for _ in range(n + d)])
        picks = sorted(int(i) for i in cl.rng.choice(n + d, size=d, replace=False))
        decoy_codes = {p: Bb84Code.from_bits(cl.rng.integers(2), cl.rng.integers(2)) for p in picks}
        it = iter(codes_a)
        for i, q in enumerate(blanks):
            for g in gates_for_state(decoy_codes[i] if i in decoy_codes else next(it)):
                q.apply(g)
        seq, plan = blanks, DecoyPlan(picks, [decoy_codes[p] for p in picks])
    else:
        seq, plan = insert_decoys([make_bb84_qubit(c) for c in codes_a], d, cl.rng)
    seq = s.transmit(cl, lba, seq)
    s.tell(cl, lba, "B2-3:decoy-plan", {"positions": plan.positions, "codes": [c.name for c in plan.codes]})
    res_a = decoy_check(seq, plan, lba.rng)
    seq, plan = insert_decoys([make_bb84_qubit(c) for c in codes_b], d, sv.rng)
    seq = s.transmit(sv, lbb, seq)
    s.tell(sv, lbb, "B2-3:decoy-plan", {"positions": plan.positions, "codes": [c.name for c in plan.codes]})
    res_b = decoy_check(seq, plan, lbb.rng)
    rnd = AuthRound(AuthKind.KEY_ENCODED)
    if not res_a.passed or not res_b.passed:
        return _reject("B2-3 decoy"), rnd

    s_a = s.transmit(lba, ca, res_a.stripped)
    s_b = s.transmit(lbb, ca, res_b.stripped)
    M = [int(b) for b in ca.rng.integers(2, size=n)]
    r_a = [q.measure(basis_for(m), ca.rng) for q, m in zip(s_a, M)]
    r_b = [q.measure(basis_for(m), ca.rng) for q, m in zip(s_b, M)]
    announcement = {"M": M, "R_A": r_a, "R_B": r_b}
    s.tell(ca, lba, "B2-5:results", announcement)
    s.tell(ca, lbb, "B2-5:results", announcement)
    s.tell(lba, cl, "B2-5:results", announcement)
    s.tell(lbb, sv, "B2-5:results", announcement)
    rnd.M, rnd.r_a, rnd.r_b, rnd.revealed = M, r_a, r_b, list(range(n))

    bad_c, inf_c = _judge(key_c, M, r_b)
    bad_s, inf_s = _judge(key_s, M, r_a)
    return _verdict(bad_c, inf_c, bad_s, inf_s, n), rnd
