import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbqc_netsim import adversary as adv
from vbqc_netsim.authentication import (
    AuthKind,
    Consistency,
    check_key_encoded,
    correlation_table,
    encode_key_qubits,
    run_auth_entangled,
    run_auth_key_encoded,
)
from vbqc_netsim.harness import new_session
from vbqc_netsim.netsim import stream
from vbqc_netsim.primitives import Bb84Code, NonOrthoCode
from vbqc_netsim.registration import RawKey

PHI, PSI, CPHI, CPSI = NonOrthoCode.PHI_MINUS, NonOrthoCode.PSI_PLUS, NonOrthoCode.CAP_PHI_MINUS, NonOrthoCode.CAP_PSI_PLUS

# Correlation grid: rows are the client's (basis, result), columns the
# server's, and each cell names the shared pair that forces that outcome.
ROWS = [(0, 0), (0, 1), (1, 0), (1, 1)]   # |0>, |1>, |+>, |->
GRID = [
    [PHI, PSI, CPSI, CPHI],
    [PSI, PHI, CPHI, CPSI],
    [CPSI, CPHI, PSI, PHI],
    [CPHI, CPSI, PHI, PSI],
]


def random_key(rng, n):
    return RawKey([int(b) for b in rng.integers(2, size=n)])


# -- correlation table -----------------------------------------------------------------


@pytest.mark.parametrize("row", range(4))
@pytest.mark.parametrize("col", range(4))
def test_grid_cell_is_deterministic(row, col):
    (ba, ra), (bb, rb) = ROWS[row], ROWS[col]
    assert correlation_table(GRID[row][col], ba, bb)[ra] == {rb: 1.0}


def test_table_examples():
    assert correlation_table(PHI, 0, 0)[0] == {0: 1.0}
    assert correlation_table(PHI, 0, 0)[1] == {1: 1.0}
    assert correlation_table(CPSI, 0, 1)[0] == {0: 1.0}
    split = correlation_table(PSI, 0, 1)[0]
    assert set(split) == {0, 1} and abs(split[0] - 0.5) < 1e-12


@given(st.sampled_from(list(NonOrthoCode)), st.integers(0, 1), st.integers(0, 1))
def test_conditionals_are_distributions(code, ba, bb):
    table = correlation_table(code, ba, bb)
    assert set(table) == {0, 1}
    for dist in table.values():
        assert abs(sum(dist.values()) - 1) < 1e-12


# -- entangled authentication ----------------------------------------------------------


def test_honest_entangled_always_mutual():
    for t in range(100):
        s = new_session(40, t)
        key = random_key(s.client.rng, 16)
        verdict, rnd = run_auth_entangled(s, key, RawKey(list(key.bits)), k=8)
        assert verdict.mutual and verdict.reason == ""
        assert rnd.kind is AuthKind.ENTANGLED
        assert len(rnd.broadcast_codes) == 32 and len(rnd.revealed) == 24
        assert len(set(rnd.revealed)) == 24


def test_unrevealed_results_never_published():
    s = new_session(41, 0)
    key = random_key(s.client.rng, 32)
    _, rnd = run_auth_entangled(s, key, RawKey(list(key.bits)), k=8)
    published = [e.content for e in s.net.log if e.label == "A2-3:results"]
    assert published == [[rnd.r_a[j] for j in rnd.revealed], [rnd.r_b[j] for j in rnd.revealed]]
    positions = [e.content for e in s.net.log if e.label == "A2-3:positions"]
    assert positions == [rnd.revealed]


def test_empty_key_is_a_fault():
    with pytest.raises(ValueError):
        run_auth_entangled(new_session(), RawKey([]), RawKey([]))


def test_impostor_rarely_passes_entangled():
    accepted = 0
    for t in range(200):
        s = new_session(42, t, adv.RandomKeyImpostor(stream(42, t, "adversary")))
        key = random_key(s.server.rng, 16)
        verdict, _ = run_auth_entangled(s, key, RawKey(list(key.bits)), k=8)
        accepted += verdict.mutual
        assert verdict.mutual or verdict.reason in ("inconsistent", "insufficient evidence")
    assert accepted / 200 < 0.05


def test_transcript_hides_unrevealed_key_bits():
    # the only public data about an unrevealed position is its pair code; an
    # attacker trained on half the runs to map code -> key bit does no better
    # than a coin on the other half
    samples = []
    for t in range(400):
        s = new_session(43, t)
        key = random_key(s.client.rng, 32)
        _, rnd = run_auth_entangled(s, key, RawKey(list(key.bits)), k=8)
        for j in sorted(set(range(32)) - set(rnd.revealed)):
            samples.append((int(rnd.broadcast_codes[j]), key.bits[j]))
    half = len(samples) // 2
    counts = np.zeros((4, 2))
    for code, bit in samples[:half]:
        counts[code, bit] += 1
    rule = counts.argmax(axis=1)
    hits = np.mean([rule[code] == bit for code, bit in samples[half:]])
    assert abs(hits - 0.5) < 0.03


def test_revealed_positions_expose_basis_for_unrotated_pairs():
    # measured property recorded in the decisions ledger: for phi-/psi+ the two
    # revealed bits show which common basis was used
    hits = total = 0
    for t in range(100):
        s = new_session(44, t)
        key = random_key(s.client.rng, 32)
        _, rnd = run_auth_entangled(s, key, RawKey(list(key.bits)), k=8)
        for j in rnd.revealed:
            code = rnd.broadcast_codes[j]
            likes = []
            for b in (0, 1):
                dist = correlation_table(code, b, b).get(rnd.r_a[j], {})
                likes.append(dist.get(rnd.r_b[j], 0.0))
            if likes[0] != likes[1]:
                hits += int(np.argmax(likes)) == key.bits[j]
                total += 1
    assert total > 0 and hits == total


# -- key-encoded authentication --------------------------------------------------------


def test_encoding_examples():
    Z0, Z1, X0, X1 = Bb84Code.Z0, Bb84Code.Z1, Bb84Code.X0, Bb84Code.X1
    assert encode_key_qubits(RawKey([0, 1, 0, 0, 1, 0, 1, 1])) == [Z1, Z0, X0, X1]
    assert encode_key_qubits([0, 0, 0, 0]) == [Z0, Z0]
    assert encode_key_qubits([1, 1]) == [X1]
    with pytest.raises(ValueError):
        encode_key_qubits([1, 0, 1])


# Rules: pair -> (basis the CA must use for a definite result, that result)
RULES = {(0, 0): (0, 0), (0, 1): (0, 1), (1, 0): (1, 0), (1, 1): (1, 1)}


@pytest.mark.parametrize("pair", list(RULES))
@pytest.mark.parametrize("m_j", [0, 1])
@pytest.mark.parametrize("announced", [0, 1])
def test_check_key_encoded_exhaustive(pair, m_j, announced):
    basis, value = RULES[pair]
    got = check_key_encoded(pair, m_j, announced)
    if m_j != basis:
        assert got is Consistency.UNINFORMATIVE
    elif announced == value:
        assert got is Consistency.CONSISTENT
    else:
        assert got is Consistency.INCONSISTENT


def test_check_key_encoded_examples():
    assert check_key_encoded((1, 0), 1, 0) is Consistency.CONSISTENT
    assert check_key_encoded((0, 1), 0, 0) is Consistency.INCONSISTENT
    assert check_key_encoded((1, 1), 0, 0) is Consistency.UNINFORMATIVE


@pytest.mark.parametrize("gate_only", [False, True])
def test_honest_key_encoded_always_mutual(gate_only):
    informative = []
    for t in range(100):
        s = new_session(45, t)
        key = random_key(s.client.rng, 32)
        verdict, rnd = run_auth_key_encoded(s, key, RawKey(list(key.bits)), gate_only=gate_only)
        assert verdict.mutual
        assert len(rnd.M) == 16
        informative.append(verdict.informative / 16)
    assert abs(np.mean(informative) - 0.5) < 0.05


def test_all_zero_key_and_z_measurements_give_zeros():
    s = new_session(46, 0)
    _, rnd = run_auth_key_encoded(s, RawKey([0] * 32), RawKey([0] * 32))
    for m, ra, rb in zip(rnd.M, rnd.r_a, rnd.r_b):
        if m == 0:
            assert ra == 0 and rb == 0


def classical_impostor_accept(rng, n_pairs):
    """Independent oracle: one key-encoded round with a guessing client, no qubits."""
    def announce(pair, m):
        return pair[1] if pair[0] == m else int(rng.integers(2))

    def judge(pair, m, r):
        if pair[0] != m:
            return None
        return r == pair[1]

    c_ok = s_ok = True
    c_inf = s_inf = 0
    for _ in range(n_pairs):
        true = (int(rng.integers(2)), int(rng.integers(2)))
        fake = (int(rng.integers(2)), int(rng.integers(2)))
        m = int(rng.integers(2))
        r_a, r_b = announce(fake, m), announce(true, m)
        for verdict, side in ((judge(true, m, r_a), "s"), (judge(fake, m, r_b), "c")):
            if verdict is None:
                continue
            if side == "s":
                s_inf += 1
                s_ok &= verdict
            else:
                c_inf += 1
                c_ok &= verdict
    return c_ok and s_ok and c_inf > 0 and s_inf > 0


def test_impostor_key_encoded_matches_classical_oracle():
    trials = 2000
    accepted = 0
    for t in range(trials):
        s = new_session(47, t, adv.RandomKeyImpostor(stream(47, t, "adversary")))
        key = random_key(s.server.rng, 8)
        verdict, _ = run_auth_key_encoded(s, key, RawKey(list(key.bits)))
        accepted += verdict.mutual
    r = np.random.default_rng(470)
    oracle = np.mean([classical_impostor_accept(r, 4) for _ in range(20_000)])
    assert abs(accepted / trials - oracle) < 0.03


def test_impostor_key_encoded_rare_at_32_bits():
    accepted = 0
    for t in range(300):
        s = new_session(48, t, adv.RandomKeyImpostor(stream(48, t, "adversary")))
        key = random_key(s.server.rng, 32)
        accepted += run_auth_key_encoded(s, key, RawKey(list(key.bits)))[0].mutual
    assert accepted / 300 < 0.05


def test_key_length_mismatch():
    with pytest.raises(ValueError):
        run_auth_key_encoded(new_session(), RawKey([0, 0]), RawKey([0, 0, 1, 1]))
