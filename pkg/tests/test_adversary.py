import json

import numpy as np
import pytest

from vbqc_netsim import adversary as adv
from vbqc_netsim.harness import ScenarioConfig, aggregate, new_session, run_trials
from vbqc_netsim.netsim import make_bb84_qubit, stream
from vbqc_netsim.primitives import Bb84Code
from vbqc_netsim.qstate import BellOutcome, MeasurementBasis, Qubit, alloc, bell_measure
from vbqc_netsim.registration import RegistrationParams, run_registration

Z, X = MeasurementBasis.z(), MeasurementBasis.x()


# -- intercept-resend ---------------------------------------------------------------


def test_z_intercept_of_zero_forwards_zero():
    r = np.random.default_rng(0)
    for _ in range(50):
        out, basis, bit = adv.intercept_resend(make_bb84_qubit(Bb84Code.Z0), "Z", r)
        assert basis == 0 and bit == 0
        assert np.allclose(out.state().amplitudes, [1, 0])


def test_z_intercept_of_plus_breaks_x_check_half_the_time():
    r = np.random.default_rng(1)
    errors = bits = 0
    for _ in range(4000):
        out, _, bit = adv.intercept_resend(make_bb84_qubit(Bb84Code.X0), "Z", r)
        bits += bit
        errors += out.measure(X, r)
    assert abs(bits / 4000 - 0.5) < 0.03
    assert abs(errors / 4000 - 0.5) < 0.03


def test_uniform_policy_errs_a_quarter_on_random_bb84():
    r = np.random.default_rng(2)
    errors = 0
    for _ in range(8000):
        code = list(Bb84Code)[int(r.integers(4))]
        out, _, _ = adv.intercept_resend(make_bb84_qubit(code), "uniform", r)
        errors += out.measure(code.basis, r) != code.value_bit
    assert abs(errors / 8000 - 0.25) < 0.02


def test_unknown_policy_rejected():
    with pytest.raises(ValueError):
        adv.intercept_resend(make_bb84_qubit(Bb84Code.Z0), "Y", np.random.default_rng())
    with pytest.raises(ValueError):
        adv.InterceptResend(policy="Y")


# -- entangling probe -----------------------------------------------------------------


def test_probe_on_zero_reads_zero():
    probes = []
    q = adv.entangle_probe(make_bb84_qubit(Bb84Code.Z0), probes)
    r = np.random.default_rng(3)
    assert probes[0].measure(Z, r) == 0
    assert q.measure(Z, r) == 0


def test_probed_plus_is_maximally_mixed():
    probes = []
    q = adv.entangle_probe(make_bb84_qubit(Bb84Code.X0), probes)
    rho = q.density().matrix
    assert abs(np.trace(rho @ rho).real - 0.5) < 1e-10


def test_probed_x_decoy_fails_half_the_time():
    r = np.random.default_rng(4)
    errors = 0
    for _ in range(4000):
        q = adv.entangle_probe(make_bb84_qubit(Bb84Code.X1), [])
        errors += q.measure(X, r) != 1
    assert abs(errors / 4000 - 0.5) < 0.03


# -- random CA report ---------------------------------------------------------------


def test_random_bell_ca_is_uniform():
    r = np.random.default_rng(5)
    counts = np.bincount([int(adv.random_bell_ca(r)) for _ in range(10_000)], minlength=4)
    assert np.all(np.abs(counts / 10_000 - 0.25) < 0.01)


def test_random_report_consistent_with_truth_half_the_time():
    # |00> can only produce Phi+ or Phi-
    r = np.random.default_rng(6)
    allowed = set()
    for _ in range(200):
        allowed.add(bell_measure(Qubit([1, 0]), Qubit([1, 0]), r))
    assert allowed == {BellOutcome.PHI_PLUS, BellOutcome.PHI_MINUS}
    hits = np.mean([adv.random_bell_ca(r) in allowed for _ in range(10_000)])
    assert abs(hits - 0.5) < 0.02


# -- servers ------------------------------------------------------------------------


def test_trap_flip_zero_is_honest():
    from vbqc_netsim.vbqc import ClientKind, HonestServer, builtin_pattern, run_trap_verified, with_traps

    pattern = with_traps(builtin_pattern("chain:3"), 1)
    for t in range(20):
        a = run_trap_verified(pattern, ClientKind.PREPARES_STATES, adv.TrapFlipServer(np.random.default_rng(t), 0.0),
                              new_session(60, t))
        b = run_trap_verified(pattern, ClientKind.PREPARES_STATES, HonestServer(), new_session(60, t))
        assert a.accepted and b.accepted
        assert a.output == b.output


def test_trap_flip_bounds_checked():
    with pytest.raises(ValueError):
        adv.TrapFlipServer(np.random.default_rng(), 1.5)


def test_wrong_graph_one_corrupts_a_single_register():
    from vbqc_netsim.primitives import GraphSpec

    srv = adv.WrongGraphServer(np.random.default_rng(7), "one")
    g = GraphSpec.linear(3)
    regs = srv.registers(g, 5, np.random.default_rng(8))
    assert len(srv.corrupted) == 1
    assert np.allclose(regs[srv.corrupted[0]].amplitudes, alloc(3).amplitudes)


# -- specs --------------------------------------------------------------------------


def test_spec_builds_every_kind():
    for kind in adv.KINDS:
        built = adv.AdversarySpec(kind).build(np.random.default_rng())
        assert built.kind == kind


def test_spec_errors():
    with pytest.raises(ValueError):
        adv.AdversarySpec("eavesdropper").build(np.random.default_rng())
    with pytest.raises(TypeError):
        adv.AdversarySpec("intercept_resend", {"strength": 2}).build(np.random.default_rng())
    with pytest.raises(ValueError):
        adv.AdversarySpec("dishonest_balancer", {"mode": "nap"}).build(np.random.default_rng())


# -- end to end ---------------------------------------------------------------------


def test_none_reproduces_honest_bit_for_bit():
    params = RegistrationParams("pas", m_payload=32)
    for t in range(5):
        a = run_registration(params, new_session(61, t))
        b = run_registration(params, new_session(61, t, adv.Adversary(stream(61, t, "adversary"))))
        assert a.client_key.bits == b.client_key.bits


def test_none_kind_matches_plain_config():
    base = dict(protocol="pas", trials=5, seed=62, m=32, pattern="chain:3")
    a = run_trials(ScenarioConfig(**base), keep_log=True)
    b = run_trials(ScenarioConfig(**base, adversary="none"), keep_log=True)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    assert [r.log for r in a] == [r.log for r in b]
    assert '"intercepted": true' not in a[0].log and '"intercepted":true' not in a[0].log


ATTACKS = [
    ("ram", "intercept_resend", {"channel": "lba->client"}),
    ("pas", "entangle_probe", {"channel": "client->lba"}),
    ("ram", "random_bell_ca", {}),
    ("pas", "dishonest_balancer", {"mode": "replace", "scope": "lbb"}),
    ("ram", "wrong_graph_server", {}),
    ("pas", "trap_flip_server", {"p": 0.5}),
    ("cb", "random_key_impostor", {}),
]


@pytest.mark.parametrize("protocol,kind,params", ATTACKS, ids=[a[1] for a in ATTACKS])
def test_attack_is_logged_and_sometimes_caught(protocol, kind, params):
    cfg = ScenarioConfig(protocol=protocol, trials=20, seed=63, m=32, pattern="chain:3", beta=4,
                         adversary=kind, adversary_params=params)
    reports = run_trials(cfg, keep_log=True)
    flagged = [json.loads(line) for r in reports for line in r.log.splitlines()]
    assert any(e["intercepted"] for e in flagged)
    caught = sum(not s.vbqc for r in reports for s in r.sessions)
    assert caught > 0
    assert aggregate(cfg, reports).metric("end_to_end_success").mean < 1
