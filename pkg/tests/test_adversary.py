from dataclasses import replace

import pytest

from ddtlab import protocol as proto
from ddtlab.adversary import EveState, Strategy, eve_step, replay_signature
from ddtlab.commute_crypto import LockKey, frame_residues, parse_frame, verify
from ddtlab.errors import NoMaterial, ProtocolOrderError
from ddtlab.harness import evaluate_run, calibrate
from ddtlab.netsim import simulate
from ddtlab.protocol import Role, SessionState, Variant
from ddtlab.scenario import load_scenario


def test_fake_gift_steals_S_with_the_worked_example_keys():
    alice = SessionState(Role.INITIATOR, Variant.DL, LockKey.exp(23, 3), "alice", "bob")
    eve = EveState(Strategy.FAKE_GIFT, LockKey.exp(23, 7), fake_gift=b"\x01")
    p1 = proto.dl_pass1(alice, b"\x05")
    out = eve_step(eve, p1, 1)
    to_alice = [e for e, dest, _ in out if dest == "alice"]
    assert len(to_alice) == 1
    # each residue of Alice's frame now carries both locks
    assert parse_frame(to_alice[0].payload)[1] == [pow(r, 7, 23) for r in parse_frame(p1.payload)[1]]
    p3 = proto.dl_pass3(alice, to_alice[0])
    eve_step(eve, p3, 3)
    assert eve.recovered[0] == b"\x05"


def test_fake_gift_locks_residue_10_with_her_own_key():
    eve = EveState(Strategy.FAKE_GIFT, LockKey.exp(23, 7), fake_gift=b"\x01")
    env = proto.Envelope(0, Variant.DL, 1, frame_residues(1, [10]), None, "alice", "bob")
    (reply, dest, _), _ = eve_step(eve, env, 1)
    assert dest == "alice"
    assert parse_frame(reply.payload)[1] == [pow(10, 7, 23)]


def test_delayed_relay_bob_exchanges_at_4_and_6():
    s = load_scenario("midway_relay")
    record, _ = evaluate_run(s, 0, calibrate(s))
    assert record["exchanges"][0]["bob"] == [4, 6]
    assert record["exchanges"][0]["alice"] == [0, 2]
    assert record["recovered_equals_sent"] and record["eve_recovered_secret"]


def test_passive_forward_under_ddt_completes():
    s = load_scenario("ddt_mim")
    s = replace(s, adversary=replace(s.adversary, strategy=Strategy.PASSIVE_FORWARD))
    sim = simulate(s, 3)
    assert sim.parties["bob"].received[0] == sim.parties["alice"].sent[0]
    assert not any(e.kind.value == "verify-fail" for e in sim.trace.events)


def ddt_states():
    R = proto.handshake(1)
    a = SessionState(Role.INITIATOR, Variant.DDT, LockKey.exp(23, 3), "alice", "bob", shared_R=R)
    b = SessionState(Role.RESPONDER, Variant.DDT, LockKey.exp(23, 5), "bob", "alice", shared_R=R)
    return a, b


def test_replayed_pass1_signature_on_pass2_fails_verification():
    a, b = ddt_states()
    eve = EveState(Strategy.REPLAY, LockKey.exp(23, 7), variant=Variant.DDT)
    p1 = proto.ddt_pass1(a, b"\x05")
    (fwd, _, _), = eve_step(eve, p1, 1)
    assert fwd.signature == p1.signature
    p2 = proto.ddt_pass2(b, fwd)
    (tampered, _, _), = eve_step(eve, p2, 3)
    assert tampered.signature == p1.signature == replay_signature(eve, 2)
    assert not verify(a.shared_R, tampered.payload, tampered.signature)


def test_identical_pass1_resend_verifies_but_phase_guard_rejects():
    a, b = ddt_states()
    p1 = proto.ddt_pass1(a, b"\x05")
    proto.ddt_pass2(b, p1)
    assert verify(b.shared_R, p1.payload, p1.signature)
    with pytest.raises(ProtocolOrderError):
        proto.ddt_pass2(b, p1)


def test_replay_without_recordings_has_no_material():
    with pytest.raises(NoMaterial):
        replay_signature(EveState(Strategy.REPLAY, LockKey.exp(23, 7)), 2)


def test_eve_never_holds_R():
    s = load_scenario("ddt_mim")
    sim = simulate(s, 0)
    R = sim.parties["alice"].shared_R
    assert R is not None and sim.eve.guess_R != R
    states = [*sim.eve.sessions_with_alice.values(), *sim.eve.sessions_with_bob.values()]
    assert all(st.shared_R is None for st in states)
