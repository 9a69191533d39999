import random
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddtlab import protocol as proto
from ddtlab.commute_crypto import (
    DEFAULT_PRIME,
    Digest,
    LockKey,
    SharedSecret,
    digest,
    frame_residues,
    keygen_exp,
    keygen_xor,
    parse_frame,
    sign,
)
from ddtlab.errors import (
    AbortReason,
    IncompleteDelivery,
    InvalidState,
    ProtocolOrderError,
    SessionAborted,
)
from ddtlab.protocol import Authority, Envelope, Phase, Role, SessionState, Variant


def pair(ka, kb, variant=Variant.DL, R=None):
    a = SessionState(Role.INITIATOR, variant, ka, "alice", "bob", shared_R=R)
    b = SessionState(Role.RESPONDER, variant, kb, "bob", "alice", shared_R=R)
    return a, b


def framed(residue, length=1):
    return frame_residues(length, [residue])


def env(pass_index, payload, sender="alice", receiver="bob", signature=None):
    return Envelope(0, Variant.DL, pass_index, payload, signature, sender, receiver)


# -- plain double lock, worked example with p=23, e_A=3, e_B=5 --

def test_pass1_locks_each_frame_residue():
    a, _ = pair(LockKey.exp(23, 3), LockKey.exp(23, 5))
    out = proto.dl_pass1(a, b"\x05")
    # b"\x05" under 4-bit chunks is residues (1, 6); A locks each with e=3
    assert parse_frame(out.payload) == (1, [1, pow(6, 3, 23)])
    assert proto.lock_payload(LockKey.exp(23, 3), framed(5))[-1] == 10


def test_worked_example_residues_10_19_20_5():
    ka, kb = LockKey.exp(23, 3), LockKey.exp(23, 5)
    a, b = pair(ka, kb)
    a.phase = Phase.AWAITING_PASS2
    p2 = proto.dl_pass2(b, env(1, framed(10)))
    assert parse_frame(p2.payload)[1] == [19]
    p3 = proto.dl_pass3(a, env(2, p2.payload, "bob", "alice"))
    assert parse_frame(p3.payload)[1] == [20]
    assert parse_frame(proto.unlock_payload(kb, p3.payload))[1] == [5]


def test_xor_worked_example():
    a, b = pair(LockKey.xor(b"\x0f"), LockKey.xor(b"\xf0"))
    p1 = proto.dl_pass1(a, b"\xaa")
    assert p1.payload == b"\xa5"
    p2 = proto.dl_pass2(b, p1)
    assert p2.payload == b"\x55"
    p3 = proto.dl_pass3(a, p2)
    assert p3.payload == b"\x5a"
    assert proto.dl_open(b, p3) == b"\xaa"


def test_phase_guards():
    a, b = pair(LockKey.exp(23, 3), LockKey.exp(23, 5))
    p1 = proto.dl_pass1(a, b"\x05")
    with pytest.raises(ProtocolOrderError):
        proto.dl_pass1(a, b"\x05")
    with pytest.raises(ProtocolOrderError):
        proto.dl_pass2(b, replace(p1, pass_index=2))
    idle, _ = pair(LockKey.exp(23, 3), LockKey.exp(23, 5))
    with pytest.raises(ProtocolOrderError):
        proto.dl_pass3(idle, replace(p1, pass_index=2))


def test_round_trip_1000_random_secrets():
    rng = random.Random(2024)
    for i in range(1000):
        a, b = pair(keygen_exp(DEFAULT_PRIME, 2 * i), keygen_exp(DEFAULT_PRIME, 2 * i + 1))
        S = rng.randbytes(rng.randrange(1, 48))
        assert proto.dl_open(b, proto.dl_pass3(a, proto.dl_pass2(b, proto.dl_pass1(a, S)))) == S
        assert a.phase is b.phase is Phase.DONE


def test_malformed_pass3_aborts_with_decode_failure():
    a, b = pair(LockKey.exp(23, 3), LockKey.exp(23, 5))
    proto.dl_pass2(b, proto.dl_pass1(a, b"\x05"))
    with pytest.raises(SessionAborted) as info:
        proto.dl_open(b, env(3, b"\x00\x01"))
    assert info.value.reason is AbortReason.DECODE_FAILURE
    assert b.phase is Phase.ABORTED


# -- signed passes --

def ddt_pair(seed=0):
    R = proto.handshake(seed)
    return pair(keygen_exp(DEFAULT_PRIME, 100 + seed), keygen_exp(DEFAULT_PRIME, 200 + seed), Variant.DDT, R)


def test_handshake_deterministic_and_shared():
    assert proto.handshake(3) == proto.handshake(3)
    auth = Authority()
    a, b = ddt_pair()
    a.shared_R = b.shared_R = None
    auth.register("alice", proto.identity_secret("alice", 0))
    auth.register("bob", proto.identity_secret("bob", 0))
    eve = SessionState(Role.RESPONDER, Variant.DDT, LockKey.exp(23, 3), "eve")
    R = auth.handshake(7, {"alice": a, "bob": b, "eve": eve})
    assert a.shared_R == b.shared_R == R
    assert eve.shared_R is None
    assert "eve" not in auth.registered


def test_ddt_honest_1000_trials():
    rng = random.Random(77)
    for i in range(1000):
        a, b = ddt_pair(i)
        S = rng.randbytes(32)
        p1 = proto.ddt_pass1(a, S)
        p2 = proto.ddt_pass2(b, p1)
        p3 = proto.ddt_pass3(a, p2)
        assert proto.ddt_open(b, p3) == S


def test_pass1_resigned_under_wrong_R_aborts_responder():
    a, b = ddt_pair()
    p1 = proto.ddt_pass1(a, b"secret")
    forged = replace(p1, signature=sign(SharedSecret(b"\x01" * 32), p1.payload))
    with pytest.raises(SessionAborted) as info:
        proto.ddt_pass2(b, forged)
    assert info.value.reason is AbortReason.SIGNATURE_MISMATCH


def test_pass1_signature_replayed_on_pass2_aborts_initiator():
    a, b = ddt_pair()
    p1 = proto.ddt_pass1(a, b"secret")
    p2 = proto.ddt_pass2(b, p1)
    with pytest.raises(SessionAborted):
        proto.ddt_pass3(a, replace(p2, signature=p1.signature))
    assert a.abort_reason is AbortReason.SIGNATURE_MISMATCH


def test_unsigned_pass3_when_disabled():
    a, b = ddt_pair()
    a.sign_pass3 = b.sign_pass3 = False
    p3 = proto.ddt_pass3(a, proto.ddt_pass2(b, proto.ddt_pass1(a, b"secret")))
    assert p3.signature is None
    assert proto.ddt_open(b, p3) == b"secret"


def test_missing_R_is_invalid_state():
    a, _ = pair(LockKey.exp(23, 3), LockKey.exp(23, 5), Variant.DDT)
    with pytest.raises(InvalidState):
        proto.ddt_pass1(a, b"x")


# -- implicit chaining --

def test_chain_example():
    assert proto.chain_encode(b"\xff", b"\x01") == b"\x00"


@given(st.binary(), st.binary())
def test_chain_inverse(s, p):
    assert proto.chain_decode(proto.chain_encode(s, p), p, len(s)) == s


def test_two_round_chain_needs_true_R():
    rng = random.Random(3)
    R, wrong = rng.randbytes(32), rng.randbytes(32)
    s1, s2 = rng.randbytes(32), rng.randbytes(32)
    c1, c2 = proto.chain_encode(s1, R), proto.chain_encode(s2, s1)
    good1 = proto.chain_decode(c1, R, 32)
    assert proto.chain_decode(c2, good1, 32) == s2
    bad1 = proto.chain_decode(c1, wrong, 32)
    assert proto.chain_decode(c2, bad1, 32) != s2


# -- piggy bank --

def piggy_setup(seed=0):
    auth = Authority()
    ida, idb = proto.identity_secret("alice", seed), proto.identity_secret("bob", seed)
    auth.register("alice", ida)
    auth.register("bob", idb)
    bob = SessionState(Role.RESPONDER, Variant.PIGGY_BANK, keygen_exp(DEFAULT_PRIME, 900 + seed), "bob", "alice", identity=idb)
    alice = SessionState(Role.INITIATOR, Variant.PIGGY_BANK, keygen_exp(DEFAULT_PRIME, 800 + seed), "alice", "bob", identity=ida)
    return auth, alice, bob


def test_issued_box_is_empty_and_holds_only_the_lock_half():
    _, _, bob = piggy_setup()
    box = proto.pb_issue_box(bob)
    assert box.sealed_contents is None
    assert not box.box_key.can_unlock
    assert box.box_key.e != bob.own_key.d
    _, _, bob2 = piggy_setup()
    assert proto.pb_issue_box(bob2).box_key == box.box_key


def test_deposit_open_round_trip_with_manifest():
    auth, alice, bob = piggy_setup()
    secret = b"the real gift"
    box = proto.pb_deposit(alice, proto.pb_issue_box(bob), secret, digest(secret).bytes, letter_seed=5)
    got, manifest, ok = proto.pb_open(bob, box, auth)
    assert ok and got == secret
    assert manifest == digest(got).bytes
    assert bob.phase is Phase.DONE


def test_deposit_into_sealed_box_rejected():
    auth, alice, bob = piggy_setup()
    box = proto.pb_deposit(alice, proto.pb_issue_box(bob), b"x", digest(b"x").bytes)
    with pytest.raises(InvalidState):
        proto.pb_deposit(alice, box, b"y", digest(b"y").bytes)


def test_flipped_letter_signature_fails_authentication():
    auth, alice, bob = piggy_setup()
    box = proto.pb_deposit(alice, proto.pb_issue_box(bob), b"gift", digest(b"gift").bytes)
    sig = box.letter_signature.bytes
    bad = replace(box, letter_signature=Digest(sig[:-1] + bytes([sig[-1] ^ 0x80])))
    assert proto.pb_open(bob, bad, auth)[2] is False
    assert bob.abort_reason is AbortReason.SIGNATURE_MISMATCH


def test_substituted_contents_fail_authentication():
    auth, alice, bob = piggy_setup()
    box = proto.pb_issue_box(bob)
    genuine = proto.pb_deposit(alice, box, b"gift", digest(b"gift").bytes)
    attacker_key = keygen_xor(999, 32).keystream
    k = box.box_key
    forged = proto.lock_payload(k, proto.encode_payload(k, proto.pack_sealed(b"FAKE", attacker_key)))
    _, _, ok = proto.pb_open(bob, replace(genuine, sealed_contents=forged), auth)
    assert ok is False


def test_missing_letter_is_incomplete():
    auth, alice, bob = piggy_setup()
    box = proto.pb_deposit(alice, proto.pb_issue_box(bob), b"gift", digest(b"gift").bytes)
    with pytest.raises(IncompleteDelivery):
        proto.pb_open(bob, replace(box, letter_signature=None), auth)


# -- out-of-band digest comparison --

def test_compare_digests():
    S, F = b"true gift", b"fake gift"
    assert proto.compare_digests(digest(S), S)
    assert not proto.compare_digests(digest(S), F)


def test_envelope_dict_round_trip():
    e = Envelope(3, Variant.DDT, 2, b"\x01\x02", digest(b"x"), "bob", "alice", 4, 6)
    d = e.to_dict()
    assert list(d) == ["session_id", "variant", "pass_index", "payload", "signature",
                       "sender", "receiver", "sent_tick", "received_tick"]
    assert Envelope.from_dict(d) == e
