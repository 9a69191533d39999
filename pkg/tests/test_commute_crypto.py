import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddtlab.commute_crypto import (
    DEFAULT_PRIME,
    Backend,
    Digest,
    LockKey,
    SharedSecret,
    decode_payload,
    digest,
    encode_payload,
    frame_residues,
    keygen_exp,
    keygen_xor,
    lock,
    lock_payload,
    parse_frame,
    sign,
    unlock,
    unlock_payload,
    verify,
)
from ddtlab.errors import DecodeFailure, InvalidParameter, InvalidPayload


def ext_gcd_inverse(a, m):
    old_r, r, old_s, s = a, m, 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    assert old_r == 1
    return old_s % m


def slow_pow(b, e, m):
    acc = 1
    for _ in range(e):
        acc = acc * b % m
    return acc


def as_int(b):
    return int.from_bytes(b, "big")


def ib(n):
    return n.to_bytes(1, "big")


# -- oracle self-checks, frozen values --

def test_oracles_agree_with_frozen_values():
    assert ext_gcd_inverse(3, 22) == 15
    assert ext_gcd_inverse(5, 22) == 9
    assert slow_pow(5, 3, 23) == 10
    assert slow_pow(10, 15, 23) == 5


# -- keygen --

def test_keygen_xor_deterministic_and_seed_sensitive():
    assert keygen_xor(7, 4) == keygen_xor(7, 4)
    assert keygen_xor(7, 4).keystream != keygen_xor(8, 4).keystream


def test_keygen_xor_zero_length_rejected():
    with pytest.raises(InvalidParameter):
        keygen_xor(0, 0)


@pytest.mark.parametrize("e,d", [(3, 15), (5, 9)])
def test_exp_key_inverse_matches_extended_euclid(e, d):
    key = LockKey.exp(23, e)
    assert key.d == d == ext_gcd_inverse(e, 22)


def test_keygen_exp_rejects_composite():
    with pytest.raises(InvalidParameter):
        keygen_exp(4, 1)


@given(st.integers(0, 2**64 - 1))
@settings(max_examples=50)
def test_keygen_exp_inverse_property(seed):
    key = keygen_exp(DEFAULT_PRIME, seed)
    assert key.e * key.d % (DEFAULT_PRIME - 1) == 1


# -- lock / unlock on single blocks --

def test_xor_lock_example():
    k = LockKey.xor(b"\x0f")
    assert lock(k, b"\xaa") == b"\xa5"
    assert unlock(k, b"\xa5") == b"\xaa"


def test_exp_lock_unlock_examples():
    k = LockKey.exp(23, 3)
    assert as_int(lock(k, ib(5))) == slow_pow(5, 3, 23) == 10
    assert as_int(unlock(k, ib(10))) == slow_pow(10, 15, 23) == 5


def test_exp_lock_rejects_zero():
    with pytest.raises(InvalidPayload):
        lock(LockKey.exp(23, 3), b"\x00")


def test_exp_locks_commute_on_the_worked_example():
    a, b = LockKey.exp(23, 3), LockKey.exp(23, 5)
    ab = as_int(lock(b, lock(a, ib(5))))
    ba = as_int(lock(a, lock(b, ib(5))))
    assert ab == ba == slow_pow(slow_pow(5, 3, 23), 5, 23) == 19


def test_inverse_law_1000_random_blocks():
    rng = random.Random(1234)
    for _ in range(1000):
        key = keygen_exp(DEFAULT_PRIME, rng.getrandbits(64))
        m = rng.randrange(1, DEFAULT_PRIME).to_bytes(8, "big").lstrip(b"\0")
        assert unlock(key, lock(key, m)) == m


def test_lock_only_half_cannot_unlock():
    key = LockKey.exp(23, 3).lock_half()
    assert not key.can_unlock
    with pytest.raises(InvalidParameter):
        unlock(key, ib(10))


# -- framed payloads --

def test_frame_layout_is_bit_exact():
    raw = frame_residues(1, [1, 6])
    assert raw == bytes.fromhex("00000001" "00000002" "01" "01" "01" "06")
    assert parse_frame(raw) == (1, [1, 6])


def test_encode_of_one_byte_under_p23_uses_nibble_chunks():
    # chunk width 4 bits for p=23; 0x5A -> nibbles 5, 10 -> residues 6, 11
    assert parse_frame(encode_payload(LockKey.exp(23, 3), b"\x5a")) == (1, [6, 11])


def test_decode_rejects_nonzero_padding_and_bad_counts():
    key = LockKey.exp(23, 3)
    with pytest.raises(DecodeFailure):
        decode_payload(key, frame_residues(1, [6]))
    with pytest.raises(DecodeFailure):
        decode_payload(key, b"\x00\x00")
    with pytest.raises(DecodeFailure):
        decode_payload(key, frame_residues(1, [6, 20]))


@given(st.binary(max_size=80), st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
@settings(max_examples=60)
def test_payload_locks_commute_and_invert(data, sa, sb):
    a = keygen_exp(DEFAULT_PRIME, sa)
    b = keygen_exp(DEFAULT_PRIME, sb)
    framed = encode_payload(a, data)
    ab = lock_payload(b, lock_payload(a, framed))
    assert ab == lock_payload(a, lock_payload(b, framed))
    assert decode_payload(a, unlock_payload(b, unlock_payload(a, ab))) == data


@given(st.binary(min_size=1, max_size=64), st.binary(min_size=64, max_size=64), st.binary(min_size=64, max_size=64))
def test_xor_payload_locks_commute(data, ka, kb):
    a, b = LockKey.xor(ka), LockKey.xor(kb)
    assert lock(b, lock(a, data)) == lock(a, lock(b, data))
    assert unlock(a, unlock(b, lock(a, lock(b, data)))) == data


def test_xor_backend_lets_an_observer_recover_the_secret():
    # passes 1, 2 and 3 XORed together leave S for anyone watching the wire
    rng = random.Random(5)
    S = rng.randbytes(16)
    a, b = keygen_xor(1, 16), keygen_xor(2, 16)
    p1 = lock(a, S)
    p2 = lock(b, p1)
    p3 = unlock(a, p2)
    assert bytes(x ^ y ^ z for x, y, z in zip(p1, p2, p3)) == S
    assert a.backend is Backend.XOR_PAD


# -- digests and signatures --

def test_sha256_reference_vectors():
    assert digest(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


@given(st.binary())
def test_digest_deterministic(x):
    assert digest(x) == digest(x)


def test_digest_hex_round_trip():
    d = digest(b"abc")
    assert Digest.fromhex(d.hex()) == d


def test_sign_is_digest_of_concatenation():
    rng = random.Random(9)
    for _ in range(100):
        R = SharedSecret(rng.randbytes(32))
        p = rng.randbytes(rng.randrange(0, 64))
        assert sign(R, p) == digest(R.bytes + p)


def test_sign_separates_keys_and_payloads_1000_pairs():
    rng = random.Random(10)
    for _ in range(1000):
        R1, R2 = SharedSecret(rng.randbytes(32)), SharedSecret(rng.randbytes(32))
        p1, p2 = rng.randbytes(24), rng.randbytes(24)
        assert R1 == R2 or sign(R1, p1) != sign(R2, p1)
        assert p1 == p2 or sign(R1, p1) != sign(R1, p2)


def test_verify_contract():
    rng = random.Random(11)
    R = SharedSecret(rng.randbytes(32))
    p = b"payload"
    sig = sign(R, p)
    assert verify(R, p, sig)
    flipped = Digest(bytes([sig.bytes[0] ^ 1]) + sig.bytes[1:])
    assert not verify(R, p, flipped)
    assert not verify(R, p, None)
    for _ in range(1000):
        other = SharedSecret(rng.randbytes(32))
        assert other == R or not verify(other, p, sig)


def test_short_shared_secret_rejected():
    with pytest.raises(InvalidParameter):
        SharedSecret(b"short")
