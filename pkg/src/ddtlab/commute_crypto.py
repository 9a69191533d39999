"""Commuting locks, the SHA-256 digest, and keyed payload signatures.

Two lock backends are provided:

``xor-pad``
    Bytewise XOR with a seeded keystream. Locks commute trivially, but the
    three transcripts of a double-lock exchange XOR to the secret, so a
    passive observer of all three passes learns it. Use only to study the
    active man-in-the-middle threat.

``exp-mod-p``
    The exponentiation cipher ``m -> m**e mod p`` with ``e*d = 1 mod (p-1)``.
    Locks under a shared prime commute and transcripts do not leak trivially.
    Desk-scale primes only; nothing here is meant to resist a real attacker.

Arbitrary byte strings are carried through the exponentiation backend as a
frame of residues (see :func:`encode_payload` and docs/FORMATS.md).
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import math
import random
import struct
from dataclasses import dataclass
from functools import lru_cache

from .errors import DecodeFailure, InvalidParameter, InvalidPayload

DIGEST_SIZE = 32
MIN_SECRET_SIZE = 16

# Largest prime below 2**64.
DEFAULT_PRIME = 0xFFFFFFFFFFFFFFC5


class Backend(str, enum.Enum):
    XOR_PAD = "xor-pad"
    EXP_MOD_P = "exp-mod-p"


@lru_cache(maxsize=64)
def _is_prime(n: int) -> bool:
    from sympy import isprime

    return bool(isprime(n))


@dataclass(frozen=True)
class LockKey:
    """A commuting-cipher key.

    For ``exp-mod-p`` the unlock exponent ``d`` may be ``None``, which
    gives a lock-only half (what the piggy-bank box hands out).
    """

    backend: Backend
    keystream: bytes | None = None
    p: int | None = None
    e: int | None = None
    d: int | None = None

    def __post_init__(self) -> None:
        if self.backend is Backend.XOR_PAD:
            if self.keystream is None or len(self.keystream) == 0:
                raise InvalidParameter("xor-pad key needs a non-empty keystream")
            return
        p, e = self.p, self.e
        if p is None or e is None:
            raise InvalidParameter("exp-mod-p key needs p and e")
        if p < 5 or not _is_prime(p):
            raise InvalidParameter(f"p={p} must be a prime >= 5")
        if not 1 < e < p - 1 or math.gcd(e, p - 1) != 1:
            raise InvalidParameter(f"e={e} must satisfy 1 < e < p-1 and gcd(e, p-1) = 1")
        if self.d is not None and (e * self.d) % (p - 1) != 1:
            raise InvalidParameter("d is not the inverse of e modulo p-1")

    @classmethod
    def xor(cls, keystream: bytes) -> LockKey:
        return cls(Backend.XOR_PAD, keystream=bytes(keystream))

    @classmethod
    def exp(cls, p: int, e: int) -> LockKey:
        """Exponentiation key with the unlock exponent derived from ``e``."""
        if p < 5 or not _is_prime(p):
            raise InvalidParameter(f"p={p} must be a prime >= 5")
        if not 1 < e < p - 1 or math.gcd(e, p - 1) != 1:
            raise InvalidParameter(f"e={e} must satisfy 1 < e < p-1 and gcd(e, p-1) = 1")
        return cls(Backend.EXP_MOD_P, p=p, e=e, d=pow(e, -1, p - 1))

    def lock_half(self) -> LockKey:
        if self.backend is Backend.XOR_PAD:
            return self
        return LockKey(Backend.EXP_MOD_P, p=self.p, e=self.e)

    @property
    def can_unlock(self) -> bool:
        return self.backend is Backend.XOR_PAD or self.d is not None


@dataclass(frozen=True)
class Digest:
    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != DIGEST_SIZE:
            raise InvalidParameter(f"digest must be {DIGEST_SIZE} bytes, got {len(self.bytes)}")

    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def fromhex(cls, text: str) -> Digest:
        return cls(bytes.fromhex(text))


@dataclass(frozen=True)
class SharedSecret:
    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) < MIN_SECRET_SIZE:
            raise InvalidParameter(f"shared secret must be at least {MIN_SECRET_SIZE} bytes")


def keygen_xor(seed: int, length: int) -> LockKey:
    if length < 1:
        raise InvalidParameter("keystream length must be >= 1")
    return LockKey.xor(random.Random(seed).randbytes(length))


def keygen_exp(p: int, seed: int) -> LockKey:
    """Draw ``e`` from ``seed`` by rejection sampling until it is invertible mod p-1."""
    if p < 5 or not _is_prime(p):
        raise InvalidParameter(f"p={p} must be a prime >= 5")
    rng = random.Random(seed)
    while True:
        e = rng.randrange(2, p - 1)
        if math.gcd(e, p - 1) == 1:
            return LockKey.exp(p, e)


def _int_to_min_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def _check_residue(key: LockKey, m: bytes) -> int:
    value = int.from_bytes(m, "big")
    if not 1 <= value < key.p:
        raise InvalidPayload(f"payload value must lie in [1, p), got {value}")
    return value


def lock(key: LockKey, m: bytes) -> bytes:
    """Apply ``key``'s lock to a single block.

    xor-pad XORs the keystream prefix; exp-mod-p treats ``m`` as one residue.
    """
    if key.backend is Backend.XOR_PAD:
        if len(m) > len(key.keystream):
            raise InvalidPayload(f"payload of {len(m)} bytes exceeds keystream of {len(key.keystream)}")
        return bytes(a ^ b for a, b in zip(m, key.keystream))
    return _int_to_min_bytes(pow(_check_residue(key, m), key.e, key.p))


def unlock(key: LockKey, c: bytes) -> bytes:
    if key.backend is Backend.XOR_PAD:
        return lock(key, c)
    if key.d is None:
        raise InvalidParameter("lock-only key cannot unlock")
    return _int_to_min_bytes(pow(_check_residue(key, c), key.d, key.p))


# -- block framing for exp-mod-p --------------------------------------------

_HEADER = struct.Struct(">II")


def chunk_bits(p: int) -> int:
    """Bits of plaintext per residue: the largest w with 2**w <= p - 1."""
    return (p - 1).bit_length() - 1


def frame_residues(length: int, residues: list[int]) -> bytes:
    out = bytearray(_HEADER.pack(length, len(residues)))
    for r in residues:
        raw = _int_to_min_bytes(r)
        out.append(len(raw))
        out += raw
    return bytes(out)


def parse_frame(payload: bytes) -> tuple[int, list[int]]:
    if len(payload) < _HEADER.size:
        raise DecodeFailure("frame shorter than its header")
    length, count = _HEADER.unpack_from(payload)
    pos = _HEADER.size
    residues = []
    for _ in range(count):
        if pos >= len(payload):
            raise DecodeFailure("frame truncated")
        n = payload[pos]
        pos += 1
        if n == 0 or pos + n > len(payload):
            raise DecodeFailure("bad block length prefix")
        residues.append(int.from_bytes(payload[pos:pos + n], "big"))
        pos += n
    if pos != len(payload):
        raise DecodeFailure("trailing bytes after last block")
    return length, residues


def encode_payload(key: LockKey, data: bytes) -> bytes:
    """Turn plaintext into the form ``lock_payload`` accepts for ``key``'s backend."""
    if key.backend is Backend.XOR_PAD:
        return bytes(data)
    w = chunk_bits(key.p)
    nbits = 8 * len(data)
    count = -(-nbits // w)
    value = int.from_bytes(data, "big") << (count * w - nbits) if data else 0
    mask = (1 << w) - 1
    residues = [((value >> (w * (count - 1 - i))) & mask) + 1 for i in range(count)]
    return frame_residues(len(data), residues)


def decode_payload(key: LockKey, payload: bytes) -> bytes:
    if key.backend is Backend.XOR_PAD:
        return bytes(payload)
    w = chunk_bits(key.p)
    length, residues = parse_frame(payload)
    nbits = 8 * length
    if len(residues) != -(-nbits // w):
        raise DecodeFailure("block count does not match declared length")
    value = 0
    for r in residues:
        if not 1 <= r <= 1 << w:
            raise DecodeFailure("residue outside the plaintext chunk range")
        value = (value << w) | (r - 1)
    pad = len(residues) * w - nbits
    if value & ((1 << pad) - 1):
        raise DecodeFailure("non-zero padding bits")
    return (value >> pad).to_bytes(length, "big")


def _map_residues(key: LockKey, payload: bytes, exponent: int) -> bytes:
    length, residues = parse_frame(payload)
    out = []
    for r in residues:
        if not 1 <= r < key.p:
            raise DecodeFailure(f"residue {r} outside [1, p)")
        out.append(pow(r, exponent, key.p))
    return frame_residues(length, out)


def lock_payload(key: LockKey, payload: bytes) -> bytes:
    """Lock an encoded payload; exp-mod-p locks every residue of the frame."""
    if key.backend is Backend.XOR_PAD:
        return lock(key, payload)
    return _map_residues(key, payload, key.e)


def unlock_payload(key: LockKey, payload: bytes) -> bytes:
    if key.backend is Backend.XOR_PAD:
        return unlock(key, payload)
    if key.d is None:
        raise InvalidParameter("lock-only key cannot unlock")
    return _map_residues(key, payload, key.d)


# -- hashing and signatures ---------------------------------------------------

def digest(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


def sign(R: SharedSecret, payload: bytes) -> Digest:
    """SHA-256 over ``R || payload``, in that order."""
    return digest(R.bytes + payload)


def verify(R: SharedSecret, payload: bytes, sig: Digest | None) -> bool:
    if sig is None:
        return False
    return hmac.compare_digest(sign(R, payload).bytes, sig.bytes)
