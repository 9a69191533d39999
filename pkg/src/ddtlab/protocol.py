"""Session state machines for the four exchange variants.

* ``DL``: the plain three-pass double lock. The initiator locks, the
  responder adds a lock, the initiator removes hers, the responder opens.
* ``DDT``: DL where every pass carries ``sign(R, payload)`` for a secret
  ``R`` handed out by the authority. Receivers verify before acting and
  abort on mismatch.
* ``Implicit``: DL whose secrets are masked by the previous secret of the
  chain (the first one by ``R``), see :func:`chain_encode`.
* ``PiggyBank``: the responder issues an empty box (lock-only key), the
  initiator seals secret plus a letter key inside and sends a signed letter
  separately.

The operations here are pure state transitions. They do not schedule or
log anything; the drivers in :mod:`ddtlab.parties` and
:mod:`ddtlab.adversary` do that around them.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace
from typing import Mapping

from .commute_crypto import (
    Digest,
    LockKey,
    SharedSecret,
    decode_payload,
    digest,
    encode_payload,
    keygen_xor,
    lock,
    lock_payload,
    sign,
    unlock,
    unlock_payload,
    verify,
)
from .errors import (
    AbortReason,
    DecodeFailure,
    IncompleteDelivery,
    InvalidParameter,
    InvalidState,
    ProtocolOrderError,
    SessionAborted,
)


class Variant(str, enum.Enum):
    DL = "DL"
    DDT = "DDT"
    IMPLICIT = "Implicit"
    PIGGY_BANK = "PiggyBank"


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Phase(str, enum.Enum):
    IDLE = "idle"
    AWAITING_PASS2 = "awaiting_pass2"
    AWAITING_PASS3 = "awaiting_pass3"
    DONE = "done"
    ABORTED = "aborted"


_PHASE_ORDER = {Phase.IDLE: 0, Phase.AWAITING_PASS2: 1, Phase.AWAITING_PASS3: 2, Phase.DONE: 3}


@dataclass(frozen=True)
class Envelope:
    session_id: int
    variant: Variant
    pass_index: int
    payload: bytes
    signature: Digest | None
    sender: str
    receiver: str
    sent_tick: int = 0
    received_tick: int | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.pass_index <= 3:
            raise InvalidParameter(f"pass_index must be 1..3, got {self.pass_index}")
        if self.sent_tick < 0:
            raise InvalidParameter("sent_tick must be >= 0")
        if self.received_tick is not None and self.received_tick < self.sent_tick:
            raise InvalidParameter("received_tick precedes sent_tick")

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "variant": self.variant.value,
            "pass_index": self.pass_index,
            "payload": self.payload.hex(),
            "signature": self.signature.hex() if self.signature is not None else None,
            "sender": self.sender,
            "receiver": self.receiver,
            "sent_tick": self.sent_tick,
            "received_tick": self.received_tick,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Envelope:
        sig = d["signature"]
        return cls(
            session_id=d["session_id"],
            variant=Variant(d["variant"]),
            pass_index=d["pass_index"],
            payload=bytes.fromhex(d["payload"]),
            signature=Digest.fromhex(sig) if sig is not None else None,
            sender=d["sender"],
            receiver=d["receiver"],
            sent_tick=d["sent_tick"],
            received_tick=d["received_tick"],
        )


@dataclass
class SessionState:
    """One party's view of one protocol run.

    ``node`` and ``peer`` are the names this state claims on the wire; an
    adversary's states claim to be the honest party they impersonate.
    """

    role: Role
    variant: Variant
    own_key: LockKey
    node: str = "alice"
    peer: str = "bob"
    session_id: int = 0
    shared_R: SharedSecret | None = None
    identity: SharedSecret | None = None
    sign_pass3: bool = True
    phase: Phase = Phase.IDLE
    abort_reason: AbortReason | None = None
    timing_log: list[tuple[str, int]] = field(default_factory=list)
    secret_S: bytes = b""
    recovered_S: bytes | None = None

    def advance(self, phase: Phase) -> None:
        if self.phase in (Phase.DONE, Phase.ABORTED):
            raise ProtocolOrderError(f"session already {self.phase.value}")
        if phase is not Phase.ABORTED and _PHASE_ORDER[phase] <= _PHASE_ORDER[self.phase]:
            raise ProtocolOrderError(f"cannot move from {self.phase.value} to {phase.value}")
        self.phase = phase

    def abort(self, reason: AbortReason) -> SessionAborted:
        self.advance(Phase.ABORTED)
        self.abort_reason = AbortReason(reason)
        return SessionAborted(reason, f"{self.node} aborted session {self.session_id}: {reason.value}")

    @property
    def terminal(self) -> bool:
        return self.phase in (Phase.DONE, Phase.ABORTED)


def _expect(state: SessionState, role: Role, phase: Phase, env: Envelope | None = None, pass_index: int = 0) -> None:
    if state.role is not role:
        raise ProtocolOrderError(f"operation requires the {role.value} role")
    if state.phase is not phase:
        raise ProtocolOrderError(f"operation requires phase {phase.value}, session is {state.phase.value}")
    if env is not None and env.pass_index != pass_index:
        raise ProtocolOrderError(f"expected pass {pass_index}, got pass {env.pass_index}")


def _envelope(state: SessionState, pass_index: int, payload: bytes, signature: Digest | None = None) -> Envelope:
    return Envelope(state.session_id, state.variant, pass_index, payload, signature, state.node, state.peer)


# -- authority ----------------------------------------------------------------

def handshake(authority_seed: int) -> SharedSecret:
    """Derive the session secret R the authority hands to both honest parties."""
    return SharedSecret(hashlib.sha256(b"ddtlab/R" + authority_seed.to_bytes(8, "big")).digest())


def identity_secret(node: str, seed: int) -> SharedSecret:
    return SharedSecret(hashlib.sha256(b"ddtlab/id/" + node.encode() + seed.to_bytes(8, "big")).digest())


class Authority:
    """Registry of honest parties and their long-term identity secrets.

    Only registered names receive R from :meth:`handshake`; the adversary is
    never registered, so no code path hands it R.
    """

    def __init__(self) -> None:
        self._identities: dict[str, SharedSecret] = {}

    def register(self, node: str, identity: SharedSecret) -> None:
        self._identities[node] = identity

    def identity_of(self, node: str) -> SharedSecret | None:
        return self._identities.get(node)

    @property
    def registered(self) -> tuple[str, ...]:
        return tuple(self._identities)

    def handshake(self, authority_seed: int, holders: Mapping[str, object]) -> SharedSecret:
        """Deliver R to every registered holder by setting its ``shared_R``."""
        R = handshake(authority_seed)
        for node, holder in holders.items():
            if node in self._identities:
                holder.shared_R = R
        return R


# -- plain double lock ---------------------------------------------------------

def dl_pass1(state: SessionState, S: bytes, *, tick: int = 0) -> Envelope:
    _expect(state, Role.INITIATOR, Phase.IDLE)
    key = state.own_key
    payload = lock_payload(key, encode_payload(key, S))
    state.secret_S = bytes(S)
    state.advance(Phase.AWAITING_PASS2)
    state.timing_log.append(("send", tick))
    return _envelope(state, 1, payload)


def dl_pass2(state: SessionState, env: Envelope, *, tick: int = 0) -> Envelope:
    _expect(state, Role.RESPONDER, Phase.IDLE, env, 1)
    state.timing_log.append(("recv", tick))
    payload = _try_decode(state, lambda: lock_payload(state.own_key, env.payload))
    state.advance(Phase.AWAITING_PASS3)
    return _envelope(state, 2, payload)


def dl_pass3(state: SessionState, env: Envelope, *, tick: int = 0) -> Envelope:
    _expect(state, Role.INITIATOR, Phase.AWAITING_PASS2, env, 2)
    state.timing_log.append(("recv", tick))
    payload = _try_decode(state, lambda: unlock_payload(state.own_key, env.payload))
    state.advance(Phase.DONE)
    return _envelope(state, 3, payload)


def dl_open(state: SessionState, env: Envelope, *, tick: int = 0) -> bytes:
    _expect(state, Role.RESPONDER, Phase.AWAITING_PASS3, env, 3)
    state.timing_log.append(("recv", tick))
    key = state.own_key
    S = _try_decode(state, lambda: decode_payload(key, unlock_payload(key, env.payload)))
    state.recovered_S = S
    state.advance(Phase.DONE)
    return S


def _try_decode(state: SessionState, fn):
    try:
        return fn()
    except (DecodeFailure, ValueError) as exc:
        raise state.abort(AbortReason.DECODE_FAILURE) from exc


# -- double-signature double lock -------------------------------------------------

def _require_R(state: SessionState) -> SharedSecret:
    if state.shared_R is None:
        raise InvalidState("DDT session has no shared R")
    return state.shared_R


def _check(state: SessionState, env: Envelope, tick: int) -> None:
    R = _require_R(state)
    if not verify(R, env.payload, env.signature):
        state.timing_log.append(("recv", tick))
        raise state.abort(AbortReason.SIGNATURE_MISMATCH)


def ddt_pass1(state: SessionState, S: bytes, *, tick: int = 0) -> Envelope:
    R = _require_R(state)
    env = dl_pass1(state, S, tick=tick)
    return replace(env, signature=sign(R, env.payload))


def ddt_pass2(state: SessionState, env: Envelope, *, tick: int = 0) -> Envelope:
    _expect(state, Role.RESPONDER, Phase.IDLE, env, 1)
    _check(state, env, tick)
    out = dl_pass2(state, env, tick=tick)
    return replace(out, signature=sign(state.shared_R, out.payload))


def ddt_pass3(state: SessionState, env: Envelope, *, tick: int = 0) -> Envelope:
    _expect(state, Role.INITIATOR, Phase.AWAITING_PASS2, env, 2)
    _check(state, env, tick)
    out = dl_pass3(state, env, tick=tick)
    if state.sign_pass3:
        out = replace(out, signature=sign(state.shared_R, out.payload))
    return out


def ddt_open(state: SessionState, env: Envelope, *, tick: int = 0) -> bytes:
    _expect(state, Role.RESPONDER, Phase.AWAITING_PASS3, env, 3)
    if state.sign_pass3:
        _check(state, env, tick)
    return dl_open(state, env, tick=tick)


# -- implicit chaining ----------------------------------------------------------

def _pad(a: bytes, b: bytes) -> tuple[bytes, bytes]:
    n = max(len(a), len(b))
    return a.ljust(n, b"\0"), b.ljust(n, b"\0")


def chain_encode(S_i: bytes, prev: bytes) -> bytes:
    """Mask ``S_i`` by bytewise addition mod 256 of the previous chain value."""
    s, p = _pad(S_i, prev)
    return bytes((x + y) & 0xFF for x, y in zip(s, p))


def chain_decode(payload: bytes, prev: bytes, size: int | None = None) -> bytes:
    """Inverse of :func:`chain_encode`; ``size`` trims the zero padding."""
    c, p = _pad(payload, prev)
    out = bytes((x - y) & 0xFF for x, y in zip(c, p))
    return out if size is None else out[:size]


# -- piggy bank -------------------------------------------------------------------

@dataclass(frozen=True)
class PiggyBox:
    box_key: LockKey
    sealed_contents: bytes | None = None
    letter_ciphertext: bytes | None = None
    letter_signature: Digest | None = None
    sender: str | None = None


_LEN = struct.Struct(">I")


def pack_sealed(secret: bytes, letter_key: bytes) -> bytes:
    return _LEN.pack(len(secret)) + secret + letter_key


def unpack_sealed(plain: bytes) -> tuple[bytes, bytes]:
    if len(plain) < _LEN.size:
        raise DecodeFailure("sealed contents shorter than length prefix")
    (n,) = _LEN.unpack_from(plain)
    if _LEN.size + n > len(plain):
        raise DecodeFailure("sealed secret length exceeds contents")
    return plain[_LEN.size:_LEN.size + n], plain[_LEN.size + n:]


def pb_issue_box(state: SessionState, *, tick: int = 0) -> PiggyBox:
    """Hand out an empty box that only ``state``'s owner can open."""
    if state.role is not Role.RESPONDER:
        raise ProtocolOrderError("only the responder issues a box")
    if state.phase is Phase.IDLE:
        state.advance(Phase.AWAITING_PASS2)
        state.timing_log.append(("send", tick))
    return PiggyBox(box_key=state.own_key.lock_half())


def pb_deposit(
    state: SessionState,
    box: PiggyBox,
    secret: bytes,
    manifest: bytes,
    *,
    letter_seed: int = 0,
    tick: int = 0,
) -> PiggyBox:
    if box.sealed_contents is not None:
        raise InvalidState("box already holds sealed contents")
    if state.identity is None:
        raise InvalidState("depositor has no identity secret on file")
    letter_key = keygen_xor(letter_seed, max(1, len(manifest)))
    key = box.box_key
    sealed = lock_payload(key, encode_payload(key, pack_sealed(secret, letter_key.keystream)))
    if state.phase is Phase.IDLE and state.role is Role.INITIATOR:
        state.secret_S = bytes(secret)
        state.advance(Phase.DONE)
        state.timing_log.extend([("recv", tick), ("send", tick)])
    return replace(
        box,
        sealed_contents=sealed,
        letter_ciphertext=lock(letter_key, manifest),
        letter_signature=sign(state.identity, manifest),
        sender=state.node,
    )


def pb_open(state: SessionState, box: PiggyBox, authority: Authority, *, tick: int = 0) -> tuple[bytes, bytes, bool]:
    """Open the box and check the letter; returns (secret, manifest, authenticated).

    A session whose letter does not authenticate ends aborted with
    signature-mismatch; the contents are still returned for inspection.
    """
    if box.sealed_contents is None:
        raise InvalidState("box is empty")
    if box.letter_ciphertext is None or box.letter_signature is None:
        raise IncompleteDelivery("letter missing")
    key = state.own_key
    try:
        secret, letter_key = unpack_sealed(decode_payload(key, unlock_payload(key, box.sealed_contents)))
    except ValueError as exc:
        raise DecodeFailure(str(exc)) from exc
    manifest = b""
    readable = len(box.letter_ciphertext) <= len(letter_key)
    if readable and letter_key:
        manifest = unlock(LockKey.xor(letter_key), box.letter_ciphertext)
    identity = authority.identity_of(box.sender) if box.sender else None
    authenticated = readable and identity is not None and verify(identity, manifest, box.letter_signature)
    if not state.terminal:
        state.timing_log.append(("recv", tick))
        if authenticated:
            state.recovered_S = secret
            state.phase = Phase.DONE
        else:
            state.abort(AbortReason.SIGNATURE_MISMATCH)
    return secret, manifest, authenticated


# -- out-of-band content check ---------------------------------------------------

def compare_digests(sent_digest: Digest, received_payload: bytes) -> bool:
    return hmac.compare_digest(sent_digest.bytes, digest(received_payload).bytes)
