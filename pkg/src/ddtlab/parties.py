"""Honest party drivers and scenario casting.

A :class:`HonestParty` turns delivered envelopes into protocol operations,
logs what it did, and returns the envelopes it sends as
``(envelope, destination, send_tick)`` triples. The network decides where
they actually go.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from . import protocol as proto
from .commute_crypto import (
    Backend,
    Digest,
    LockKey,
    SharedSecret,
    digest,
    keygen_exp,
    keygen_xor,
)
from .errors import AbortReason, DecodeFailure, DDTLabError, ProtocolOrderError, SessionAborted
from .protocol import Envelope, Phase, PiggyBox, Role, SessionState, Variant
from .seeding import derive_seed

if TYPE_CHECKING:
    from .adversary import EveState
    from .scenario import Scenario

Log = Callable[..., None]
Outgoing = list[tuple[Envelope, str, int]]

R_SIZE = 32
MANIFEST_SIZE = 32


# -- wire helpers for the piggy bank ------------------------------------------

def encode_box_key(key: LockKey) -> bytes:
    if key.backend is Backend.XOR_PAD:
        return b"X" + key.keystream
    p = key.p.to_bytes((key.p.bit_length() + 7) // 8, "big")
    e = key.e.to_bytes((key.e.bit_length() + 7) // 8, "big")
    return b"E" + struct.pack(">H", len(p)) + p + struct.pack(">H", len(e)) + e


def decode_box_key(raw: bytes) -> LockKey:
    try:
        if raw[:1] == b"X":
            return LockKey.xor(raw[1:])
        if raw[:1] == b"E":
            (np_,) = struct.unpack_from(">H", raw, 1)
            p = int.from_bytes(raw[3:3 + np_], "big")
            (ne,) = struct.unpack_from(">H", raw, 3 + np_)
            e = int.from_bytes(raw[5 + np_:5 + np_ + ne], "big")
            return LockKey(Backend.EXP_MOD_P, p=p, e=e)
    except (struct.error, ValueError) as exc:
        raise DecodeFailure(f"bad box key: {exc}") from exc
    raise DecodeFailure("unknown box key tag")


def encode_letter(ciphertext: bytes, signature: Digest) -> bytes:
    return struct.pack(">I", len(ciphertext)) + ciphertext + signature.bytes


def decode_letter(raw: bytes) -> tuple[bytes, Digest]:
    if len(raw) < 4:
        raise DecodeFailure("letter shorter than length prefix")
    (n,) = struct.unpack_from(">I", raw)
    if len(raw) != 4 + n + 32:
        raise DecodeFailure("letter length mismatch")
    return raw[4:4 + n], Digest(raw[4 + n:])


# -- parties ------------------------------------------------------------------

@dataclass
class HonestParty:
    node: str
    peer: str
    role: Role
    variant: Variant
    key: LockKey
    log: Log
    identity: SharedSecret | None = None
    shared_R: SharedSecret | None = None
    authority: proto.Authority | None = None
    sign_pass3: bool = True
    processing_delay: int = 0
    extra_delays: list[int] = field(default_factory=list)
    secrets: list[bytes] = field(default_factory=list)
    secret_size: int | None = None
    letter_seed: int = 0
    sessions: dict[int, SessionState] = field(default_factory=dict)
    sent: dict[int, bytes] = field(default_factory=dict)
    received: dict[int, bytes] = field(default_factory=dict)
    _last_tick: dict[int, int] = field(default_factory=dict)
    _chain_prev: bytes | None = None
    _piggy: dict[int, dict[int, Envelope]] = field(default_factory=dict)

    def _session(self, sid: int, role: Role | None = None) -> SessionState:
        if sid not in self.sessions:
            self.sessions[sid] = SessionState(
                role=role or self.role,
                variant=self.variant,
                own_key=self.key,
                node=self.node,
                peer=self.peer,
                session_id=sid,
                shared_R=self.shared_R,
                identity=self.identity,
                sign_pass3=self.sign_pass3,
            )
        return self.sessions[sid]

    def _emit_tick(self, sid: int, tick: int) -> int:
        extra = self.extra_delays[sid] if sid < len(self.extra_delays) else 0
        return tick + self.processing_delay + extra

    def _touch(self, sid: int, tick: int) -> None:
        self._last_tick[sid] = max(tick, self._last_tick.get(sid, tick))

    # -- entry points used by the network --

    def start(self, sid: int, tick: int) -> Outgoing:
        """Open session ``sid`` as its first sender."""
        st = self._session(sid)
        self._touch(sid, tick)
        if self.variant is Variant.PIGGY_BANK:
            box = proto.pb_issue_box(st, tick=tick)
            env = Envelope(sid, self.variant, 1, encode_box_key(box.box_key), None, self.node, self.peer)
            return [(env, self.peer, tick)]
        S = self.secrets[sid]
        self.sent[sid] = S
        payload = S
        if self.variant is Variant.IMPLICIT:
            prev = self.shared_R.bytes if self._chain_prev is None else self._chain_prev
            payload = proto.chain_encode(S, prev)
            self._chain_prev = S
        self.log(tick, self.node, "lock", sid, 1)
        if self.variant is Variant.DDT:
            env = proto.ddt_pass1(st, payload, tick=tick)
        else:
            env = proto.dl_pass1(st, payload, tick=tick)
        return [(env, self.peer, tick)]

    def step(self, env: Envelope, tick: int) -> Outgoing:
        sid = env.session_id
        try:
            if self.variant is Variant.PIGGY_BANK:
                return self._piggy_step(env, tick)
            return self._lock_step(env, tick)
        except SessionAborted as exc:
            if exc.reason is AbortReason.SIGNATURE_MISMATCH:
                self.log(tick, self.node, "verify-fail", sid, env.pass_index)
            self.log(tick, self.node, "abort", sid, env.pass_index)
            return []
        except ProtocolOrderError:
            # Stale or duplicate pass; the phase guard already refused it.
            return []

    def _lock_step(self, env: Envelope, tick: int) -> Outgoing:
        sid, ddt = env.session_id, self.variant is Variant.DDT
        if env.pass_index == 1 and self.role is Role.RESPONDER:
            st = self._session(sid)
            out = proto.ddt_pass2(st, env, tick=tick) if ddt else proto.dl_pass2(st, env, tick=tick)
            return self._send(out, sid, tick, "lock", verified=ddt)
        if env.pass_index == 2 and self.role is Role.INITIATOR:
            st = self.sessions.get(sid)
            if st is None:
                return []
            out = proto.ddt_pass3(st, env, tick=tick) if ddt else proto.dl_pass3(st, env, tick=tick)
            return self._send(out, sid, tick, "unlock", verified=ddt)
        if env.pass_index == 3 and self.role is Role.RESPONDER:
            st = self.sessions.get(sid)
            if st is None:
                return []
            if ddt:
                S = proto.ddt_open(st, env, tick=tick)
                if st.sign_pass3:
                    self.log(tick, self.node, "verify-ok", sid, 3)
            else:
                S = proto.dl_open(st, env, tick=tick)
            self.log(tick, self.node, "unlock", sid, 3)
            self.log(tick, self.node, "open", sid, 3)
            if self.variant is Variant.IMPLICIT:
                prev = self.shared_R.bytes if self._chain_prev is None else self._chain_prev
                S = proto.chain_decode(S, prev, self.secret_size)
                self._chain_prev = S
            self.received[sid] = S
            self._touch(sid, tick)
            return []
        return []

    def _send(self, env: Envelope, sid: int, tick: int, op: str, verified: bool) -> Outgoing:
        if verified:
            self.log(tick, self.node, "verify-ok", sid, env.pass_index - 1)
        self.log(tick, self.node, op, sid, env.pass_index)
        send_tick = self._emit_tick(sid, tick)
        self._touch(sid, send_tick)
        return [(env, self.peer, send_tick)]

    def _piggy_step(self, env: Envelope, tick: int) -> Outgoing:
        sid = env.session_id
        if self.role is Role.INITIATOR and env.pass_index == 1:
            st = self._session(sid)
            try:
                box = PiggyBox(box_key=decode_box_key(env.payload))
            except (DecodeFailure, DDTLabError):
                raise st.abort(AbortReason.DECODE_FAILURE) from None
            S = self.secrets[sid]
            self.sent[sid] = S
            manifest = digest(S).bytes
            sealed = proto.pb_deposit(st, box, S, manifest, letter_seed=derive_seed(self.letter_seed, f"letter/{sid}"), tick=tick)
            self.log(tick, self.node, "lock", sid, 2)
            send_tick = self._emit_tick(sid, tick)
            env2 = Envelope(sid, self.variant, 2, sealed.sealed_contents, None, self.node, self.peer)
            env3 = Envelope(sid, self.variant, 3, encode_letter(sealed.letter_ciphertext, sealed.letter_signature), None, self.node, self.peer)
            return [(env2, self.peer, send_tick), (env3, self.peer, send_tick)]
        if self.role is Role.RESPONDER and env.pass_index in (2, 3):
            st = self.sessions.get(sid)
            if st is None or st.terminal:
                return []
            parts = self._piggy.setdefault(sid, {})
            parts[env.pass_index] = env
            if len(parts) < 2:
                self._touch(sid, tick)
                return []
            try:
                ct, sig = decode_letter(parts[3].payload)
                box = PiggyBox(self.key.lock_half(), parts[2].payload, ct, sig, parts[3].sender)
                S, _, ok = proto.pb_open(st, box, self.authority, tick=tick)
            except (DecodeFailure, ValueError):
                raise st.abort(AbortReason.DECODE_FAILURE) from None
            self.log(tick, self.node, "unlock", sid, 2)
            self.log(tick, self.node, "open", sid, 3)
            if not ok:
                self.log(tick, self.node, "verify-fail", sid, 3)
                self.log(tick, self.node, "abort", sid, 3)
                return []
            self.log(tick, self.node, "verify-ok", sid, 3)
            self.received[sid] = S
            return []
        return []

    def expire(self, timeout: int, before: int | None) -> list[tuple]:
        """Abort waiting sessions whose deadline passed before tick ``before`` (all if None)."""
        events = []
        for sid, st in self.sessions.items():
            if st.phase not in (Phase.AWAITING_PASS2, Phase.AWAITING_PASS3):
                continue
            deadline = self._last_tick.get(sid, 0) + timeout
            if before is None or deadline < before:
                st.abort(AbortReason.TIMEOUT)
                events.append((deadline, self.node, "abort", sid, None))
        return events


# -- casting --------------------------------------------------------------------

def make_key(scenario: Scenario, seed: int, label: str) -> LockKey:
    c = scenario.crypto
    if c.backend is Backend.XOR_PAD:
        return keygen_xor(derive_seed(seed, label), c.keystream_len)
    return keygen_exp(c.p, derive_seed(seed, label))


def delay_symbols(scenario: Scenario, seed: int) -> list[int] | None:
    from .detect import gen_mseq, gen_walsh

    cfg = scenario.delays
    if cfg is None:
        return None
    if cfg.kind == "walsh":
        return list(gen_walsh(cfg.row, cfg.n).values)
    state = cfg.seed
    if state is None:
        state = 1 + derive_seed(seed, "delays") % ((1 << cfg.k) - 1)
    return list(gen_mseq(cfg.k, cfg.taps, state).values)


def build_cast(scenario: Scenario, seed: int, log: Log) -> tuple[dict[str, HonestParty], EveState | None, list[int] | None]:
    from .adversary import EveState

    variant = scenario.variant
    authority = proto.Authority()
    rng = random.Random(derive_seed(seed, "secrets"))
    secrets = [rng.randbytes(scenario.secret_bytes) for _ in range(scenario.rounds)]
    alice_role, bob_role = Role.INITIATOR, Role.RESPONDER
    common = dict(variant=variant, log=log, authority=authority, sign_pass3=scenario.sign_pass3)
    alice = HonestParty(
        "alice", "bob", alice_role, key=make_key(scenario, seed, "key/alice"),
        identity=proto.identity_secret("alice", derive_seed(seed, "identity")),
        processing_delay=scenario.processing.get("alice", 0),
        secrets=secrets, letter_seed=derive_seed(seed, "letters"), **common,
    )
    bob = HonestParty(
        "bob", "alice", bob_role, key=make_key(scenario, seed, "key/bob"),
        identity=proto.identity_secret("bob", derive_seed(seed, "identity")),
        processing_delay=scenario.processing.get("bob", 0),
        secret_size=scenario.secret_bytes, **common,
    )
    parties = {"alice": alice, "bob": bob}
    for p in parties.values():
        authority.register(p.node, p.identity)

    symbols = delay_symbols(scenario, seed)
    needs_handshake = variant in (Variant.DDT, Variant.IMPLICIT) or symbols is not None
    if needs_handshake:
        authority.handshake(derive_seed(seed, "authority"), parties)
        for p in parties.values():
            log(0, p.node, "handshake", 0, None)
    if symbols is not None:
        delta = scenario.delays.delta
        parties[scenario.delays.party].extra_delays = [delta * (v + 1) // 2 for v in symbols]

    eve = None
    adv = scenario.adversary
    if adv is not None:
        eve = EveState(
            strategy=adv.strategy,
            own_key=make_key(scenario, seed, "key/eve"),
            variant=variant,
            fake_gift=adv.fake_gift or b"",
            processing_delay=adv.processing_delay,
            alice_latency=scenario.topology.latency_between("alice", "eve"),
            cut=scenario.topology.eve_cut,
            guess_R=SharedSecret(random.Random(derive_seed(seed, "eve/guess")).randbytes(R_SIZE)),
            seed=derive_seed(seed, "eve"),
            log=log,
        )
    return parties, eve, symbols
