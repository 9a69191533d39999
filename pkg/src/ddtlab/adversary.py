"""The man in the middle.

Eve sits on the links listed in the topology's ``eve_cut``. Toward Alice
she plays Bob and toward Bob she plays Alice, each with her own lock E and
the ordinary double-lock state machine. She never holds R: against DDT she
can only copy, replay or guess signatures.

Strategies:

PassiveForward
    Forward every envelope unchanged (control baseline).
FakeGift
    Steal S from Alice and, independently, hand Bob a fake gift F. The Bob
    side starts at the tick Eve would open Alice's box, so with Eve midway
    on unit links Bob's exchanges fall on ticks 4 and 6.
DelayedRelay
    Steal S, then deliver the genuine S to Bob one step behind Alice.
    Signatures on intercepted envelopes are copied verbatim.
Replay
    Forward payloads but swap each signature for one recorded on an earlier
    pass of the same session.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from typing import Callable

from . import protocol as proto
from .commute_crypto import Digest, LockKey, SharedSecret, encode_payload, keygen_xor, lock_payload, sign
from .errors import DDTLabError, NoMaterial
from .netsim import EVE, link
from .parties import decode_box_key
from .protocol import Envelope, Role, SessionState, Variant


class Strategy(str, enum.Enum):
    PASSIVE_FORWARD = "PassiveForward"
    FAKE_GIFT = "FakeGift"
    DELAYED_RELAY = "DelayedRelay"
    REPLAY = "Replay"


def _no_log(*_args) -> None:
    pass


@dataclass
class EveState:
    strategy: Strategy
    own_key: LockKey
    variant: Variant = Variant.DL
    fake_gift: bytes = b""
    processing_delay: int = 0
    alice_latency: int = 1
    cut: frozenset = frozenset({link("alice", "bob")})
    guess_R: SharedSecret | None = None
    seed: int = 0
    log: Callable[..., None] = _no_log
    sessions_with_alice: dict[int, SessionState] = field(default_factory=dict)
    sessions_with_bob: dict[int, SessionState] = field(default_factory=dict)
    recovered: dict[int, bytes] = field(default_factory=dict)
    recorded_envelopes: list[Envelope] = field(default_factory=list)
    _box_keys: dict[int, LockKey] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.strategy = Strategy(self.strategy)
        if self.guess_R is None:
            self.guess_R = SharedSecret(random.Random(self.seed).randbytes(32))

    def _side(self, sid: int, toward: str) -> SessionState:
        """Eve's session toward ``toward``; she claims the other honest name."""
        table = self.sessions_with_alice if toward == "alice" else self.sessions_with_bob
        if sid not in table:
            table[sid] = SessionState(
                role=Role.RESPONDER if toward == "alice" else Role.INITIATOR,
                variant=self.variant,
                own_key=self.own_key,
                node="bob" if toward == "alice" else "alice",
                peer=toward,
                session_id=sid,
            )
        return table[sid]


def replay_signature(eve: EveState, target_pass: int, session_id: int | None = None) -> Digest:
    """Pick the latest recorded signature from a pass before ``target_pass``.

    Falls back to any recorded signature; raises NoMaterial if there is none.
    """
    signed = [
        e for e in eve.recorded_envelopes
        if e.signature is not None and (session_id is None or e.session_id == session_id)
    ]
    if not signed:
        raise NoMaterial("no signature recorded")
    earlier = [e for e in signed if e.pass_index < target_pass]
    return (earlier or signed)[-1].signature


def _forged(eve: EveState, env: Envelope, copied: Digest | None) -> Envelope:
    """Attach whatever signature Eve can produce without R."""
    if eve.variant is not Variant.DDT:
        return env
    if eve.strategy is Strategy.DELAYED_RELAY:
        return replace(env, signature=copied)
    return replace(env, signature=sign(eve.guess_R, env.payload))


def eve_step(eve: EveState, intercepted: Envelope, tick: int) -> list[tuple[Envelope, str, int]]:
    env = intercepted
    if link(env.sender, env.receiver) not in eve.cut:
        return [(env, env.receiver, tick)]
    eve.recorded_envelopes.append(env)
    out_tick = tick + eve.processing_delay
    try:
        if eve.strategy is Strategy.PASSIVE_FORWARD:
            return [(env, env.receiver, out_tick)]
        if eve.strategy is Strategy.REPLAY:
            if env.signature is not None and env.pass_index >= 2:
                env = replace(env, signature=replay_signature(eve, env.pass_index, env.session_id))
            return [(env, env.receiver, out_tick)]
        if eve.variant is Variant.PIGGY_BANK:
            return _piggy_substitute(eve, env, out_tick)
        return _lock_swap(eve, env, tick, out_tick)
    except (DDTLabError, ValueError):
        return []


def _lock_swap(eve: EveState, env: Envelope, tick: int, out_tick: int) -> list[tuple[Envelope, str, int]]:
    sid = env.session_id
    out: list[tuple[Envelope, str, int]] = []
    if env.sender == "alice" and env.pass_index == 1:
        st = eve._side(sid, "alice")
        reply = proto.dl_pass2(st, env, tick=tick)
        eve.log(tick, EVE, "lock", sid, 2)
        out.append((_forged(eve, reply, env.signature), "alice", out_tick))
        if eve.strategy is Strategy.FAKE_GIFT:
            # F does not depend on S: start Bob's side when Alice's pass 3 is due.
            launch = out_tick + 2 * eve.alice_latency + eve.processing_delay
            out.append(_launch_bob(eve, sid, eve.fake_gift, launch, None))
    elif env.sender == "alice" and env.pass_index == 3:
        S = proto.dl_open(eve._side(sid, "alice"), env, tick=tick)
        eve.recovered[sid] = S
        eve.log(tick, EVE, "unlock", sid, 3)
        eve.log(tick, EVE, "open", sid, 3)
        if eve.strategy is Strategy.DELAYED_RELAY:
            first = next((e.signature for e in eve.recorded_envelopes
                          if e.session_id == sid and e.pass_index == 1 and e.sender == "alice"), None)
            out.append(_launch_bob(eve, sid, S, out_tick, first))
    elif env.sender == "bob" and env.pass_index == 2:
        st = eve.sessions_with_bob.get(sid)
        if st is not None:
            reply = proto.dl_pass3(st, env, tick=tick)
            eve.log(tick, EVE, "unlock", sid, 3)
            out.append((_forged(eve, reply, env.signature), "bob", out_tick))
    return out


def _launch_bob(eve: EveState, sid: int, content: bytes, tick: int, copied: Digest | None) -> tuple[Envelope, str, int]:
    st = eve._side(sid, "bob")
    env = proto.dl_pass1(st, content, tick=tick)
    eve.log(tick, EVE, "lock", sid, 1)
    return _forged(eve, env, copied), "bob", tick


def _piggy_substitute(eve: EveState, env: Envelope, out_tick: int) -> list[tuple[Envelope, str, int]]:
    """FakeGift against the piggy bank: reseal F in Bob's box under Eve's own letter key."""
    sid = env.session_id
    if env.pass_index == 1 and env.sender == "bob":
        eve._box_keys[sid] = decode_box_key(env.payload)
    elif env.pass_index == 2 and env.sender == "alice" and sid in eve._box_keys:
        key = eve._box_keys[sid]
        letter_key = keygen_xor(eve.seed + sid, 32)
        forged = lock_payload(key, encode_payload(key, proto.pack_sealed(eve.fake_gift, letter_key.keystream)))
        eve.log(out_tick, EVE, "lock", sid, 2)
        env = replace(env, payload=forged)
    return [(env, env.receiver, out_tick)]
