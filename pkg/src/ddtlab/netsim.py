"""Deterministic discrete-event network with integer ticks.

Envelopes travel over symmetric links with fixed latencies. When an
adversary is active, envelopes on links in ``eve_cut`` are delivered to the
adversary instead of their addressee, after the sender-to-adversary latency.

Events are processed in ``(tick, node, session, pass, insertion)`` order,
so identical scenarios produce identical traces.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping

from .errors import ConfigError
from .protocol import Envelope, Phase, Variant

if TYPE_CHECKING:
    from .adversary import EveState
    from .parties import HonestParty
    from .scenario import Scenario

EVE = "eve"


def link(a: str, b: str) -> frozenset[str]:
    return frozenset((a, b))


@dataclass(frozen=True)
class Topology:
    nodes: tuple[str, ...]
    latency: Mapping[frozenset[str], int]
    eve_cut: frozenset[frozenset[str]] = frozenset()

    def __post_init__(self) -> None:
        for pair, ticks in self.latency.items():
            if len(pair) != 2:
                raise ConfigError("topology.latency", "self-links are not allowed")
            missing = set(pair) - set(self.nodes)
            if missing:
                raise ConfigError("topology.latency", f"unknown node(s) {sorted(missing)}")
            if not isinstance(ticks, int) or ticks <= 0:
                raise ConfigError("topology.latency", f"latency of {'-'.join(sorted(pair))} must be a positive integer")
        for pair in self.eve_cut:
            if pair not in self.latency:
                raise ConfigError("topology.eve_cut", f"link {'-'.join(sorted(pair))} is not declared")

    @classmethod
    def from_latencies(
        cls,
        latencies: Mapping[tuple[str, str], int],
        eve_cut: Iterable[tuple[str, str]] = (),
    ) -> Topology:
        nodes: list[str] = []
        for a, b in latencies:
            for n in (a, b):
                if n not in nodes:
                    nodes.append(n)
        return cls(
            tuple(nodes),
            {link(a, b): t for (a, b), t in latencies.items()},
            frozenset(link(a, b) for a, b in eve_cut),
        )

    def latency_between(self, a: str, b: str) -> int:
        try:
            return self.latency[link(a, b)]
        except KeyError:
            raise ConfigError("topology.latency", f"no link between {a} and {b}") from None


class EventKind(str, enum.Enum):
    SEND = "send"
    RECV = "recv"
    LOCK = "lock"
    UNLOCK = "unlock"
    VERIFY_OK = "verify-ok"
    VERIFY_FAIL = "verify-fail"
    ABORT = "abort"
    OPEN = "open"
    HANDSHAKE = "handshake"


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    node: str
    kind: EventKind
    session_id: int
    pass_index: int | None = None

    def sort_key(self) -> tuple:
        return (self.tick, self.node, self.session_id, -1 if self.pass_index is None else self.pass_index)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "node": self.node,
            "kind": self.kind.value,
            "session_id": self.session_id,
            "pass_index": self.pass_index,
        }


def canonical_json(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


@dataclass
class Trace:
    events: list[TraceEvent]
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        # Stable sort keeps emission order among equal keys.
        self.events = sorted(self.events, key=TraceEvent.sort_key)

    @property
    def config_digest(self) -> str:
        return hashlib.sha256(canonical_json(self.config).encode()).hexdigest()

    def header(self) -> dict:
        return {"type": "header", "seed": self.seed, "config_digest": self.config_digest}

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header())]
        lines += [json.dumps(e.to_dict()) for e in self.events]
        return "\n".join(lines) + "\n"

    def for_node(self, node: str, session_id: int | None = None) -> list[TraceEvent]:
        return [
            e for e in self.events
            if e.node == node and (session_id is None or e.session_id == session_id)
        ]

    def session_ids(self) -> list[int]:
        return sorted({e.session_id for e in self.events if e.kind is not EventKind.HANDSHAKE})


@dataclass(frozen=True)
class Delivery:
    """One hop: ``sender`` put ``envelope`` on the wire for ``intended``; it reaches ``dest``."""

    sent_tick: int
    arrival: int
    sender: str
    intended: str
    dest: str
    envelope: Envelope


class Network:
    """Link latencies plus the pending-delivery queue."""

    def __init__(self, topology: Topology, adversary_active: bool = False) -> None:
        self.topology = topology
        self.adversary_active = adversary_active
        self._queue: list[tuple] = []
        self._seq = itertools.count()

    def schedule(self, env: Envelope, frm: str, to: str, now: int) -> Delivery:
        if frm == to:
            raise ConfigError("topology", f"{frm} cannot send to itself")
        latency = self.topology.latency_between(frm, to)
        dest = to
        if self.adversary_active and link(frm, to) in self.topology.eve_cut:
            dest = EVE
            latency = self.topology.latency_between(frm, EVE)
        arrival = now + latency
        env = replace(env, sent_tick=now, received_tick=arrival)
        d = Delivery(now, arrival, frm, to, dest, env)
        heapq.heappush(self._queue, (arrival, dest, env.session_id, env.pass_index, next(self._seq), d))
        return d

    def pop(self) -> Delivery:
        return heapq.heappop(self._queue)[-1]

    def peek_tick(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def drain(self) -> list[Delivery]:
        out = [entry[-1] for entry in sorted(self._queue)]
        self._queue.clear()
        return out

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class Simulation:
    trace: Trace
    parties: dict[str, HonestParty]
    eve: EveState | None
    deliveries: list[Delivery]
    expired: list[Delivery]
    delay_sequence: list[int] | None = None


class _Recorder:
    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def __call__(self, tick: int, node: str, kind: str, session_id: int, pass_index: int | None = None) -> None:
        self.events.append(TraceEvent(tick, node, EventKind(kind), session_id, pass_index))


def simulate(scenario: Scenario, seed: int | None = None) -> Simulation:
    """Run every round of ``scenario`` and keep parties' final states."""
    from .parties import build_cast

    seed = scenario.seed if seed is None else seed
    log = _Recorder()
    parties, eve, delay_sequence = build_cast(scenario, seed, log)
    net = Network(scenario.topology, adversary_active=eve is not None)
    deliveries: list[Delivery] = []
    expired: list[Delivery] = []
    timeout = scenario.effective_timeout

    def dispatch(outgoing, frm: str) -> None:
        for env, dest, send_tick in outgoing:
            log(send_tick, frm, "send", env.session_id, env.pass_index)
            deliveries.append(net.schedule(env, frm, dest, send_tick))

    def expire_waiting(before: int | None) -> None:
        for party in parties.values():
            for ev in party.expire(timeout, before):
                log(*ev)

    starter = parties["bob"] if scenario.variant is Variant.PIGGY_BANK else parties["alice"]
    clock = 0
    for sid in range(scenario.rounds):
        round_start = clock
        horizon = round_start + 3 * timeout
        dispatch(starter.start(sid, round_start), starter.node)
        while len(net):
            tick = net.peek_tick()
            if tick > horizon:
                expired.extend(net.drain())
                break
            expire_waiting(tick)
            d = net.pop()
            log(d.arrival, d.dest, "recv", d.envelope.session_id, d.envelope.pass_index)
            if d.dest == EVE:
                from .adversary import eve_step

                dispatch(eve_step(eve, d.envelope, d.arrival), EVE)
            else:
                dispatch(parties[d.dest].step(d.envelope, d.arrival), d.dest)
        expire_waiting(None)
        clock = max((e.tick for e in log.events), default=round_start)

    config = scenario.to_dict()
    trace = Trace(log.events, seed, config)
    return Simulation(trace, parties, eve, deliveries, expired, delay_sequence)


def run(scenario: Scenario, seed: int | None = None) -> Trace:
    return simulate(scenario, seed).trace


def waiting(phase: Phase) -> bool:
    return phase in (Phase.AWAITING_PASS2, Phase.AWAITING_PASS3)
