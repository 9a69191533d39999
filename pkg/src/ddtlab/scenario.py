"""Scenario documents: parsing, validation, canonical form.

A scenario is a JSON object checked against ``data/scenario.schema.json``
(unknown keys rejected), then cross-checked for things a schema cannot
express: referenced nodes exist, an adversary has links to reach, FakeGift
names its gift, delay sequences cover every round.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import jsonschema

from .adversary import Strategy
from .commute_crypto import DEFAULT_PRIME, Backend, _is_prime
from .detect import MSEQ_TAPS, Thresholds
from .errors import ConfigError
from .netsim import EVE, Topology, link
from .parties import MANIFEST_SIZE, R_SIZE
from .protocol import Variant


@dataclass(frozen=True)
class AdversaryConfig:
    strategy: Strategy
    fake_gift: bytes | None = None
    processing_delay: int = 0


@dataclass(frozen=True)
class CryptoConfig:
    backend: Backend = Backend.EXP_MOD_P
    p: int = DEFAULT_PRIME
    keystream_len: int = 128


@dataclass(frozen=True)
class DelayConfig:
    kind: str
    delta: int
    k: int = 3
    taps: int | None = None
    seed: int | None = None
    row: int = 1
    n: int = 8
    party: str = "bob"

    @property
    def length(self) -> int:
        return (1 << self.k) - 1 if self.kind == "m-sequence" else self.n


@dataclass(frozen=True)
class Scenario:
    variant: Variant
    topology: Topology
    name: str = "unnamed"
    adversary: AdversaryConfig | None = None
    crypto: CryptoConfig = CryptoConfig()
    secret_bytes: int = 32
    rounds: int = 1
    delays: DelayConfig | None = None
    thresholds: Thresholds = Thresholds()
    processing: dict = field(default_factory=dict)
    seed: int = 0
    sign_pass3: bool = True
    timeout_ticks: int | None = None

    @property
    def baseline_round_trip(self) -> int:
        return 2 * self.topology.latency_between("alice", "bob")

    @property
    def effective_timeout(self) -> int:
        return self.timeout_ticks if self.timeout_ticks is not None else 10 * self.baseline_round_trip

    def calibration(self) -> Scenario:
        """Same topology and processing with no adversary, no delays, one round."""
        return _replace(self, adversary=None, delays=None, rounds=1, name=f"{self.name}/calibration")

    def with_seed(self, seed: int) -> Scenario:
        return _replace(self, seed=seed)

    def to_dict(self) -> dict:
        topo = self.topology
        adv = self.adversary
        d = self.delays
        return {
            "name": self.name,
            "variant": self.variant.value,
            "topology": {
                "nodes": list(topo.nodes),
                "latency": {_link_name(pair): t for pair, t in sorted(topo.latency.items(), key=lambda kv: _link_name(kv[0]))},
                "eve_cut": sorted(_link_name(pair) for pair in topo.eve_cut),
            },
            "adversary": None if adv is None else {
                "strategy": adv.strategy.value,
                "fake_gift": adv.fake_gift.hex() if adv.fake_gift is not None else None,
                "processing_delay": adv.processing_delay,
            },
            "crypto": {
                "backend": self.crypto.backend.value,
                "p": self.crypto.p,
                "keystream_len": self.crypto.keystream_len,
            },
            "secret_bytes": self.secret_bytes,
            "rounds": self.rounds,
            "delays": None if d is None else {
                "kind": d.kind, "k": d.k, "taps": d.taps, "seed": d.seed,
                "row": d.row, "n": d.n, "delta": d.delta, "party": d.party,
            },
            "thresholds": self.thresholds.to_dict(),
            "processing": {"alice": self.processing.get("alice", 0), "bob": self.processing.get("bob", 0)},
            "seed": self.seed,
            "sign_pass3": self.sign_pass3,
            "timeout_ticks": self.timeout_ticks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _replace(s: Scenario, **changes) -> Scenario:
    from dataclasses import replace

    return replace(s, **changes)


def _link_name(pair: frozenset) -> str:
    return "-".join(sorted(pair))


@lru_cache(maxsize=1)
def scenario_schema() -> dict:
    return json.loads(resources.files("ddtlab").joinpath("data/scenario.schema.json").read_text())


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = [k for k in err.instance if k not in allowed]
        if extra:
            parts.append(extra[0])
    return ".".join(parts)


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"not valid JSON: {exc}") from None
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(scenario_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_path(err), err.message)

    t = doc["topology"]
    nodes = tuple(t["nodes"])
    latency = {}
    for name, ticks in t["latency"].items():
        a, b = name.split("-")
        if a == b:
            raise ConfigError(f"topology.latency.{name}", "self-link")
        for n in (a, b):
            if n not in nodes:
                raise ConfigError(f"topology.latency.{name}", f"unknown node {n!r}")
        if link(a, b) in latency:
            raise ConfigError(f"topology.latency.{name}", "link declared twice")
        latency[link(a, b)] = ticks
    cut = set()
    for name in t.get("eve_cut", []):
        a, b = name.split("-")
        if link(a, b) not in latency:
            raise ConfigError("topology.eve_cut", f"link {name} is not declared in topology.latency")
        cut.add(link(a, b))
    if "alice" not in nodes or "bob" not in nodes:
        raise ConfigError("topology.nodes", "alice and bob are required")
    if link("alice", "bob") not in latency:
        raise ConfigError("topology.latency", "alice-bob latency is required")
    topology = Topology(nodes, latency, frozenset(cut))

    variant = Variant(doc["variant"])

    adversary = None
    a = doc.get("adversary")
    if a is not None:
        strategy = Strategy(a["strategy"])
        gift = a.get("fake_gift")
        if strategy is Strategy.FAKE_GIFT and not gift:
            raise ConfigError("adversary.fake_gift", "FakeGift requires a non-empty fake_gift")
        adversary = AdversaryConfig(strategy, bytes.fromhex(gift) if gift else None, a.get("processing_delay", 0))
        if EVE not in nodes:
            raise ConfigError("topology.nodes", "an adversary requires node 'eve'")
        for other in ("alice", "bob"):
            if link(other, EVE) not in latency:
                raise ConfigError("topology.latency", f"{other}-eve latency is required with an adversary")
        if not cut:
            raise ConfigError("topology.eve_cut", "an adversary needs at least one link to control")
        if variant is Variant.PIGGY_BANK and strategy not in (Strategy.PASSIVE_FORWARD, Strategy.FAKE_GIFT):
            raise ConfigError("adversary.strategy", "PiggyBank supports PassiveForward and FakeGift only")

    c = doc.get("crypto", {})
    crypto = CryptoConfig(
        Backend(c.get("backend", Backend.EXP_MOD_P.value)),
        c.get("p", DEFAULT_PRIME),
        c.get("keystream_len", CryptoConfig.keystream_len),
    )
    if crypto.backend is Backend.EXP_MOD_P and not _is_prime(crypto.p):
        raise ConfigError("crypto.p", f"{crypto.p} is not prime")

    secret_bytes = doc.get("secret_bytes", 32)
    rounds = doc.get("rounds", 1)

    delays = None
    d = doc.get("delays")
    if d is not None:
        delays = DelayConfig(
            kind=d["kind"], delta=d["delta"], k=d.get("k", 3), taps=d.get("taps"),
            seed=d.get("seed"), row=d.get("row", 1), n=d.get("n", 8), party=d.get("party", "bob"),
        )
        if delays.kind == "m-sequence":
            if delays.taps is not None and delays.taps != MSEQ_TAPS[delays.k]:
                raise ConfigError("delays.taps", f"taps not in the built-in table for k={delays.k}")
            if delays.seed is not None and delays.seed % (1 << delays.k) == 0:
                raise ConfigError("delays.seed", "LFSR seed must be non-zero modulo 2**k")
        else:
            if delays.n & (delays.n - 1):
                raise ConfigError("delays.n", "Walsh order must be a power of two")
            if delays.row >= delays.n:
                raise ConfigError("delays.row", "row must be below n")
        if rounds != delays.length:
            raise ConfigError("rounds", f"rounds={rounds} must equal the delay sequence length {delays.length}")
        if variant is Variant.PIGGY_BANK:
            raise ConfigError("delays", "delay sequences are not supported for PiggyBank")

    if crypto.backend is Backend.XOR_PAD:
        need = secret_bytes
        if variant is Variant.IMPLICIT:
            need = max(secret_bytes, R_SIZE)
        if variant is Variant.PIGGY_BANK:
            need = 4 + secret_bytes + MANIFEST_SIZE
        if adversary is not None and adversary.fake_gift:
            need = max(need, len(adversary.fake_gift) + (4 + MANIFEST_SIZE if variant is Variant.PIGGY_BANK else 0))
        if crypto.keystream_len < need:
            raise ConfigError("crypto.keystream_len", f"must be at least {need} bytes for this scenario")

    return Scenario(
        variant=variant,
        topology=topology,
        name=doc.get("name", "unnamed"),
        adversary=adversary,
        crypto=crypto,
        secret_bytes=secret_bytes,
        rounds=rounds,
        delays=delays,
        thresholds=Thresholds(**doc.get("thresholds", {})),
        processing=dict(doc.get("processing", {})),
        seed=doc.get("seed", 0),
        sign_pass3=doc.get("sign_pass3", True),
        timeout_ticks=doc.get("timeout_ticks"),
    )


def canonical(text: str) -> str:
    return parse_scenario(text).to_json()


def shipped_scenarios() -> dict[str, str]:
    """Name -> JSON text of every reference scenario bundled with the package."""
    root = resources.files("ddtlab").joinpath("data/scenarios")
    return {
        entry.name[:-5]: entry.read_text()
        for entry in sorted(root.iterdir(), key=lambda e: e.name)
        if entry.name.endswith(".json")
    }


def load_scenario(name_or_path: str) -> Scenario:
    """Read a scenario file, or a shipped scenario by name."""
    from pathlib import Path

    path = Path(name_or_path)
    if path.is_file():
        try:
            return parse_scenario(path.read_text())
        except OSError as exc:
            raise ConfigError("", f"cannot read {path}: {exc}") from None
    shipped = shipped_scenarios()
    if name_or_path in shipped:
        return parse_scenario(shipped[name_or_path])
    raise ConfigError("", f"no scenario file or shipped scenario named {name_or_path!r}")
