"""Seeded batch execution, aggregation, and output.

Run ``i`` of a batch uses seed ``scenario.seed + i``. Detector baselines
come from one calibration run: the same scenario without adversary or
delays.
"""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

from .commute_crypto import digest
from .detect import RULES, Verdict, completion_tick, delay_verdict, exchange_times, timing_verdict
from .errors import EmitError, InsufficientData
from .netsim import EVE, Simulation, Trace, simulate
from .protocol import compare_digests
from .scenario import Scenario


@dataclass(frozen=True)
class Baselines:
    interval: int | None
    total: int | None
    delay_interval: int | None

    def to_dict(self) -> dict:
        return {"interval": self.interval, "total": self.total, "delay_interval": self.delay_interval}


def calibrate(scenario: Scenario) -> Baselines:
    trace = simulate(scenario.calibration()).trace
    try:
        interval = exchange_times(trace, "alice", 0).interval
        total = completion_tick(trace, 0)
    except InsufficientData:
        interval = total = None
    delay_interval = None
    if scenario.delays is not None:
        delay_interval = exchange_times(trace, _observer(scenario), 0).interval
    return Baselines(interval, total, delay_interval)


def _observer(scenario: Scenario) -> str:
    # Bob's interval spans both Bob's pass-2 and Alice's pass-3 emission delays.
    return "bob"


@dataclass
class RunSummary:
    scenario: str
    seed: int
    runs: int
    completions: int
    aborts: dict[str, int]
    detection_rate: dict[str, float]
    recovered_equals_sent_rate: float
    eve_recovered_secret_rate: float
    bob_received_fake_rate: float
    digest_mismatch_rate: float
    eve_payload_opened_rate: float
    correlation: dict | None
    baselines: Baselines
    thresholds: dict
    per_run: list[dict]
    traces: list[Trace] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "runs": self.runs,
            "completions": self.completions,
            "aborts": dict(self.aborts),
            "detection_rate": dict(self.detection_rate),
            "recovered_equals_sent_rate": self.recovered_equals_sent_rate,
            "eve_recovered_secret_rate": self.eve_recovered_secret_rate,
            "bob_received_fake_rate": self.bob_received_fake_rate,
            "digest_mismatch_rate": self.digest_mismatch_rate,
            "eve_payload_opened_rate": self.eve_payload_opened_rate,
            "correlation": self.correlation,
            "baselines": self.baselines.to_dict(),
            "thresholds": dict(self.thresholds),
            "per_run": list(self.per_run),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"scenario {self.scenario}  seed {self.seed}  runs {self.runs}",
            f"completions {self.completions}  aborts " + (
                ", ".join(f"{k}={v}" for k, v in self.aborts.items()) or "none"),
            f"recovered=sent {self.recovered_equals_sent_rate:.3f}  eve-has-S {self.eve_recovered_secret_rate:.3f}  "
            f"bob-got-F {self.bob_received_fake_rate:.3f}  digest-mismatch {self.digest_mismatch_rate:.3f}",
            "detection " + "  ".join(f"{k}={v:.3f}" for k, v in self.detection_rate.items()),
        ]
        if self.correlation is not None:
            c = self.correlation
            lines.append(f"correlation min {c['min']:.3f} mean {c['mean']:.3f} max {c['max']:.3f}")
        return "\n".join(lines) + "\n"


def _first_abort(sim: Simulation) -> str | None:
    for e in sim.trace.events:
        if e.kind.value == "abort" and e.node in sim.parties:
            st = sim.parties[e.node].sessions.get(e.session_id)
            if st is not None and st.abort_reason is not None:
                return st.abort_reason.value
    return None


def _eve_opened(sim: Simulation) -> bool:
    """Did Bob open a session whose final pass was actually sent by Eve?"""
    bob = sim.parties["bob"]
    last = {}
    for d in sim.deliveries:
        if d.dest == "bob" and d.envelope.pass_index == 3:
            last[d.envelope.session_id] = d.sender
    return any(last.get(sid) == EVE for sid in bob.received)


def evaluate_run(scenario: Scenario, seed: int, baselines: Baselines, run_index: int = 0) -> tuple[dict, Simulation]:
    sim = simulate(scenario, seed)
    trace = sim.trace
    alice, bob = sim.parties["alice"], sim.parties["bob"]
    sent = alice.sent
    opened = {sid: s for sid, s in bob.received.items()}
    abort = _first_abort(sim)
    completed = abort is None and all(sid in opened for sid in range(scenario.rounds))
    if not completed and abort is None:
        abort = "incomplete"

    fake = scenario.adversary.fake_gift if scenario.adversary is not None else None
    eve = sim.eve
    record = {
        "run": run_index,
        "seed": seed,
        "completed": completed,
        "abort_reason": None if completed else abort,
        "rounds_opened": len(opened),
        "recovered_equals_sent": completed and all(opened[sid] == sent.get(sid) for sid in opened),
        "eve_recovered_secret": bool(eve) and any(eve.recovered.get(sid) == s for sid, s in sent.items()),
        "bob_received_fake": fake is not None and any(s == fake for s in opened.values()),
        "digest_match": (all(compare_digests(digest(sent[sid]), s) for sid, s in opened.items() if sid in sent)
                         if opened else None),
        "eve_payload_opened": _eve_opened(sim),
    }

    verdicts = []
    timing = []
    if baselines.interval and baselines.total:
        for sid in trace.session_ids():
            try:
                a = exchange_times(trace, "alice", sid)
                b = exchange_times(trace, "bob", sid)
            except InsufficientData:
                continue
            timing.append({"session": sid, "alice": list(a.exchange_ticks), "bob": list(b.exchange_ticks)})
            verdicts.append(timing_verdict(a, b, baselines.interval, baselines.total, scenario.thresholds,
                                           completion=completion_tick(trace, sid)))
    record["exchanges"] = timing
    if scenario.delays is not None:
        dv = delay_verdict(trace, scenario.delays.party, sim.delay_sequence, scenario.delays.delta,
                           scenario.thresholds.correlation, baseline=baselines.delay_interval,
                           observer=_observer(scenario))
        verdicts.append(dv)
        record["correlation"] = dv.evidence["correlation-failure"]
        record["lag_profile"] = dv.details["lag_profile"]
        record["peak_lag"] = dv.details["peak_lag"]
    verdict = Verdict.merge(verdicts)
    verdict.thresholds = scenario.thresholds.to_dict()
    record["verdict"] = verdict.to_dict()
    return record, sim


def _rate(values: Iterable[bool], n: int) -> float:
    return sum(1 for v in values if v) / n


def run_batch(scenario: Scenario, runs: int, *, keep_traces: bool = False) -> RunSummary:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    baselines = calibrate(scenario)
    records = []
    traces = []
    for i in range(runs):
        record, sim = evaluate_run(scenario, scenario.seed + i, baselines, i)
        records.append(record)
        if keep_traces:
            traces.append(sim.trace)

    aborts = Counter(r["abort_reason"] for r in records if not r["completed"])
    evaluated = [name for name in RULES if any(name in r["verdict"]["rules"] for r in records)]
    detection = {
        name: _rate((r["verdict"]["rules"].get(name, {}).get("flag") for r in records), runs)
        for name in evaluated
    }
    detection["overall"] = _rate((r["verdict"]["overall"] for r in records), runs)

    correlation = None
    if scenario.delays is not None:
        values = [r["correlation"] for r in records]
        correlation = {
            "values": values,
            "min": min(values),
            "max": max(values),
            "mean": statistics.fmean(values),
            "peak_lags": dict(sorted(Counter(str(r["peak_lag"]) for r in records).items())),
        }

    return RunSummary(
        scenario=scenario.name,
        seed=scenario.seed,
        runs=runs,
        completions=sum(r["completed"] for r in records),
        aborts=dict(sorted(aborts.items())),
        detection_rate=detection,
        recovered_equals_sent_rate=_rate((r["recovered_equals_sent"] for r in records), runs),
        eve_recovered_secret_rate=_rate((r["eve_recovered_secret"] for r in records), runs),
        bob_received_fake_rate=_rate((r["bob_received_fake"] for r in records), runs),
        digest_mismatch_rate=_rate((r["digest_match"] is False for r in records), runs),
        eve_payload_opened_rate=_rate((r["eve_payload_opened"] for r in records), runs),
        correlation=correlation,
        baselines=baselines,
        thresholds=scenario.thresholds.to_dict(),
        per_run=records,
        traces=traces,
    )


@lru_cache(maxsize=1)
def summary_schema() -> dict:
    return json.loads(resources.files("ddtlab").joinpath("data/summary.schema.json").read_text())


def render(obj) -> str:
    if isinstance(obj, Trace):
        return obj.to_jsonl()
    if isinstance(obj, RunSummary):
        return obj.to_json()
    if isinstance(obj, (list, tuple)) and all(isinstance(t, Trace) for t in obj):
        return "".join(t.to_jsonl() for t in obj)
    raise TypeError(f"cannot emit {type(obj).__name__}")


def emit(obj, destination: str | Path | IO[str]) -> None:
    """Write a trace (JSONL), list of traces, or summary (JSON) to a path or stream."""
    text = render(obj)
    try:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            with open(destination, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except OSError as exc:
        raise EmitError(str(exc)) from exc
