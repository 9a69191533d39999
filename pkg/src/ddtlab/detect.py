"""Detectors: exchange-timing statistics and delay-sequence correlation.

Timing rules compare a session against an honest calibration run:

* ``interval-shrink``: either party's time between its two exchanges fell
  below ``shrink * baseline_T``. A relay that sits between the parties
  shortens each leg.
* ``mean-ratio-deviation``: honest geometry puts the responder's mean
  exchange tick at twice the initiator's. Comparing the two needs the
  parties to swap their numbers over a channel the adversary cannot touch;
  in simulation the harness plays that channel.
* ``total-time-doubling``: session completion exceeds ``double *
  baseline_total`` (a relay placed far from both parties).

The delay rule checks that a party's round trips carry the binary delay
pattern it injected, round by round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidParameter, Unsupported
from .netsim import EventKind, Trace

RULES = ("interval-shrink", "mean-ratio-deviation", "total-time-doubling", "correlation-failure")

# Primitive feedback polynomials, bit j set for the x**j term.
MSEQ_TAPS = {
    3: 0b1011,         # x^3 + x + 1
    4: 0b10011,        # x^4 + x + 1
    5: 0b100101,       # x^5 + x^2 + 1
    6: 0b1000011,      # x^6 + x + 1
    7: 0b10001001,     # x^7 + x^3 + 1
    8: 0b100011101,    # x^8 + x^4 + x^3 + x^2 + 1
}


@dataclass(frozen=True)
class Thresholds:
    shrink: float = 0.75
    ratio: float = 0.5
    double: float = 1.5
    correlation: float = 0.8

    def to_dict(self) -> dict:
        return {"shrink": self.shrink, "ratio": self.ratio, "double": self.double, "correlation": self.correlation}


@dataclass(frozen=True)
class TimingStats:
    party: str
    exchange_ticks: tuple[int, ...]
    interval: int
    mean: Fraction

    @property
    def T(self) -> int:
        return self.interval


@dataclass
class Verdict:
    flags: dict[str, bool] = field(default_factory=dict)
    evidence: dict[str, float] = field(default_factory=dict)
    thresholds: dict[str, float] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return any(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "rules": {
                name: {"flag": self.flags[name], "evidence": _json_number(self.evidence.get(name))}
                for name in RULES if name in self.flags
            },
            "overall": self.overall,
            "thresholds": dict(self.thresholds),
        }

    @classmethod
    def merge(cls, verdicts: Sequence[Verdict]) -> Verdict:
        """Combine per-session verdicts: a rule flags if any session flags it.

        Evidence comes from the first flagging session, else the first one.
        """
        out = cls()
        for v in verdicts:
            out.thresholds.update(v.thresholds)
            for name, flag in v.flags.items():
                if name not in out.flags or (flag and not out.flags[name]):
                    out.flags[name] = flag
                    if name in v.evidence:
                        out.evidence[name] = v.evidence[name]
        return out


def _json_number(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return float(x)


@dataclass(frozen=True)
class DelaySequence:
    kind: str
    values: tuple[int, ...]
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if any(v not in (1, -1) for v in self.values):
            raise InvalidParameter("delay sequence values must be +1 or -1")

    def __len__(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


# -- timing -------------------------------------------------------------------

_EXCHANGE_KINDS = (EventKind.SEND, EventKind.RECV)


def session_origin(trace: Trace, session_id: int) -> int:
    ticks = [e.tick for e in trace.events if e.session_id == session_id and e.kind in _EXCHANGE_KINDS]
    if not ticks:
        raise InsufficientData(f"session {session_id} has no traffic")
    return min(ticks)


def exchange_times(trace: Trace, party: str, session_id: int) -> TimingStats:
    """The party's first exchange and its last receipt, relative to the session start."""
    events = [e for e in trace.for_node(party, session_id) if e.kind in _EXCHANGE_KINDS]
    recvs = [i for i, e in enumerate(events) if e.kind is EventKind.RECV]
    if len(events) < 2 or not recvs or recvs[-1] == 0:
        raise InsufficientData(f"{party} has fewer than two exchanges in session {session_id}")
    origin = session_origin(trace, session_id)
    ticks = (events[0].tick - origin, events[recvs[-1]].tick - origin)
    return TimingStats(party, ticks, ticks[1] - ticks[0], Fraction(sum(ticks), len(ticks)))


def completion_tick(trace: Trace, session_id: int) -> int:
    origin = session_origin(trace, session_id)
    ticks = [e.tick for e in trace.events if e.session_id == session_id and e.kind in (*_EXCHANGE_KINDS, EventKind.OPEN)]
    return max(ticks) - origin


def timing_verdict(
    stats_A: TimingStats,
    stats_B: TimingStats,
    baseline_T: int,
    baseline_total: int,
    thresholds: Thresholds = Thresholds(),
    completion: int | None = None,
) -> Verdict:
    """Apply the three timing rules to one session.

    ``completion`` defaults to the later of the two parties' last exchanges.
    """
    if baseline_T <= 0 or baseline_total <= 0:
        raise InvalidParameter("baselines must be positive")
    if completion is None:
        completion = max(stats_A.exchange_ticks[-1], stats_B.exchange_ticks[-1])
    v = Verdict(thresholds=thresholds.to_dict())

    shortest = min(stats_A.interval, stats_B.interval)
    v.flags["interval-shrink"] = shortest < thresholds.shrink * baseline_T
    v.evidence["interval-shrink"] = shortest / baseline_T

    if stats_A.mean == 0:
        v.flags["mean-ratio-deviation"] = True
        v.evidence["mean-ratio-deviation"] = math.inf
    else:
        ratio = stats_B.mean / stats_A.mean
        v.flags["mean-ratio-deviation"] = abs(ratio - 2) > thresholds.ratio
        v.evidence["mean-ratio-deviation"] = float(ratio)

    v.flags["total-time-doubling"] = completion > thresholds.double * baseline_total
    v.evidence["total-time-doubling"] = completion / baseline_total
    return v


# -- sequences -----------------------------------------------------------------

def gen_mseq(k: int, taps: int | None = None, seed: int = 1) -> DelaySequence:
    """Maximal-length LFSR sequence of length 2**k - 1, bits mapped 0 -> +1, 1 -> -1.

    ``taps`` is the feedback polynomial as a bit mask including the x**k and
    constant terms; ``seed`` bit i is the register's i-th initial output bit.
    """
    if k not in MSEQ_TAPS:
        raise Unsupported(f"no primitive polynomial tabulated for k={k}")
    if taps is None:
        taps = MSEQ_TAPS[k]
    if taps != MSEQ_TAPS[k]:
        raise Unsupported(f"taps {taps:#b} not in the table for k={k}")
    if seed % (1 << k) == 0:
        raise InvalidParameter("LFSR seed must be non-zero")
    n = (1 << k) - 1
    bits = [(seed >> i) & 1 for i in range(k)]
    coeffs = [j for j in range(k) if (taps >> j) & 1]
    while len(bits) < n:
        base = len(bits) - k
        bits.append(sum(bits[base + j] for j in coeffs) & 1)
    values = tuple(1 - 2 * b for b in bits[:n])
    return DelaySequence("m-sequence", values, {"k": k, "taps": taps, "seed": seed})


def gen_walsh(row: int, n: int) -> DelaySequence:
    """Row ``row`` of the order-``n`` Sylvester Hadamard matrix."""
    if n < 1 or n & (n - 1):
        raise InvalidParameter(f"n={n} is not a power of two")
    if not 0 <= row < n:
        raise InvalidParameter(f"row {row} outside 0..{n - 1}")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return DelaySequence("walsh", tuple(int(v) for v in h[row]), {"row": row, "n": n})


def correlate(x, y, lag: int) -> int:
    """Cyclic correlation sum_i x[i] * y[(i + lag) mod n]."""
    a = np.asarray(x, dtype=np.int64)
    b = np.asarray(y, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidParameter("sequences must have equal length")
    if not 0 <= lag < len(a):
        raise InvalidParameter(f"lag {lag} outside 0..{len(a) - 1}")
    return int(np.dot(a, np.roll(b, -lag)))


def delay_verdict(
    trace: Trace,
    party: str,
    expected: DelaySequence | Sequence[int],
    delta: int,
    threshold: float = 0.8,
    *,
    baseline: int,
    observer: str | None = None,
) -> Verdict:
    """Check that round ``i``'s round trip carries delay ``delta`` exactly when ``expected[i]`` is +1.

    ``party`` injected the delays. ``observer`` (default ``party``) is whose
    exchange interval is measured; ``baseline`` is that interval in a
    zero-delay honest run. Rounds the observer never completed estimate 0.
    """
    expected = np.asarray(expected, dtype=np.int64)
    n = len(expected)
    sessions = trace.session_ids()
    if len(sessions) != n:
        raise InvalidParameter(f"{len(sessions)} rounds in trace, expected sequence has {n}")
    observer = observer or party
    estimate = np.zeros(n, dtype=np.int64)
    residuals: list[int | None] = []
    for i, sid in enumerate(sessions):
        try:
            r = exchange_times(trace, observer, sid).interval - baseline
        except InsufficientData:
            residuals.append(None)
            continue
        residuals.append(r)
        estimate[i] = 1 if 2 * r >= delta else -1
    profile = [correlate(estimate, expected, lag) / n for lag in range(n)]
    score = profile[0]
    v = Verdict(thresholds={"correlation": threshold})
    v.flags["correlation-failure"] = score < threshold
    v.evidence["correlation-failure"] = score
    v.details = {
        "party": party,
        "observer": observer,
        "residuals": residuals,
        "estimate": estimate.tolist(),
        "lag_profile": profile,
        "peak_lag": int(np.argmax(profile)),
    }
    return v
