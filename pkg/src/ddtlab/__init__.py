"""Simulation lab for double-lock exchanges, a man in the middle, and the detectors that catch it."""

from .adversary import EveState, Strategy, eve_step, replay_signature
from .commute_crypto import (
    Backend,
    Digest,
    LockKey,
    SharedSecret,
    digest,
    keygen_exp,
    keygen_xor,
    lock,
    sign,
    unlock,
    verify,
)
from .detect import (
    DelaySequence,
    Thresholds,
    TimingStats,
    Verdict,
    correlate,
    delay_verdict,
    exchange_times,
    gen_mseq,
    gen_walsh,
    timing_verdict,
)
from .harness import RunSummary, emit, run_batch
from .netsim import Network, Topology, Trace, TraceEvent, run, simulate
from .protocol import Envelope, PiggyBox, SessionState, Variant, compare_digests
from .scenario import Scenario, load_scenario, parse_scenario, shipped_scenarios

__version__ = "0.1.0"
