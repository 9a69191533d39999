"""
Signing every pass with a shared secret
=======================================

When Alice and Bob share R, each pass carries SHA-256(R || payload). Eve,
without R, can only guess, copy or replay signatures.
"""

# %%
from ddtlab import load_scenario, run_batch

for name in ("ddt_honest", "ddt_mim", "ddt_relay", "ddt_replay"):
    s = run_batch(load_scenario(name), 200)
    print(f"{name:11s} completions {s.completions:3d}  aborts {s.aborts}  "
          f"bob opened an Eve payload {s.eve_payload_opened_rate:.2f}")

# %%
# Where each side gives up under a fake gift:
from ddtlab import simulate

trace = simulate(load_scenario("ddt_mim"), seed=0).trace
for e in trace.events:
    if e.kind.value in ("verify-fail", "abort"):
        print(f"  t={e.tick} {e.node} {e.kind.value} (pass {e.pass_index})")
