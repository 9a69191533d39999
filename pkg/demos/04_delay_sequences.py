"""
Hiding a delay pattern in the round trips
=========================================

Bob delays his reply by 0 or delta ticks following a +/-1 sequence. An
honest channel preserves the pattern; a relay that shortcuts the link
does not.
"""

# %%
from ddtlab import correlate, gen_mseq, gen_walsh

s = gen_mseq(3)
print("m-sequence:", s.values)
print("autocorrelation:", [correlate(s, s, lag) for lag in range(len(s))])
w1, w2 = gen_walsh(1, 8), gen_walsh(2, 8)
print("walsh rows 1, 2 correlation:", correlate(w1, w2, 0))

# %%
from ddtlab import load_scenario, run_batch

for name in ("delays_honest", "delays_relay"):
    summary = run_batch(load_scenario(name), 50)
    c = summary.correlation
    print(f"{name:13s} correlation min {c['min']:.3f} max {c['max']:.3f}  "
          f"flagged {summary.detection_rate['correlation-failure']:.2f}")

# %%
# The per-run lag profile shows why the relay fails: every round comes back
# faster than the calibrated baseline, so the estimate is constant.
record = run_batch(load_scenario("delays_relay"), 1).per_run[0]
print("lag profile:", [round(v, 3) for v in record["lag_profile"]])
