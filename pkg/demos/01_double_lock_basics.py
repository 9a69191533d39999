"""
Double-lock exchange by hand
============================

Alice and Bob each own a lock. Neither ever shares a key, yet Bob ends up
holding Alice's secret because the locks commute.
"""

# %%
# A toy prime keeps the numbers small enough to check with a pencil.
from ddtlab.commute_crypto import LockKey, lock, unlock

p = 23
alice, bob = LockKey.exp(p, 3), LockKey.exp(p, 5)
print("alice unlocks with", alice.d, " bob unlocks with", bob.d)

S = bytes([5])
pass1 = lock(alice, S)       # A(S)
pass2 = lock(bob, pass1)     # B(A(S))
pass3 = unlock(alice, pass2) # B(S), Alice's lock removed first
opened = unlock(bob, pass3)
print("wire values:", pass1[0], pass2[0], pass3[0], "-> Bob opens", opened[0])

# %%
# The same exchange with XOR pads commutes too, but three observed passes
# XOR together to the secret. That backend is only for teaching.
from ddtlab.commute_crypto import keygen_xor

a, b = keygen_xor(1, 8), keygen_xor(2, 8)
secret = b"8 bytes!"
w1 = lock(a, secret)
w2 = lock(b, w1)
w3 = unlock(a, w2)
leak = bytes(x ^ y ^ z for x, y, z in zip(w1, w2, w3))
print("passive observer recovers:", leak)

# %%
# Full-size keys and framed payloads go through the simulator.
from ddtlab import load_scenario, simulate

sim = simulate(load_scenario("normal_dl"), seed=3)
sent = sim.parties["alice"].sent[0]
print("bob recovered the secret:", sim.parties["bob"].received[0] == sent)
for event in sim.trace.events:
    print(f"  t={event.tick:2d} {event.node:5s} {event.kind.value:7s} pass {event.pass_index}")
