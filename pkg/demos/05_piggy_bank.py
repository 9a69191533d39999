"""
One-way deposit with a signed letter
====================================

Bob hands out an open box that only he can unlock. Alice drops the secret
and a letter key inside, and sends a letter whose manifest she signs with
her registered identity.
"""

# %%
from dataclasses import replace

from ddtlab import protocol as proto
from ddtlab.commute_crypto import DEFAULT_PRIME, digest, keygen_exp
from ddtlab.protocol import Authority, Role, SessionState, Variant

authority = Authority()
for name in ("alice", "bob"):
    authority.register(name, proto.identity_secret(name, 0))
bob = SessionState(Role.RESPONDER, Variant.PIGGY_BANK, keygen_exp(DEFAULT_PRIME, 1), "bob", "alice",
                   identity=authority.identity_of("bob"))
alice = SessionState(Role.INITIATOR, Variant.PIGGY_BANK, keygen_exp(DEFAULT_PRIME, 2), "alice", "bob",
                     identity=authority.identity_of("alice"))

box = proto.pb_issue_box(bob)
secret = b"combination: 12-34-56"
box = proto.pb_deposit(alice, box, secret, digest(secret).bytes, letter_seed=9)
got, manifest, ok = proto.pb_open(bob, box, authority)
print("authenticated:", ok, " secret:", got, " manifest matches:", manifest == digest(got).bytes)

# %%
# A letter signature that was tampered with no longer checks out.
bob2 = SessionState(Role.RESPONDER, Variant.PIGGY_BANK, bob.own_key, "bob", "alice")
sig = box.letter_signature.bytes
bad = replace(box, letter_signature=type(box.letter_signature)(bytes([sig[0] ^ 1]) + sig[1:]))
print("tampered letter authenticated:", proto.pb_open(bob2, bad, authority)[2])

# %%
# In the network, Eve can reseal a fake gift into Bob's box, but she cannot
# write a letter that matches it.
from ddtlab import load_scenario, run_batch

print(run_batch(load_scenario("piggy_bank_mim"), 20).aborts)
