"""Exhaustive audits: an exact OSDP check and a posterior-odds check."""
from osdp import Policy, RecordDomain
from osdp.audit import freedom_ratio, verify_osdp

dom = RecordDomain(("a", "b", "c"))
p = Policy.from_sensitive(dom, ["a"])

for mech in ("osdp_rr", "identity"):
    rep = verify_osdp(mech, p, 1.0, 2)
    print(f"{mech:<9} max ratio {rep.max_ratio:.6f} pass={rep.passed} witness={rep.witness}")

two = RecordDomain(("a", "b"))
q = Policy.from_sensitive(two, ["a"])
for mech, arg in (("osdp_rr", 1.0), ("suppress", 3.0)):
    rep = freedom_ratio(mech, q, arg, 1, bound_eps=1.0)
    print(f"{mech:<9} odds amplification {rep.max_ratio:.4f} pass={rep.passed}")
