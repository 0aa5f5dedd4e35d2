"""Release a subsample of non-sensitive records and compare with the keep probability."""
from osdp import Database, Policy, RecordDomain, RngStream, keep_probability, osdp_rr

dom = RecordDomain(("opted_out", "opted_in"))
p = Policy.from_sensitive(dom, ["opted_out"])
db = Database(dom, ("opted_in",) * 60_000 + ("opted_out",) * 40_000)

for eps in (1.0, 0.5, 0.1):
    out = osdp_rr(db, p, eps, RngStream(2024, ("demo", eps)))
    leaked = sum(r == "opted_out" for r in out.records)
    print(f"eps={eps:<4} kept {len(out):>6} of 60000 ({len(out) / 60000:.4f}, expected {keep_probability(eps):.4f}); "
          f"sensitive released: {leaked}")
