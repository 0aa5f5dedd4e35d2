"""Policies, neighbors and budget accounting on a tiny domain."""
from osdp import (Database, Policy, PrivacySpend, RecordDomain, Regime, compose_parallel, compose_sequential,
                  eosdp_to_osdp, is_relaxation, min_relaxation, osdp_neighbors)

dom = RecordDomain(("clinic", "pharmacy", "park"))
strict = Policy.from_sensitive(dom, ["clinic", "pharmacy"], label="strict")
loose = Policy.from_sensitive(dom, ["clinic"], label="loose")
print("loose relaxes strict:", is_relaxation(loose, strict))

db = Database(dom, ("clinic", "park"))
print("OSDP neighbors of", db.records, "under loose:")
for nb in osdp_neighbors(db, loose):
    print("   ", nb.records)

# Sequential spends land on the most protective common policy.
total = compose_sequential([PrivacySpend(strict, 0.5, Regime.OSDP), PrivacySpend(loose, 0.25, Regime.OSDP)])
print("sequential:", total.epsilon, "under", total.policy.label, "==", min_relaxation([strict, loose]).label)

par = compose_parallel([PrivacySpend(loose, 0.3, Regime.EOSDP), PrivacySpend(loose, 0.7, Regime.EOSDP)])
print("parallel (eOSDP):", par.epsilon, "-> as OSDP:", eosdp_to_osdp(par).epsilon)
