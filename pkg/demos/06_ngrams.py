"""Truncated n-gram tables and their per-user sensitivity."""
from osdp import RngStream
from osdp.data import gen_trajectories, ngram_table, policy_rho

trajs = gen_trajectories(200, 2, RngStream(5, ("walk",)), locations=16)
for k in (1, 2, None):
    t = ngram_table(trajs, 2, k, RngStream(5, ("truncate", str(k))))
    print(f"k={k}: {len(t.counts)} distinct bigrams, total {t.total}")

pol = policy_rho(trajs, 0.5)
print(f"{pol.policy.label}: {len(pol.sensitive_locations)} sensitive locations, "
      f"non-sensitive share {pol.achieved_ratio:.3f}")
