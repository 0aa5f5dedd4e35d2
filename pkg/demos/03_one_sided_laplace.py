"""One-sided noise never exceeds zero; the L1 variant keeps empty bins exactly empty."""
import numpy as np

from osdp import RngStream, SplitHistogram, one_sided_laplace_sample, osdp_laplace_l1

x = one_sided_laplace_sample(RngStream(7, ("demo",)), 1.0, 200_000)
print(f"mean {x.mean():.3f}  var {x.var():.3f}  median {np.median(x):.3f}  max {x.max():.3g}")

counts = np.array([0, 0, 3, 120, 0, 45])
rel = osdp_laplace_l1(SplitHistogram.from_counts(counts, counts), 1.0, RngStream(7, ("l1",)))
for c, e in zip(counts, rel.estimates):
    print(f"  true {c:>4}  released {e:8.3f}")
print("spend:", rel.spend.regime.name, rel.spend.epsilon)
