"""Release mechanisms: OSDP primitives, DP and PDP baselines, DAWAz.

Histogram mechanisms take a :class:`SplitHistogram` (full counts ``x`` and
non-sensitive counts ``x_ns``) or a plain :class:`Histogram` and return a
:class:`ReleasedHistogram` that records the privacy spend it consumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .core import (
    NON_SENSITIVE,
    Database,
    Policy,
    PrivacySpend,
    RecordDomain,
    Regime,
    compose_sequential,
    split,
)
from .noise import RngStream, laplace_sample, one_sided_laplace_sample

MECHANISM_IDS = ("laplace", "osdp_rr", "osdp_laplace", "osdp_laplace_l1", "suppress", "partition", "dawaz")

#: Bounded-DP sensitivity of a histogram (one record moves between two bins).
HISTOGRAM_SENSITIVITY = 2.0


def _check_eps(eps, name="eps"):
    eps = float(eps)
    if not (eps > 0) or math.isinf(eps):
        raise ValueError(f"{name} must be positive and finite, got {eps!r}")
    return eps


class Histogram:
    """Non-negative integer counts over ``d`` bins."""

    __slots__ = ("counts",)

    def __init__(self, counts):
        arr = np.asarray(counts)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("histogram needs a 1-d vector with at least one bin")
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("histogram counts must be finite integers")
        elif arr.dtype.kind not in "iub":
            raise ValueError(f"unsupported count dtype {arr.dtype}")
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ValueError("histogram counts must be non-negative")
        arr.setflags(write=False)
        self.counts = arr

    @property
    def d(self) -> int:
        return self.counts.size

    @property
    def scale(self) -> int:
        return int(self.counts.sum())

    @property
    def sparsity(self) -> float:
        return float(np.count_nonzero(self.counts == 0)) / self.d

    def __len__(self):
        return self.d

    def __eq__(self, other):
        return isinstance(other, Histogram) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"Histogram(d={self.d}, scale={self.scale}, sparsity={self.sparsity:.3f})"


def histogram_of(db: Database, bin_of: Callable | None = None, d: int | None = None) -> Histogram:
    """Count records per bin.  By default each domain value is its own bin."""
    if bin_of is None:
        bin_of = db.domain.index
        d = len(db.domain)
    if d is None:
        raise ValueError("d is required with a custom bin map")
    counts = np.zeros(d, dtype=np.int64)
    for r in db:
        counts[bin_of(r)] += 1
    return Histogram(counts)


@lru_cache(maxsize=64)
def opt_in_domain(d: int) -> RecordDomain:
    """Cross-product record domain ``bin x {opted-in, opted-out}``."""
    return RecordDomain(tuple((i, c) for i in range(d) for c in ("ns", "s")))


@lru_cache(maxsize=64)
def opt_in_policy(d: int) -> Policy:
    """Policy treating the opted-out copy of every bin as sensitive.

    This is the record-level policy behind a split histogram whose
    non-sensitive part was obtained by sampling records (opt-in style).
    """
    dom = opt_in_domain(d)
    return Policy(dom, tuple(NON_SENSITIVE if c == "ns" else 0 for _, c in dom), f"opt-in[{d}]")


@dataclass(frozen=True, eq=False)
class SplitHistogram:
    full: Histogram
    non_sensitive: Histogram
    policy: Policy | None = None
    clipped: bool = False

    def __post_init__(self):
        if self.full.d != self.non_sensitive.d:
            raise ValueError("full and non-sensitive histograms must have equal length")
        if np.any(self.non_sensitive.counts > self.full.counts):
            raise ValueError("non-sensitive counts exceed full counts")
        if self.policy is None:
            object.__setattr__(self, "policy", opt_in_policy(self.full.d))

    @classmethod
    def from_counts(cls, x, x_ns, policy: Policy | None = None, clip: bool = False) -> "SplitHistogram":
        """Build from raw vectors; ``clip`` caps x_ns at x and flags the result."""
        full, ns = Histogram(x), Histogram(x_ns)
        clipped = False
        if clip and np.any(ns.counts > full.counts):
            ns = Histogram(np.minimum(ns.counts, full.counts))
            clipped = True
        return cls(full, ns, policy, clipped)

    @classmethod
    def from_database(cls, db: Database, p: Policy, bin_of: Callable | None = None,
                      d: int | None = None) -> "SplitHistogram":
        _, ns = split(db, p)
        return cls(histogram_of(db, bin_of, d), histogram_of(ns, bin_of, d), p)

    @property
    def d(self) -> int:
        return self.full.d

    @property
    def ns_ratio(self) -> float:
        return self.non_sensitive.scale / self.full.scale if self.full.scale else 0.0


@dataclass(frozen=True, eq=False)
class ReleasedHistogram:
    estimates: np.ndarray
    mechanism: str
    spend: PrivacySpend
    seed_path: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.estimates)


@dataclass(frozen=True)
class Partition:
    """Sorted, disjoint, exhaustive half-open intervals ``[lo, hi)`` over ``[0, d)``."""

    buckets: tuple

    def __post_init__(self):
        buckets = tuple((int(a), int(b)) for a, b in self.buckets)
        object.__setattr__(self, "buckets", buckets)
        if not buckets or buckets[0][0] != 0:
            raise ValueError("partition must start at 0")
        for (a, b), (c, _) in zip(buckets, buckets[1:] + ((buckets[-1][1], None),)):
            if b <= a:
                raise ValueError(f"empty bucket [{a}, {b})")
            if c != b:
                raise ValueError("buckets must be contiguous and non-overlapping")

    @property
    def d(self) -> int:
        return self.buckets[-1][1]

    @classmethod
    def singletons(cls, d: int) -> "Partition":
        return cls(tuple((i, i + 1) for i in range(d)))

    @classmethod
    def from_cuts(cls, cuts: Sequence[int], d: int) -> "Partition":
        """Buckets starting at each cut; ``0`` is implied."""
        starts = sorted({0, *(int(c) for c in cuts if 0 < c < d)})
        return cls(tuple(zip(starts, starts[1:] + [d])))

    def __len__(self):
        return len(self.buckets)

    def __iter__(self):
        return iter(self.buckets)


def _osdp_spend(policy: Policy, eps: float) -> PrivacySpend:
    return PrivacySpend(policy, eps, Regime.OSDP)


def _dp_spend(policy: Policy | None, d: int, eps: float) -> PrivacySpend:
    domain = policy.domain if policy is not None else opt_in_domain(d)
    return PrivacySpend.dp(domain, eps)


# -- randomized response ----------------------------------------------------

def keep_probability(eps: float) -> float:
    """Chance that OsdpRR releases a given non-sensitive record."""
    return -math.expm1(-eps)


def osdp_rr(db: Database, p: Policy, eps: float, rng: RngStream) -> Database:
    """Release each non-sensitive record independently w.p. ``1 - e^-eps``.

    Sensitive records are never released.  Satisfies (p, eps)-OSDP.
    """
    eps = _check_eps(eps)
    _, ns = split(db, p)
    if len(ns) == 0:
        return ns
    keep = rng.uniform(len(ns)) < keep_probability(eps)
    return Database(db.domain, tuple(r for r, k in zip(ns.records, keep) if k))


def osdp_rr_histogram(sh: SplitHistogram, eps: float, rng: RngStream) -> ReleasedHistogram:
    """Histogram of an OsdpRR sample, drawn at count level (binomial per bin)."""
    eps = _check_eps(eps)
    sample = rng.generator.binomial(sh.non_sensitive.counts, keep_probability(eps))
    return ReleasedHistogram(sample.astype(float), "osdp_rr", _osdp_spend(sh.policy, eps), rng.path_str)


# -- additive noise ---------------------------------------------------------

def laplace_mechanism(h: Histogram, eps: float, rng: RngStream, sensitivity: float = HISTOGRAM_SENSITIVITY,
                      policy: Policy | None = None) -> ReleasedHistogram:
    """Add i.i.d. Laplace(sensitivity/eps) to every bin (eps-DP)."""
    eps = _check_eps(eps)
    if not (sensitivity > 0) or math.isinf(sensitivity):
        raise ValueError(f"sensitivity must be positive, got {sensitivity!r}")
    noise = laplace_sample(rng, sensitivity / eps, h.d)
    return ReleasedHistogram(h.counts + noise, "laplace", _dp_spend(policy, h.d, eps), rng.path_str,
                             {"sensitivity": float(sensitivity)})


def osdp_laplace(sh: SplitHistogram, eps: float, rng: RngStream) -> ReleasedHistogram:
    """Non-sensitive counts plus one-sided Laplace(1/eps) noise; estimates <= x_ns."""
    eps = _check_eps(eps)
    noise = one_sided_laplace_sample(rng, 1.0 / eps, sh.d)
    return ReleasedHistogram(sh.non_sensitive.counts + noise, "osdp_laplace",
                             _osdp_spend(sh.policy, eps), rng.path_str)


def osdp_laplace_l1(sh: SplitHistogram, eps: float, rng: RngStream) -> ReleasedHistogram:
    """One-sided noise, clamp negatives to zero, add back the noise median to positives."""
    eps = _check_eps(eps)
    est = sh.non_sensitive.counts + one_sided_laplace_sample(rng, 1.0 / eps, sh.d)
    est[est < 0.0] = 0.0
    mu = -math.log(2.0) / eps
    est[est > 0.0] -= mu
    return ReleasedHistogram(est, "osdp_laplace_l1", _osdp_spend(sh.policy, eps), rng.path_str)


# -- PDP baseline -----------------------------------------------------------

def suppress_histogram(ns_counts, tau: float, rng: RngStream, policy: Policy | None = None) -> ReleasedHistogram:
    """Drop sensitive records, then release the rest with a tau-DP Laplace histogram.

    ``tau = inf`` releases the non-sensitive counts exactly.  The spend is
    recorded as PDP with freedom-from-exclusion bound ``tau``.
    """
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"tau must be positive or infinite, got {tau!r}")
    counts = np.asarray(ns_counts, dtype=float)
    if math.isinf(tau):
        est = counts.copy()
    else:
        est = counts + laplace_sample(rng, HISTOGRAM_SENSITIVITY / tau, counts.size)
    if policy is None:
        policy = opt_in_policy(counts.size)
    return ReleasedHistogram(est, "suppress", PrivacySpend(policy, tau, Regime.PDP), rng.path_str, {"tau": tau})


def suppress(db: Database, p: Policy, tau: float, rng: RngStream, bin_of: Callable | None = None,
             d: int | None = None) -> ReleasedHistogram:
    _, ns = split(db, p)
    return suppress_histogram(histogram_of(ns, bin_of, d).counts, tau, rng, p)


# -- partition mechanism ----------------------------------------------------

def select_partition(h: Histogram, eps: float, rng: RngStream, alpha: float = 0.05) -> Partition:
    """Greedy contiguous bucketing from Laplace(2/eps)-noised counts (eps-DP).

    Bins are scanned left to right.  Bin ``j`` joins the open bucket when
    the deviation it adds, ``|y_j - mean_B|`` on noisy counts, is covered by
    the stage-2 noise saved by not opening a new bucket plus a noise
    allowance ``scale * ln(d/alpha)``; otherwise it opens a new bucket.  The
    allowance keeps noise alone from splitting a flat region except with
    probability about ``alpha``.
    """
    eps = _check_eps(eps)
    scale = HISTOGRAM_SENSITIVITY / eps
    y = h.counts + laplace_sample(rng, scale, h.d)
    threshold = scale + scale * math.log(h.d / alpha)
    cuts = []
    total, size = y[0], 1
    for j in range(1, h.d):
        if abs(y[j] - total / size) <= threshold:
            total += y[j]
            size += 1
        else:
            cuts.append(j)
            total, size = y[j], 1
    return Partition.from_cuts(cuts, h.d)


def measure_partition(h: Histogram, partition: Partition, eps: float, rng: RngStream) -> np.ndarray:
    """Laplace(2/eps)-noised bucket totals spread uniformly over each bucket."""
    eps = _check_eps(eps)
    if partition.d != h.d:
        raise ValueError("partition does not cover the histogram")
    starts = np.fromiter((a for a, _ in partition), dtype=np.int64, count=len(partition))
    sizes = np.fromiter((b - a for a, b in partition), dtype=np.int64, count=len(partition))
    totals = np.add.reduceat(h.counts, starts) + laplace_sample(rng, HISTOGRAM_SENSITIVITY / eps, len(partition))
    return np.repeat(totals / sizes, sizes)


def partition_mechanism(h: Histogram, eps: float, rng: RngStream,
                        policy: Policy | None = None) -> tuple[ReleasedHistogram, Partition]:
    """Two-stage eps-DP histogram: half the budget picks buckets, half measures them."""
    eps = _check_eps(eps)
    half = eps / 2
    part = select_partition(h, half, rng.fork("select"))
    est = measure_partition(h, part, eps - half, rng.fork("measure"))
    rel = ReleasedHistogram(est, "partition", _dp_spend(policy, h.d, eps), rng.path_str,
                            {"buckets": len(part)})
    return rel, part


# -- DAWAz ------------------------------------------------------------------

def zero_and_rescale(estimates, partition: Partition, zero_mask, legacy_ratio: bool = False) -> np.ndarray:
    """Zero the bins in ``zero_mask`` and rescale the survivors of each bucket.

    Survivors are multiplied by ``|B| / (|B| - |Z & B|)`` so the mass of a
    uniform bucket stays put; a bucket with every bin zeroed becomes all
    zero.  ``legacy_ratio`` uses the alternative ratio ``|B| / |Z & B|``
    instead (left untouched when no bin of the bucket is zeroed).
    """
    out = np.array(estimates, dtype=float, copy=True)
    zero_mask = np.asarray(zero_mask, dtype=bool)
    if out.shape != zero_mask.shape or partition.d != out.size:
        raise ValueError("estimates, zero mask and partition must agree in length")
    for a, b in partition:
        size = b - a
        k = int(zero_mask[a:b].sum())
        seg = out[a:b]
        seg[zero_mask[a:b]] = 0.0
        if k == 0:
            continue
        if legacy_ratio:
            seg *= size / k
        elif k == size:
            seg[:] = 0.0
        else:
            seg[~zero_mask[a:b]] *= size / (size - k)
    return out


ZERO_DETECTORS = ("osdp_rr", "osdp_laplace_l1")


def detect_zeros(sh: SplitHistogram, eps: float, rng: RngStream, detector: str = "osdp_rr") -> np.ndarray:
    """Bins reported as empty by an OSDP primitive run on the non-sensitive counts."""
    if detector == "osdp_rr":
        return osdp_rr_histogram(sh, eps, rng).estimates == 0
    if detector == "osdp_laplace_l1":
        return osdp_laplace_l1(sh, eps, rng).estimates == 0
    raise ValueError(f"unknown zero detector {detector!r}; choose from {ZERO_DETECTORS}")


def dawaz_spends(policy: Policy, eps: float, rho: float) -> tuple[PrivacySpend, PrivacySpend]:
    """The two stage spends of DAWAz: (policy, rho*eps)-OSDP and (1-rho)*eps-DP.

    The larger share is rounded first; subtracting it from ``eps`` is then
    exact (it lies within a factor 2 of ``eps``), so the shares sum to
    ``eps`` with no rounding drift.
    """
    if rho <= 0.5:
        eps2 = eps - rho * eps
        eps1 = eps - eps2
    else:
        eps1 = rho * eps
        eps2 = eps - eps1
    return _osdp_spend(policy, eps1), PrivacySpend.dp(policy.domain, eps2)


def dawaz(sh: SplitHistogram, eps: float, rng: RngStream, rho: float = 0.1, detector: str = "osdp_rr",
          legacy_ratio: bool = False) -> ReleasedHistogram:
    """Zero-aware partition histogram.

    ``rho * eps`` finds empty bins from the non-sensitive records, the rest
    runs the partition mechanism on the full histogram, then empty bins are
    zeroed and each bucket's mass moved onto its surviving bins.
    """
    eps = _check_eps(eps)
    rho = float(rho)
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho!r}")
    s1, s2 = dawaz_spends(sh.policy, eps, rho)
    zeros = detect_zeros(sh, s1.epsilon, rng.fork("zeros"), detector)
    rel, part = partition_mechanism(sh.full, s2.epsilon, rng.fork("partition"), sh.policy)
    est = zero_and_rescale(rel.estimates, part, zeros, legacy_ratio)
    spend = compose_sequential([s1, s2])
    return ReleasedHistogram(est, "dawaz", spend, rng.path_str,
                             {"zeros": int(zeros.sum()), "buckets": len(part), "rho": rho})


# -- theory helper ----------------------------------------------------------

def crossover_threshold(n: int, d: int, eps: float) -> bool:
    """True when ``n * eps > 2 d e^eps``: Laplace beats an OsdpRR histogram in expected L1."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be at least 1")
    eps = _check_eps(eps)
    return n * eps > 2 * d * math.exp(eps)


# -- id dispatch for the harness -------------------------------------------

def release(mech_id: str, sh: SplitHistogram, eps: float, rng: RngStream, **params) -> ReleasedHistogram:
    """Run a histogram mechanism by its stable id."""
    if mech_id == "laplace":
        return laplace_mechanism(sh.full, eps, rng, params.get("sensitivity", HISTOGRAM_SENSITIVITY), sh.policy)
    if mech_id == "osdp_rr":
        return osdp_rr_histogram(sh, eps, rng)
    if mech_id == "osdp_laplace":
        return osdp_laplace(sh, eps, rng)
    if mech_id == "osdp_laplace_l1":
        return osdp_laplace_l1(sh, eps, rng)
    if mech_id == "suppress":
        tau = params.get("tau")
        if tau is None:
            tau = params.get("tau_factor", 10.0) * eps
        return suppress_histogram(sh.non_sensitive.counts, tau, rng, sh.policy)
    if mech_id == "partition":
        return partition_mechanism(sh.full, eps, rng, sh.policy)[0]
    if mech_id == "dawaz":
        return dawaz(sh, eps, rng, params.get("rho", 0.1), params.get("detector", "osdp_rr"),
                     params.get("legacy_ratio", False))
    raise ValueError(f"unknown mechanism {mech_id!r}; choose from {MECHANISM_IDS}")
