"""Dataset ingestion and synthetic generators.

Covers benchmark-style 1-d histograms, the Close/Far non-sensitive
samplers, synthetic building-trajectory traces, location-based trajectory
policies and truncated n-gram tables.
"""

from __future__ import annotations

import bisect
import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import NON_SENSITIVE, SENSITIVE, Policy, RecordDomain
from .mechanisms import Histogram, SplitHistogram
from .noise import RngStream

SLOTS_PER_DAY = 144  # 10-minute slots
DEFAULT_LOCATIONS = 64

#: Sparsity and scale of the seven 1-d benchmark histograms (d = 4096).
BENCHMARK_PROFILES = {
    "adult": (0.98, 17_665, "zipf"),
    "hepth": (0.21, 347_414, "clustered"),
    "income": (0.45, 20_787_122, "zipf"),
    "nettrace": (0.97, 25_714, "zipf"),
    "medcost": (0.75, 9_415, "clustered"),
    "patent": (0.06, 27_948_226, "clustered"),
    "searchlogs": (0.51, 335_889, "zipf"),
}
BENCHMARK_D = 4096
SHAPES = ("uniform", "zipf", "clustered")


class SamplingError(RuntimeError):
    """A sampler could not meet its target; ``best`` holds the closest attempt."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


# -- histograms -------------------------------------------------------------

def load_histogram(path) -> Histogram:
    """One non-negative integer count per line, in bin order."""
    counts = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                v = int(s)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not an integer: {s!r}") from None
            if v < 0:
                raise ValueError(f"{path}:{lineno}: negative count {v}")
            counts.append(v)
    if not counts:
        raise ValueError(f"{path}: empty histogram file")
    return Histogram(np.array(counts, dtype=np.int64))


def save_histogram(h, path) -> None:
    counts = h.counts if isinstance(h, Histogram) else np.asarray(h)
    with Path(path).open("w") as fh:
        fh.writelines(f"{int(c)}\n" for c in counts)


def _n_zero(d: int, sparsity: float) -> int:
    # round first so 4096 * 0.98 style products do not pick up float fuzz
    return math.ceil(round(d * sparsity, 9))


def synth_histogram(d: int, scale: int, sparsity: float, shape: str, rng: RngStream,
                    zipf_exponent: float = 1.1) -> Histogram:
    """Histogram with exactly ``ceil(d * sparsity)`` empty bins and total ``scale``.

    Every non-empty bin holds at least one record; the remaining mass is
    spread evenly (``uniform``), by a power law over a random ranking of
    the bins (``zipf``), or in a few Gaussian bumps (``clustered``).
    """
    if not 0 <= sparsity < 1:
        raise ValueError("sparsity must lie in [0, 1)")
    if scale < 1:
        raise ValueError("scale must be at least 1")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    nz = d - _n_zero(d, sparsity)
    if nz <= 0:
        raise ValueError("no non-empty bins left for a positive scale")
    if scale < nz:
        raise ValueError(f"scale {scale} cannot fill {nz} non-empty bins")
    g = rng.generator
    if shape == "clustered":
        centers = g.uniform(0, d, size=max(1, min(8, nz // 4 or 1)))
        width = max(1.0, d / 40)
        score = np.zeros(d)
        for c in centers:
            score += np.exp(-0.5 * ((np.arange(d) - c) / width) ** 2)
        score += g.uniform(0, 1e-6, d)  # break ties randomly
        support = np.sort(np.argsort(-score)[:nz])
        weights = score[support]
    else:
        support = np.sort(g.choice(d, size=nz, replace=False))
        if shape == "zipf":
            ranks = g.permutation(nz) + 1
            weights = ranks.astype(float) ** -zipf_exponent
        else:
            weights = np.ones(nz)
    counts = np.zeros(d, dtype=np.int64)
    extra = scale - nz
    if shape == "uniform":
        share = np.full(nz, extra // nz, dtype=np.int64)
        share[g.choice(nz, size=extra % nz, replace=False)] += 1
    else:
        share = g.multinomial(extra, weights / weights.sum())
    counts[support] = 1 + share
    return Histogram(counts)


def benchmark_histogram(name: str, rng: RngStream, d: int = BENCHMARK_D) -> Histogram:
    sparsity, scale, shape = BENCHMARK_PROFILES[name]
    return synth_histogram(d, scale, sparsity, shape, rng)


# -- Close / Far samplers ---------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    rho_x: float
    theta: float = 0.1
    gamma: float = 5.0
    beta: float = 0.4
    max_retries: int = 1000
    wrap: bool = False

    def __post_init__(self):
        if not 0 < self.rho_x < 1:
            raise ValueError("rho_x must lie in (0, 1)")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 0.5)")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")


def _position_stats(counts: np.ndarray) -> tuple[float, float]:
    """Mean and standard deviation of the bin index of a random record."""
    idx = np.arange(counts.size, dtype=float)
    total = counts.sum()
    mu = float((idx * counts).sum() / total)
    var = float(((idx - mu) ** 2 * counts).sum() / total)
    return mu, math.sqrt(var)


def _within(a: float, b: float, theta: float) -> bool:
    if b == 0:
        return a == 0
    return (1 - theta) <= a / b <= (1 + theta)


def m_sampling(h: Histogram, cfg: SamplerConfig, rng: RngStream) -> Histogram:
    """Close policy: sample records without replacement until the sample looks like ``h``.

    The sample keeps ``round(rho_x * |x|)`` records and is accepted when the
    mean and standard deviation of its records' bin positions are within a
    ``1 +- theta`` factor of those of ``h``.
    """
    target = round(cfg.rho_x * h.scale)
    if target < 1:
        raise ValueError("rho_x * ||x||_1 must be at least 1")
    mu, sd = _position_stats(h.counts)
    best, best_gap = None, math.inf
    for _ in range(cfg.max_retries):
        x2 = rng.generator.multivariate_hypergeometric(h.counts, target)
        mu2, sd2 = _position_stats(x2)
        if _within(mu2, mu, cfg.theta) and _within(sd2, sd, cfg.theta):
            return Histogram(x2)
        gap = max(abs(mu2 / mu - 1) if mu else abs(mu2), abs(sd2 / sd - 1) if sd else abs(sd2))
        if gap < best_gap:
            best, best_gap = Histogram(x2), gap
    raise SamplingError(f"m_sampling: no sample within 1 +- {cfg.theta} after {cfg.max_retries} tries "
                        f"(best relative gap {best_gap:.3f})", best)


def high_region(d: int, center: int, beta: float, wrap: bool = False) -> np.ndarray:
    """Boolean mask of bins within ``center +- floor(d * beta)``."""
    half = math.floor(d * beta)
    mask = np.zeros(d, dtype=bool)
    if wrap:
        mask[np.arange(center - half, center + half + 1) % d] = True
    else:
        mask[max(0, center - half):min(d, center + half + 1)] = True
    return mask


def hilo_sampling(h: Histogram, cfg: SamplerConfig, rng: RngStream) -> Histogram:
    """Far policy: with-replacement sampling that over-weights a random High region.

    Records in High bins are drawn with weight ``gamma``, all others with
    weight 1.  The output need not be dominated by ``h``.
    """
    target = round(cfg.rho_x * h.scale)
    if target < 1:
        raise ValueError("rho_x * ||x||_1 must be at least 1")
    g = rng.generator
    center = int(g.integers(h.d))
    mask = high_region(h.d, center, cfg.beta, cfg.wrap)
    w = h.counts * np.where(mask, cfg.gamma, 1.0)
    return Histogram(g.multinomial(target, w / w.sum()))


def make_split(h: Histogram, policy: str, rho_x: float, rng: RngStream, **cfg) -> SplitHistogram:
    """Build ``(x, x_ns)`` with the ``close`` or ``far`` sampler.

    Far samples are capped at ``x`` (flagged via ``clipped``) since
    with-replacement draws can exceed a bin's true count.
    """
    sc = SamplerConfig(rho_x, **cfg)
    if policy == "close":
        ns = m_sampling(h, sc, rng)
    elif policy == "far":
        ns = hilo_sampling(h, sc, rng)
    else:
        raise ValueError(f"unknown policy sampler {policy!r}; use 'close' or 'far'")
    return SplitHistogram.from_counts(h.counts, ns.counts, clip=True)


# -- trajectories -----------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    user: int
    day: int
    steps: tuple  # ((slot, location), ...), slots strictly increasing

    def __post_init__(self):
        steps = tuple((int(s), int(l)) for s, l in self.steps)
        object.__setattr__(self, "steps", steps)
        slots = [s for s, _ in steps]
        if any(b <= a for a, b in zip(slots, slots[1:])):
            raise ValueError("trajectory slots must be strictly increasing")
        if slots and (slots[0] < 0 or slots[-1] >= SLOTS_PER_DAY):
            raise ValueError(f"slots must lie in [0, {SLOTS_PER_DAY})")

    @property
    def locations(self) -> tuple:
        return tuple(l for _, l in self.steps)

    def visits(self, location: int) -> bool:
        return any(l == location for _, l in self.steps)


def _grid_neighbors(locations: int) -> list[np.ndarray]:
    side = max(1, math.isqrt(locations))
    nbrs = []
    for i in range(locations):
        r, c = divmod(i, side)
        cand = [i]
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = (r + dr) * side + (c + dc)
            if 0 <= r + dr and 0 <= c + dc < side and j < locations:
                cand.append(j)
        nbrs.append(np.array(cand))
    return nbrs


def gen_trajectories(users: int, days: int, rng: RngStream, locations: int = DEFAULT_LOCATIONS,
                     sensitive_locations: Iterable[int] = (), sensitive_weight: float = 0.2,
                     stay_prob: float = 0.6, mean_duration: float = 48.0) -> list[Trajectory]:
    """One daily random-walk trajectory per user and day.

    Access points sit on a square grid; each 10-minute slot the walker
    stays with ``stay_prob`` or steps to a grid neighbour, with
    ``sensitive_locations`` entered ``sensitive_weight`` times as often.
    Each user has a home access point and a personal arrival time.
    """
    if locations < 2:
        raise ValueError("need at least two locations")
    nbrs = _grid_neighbors(locations)
    attract = np.ones(locations)
    for s in sensitive_locations:
        attract[int(s)] = sensitive_weight
    cum = []
    for cand in nbrs:
        w = np.cumsum(attract[cand])
        cum.append((cand.tolist(), (w / w[-1]).tolist()))
    out = []
    for u in range(users):
        g = rng.fork("user", u).generator
        home = int(g.integers(locations))
        arrive = int(g.integers(36, 66))  # 6:00 to 11:00
        for day in range(days):
            start = int(np.clip(arrive + g.integers(-6, 7), 0, SLOTS_PER_DAY - 1))
            length = int(np.clip(g.geometric(1 / mean_duration), 1, SLOTS_PER_DAY - start))
            moves = (g.random(length) >= stay_prob).tolist()
            picks = g.random(length).tolist()
            loc = home
            steps = []
            for t, slot in enumerate(range(start, start + length)):
                steps.append((slot, loc))
                if moves[t]:
                    cand, cw = cum[loc]
                    loc = cand[min(bisect.bisect_right(cw, picks[t]), len(cand) - 1)]
            out.append(Trajectory(u, day, tuple(steps)))
    return out


def save_trajectories(trajs: Sequence[Trajectory], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "day", "slot", "location"])
        for t in trajs:
            for s, l in t.steps:
                w.writerow([t.user, t.day, s, l])


def load_trajectories(path) -> list[Trajectory]:
    rows: dict = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["user", "day", "slot", "location"]:
            raise ValueError(f"{path}: expected header user,day,slot,location")
        for row in reader:
            key = (int(row["user"]), int(row["day"]))
            rows.setdefault(key, []).append((int(row["slot"]), int(row["location"])))
    return [Trajectory(u, d, tuple(sorted(steps))) for (u, d), steps in sorted(rows.items())]


class TrajectoryPolicy(NamedTuple):
    sensitive_locations: frozenset
    policy: Policy
    achieved_ratio: float


def trajectory_policy(trajs: Sequence[Trajectory], sensitive_locations: Iterable[int], label: str = "P") -> Policy:
    """Trajectories touching any sensitive location are sensitive."""
    sens = frozenset(sensitive_locations)
    domain = RecordDomain(tuple(trajs))
    table = tuple(SENSITIVE if sens.intersection(t.locations) else NON_SENSITIVE for t in trajs)
    return Policy(domain, table, label)


def policy_rho(trajs: Sequence[Trajectory], rho_target: float, locations: int | None = None,
               tolerance: float = 0.05) -> TrajectoryPolicy:
    """Pick sensitive access points so about ``rho_target`` of trajectories stay non-sensitive.

    Locations are added in ascending order of how many trajectories visit
    them; the prefix whose non-sensitive fraction is closest to the target
    wins.  A miss larger than ``tolerance`` emits a warning.
    """
    if not 0 < rho_target < 1:
        raise ValueError("rho_target must lie in (0, 1)")
    if not trajs:
        raise ValueError("no trajectories")
    if locations is None:
        locations = 1 + max((l for t in trajs for l in t.locations), default=0)
    visit_sets = [frozenset(t.locations) for t in trajs]
    freq = Counter(l for vs in visit_sets for l in vs)
    order = sorted(range(locations), key=lambda l: (freq.get(l, 0), l))
    n = len(trajs)
    touched = np.zeros(n, dtype=bool)
    by_loc: dict = {}
    for i, vs in enumerate(visit_sets):
        for l in vs:
            by_loc.setdefault(l, []).append(i)
    best_k, best_ratio = 0, 1.0
    for k, l in enumerate(order, 1):
        touched[by_loc.get(l, [])] = True
        ratio = 1.0 - touched.sum() / n
        if abs(ratio - rho_target) < abs(best_ratio - rho_target):
            best_k, best_ratio = k, ratio
    sens = frozenset(order[:best_k])
    if abs(best_ratio - rho_target) > tolerance:
        warnings.warn(f"policy_rho: target {rho_target} unreachable, best {best_ratio:.3f}", stacklevel=2)
    label = f"P_{round(rho_target * 100)}"
    return TrajectoryPolicy(sens, trajectory_policy(trajs, sens, label), best_ratio)


# -- n-grams ----------------------------------------------------------------

@dataclass
class NGramTable:
    n: int
    k: int | None
    counts: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def l1_distance(self, other: "NGramTable") -> int:
        keys = set(self.counts) | set(other.counts)
        return sum(abs(self.counts.get(g, 0) - other.counts.get(g, 0)) for g in keys)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gram", "count"])
            for g in sorted(self.counts):
                w.writerow(["-".join(map(str, g)), self.counts[g]])

    @classmethod
    def from_csv(cls, path, k: int | None = None) -> "NGramTable":
        counts = {}
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                counts[tuple(int(x) for x in row["gram"].split("-"))] = int(row["count"])
        n = len(next(iter(counts))) if counts else 0
        return cls(n, k, counts)


def location_runs(traj: Trajectory) -> list[list[int]]:
    """Split at slot gaps, collapsing repeated consecutive locations."""
    runs: list[list[int]] = []
    prev_slot = None
    for slot, loc in traj.steps:
        if prev_slot is None or slot != prev_slot + 1:
            runs.append([loc])
        elif runs[-1][-1] != loc:
            runs[-1].append(loc)
        prev_slot = slot
    return runs


def trajectory_grams(traj: Trajectory, n: int) -> list[tuple]:
    """Distinct length-``n`` windows over the trajectory's location runs, sorted."""
    grams = set()
    for run in location_runs(traj):
        for i in range(len(run) - n + 1):
            grams.add(tuple(run[i:i + n]))
    return sorted(grams)


def ngram_table(trajs: Sequence[Trajectory], n: int, k: int | None, rng: RngStream) -> NGramTable:
    """Count, per gram, the trajectories containing it, keeping at most ``k`` grams each.

    The retained grams are chosen uniformly at random from a substream keyed
    by the trajectory's position, so replacing one trajectory leaves every
    other trajectory's choice untouched.  ``k=None`` keeps everything.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if k is not None and k < 1:
        raise ValueError("k must be at least 1 (or None for no truncation)")
    counts: Counter = Counter()
    for i, t in enumerate(trajs):
        grams = trajectory_grams(t, n)
        if k is not None and len(grams) > k:
            pick = rng.fork("truncate", i).generator.choice(len(grams), size=k, replace=False)
            grams = [grams[j] for j in sorted(pick)]
        counts.update(grams)
    return NGramTable(n, k, dict(counts))
