"""Brute-force privacy audits on small instances.

Two checks are provided:

* :func:`verify_osdp` enumerates every database of a given size, every
  one-sided neighbor and every output, and reports the largest probability
  (or density) ratio.  With ``P_all`` this is the plain DP check.
* :func:`freedom_ratio` measures how much an adversary with a product prior
  can sharpen its odds that a target record is sensitive after seeing one
  output event.

For discrete outputs the events examined are single outcomes and their
complements.  A ratio of sums never exceeds the largest ratio of its terms,
so for the likelihood ratios of :func:`verify_osdp` singletons already
attain the supremum; complements are added to cover the mixture ratios of
:func:`freedom_ratio`.  Continuous mechanisms are checked through density
ratios on a grid that contains every case boundary (the true released
counts of each database).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_ENUMERATION_CAP,
    Database,
    DomainMismatchError,
    EnumerationCapError,
    Policy,
    RecordDomain,
    osdp_neighbors,
    split,
)
from .mechanisms import HISTOGRAM_SENSITIVITY, keep_probability

RTOL = 1e-9

DISCRETE = ("osdp_rr", "identity", "release_ns")
CONTINUOUS = ("laplace", "osdp_laplace")
AUDIT_MECHANISMS = DISCRETE + CONTINUOUS + ("suppress",)


class NotEnumerableError(ValueError):
    """The mechanism has no finite output distribution on this input."""


@dataclass(frozen=True)
class PriorModel:
    """Product prior: each record independently takes value v w.p. ``per_record[v]``."""

    per_record: tuple  # (value, probability) pairs in domain order

    def __post_init__(self):
        pairs = tuple((v, float(q)) for v, q in self.per_record)
        object.__setattr__(self, "per_record", pairs)
        if any(not (0 < q <= 1) for _, q in pairs):
            raise ValueError("prior probabilities must lie in (0, 1]")
        if not math.isclose(sum(q for _, q in pairs), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("prior probabilities must sum to 1")

    @classmethod
    def from_weights(cls, domain: RecordDomain, weights: Sequence[float]) -> "PriorModel":
        w = np.asarray(weights, dtype=float)
        if w.size != len(domain):
            raise DomainMismatchError("one weight per domain value required")
        w = w / w.sum()
        return cls(tuple(zip(domain, w.tolist())))

    def prob(self, value) -> float:
        for v, q in self.per_record:
            if v == value:
                return q
        return 0.0

    def as_dict(self) -> dict:
        return {str(v): q for v, q in self.per_record}


def default_prior_grid(domain: RecordDomain, levels: Iterable[float] = (0.1, 0.3, 0.5, 0.7, 0.9)) -> list[PriorModel]:
    """All per-value weightings from ``levels``, normalized, duplicates removed."""
    levels = tuple(levels)
    if len(levels) ** len(domain) > DEFAULT_ENUMERATION_CAP:
        raise EnumerationCapError("prior grid too large")
    seen, grid = set(), []
    for w in itertools.product(levels, repeat=len(domain)):
        prior = PriorModel.from_weights(domain, w)
        key = tuple(round(q, 12) for _, q in prior.per_record)
        if key not in seen:
            seen.add(key)
            grid.append(prior)
    return grid


@dataclass
class AuditReport:
    max_ratio: float
    bound: float
    witness: dict | None = None
    checked: int = 0
    kind: str = "osdp"
    rows: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound * (1 + RTOL)

    def to_dict(self) -> dict:
        def num(v):
            return "inf" if math.isinf(v) else v

        return {
            "kind": self.kind,
            "max_ratio": num(self.max_ratio),
            "bound": num(self.bound),
            "pass": self.passed,
            "checked": self.checked,
            "witness": self.witness,
        }


# -- mechanism models -------------------------------------------------------

def _ns_counts(db: Database, p: Policy) -> np.ndarray:
    _, ns = split(db, p)
    c = np.zeros(len(db.domain))
    for r in ns:
        c[db.domain.index(r)] += 1
    return c


def _full_counts(db: Database) -> np.ndarray:
    c = np.zeros(len(db.domain))
    for r in db:
        c[db.domain.index(r)] += 1
    return c


def _mech_eps(params: dict, default: float | None) -> float:
    eps = params.get("eps", default)
    if eps is None or not eps > 0:
        raise ValueError("mechanism epsilon must be positive")
    return float(eps)


def _is_discrete(mech_id: str, params: dict) -> bool:
    if mech_id in DISCRETE:
        return True
    if mech_id == "suppress":
        return math.isinf(float(params.get("tau", math.inf)))
    if mech_id in CONTINUOUS:
        return False
    raise ValueError(f"mechanism {mech_id!r} cannot be audited; choose from {AUDIT_MECHANISMS}")


def exact_output_distribution(mech_id: str, db: Database, p: Policy, **params) -> dict:
    """Map each possible output to its probability.

    Outputs are databases (released multisets).  Only mechanisms with a
    finite output space are accepted: ``osdp_rr``, ``identity``,
    ``release_ns`` and ``suppress`` with ``tau=inf``.
    """
    if not _is_discrete(mech_id, params):
        raise NotEnumerableError(f"{mech_id} has continuous output; use density evaluation")
    if mech_id == "identity":
        return {db: 1.0}
    _, ns = split(db, p)
    if mech_id in ("release_ns", "suppress"):
        return {ns: 1.0}
    q = keep_probability(_mech_eps(params, None))
    drop = math.exp(-_mech_eps(params, None))
    counts = ns.counts()
    values = list(counts)
    dist = {}
    for ks in itertools.product(*(range(counts[v] + 1) for v in values)):
        prob = 1.0
        recs = []
        for v, k in zip(values, ks):
            n_v = counts[v]
            prob *= comb(n_v, k) * q**k * drop ** (n_v - k)
            recs.extend([v] * k)
        dist[Database(db.domain, tuple(recs))] = prob
    return dist


def _density_params(mech_id: str, params: dict, default_eps: float | None):
    """(location function, log-density function, noise scale)."""
    if mech_id == "laplace":
        s = float(params.get("sensitivity", HISTOGRAM_SENSITIVITY))
        b = s / _mech_eps(params, default_eps)

        def logpdf(loc, pts):
            return np.sum(-np.abs(pts - loc) / b - math.log(2 * b), axis=-1)

        return (lambda db, p: _full_counts(db)), logpdf, b
    if mech_id == "osdp_laplace":
        lam = 1.0 / _mech_eps(params, default_eps)

        def logpdf(loc, pts):
            z = pts - loc
            out = np.sum(z / lam - math.log(lam), axis=-1)
            return np.where(np.all(z <= 0, axis=-1), out, -np.inf)

        return _ns_counts, logpdf, lam
    if mech_id == "suppress":
        b = HISTOGRAM_SENSITIVITY / float(params["tau"])

        def logpdf(loc, pts):
            return np.sum(-np.abs(pts - loc) / b - math.log(2 * b), axis=-1)

        return _ns_counts, logpdf, b
    raise ValueError(f"no density model for {mech_id!r}")


def output_log_density(mech_id: str, db: Database, p: Policy, points, **params) -> np.ndarray:
    """Log density of a continuous mechanism's output at ``points`` (shape ``(k, m)``)."""
    loc_fn, logpdf, _ = _density_params(mech_id, params, params.get("eps"))
    return logpdf(loc_fn(db, p), np.asarray(points, dtype=float))


def _grid(locations: Sequence[np.ndarray], scale: float, grid_points: int, cap: int) -> np.ndarray:
    locs = np.array(locations)
    lo, hi = locs.min() - 4 * scale, locs.max() + 4 * scale
    axis = np.union1d(np.linspace(lo, hi, grid_points), np.unique(locs))
    m = locs.shape[1]
    if axis.size**m > cap:
        raise EnumerationCapError(f"density grid of {axis.size}^{m} points exceeds cap {cap}")
    return np.array(list(itertools.product(axis, repeat=m)))


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def _log_ratio(la: np.ndarray, lb: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        diff = la - lb
    both = np.isneginf(la) & np.isneginf(lb)
    diff = np.where(both, 0.0, diff)
    return np.exp(diff)


def _databases(domain: RecordDomain, n: int, cap: int) -> list[Database]:
    if len(domain) ** n > cap:
        raise EnumerationCapError(f"m^n = {len(domain)}^{n} exceeds enumeration cap {cap}")
    return [Database(domain, c) for c in itertools.combinations_with_replacement(domain.values, n)]


def _fmt_db(db: Database) -> list:
    return [str(r) for r in db]


def verify_osdp(mech_id: str, p: Policy, eps: float, n: int, domain: RecordDomain | None = None,
                cap: int = DEFAULT_ENUMERATION_CAP, grid_points: int = 41, collect_rows: bool = False,
                **params) -> AuditReport:
    """Worst-case ratio ``Pr[M(D) in O] / Pr[M(D') in O]`` over D' in N_P(D).

    ``eps`` sets the bound ``e^eps`` and, unless ``params`` says otherwise,
    the mechanism's own epsilon.  Conventions: 0/0 counts as 1, x/0 as inf.
    """
    domain = domain or p.domain
    if domain != p.domain:
        raise DomainMismatchError("policy is defined over a different domain")
    bound = math.exp(eps)
    report = AuditReport(0.0, bound, kind="osdp")
    dbs = _databases(domain, n, cap)
    pairs = [(D, D2) for D in dbs for D2 in sorted(osdp_neighbors(D, p, cap), key=lambda x: x.records)]
    if _is_discrete(mech_id, params):
        if mech_id == "osdp_rr":
            params = {"eps": eps, **params}
        dists = {D: exact_output_distribution(mech_id, D, p, **params) for D in dbs}
        for D, D2 in pairs:
            d1, d2 = dists[D], dists[D2]
            for out in sorted(set(d1) | set(d2), key=lambda x: x.records):
                r = _ratio(d1.get(out, 0.0), d2.get(out, 0.0))
                report.checked += 1
                if collect_rows:
                    report.rows.append({"db": _fmt_db(D), "neighbor": _fmt_db(D2), "output": _fmt_db(out), "ratio": r})
                if r > report.max_ratio:
                    report.max_ratio = r
                    report.witness = {"db": _fmt_db(D), "neighbor": _fmt_db(D2), "output": _fmt_db(out)}
        return report

    loc_fn, logpdf, scale = _density_params(mech_id, params, eps)
    locs = {D: loc_fn(D, p) for D in dbs}
    pts = _grid(list(locs.values()), scale, grid_points, cap)
    logd = {D: logpdf(locs[D], pts) for D in dbs}
    for D, D2 in pairs:
        ratios = _log_ratio(logd[D], logd[D2])
        report.checked += ratios.size
        if collect_rows:
            for pt, r in zip(pts, ratios):
                report.rows.append({"db": _fmt_db(D), "neighbor": _fmt_db(D2), "output": pt.tolist(), "ratio": float(r)})
        i = int(np.argmax(ratios))
        if ratios[i] > report.max_ratio:
            report.max_ratio = float(ratios[i])
            report.witness = {"db": _fmt_db(D), "neighbor": _fmt_db(D2), "output": pts[i].tolist()}
    return report


def freedom_ratio(mech_id: str, p: Policy, eps_or_tau: float, n: int, domain: RecordDomain | None = None,
                  prior_grid: Sequence[PriorModel] | None = None, cap: int = DEFAULT_ENUMERATION_CAP,
                  grid_points: int = 41, bound_eps: float | None = None, **params) -> AuditReport:
    """Largest posterior-odds / prior-odds amplification for a sensitive target.

    The target is the first of ``n`` records; the other ``n - 1`` are drawn
    i.i.d. from each prior in ``prior_grid``.  For every sensitive value x,
    every other value y and every examined event O the report maximises::

        [Pr(r=x | M(D) in O) / Pr(r=y | M(D) in O)] / [Pr(r=x) / Pr(r=y)]

    ``eps_or_tau`` is the mechanism parameter (``tau`` for ``suppress``,
    epsilon otherwise) and also sets the bound unless ``bound_eps`` is given.
    """
    domain = domain or p.domain
    if domain != p.domain:
        raise DomainMismatchError("policy is defined over a different domain")
    if n < 1:
        raise ValueError("need at least the target record")
    if len(domain) ** n > cap:
        raise EnumerationCapError(f"m^n = {len(domain)}^{n} exceeds enumeration cap {cap}")
    grid = list(prior_grid) if prior_grid is not None else default_prior_grid(domain)
    if mech_id == "suppress":
        params = {"tau": eps_or_tau, **params}
    else:
        params = {"eps": eps_or_tau, **params}
    bound = math.exp(eps_or_tau if bound_eps is None else bound_eps)
    report = AuditReport(0.0, bound, kind="freedom")
    sensitive = p.sensitive_values
    rests = list(itertools.product(domain.values, repeat=n - 1))
    discrete = _is_discrete(mech_id, params)

    if discrete:
        cache: dict = {}

        def dist(db):
            if db not in cache:
                cache[db] = exact_output_distribution(mech_id, db, p, **params)
            return cache[db]
    else:
        loc_fn, logpdf, scale = _density_params(mech_id, params, None)
        all_dbs = _databases(domain, n, cap)
        pts = _grid([loc_fn(D, p) for D in all_dbs], scale, grid_points, cap)
        dens = {D: np.exp(logpdf(loc_fn(D, p), pts)) for D in all_dbs}

    for prior in grid:
        for v in domain:
            if prior.prob(v) <= 0:
                raise ValueError(f"prior puts no mass on {v!r}")
        weights = [math.prod(prior.prob(v) for v in rest) for rest in rests]
        for x in sensitive:
            for y in domain:
                if y == x:
                    continue
                if discrete:
                    px: dict = {}
                    py: dict = {}
                    for rest, w in zip(rests, weights):
                        for out, q in dist(Database(domain, (x, *rest))).items():
                            px[out] = px.get(out, 0.0) + w * q
                        for out, q in dist(Database(domain, (y, *rest))).items():
                            py[out] = py.get(out, 0.0) + w * q
                    outs = sorted(set(px) | set(py), key=lambda z: z.records)
                    for out in outs:
                        a, b = px.get(out, 0.0), py.get(out, 0.0)
                        # complement mass summed from the other outcomes, not 1 - a,
                        # so a certain outcome does not leave rounding residue behind
                        ac = math.fsum(px.get(o, 0.0) for o in outs if o != out)
                        bc = math.fsum(py.get(o, 0.0) for o in outs if o != out)
                        for label, ra in (("=", _ratio(a, b)), ("!=", _ratio(ac, bc))):
                            report.checked += 1
                            if ra > report.max_ratio:
                                report.max_ratio = ra
                                report.witness = {"x": str(x), "y": str(y), "event": [label, _fmt_db(out)],
                                                  "prior": prior.as_dict()}
                else:
                    fx = sum(w * dens[Database(domain, (x, *rest))] for rest, w in zip(rests, weights))
                    fy = sum(w * dens[Database(domain, (y, *rest))] for rest, w in zip(rests, weights))
                    with np.errstate(divide="ignore", invalid="ignore"):
                        ratios = np.where(fy > 0, fx / np.where(fy > 0, fy, 1.0), np.where(fx > 0, np.inf, 1.0))
                    report.checked += ratios.size
                    i = int(np.argmax(ratios))
                    if ratios[i] > report.max_ratio:
                        report.max_ratio = float(ratios[i])
                        report.witness = {"x": str(x), "y": str(y), "event": ["density", pts[i].tolist()],
                                          "prior": prior.as_dict()}
    return report
