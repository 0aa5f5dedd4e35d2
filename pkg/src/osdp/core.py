"""Records, databases, policies, neighbor relations and budget composition.

A policy maps every value of a finite record domain to 0 (sensitive) or
1 (non-sensitive).  Policies are stored as lookup tables aligned with the
domain order so relaxation checks are a pointwise scan.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

SENSITIVE = 0
NON_SENSITIVE = 1

#: Upper bound on enumerated atoms (databases, neighbors) in audit-style loops.
DEFAULT_ENUMERATION_CAP = 10**6


class DomainMismatchError(ValueError):
    """A record or policy does not belong to the expected domain."""


class EnumerationCapError(RuntimeError):
    """An exhaustive enumeration would exceed the configured cap."""


class CompositionError(ValueError):
    """Spends that cannot be composed under any available theorem."""


@dataclass(frozen=True)
class RecordDomain:
    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if len(values) < 1:
            raise ValueError("record domain must be non-empty")
        if len(set(values)) != len(values):
            raise ValueError("record domain values must be distinct")

    @classmethod
    def range(cls, m: int, prefix: str = "v") -> "RecordDomain":
        return cls(tuple(f"{prefix}{i}" for i in range(m)))

    @cached_property
    def _index(self) -> dict:
        return {v: i for i, v in enumerate(self.values)}

    def index(self, value: Hashable) -> int:
        try:
            return self._index[value]
        except KeyError:
            raise DomainMismatchError(f"record {value!r} not in domain") from None

    def __contains__(self, value) -> bool:
        return value in self._index

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class Database:
    """A multiset of records over ``domain``.

    Records are kept sorted by domain order, so two databases holding the
    same multiset compare (and hash) equal.
    """

    domain: RecordDomain
    records: tuple = ()

    def __post_init__(self):
        idx = self.domain.index
        recs = tuple(sorted(self.records, key=idx))
        object.__setattr__(self, "records", recs)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def counts(self) -> Counter:
        return Counter(self.records)

    def remove(self, record) -> "Database":
        recs = list(self.records)
        recs.remove(record)
        return Database(self.domain, tuple(recs))

    def add(self, record) -> "Database":
        return Database(self.domain, self.records + (record,))

    def replace(self, old, new) -> "Database":
        return self.remove(old).add(new)


@dataclass(frozen=True)
class Policy:
    """Total map from domain values to {0: sensitive, 1: non-sensitive}."""

    domain: RecordDomain
    table: tuple
    label: str = "P"

    def __post_init__(self):
        table = tuple(int(c) for c in self.table)
        object.__setattr__(self, "table", table)
        if len(table) != len(self.domain):
            raise DomainMismatchError("policy table must cover the whole domain")
        if any(c not in (SENSITIVE, NON_SENSITIVE) for c in table):
            raise ValueError("policy classes must be 0 or 1")

    @classmethod
    def from_sensitive(cls, domain: RecordDomain, sensitive: Iterable, label: str = "P") -> "Policy":
        sens = set(sensitive)
        for v in sens:
            domain.index(v)
        return cls(domain, tuple(SENSITIVE if v in sens else NON_SENSITIVE for v in domain), label)

    @classmethod
    def from_mapping(cls, domain: RecordDomain, mapping: Mapping, label: str = "P") -> "Policy":
        missing = [v for v in domain if v not in mapping]
        if missing:
            raise DomainMismatchError(f"policy missing classes for {missing[:5]!r}")
        return cls(domain, tuple(mapping[v] for v in domain), label)

    @classmethod
    def all_sensitive(cls, domain: RecordDomain) -> "Policy":
        """P_all: every record sensitive, i.e. plain differential privacy."""
        return cls(domain, (SENSITIVE,) * len(domain), "P_all")

    def classify(self, value) -> int:
        return self.table[self.domain.index(value)]

    def is_sensitive(self, value) -> bool:
        return self.classify(value) == SENSITIVE

    @property
    def sensitive_values(self) -> tuple:
        return tuple(v for v, c in zip(self.domain, self.table) if c == SENSITIVE)

    @property
    def non_sensitive_values(self) -> tuple:
        return tuple(v for v, c in zip(self.domain, self.table) if c == NON_SENSITIVE)

    @property
    def is_trivial(self) -> bool:
        return len(set(self.table)) < 2

    @property
    def is_all_sensitive(self) -> bool:
        return all(c == SENSITIVE for c in self.table)


def _same_domain(*policies: Policy) -> None:
    first = policies[0].domain
    for p in policies[1:]:
        if p.domain != first:
            raise DomainMismatchError("policies are defined over different domains")


def split(db: Database, p: Policy) -> tuple[Database, Database]:
    """Return ``(sensitive, non_sensitive)`` sub-multisets of ``db``."""
    if db.domain != p.domain:
        raise DomainMismatchError("database and policy domains differ")
    sens, ns = [], []
    for r in db:
        (ns if p.classify(r) == NON_SENSITIVE else sens).append(r)
    return Database(db.domain, tuple(sens)), Database(db.domain, tuple(ns))


def is_relaxation(p1: Policy, p2: Policy) -> bool:
    """True iff ``p1(r) >= p2(r)`` for every record (p1 is weaker than p2)."""
    _same_domain(p1, p2)
    return all(a >= b for a, b in zip(p1.table, p2.table))


def min_relaxation(policies: Sequence[Policy]) -> Policy:
    """Pointwise maximum: the strictest policy that relaxes every input."""
    policies = list(policies)
    if not policies:
        raise ValueError("min_relaxation needs at least one policy")
    _same_domain(*policies)
    table = tuple(max(cs) for cs in zip(*(p.table for p in policies)))
    for p in policies:
        if p.table == table:
            return p
    label = "min(" + ",".join(p.label for p in policies) + ")"
    return Policy(policies[0].domain, table, label)


def _check_cap(m: int, n: int, cap: int) -> None:
    if m * n > cap:
        raise EnumerationCapError(f"neighbor enumeration m*n={m * n} exceeds cap {cap}")


def osdp_neighbors(db: Database, p: Policy, cap: int = DEFAULT_ENUMERATION_CAP) -> set[Database]:
    """One-sided P-neighbors: replace one sensitive record by any other value.

    The relation is asymmetric; only the direction out of ``db`` is built.
    """
    if db.domain != p.domain:
        raise DomainMismatchError("database and policy domains differ")
    _check_cap(len(db.domain), len(db), cap)
    out = set()
    for r in set(db.records):
        if p.classify(r) != SENSITIVE:
            continue
        for r2 in db.domain:
            if r2 != r:
                out.add(db.replace(r, r2))
    return out


def eosdp_neighbors(db: Database, p: Policy, cap: int = DEFAULT_ENUMERATION_CAP) -> set[Database]:
    """Extended neighbors: drop one sensitive record, or add any other value."""
    if db.domain != p.domain:
        raise DomainMismatchError("database and policy domains differ")
    _check_cap(len(db.domain), len(db) + 1, cap)
    out = set()
    for r in set(db.records):
        if p.classify(r) != SENSITIVE:
            continue
        out.add(db.remove(r))
        for r2 in db.domain:
            if r2 != r:
                out.add(db.add(r2))
    return out


class Regime(str, enum.Enum):
    OSDP = "OSDP"
    EOSDP = "eOSDP"
    DP = "DP"
    # Personalized DP baseline; carries only a freedom-from-exclusion bound.
    PDP = "PDP"


@dataclass(frozen=True)
class PrivacySpend:
    policy: Policy
    epsilon: float
    regime: Regime = Regime.OSDP

    def __post_init__(self):
        regime = Regime(self.regime)
        object.__setattr__(self, "regime", regime)
        eps = float(self.epsilon)
        if math.isnan(eps) or eps < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if math.isinf(eps) and regime is not Regime.PDP:
            raise ValueError("infinite epsilon is only meaningful for the PDP baseline")
        object.__setattr__(self, "epsilon", eps)
        if regime is Regime.DP and not self.policy.is_all_sensitive:
            raise ValueError("a DP spend must be recorded against P_all")

    @classmethod
    def dp(cls, domain: RecordDomain, epsilon: float) -> "PrivacySpend":
        return cls(Policy.all_sensitive(domain), epsilon, Regime.DP)

    def as_osdp(self) -> "PrivacySpend":
        """View a DP spend as (P_all, eps)-OSDP; OSDP spends are returned unchanged."""
        if self.regime is Regime.DP:
            return PrivacySpend(self.policy, self.epsilon, Regime.OSDP)
        return self

    def to_dict(self) -> dict:
        return {"policy": self.policy.label, "epsilon": self.epsilon, "regime": self.regime.value}


def compose_sequential(spends: Sequence[PrivacySpend]) -> PrivacySpend:
    """Sequential composition: minimum-relaxation policy, summed epsilon.

    DP spends count as OSDP under P_all.  An all-DP input stays DP; any
    OSDP input yields OSDP.  eOSDP spends compose only with each other.
    """
    spends = list(spends)
    if not spends:
        raise CompositionError("nothing to compose")
    if len(spends) == 1:
        return spends[0]
    regimes = {s.regime for s in spends}
    if Regime.PDP in regimes:
        raise CompositionError("PDP spends carry no composition theorem")
    if Regime.EOSDP in regimes and regimes != {Regime.EOSDP}:
        raise CompositionError("cannot mix eOSDP with OSDP/DP spends; convert with eosdp_to_osdp first")
    policy = min_relaxation([s.policy for s in spends])
    eps = math.fsum(s.epsilon for s in spends)
    if regimes == {Regime.DP}:
        regime = Regime.DP
    elif regimes == {Regime.EOSDP}:
        regime = Regime.EOSDP
    else:
        regime = Regime.OSDP
    return PrivacySpend(policy, eps, regime)


def compose_parallel(spends: Sequence[PrivacySpend]) -> PrivacySpend:
    """Parallel composition of eOSDP spends over disjoint partitions.

    The caller is responsible for the inputs having run on disjoint parts.
    """
    spends = list(spends)
    if not spends:
        raise CompositionError("nothing to compose")
    bad = [s.regime.value for s in spends if s.regime is not Regime.EOSDP]
    if bad:
        raise CompositionError(f"parallel composition requires eOSDP spends, got {bad}")
    if len(spends) == 1:
        return spends[0]
    policy = min_relaxation([s.policy for s in spends])
    return PrivacySpend(policy, max(s.epsilon for s in spends), Regime.EOSDP)


def eosdp_to_osdp(spend: PrivacySpend) -> PrivacySpend:
    """(P, eps)-eOSDP implies (P, 2 eps)-OSDP."""
    if spend.regime is not Regime.EOSDP:
        raise CompositionError("only eOSDP spends can be converted")
    return PrivacySpend(spend.policy, 2 * spend.epsilon, Regime.OSDP)


# -- policy files -----------------------------------------------------------

def load_policy(path, domain: RecordDomain | None = None, label: str | None = None) -> Policy:
    """Read a ``value,class`` CSV.

    Without ``domain`` the file order defines the domain.  With one, every
    domain value must appear in the file.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["value", "class"]:
            raise ValueError(f"{path}: expected header 'value,class'")
        mapping: dict = {}
        for row in reader:
            value, cls = row["value"].strip(), row["class"].strip()
            if cls not in ("0", "1"):
                raise ValueError(f"{path}: class for {value!r} must be 0 or 1, got {cls!r}")
            if value in mapping:
                raise ValueError(f"{path}: duplicate value {value!r}")
            mapping[value] = int(cls)
    if not mapping:
        raise ValueError(f"{path}: no policy rows")
    if domain is None:
        domain = RecordDomain(tuple(mapping))
    return Policy.from_mapping(domain, mapping, label or path.stem)


def save_policy(p: Policy, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "class"])
        for v, c in zip(p.domain, p.table):
            w.writerow([v, c])
