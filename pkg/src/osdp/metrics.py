"""Error measures and regret across algorithms."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MEASURES = ("mre", "rel50", "rel95")


def _vectors(x, est):
    x = np.asarray(getattr(x, "counts", x), dtype=float)
    est = np.asarray(getattr(est, "estimates", est), dtype=float)
    if x.shape != est.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {est.shape}")
    return x, est


def relative_errors(x, est, delta: float = 1.0) -> np.ndarray:
    """Per-bin ``|x_i - est_i| / max(x_i, delta)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    x, est = _vectors(x, est)
    return np.abs(x - est) / np.maximum(x, delta)


def mre(x, est, delta: float = 1.0) -> float:
    """Mean relative error."""
    return float(relative_errors(x, est, delta).mean())


def nearest_rank(values, alpha: float) -> float:
    """Smallest value with at least ``alpha`` percent of the data at or below it."""
    if not 0 < alpha <= 100:
        raise ValueError("alpha must lie in (0, 100]")
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(alpha / 100 * v.size))
    return float(v[rank - 1])


def rel_percentile(x, est, delta: float = 1.0, alpha: float = 50) -> float:
    return nearest_rank(relative_errors(x, est, delta), alpha)


def all_measures(x, est, delta: float = 1.0) -> dict:
    rel = relative_errors(x, est, delta)
    return {"mre": float(rel.mean()), "rel50": nearest_rank(rel, 50), "rel95": nearest_rank(rel, 95)}


def sparse_mre(truth: dict, est: dict, domain_size: int, zero_bin_error: float = 0.0,
               delta: float = 1.0) -> float:
    """MRE over a huge domain where only some bins are materialized.

    ``truth`` and ``est`` map bin keys to values; bins missing from both
    have true count 0 and contribute ``zero_bin_error`` each (the expected
    ``|noise| / delta`` of a mechanism that would perturb them, or 0 for one
    that releases them as zero).
    """
    keys = set(truth) | set(est)
    if len(keys) > domain_size:
        raise ValueError("more materialized bins than the domain holds")
    s = math.fsum(abs(truth.get(k, 0) - est.get(k, 0.0)) / max(truth.get(k, 0), delta) for k in keys)
    s += (domain_size - len(keys)) * zero_bin_error
    return s / domain_size


@dataclass
class ErrorTable:
    """Errors keyed by ``(input, algorithm, measure)``; values already trial-averaged."""

    rows: dict = field(default_factory=dict)
    spends: dict = field(default_factory=dict)  # (input, algorithm) -> spend dict

    def add(self, input_id: str, algorithm: str, measure: str, value: float, spend: dict | None = None) -> None:
        if value < 0 or math.isnan(value):
            raise ValueError(f"error values must be non-negative, got {value}")
        self.rows[(input_id, algorithm, measure)] = float(value)
        if spend is not None:
            self.spends[(input_id, algorithm)] = spend

    def merge(self, other: "ErrorTable") -> "ErrorTable":
        self.rows.update(other.rows)
        self.spends.update(other.spends)
        return self

    def __len__(self):
        return len(self.rows)

    def get(self, input_id, algorithm, measure):
        return self.rows[(input_id, algorithm, measure)]

    def to_csv(self, path) -> None:
        _write_rows(path, self.rows, self.spends)

    @classmethod
    def from_csv(cls, path) -> "ErrorTable":
        t = cls()
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                t.rows[(row["input"], row["algorithm"], row["measure"])] = float(row["value"])
        return t


def _write_rows(path, rows: dict, spends: dict) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["input", "algorithm", "measure", "value", "policy", "epsilon", "regime"])
        for key in sorted(rows):
            sp = spends.get(key[:2], {})
            w.writerow([*key, repr(rows[key]), sp.get("policy", ""), sp.get("epsilon", ""), sp.get("regime", "")])


def errors_from_trials(trials: list[dict]) -> dict:
    """Average per-trial measure dicts, measure by measure."""
    if not trials:
        raise ValueError("no trials")
    return {m: math.fsum(t[m] for t in trials) / len(trials) for m in trials[0]}


def regret(table: ErrorTable) -> dict:
    """Ratio of each error to the best error in its ``(input, measure)`` group.

    When the best error is 0, zero-error entries get regret 1 and the rest
    are infinite.
    """
    groups = defaultdict(list)
    for (inp, alg, meas), v in table.rows.items():
        groups[(inp, meas)].append((alg, v))
    out = {}
    for (inp, meas), items in groups.items():
        opt = min(v for _, v in items)
        for alg, v in items:
            if opt == 0:
                out[(inp, alg, meas)] = 1.0 if v == 0 else math.inf
            else:
                out[(inp, alg, meas)] = v / opt
    return out


def average_regret(regrets: dict, group_of=lambda inp: "") -> dict:
    """Average regret over inputs, per ``(group_of(input), algorithm, measure)``."""
    acc = defaultdict(list)
    for (inp, alg, meas), r in regrets.items():
        acc[(group_of(inp), alg, meas)].append(r)
    return {k: math.fsum(v) / len(v) for k, v in acc.items()}


def write_regret_csv(path, regrets: dict, spends: dict | None = None) -> None:
    _write_rows(path, regrets, spends or {})
