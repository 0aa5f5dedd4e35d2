"""Deterministic experiment sweeps: histogram benchmark, n-gram release, crossover grid.

Every random draw comes from a substream whose path spells out the grid
cell, so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Database, PrivacySpend
from .data import (BENCHMARK_D, BENCHMARK_PROFILES, DEFAULT_LOCATIONS, benchmark_histogram, gen_trajectories,
                   load_histogram, make_split, ngram_table, policy_rho)
from .mechanisms import (HISTOGRAM_SENSITIVITY, MECHANISM_IDS, SplitHistogram, crossover_threshold,
                         laplace_mechanism, osdp_rr, osdp_rr_histogram, release)
from .metrics import (MEASURES, ErrorTable, all_measures, average_regret, errors_from_trials, regret,
                      sparse_mre, write_regret_csv)
from .noise import RngStream, laplace_sample

PERCENT_RATIOS = (99, 90, 75, 50, 25, 10, 1)
DEFAULT_MAX_GRAMS = 2_000_000


# -- configuration ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    datasets: list = field(default_factory=lambda: list(BENCHMARK_PROFILES))
    policies: list = field(default_factory=lambda: ["close", "far"])
    rho_x: list = field(default_factory=lambda: [r / 100 for r in PERCENT_RATIOS])
    epsilons: list = field(default_factory=lambda: [1.0, 0.01])
    mechanisms: list = field(default_factory=lambda: ["laplace", "osdp_laplace_l1", "dawaz"])
    trials: int = 10
    seed: int = 0
    out: str = "results"
    workers: int = 1
    d: int = BENCHMARK_D
    dawaz_rho: float = 0.1
    dawaz_detector: str = "osdp_rr"
    suppress_tau: float = 10.0
    # n-gram experiment
    users: int = 500
    days: int = 4
    locations: int = DEFAULT_LOCATIONS
    ngram_n: int = 2
    ngram_k: list = field(default_factory=lambda: [1, 2, 4])
    ngram_rho: list = field(default_factory=lambda: [0.99, 0.75, 0.5, 0.25])
    max_grams: int = DEFAULT_MAX_GRAMS

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.epsilons or any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
            raise ValueError("epsilons must be positive and finite")
        if any(not 0 < r < 1 for r in self.rho_x) or any(not 0 < r < 1 for r in self.ngram_rho):
            raise ValueError("policy ratios must lie in (0, 1)")
        bad = set(self.mechanisms) - set(MECHANISM_IDS)
        if bad:
            raise ValueError(f"unknown mechanisms {sorted(bad)}")
        bad = set(self.policies) - {"close", "far"}
        if bad:
            raise ValueError(f"unknown policy samplers {sorted(bad)}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 < self.dawaz_rho < 1:
            raise ValueError("dawaz_rho must lie in (0, 1)")
        if self.ngram_n < 1 or any(k < 1 for k in self.ngram_k):
            raise ValueError("ngram_n and ngram_k must be at least 1")

    def mechanism_params(self, mech_id: str) -> dict:
        if mech_id == "dawaz":
            return {"rho": self.dawaz_rho, "detector": self.dawaz_detector}
        if mech_id == "suppress":
            return {"tau": self.suppress_tau}
        return {}

    def canonical(self) -> dict:
        """Fields that determine results (output location and worker count excluded)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key.replace("-", "_")] = value
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**_coerce(raw))

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def to_text(self) -> str:
        lines = []
        for k, v in dataclasses.asdict(self).items():
            lines.append(f"{k} = {', '.join(map(str, v)) if isinstance(v, list) else v}")
        return "\n".join(lines) + "\n"


def _coerce(raw: dict) -> dict:
    types = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        default = types[key].default_factory() if types[key].default_factory is not dataclasses.MISSING else types[key].default
        if isinstance(default, list):
            items = value if isinstance(value, list) else [s.strip() for s in str(value).split(",") if s.strip()]
            elem = type(default[0]) if default else str
            out[key] = [elem(x) for x in items]
        else:
            out[key] = type(default)(value)
    if "rho_x" in out:
        out["rho_x"] = [r / 100 if r >= 1 else r for r in out["rho_x"]]
    return out


# -- histogram benchmark ----------------------------------------------------

def dataset_histogram(name: str, cfg: ExperimentConfig, root: RngStream):
    if name.endswith(".csv"):
        return load_histogram(name)
    return benchmark_histogram(name, root.fork("data", name), cfg.d)


def dataset_label(name: str) -> str:
    return Path(name).stem if name.endswith(".csv") else name


def plan_inputs(cfg: ExperimentConfig) -> list[tuple]:
    """``(dataset, sampler, rho_x)`` cells, each yielding one ``(x, x_ns)`` pair."""
    return [(ds, pol, rx) for ds in cfg.datasets for pol in cfg.policies for rx in cfg.rho_x]


def input_id(dataset: str, sampler: str, rho_x: float, eps: float) -> str:
    return f"{dataset_label(dataset)}|{sampler}|{rho_x:g}|eps={eps:g}"


def _run_cell(cfg: ExperimentConfig, cell: tuple) -> dict:
    dataset, sampler, rho_x = cell
    root = RngStream(cfg.seed)
    result = {"cell": list(cell), "rows": [], "spends": [], "failures": [], "paths": []}
    try:
        h = dataset_histogram(dataset, cfg, root)
        split_rng = root.fork("split", dataset_label(dataset), sampler, rho_x)
        sh = make_split(h, sampler, rho_x, split_rng)
        result["paths"].append(split_rng.path_str)
        result["achieved_ratio"] = sh.ns_ratio
        result["clipped"] = sh.clipped
    except Exception as exc:  # recorded, not fatal
        result["failures"].append({"stage": "input", "error": f"{type(exc).__name__}: {exc}"})
        return result
    for eps in cfg.epsilons:
        inp = input_id(dataset, sampler, rho_x, eps)
        for mech in cfg.mechanisms:
            cell_rng = root.fork("run", dataset_label(dataset), sampler, rho_x, eps, mech)
            result["paths"].append(cell_rng.path_str)
            try:
                trials, spend = [], None
                for t in range(cfg.trials):
                    rel = release(mech, sh, eps, cell_rng.fork(t), **cfg.mechanism_params(mech))
                    trials.append(all_measures(sh.full.counts, rel.estimates))
                    spend = rel.spend
                avg = errors_from_trials(trials)
                sp = _spend_columns(spend)
                for meas in MEASURES:
                    result["rows"].append((inp, mech, meas, avg[meas]))
                result["spends"].append(((inp, mech), sp))
            except Exception as exc:
                result["failures"].append({"stage": "release", "input": inp, "mechanism": mech,
                                           "error": f"{type(exc).__name__}: {exc}"})
    return result


def _spend_columns(spend: PrivacySpend) -> dict:
    return {"policy": spend.policy.label, "epsilon": repr(float(spend.epsilon)), "regime": spend.regime.value}


@dataclass
class BenchResult:
    errors: ErrorTable
    regrets: dict
    average: dict
    manifest: dict


def run_bench(cfg: ExperimentConfig, out_dir=None) -> BenchResult:
    """Run every (input, eps, mechanism) cell ``cfg.trials`` times; write CSVs and manifest."""
    cfg.validate()
    cells = plan_inputs(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, [cfg] * len(cells), cells))
    else:
        results = [_run_cell(cfg, c) for c in cells]

    table = ErrorTable()
    failures, cell_info = [], []
    for res in results:
        for inp, mech, meas, val in res["rows"]:
            table.add(inp, mech, meas, val)
        for key, sp in res["spends"]:
            table.spends[key] = sp
        failures.extend(res["failures"])
        cell_info.append({"cell": res["cell"], "substreams": res["paths"],
                          "achieved_ratio": res.get("achieved_ratio"), "clipped": res.get("clipped")})
    regrets = regret(table) if len(table) else {}
    avg = average_regret(regrets, group_of=lambda inp: inp.split("|")[1] + "|" + inp.split("|")[3])
    manifest = {
        "config": cfg.canonical(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "n_inputs": len(cells),
        "cells": cell_info,
        "failures": failures,
        "average_regret": [{"group": g, "algorithm": a, "measure": m, "value": _json_num(v)}
                           for (g, a, m), v in sorted(avg.items())],
    }
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "errors.csv")
    write_regret_csv(out / "regret.csv", regrets, table.spends)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return BenchResult(table, regrets, avg, manifest)


def _json_num(v: float):
    return v if math.isfinite(v) else "inf"


# -- n-gram release ---------------------------------------------------------

@dataclass
class NGramRow:
    policy: str
    algorithm: str
    k: str
    epsilon: float
    mre: float
    regime: str


def run_ngram(cfg: ExperimentConfig, out_dir=None) -> list[NGramRow]:
    """Compare truncated Laplace n-gram release against OsdpRR sampling then counting.

    Truth is the untruncated table.  Bins outside every materialized table
    have true count 0; Laplace noise of scale ``b`` contributes ``b`` to each
    of them in expectation, OsdpRR contributes nothing.
    """
    cfg.validate()
    root = RngStream(cfg.seed)
    trajs = gen_trajectories(cfg.users, cfg.days, root.fork("trajectories"), locations=cfg.locations)
    n = cfg.ngram_n
    domain_size = cfg.locations ** n
    truth = ngram_table(trajs, n, None, root)
    if len(truth.counts) > cfg.max_grams:
        raise MemoryError(f"{len(truth.counts)} non-zero {n}-grams exceed max_grams={cfg.max_grams}")
    rows = []
    ks = sorted(set([1, *cfg.ngram_k]))
    for eps in cfg.epsilons:
        for k in ks:
            scale = HISTOGRAM_SENSITIVITY * k / eps
            errs = []
            for t in range(cfg.trials):
                trng = root.fork("ngram", "laplace", k, eps, t)
                table = ngram_table(trajs, n, k, trng.fork("truncate"))
                keys = sorted(set(truth.counts) | set(table.counts))
                noise = laplace_sample(trng.fork("noise"), scale, size=len(keys))
                est = {g: table.counts.get(g, 0) + z for g, z in zip(keys, noise)}
                errs.append(sparse_mre(truth.counts, est, domain_size, zero_bin_error=scale))
            rows.append(NGramRow("P_all", "laplace", str(k), eps, math.fsum(errs) / len(errs), "DP"))
        for rho in cfg.ngram_rho:
            tp = policy_rho(trajs, rho, cfg.locations)
            db = Database(tp.policy.domain, tuple(trajs))
            errs = []
            for t in range(cfg.trials):
                kept = osdp_rr(db, tp.policy, eps, root.fork("ngram", "osdp_rr", rho, eps, t))
                est = ngram_table(kept.records, n, None, root).counts
                errs.append(sparse_mre(truth.counts, {g: float(c) for g, c in est.items()}, domain_size))
            rows.append(NGramRow(tp.policy.label, "osdp_rr", "inf", eps, math.fsum(errs) / len(errs), "OSDP"))
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "ngram.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "algorithm", "k", "epsilon", "mre", "regime"])
        for r in rows:
            w.writerow([r.policy, r.algorithm, r.k, repr(r.epsilon), repr(r.mre), r.regime])
    (out / "manifest.json").write_text(json.dumps({
        "config": cfg.canonical(), "config_sha256": cfg.digest(), "seed": cfg.seed,
        "trajectories": len(trajs), "distinct_grams": len(truth.counts), "domain_size": domain_size,
    }, indent=2, sort_keys=True) + "\n")
    return rows


# -- crossover grid ---------------------------------------------------------

@dataclass
class CrossoverCell:
    n: int
    d: int
    epsilon: float
    predicted: str
    empirical: str
    laplace_l1: float
    osdp_rr_l1: float
    near_boundary: bool

    @property
    def agrees(self) -> bool:
        return self.predicted == self.empirical


def near_boundary(n: int, d: int, eps: float, margin: float = 0.2) -> bool:
    lhs, rhs = n * eps, 2 * d * math.exp(eps)
    return abs(lhs - rhs) <= margin * max(lhs, rhs)


def run_crossover(n_list, d_list, eps_list, trials: int = 20, seed: int = 0, out_dir=None) -> list[CrossoverCell]:
    """Predicted vs simulated L1 winner between Laplace and an OsdpRR histogram.

    Data are ``n`` non-sensitive records spread uniformly at random over ``d`` bins.
    """
    root = RngStream(seed)
    cells = []
    for n in n_list:
        for d in d_list:
            x = root.fork("crossover", "data", n, d).generator.multinomial(n, np.full(d, 1.0 / d))
            sh = SplitHistogram.from_counts(x, x)
            for eps in eps_list:
                rng = root.fork("crossover", n, d, eps)
                lap = [np.abs(laplace_mechanism(sh.full, eps, rng.fork("laplace", t)).estimates - x).sum()
                       for t in range(trials)]
                rr = [np.abs(osdp_rr_histogram(sh, eps, rng.fork("osdp_rr", t)).estimates - x).sum()
                      for t in range(trials)]
                l_mean, r_mean = float(np.mean(lap)), float(np.mean(rr))
                cells.append(CrossoverCell(
                    n, d, eps,
                    "laplace" if crossover_threshold(n, d, eps) else "osdp_rr",
                    "laplace" if l_mean < r_mean else "osdp_rr",
                    l_mean, r_mean, near_boundary(n, d, eps)))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "crossover.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "d", "epsilon", "predicted", "empirical", "agrees", "near_boundary",
                        "laplace_l1", "osdp_rr_l1"])
            for c in cells:
                w.writerow([c.n, c.d, repr(c.epsilon), c.predicted, c.empirical, int(c.agrees),
                            int(c.near_boundary), repr(c.laplace_l1), repr(c.osdp_rr_l1)])
    return cells


def agreement_rate(cells: list[CrossoverCell], skip_near_boundary: bool = True) -> float:
    pool = [c for c in cells if not (skip_near_boundary and c.near_boundary)]
    if not pool:
        raise ValueError("no cells left after excluding the boundary")
    return sum(c.agrees for c in pool) / len(pool)
