"""Small benchmark sweep; writes errors.csv, regret.csv and manifest.json under demos_out/bench."""
from pathlib import Path

from osdp.experiments import ExperimentConfig, run_bench

cfg = ExperimentConfig.from_file(Path(__file__).with_name("bench.cfg"))
res = run_bench(cfg, Path("demos_out/bench"))
for (group, alg, measure), v in sorted(res.average.items()):
    if measure == "mre":
        print(f"{group:<14} {alg:<16} average regret {v:.3f}")
