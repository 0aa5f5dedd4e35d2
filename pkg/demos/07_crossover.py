"""When does plain Laplace beat subsampling? Check the predicted winner empirically."""
from osdp.experiments import agreement_rate, run_crossover

cells = run_crossover([1_000, 100_000], [10, 10_000], [0.1, 1.0], trials=10, seed=3)
for c in cells:
    flag = "near boundary" if c.near_boundary else ("agrees" if c.agrees else "DISAGREES")
    print(f"n={c.n:<7} d={c.d:<6} eps={c.epsilon:<4} predicted {c.predicted:<8} ({flag})")
print("agreement:", agreement_rate(cells))
