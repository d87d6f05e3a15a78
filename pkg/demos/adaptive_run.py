"""Adaptive loop driven by the element-bubble estimator.

Writes table.csv, per-iteration VTK files and convergence.svg to
demo_out/ and prints the final decay rates.
"""
from crlab.driver import RunConfig, least_squares_slope, run

config = RunConfig(
    mode="adaptive",
    estimator="crtilde",
    theta=0.7,
    max_elements=70_000,
    out="demo_out",
    emit=("csv", "vtk", "svg"),
)
result = run(config)

n = result.n_elements
err = result.column("err")
est = result.column("est")
for k, (m, e, s) in enumerate(zip(n, err, est)):
    print(f"k={k:2d}  #T={m:6d}  err={e:.3e}  est={s:.3e}  eff={s / e:.2f}")

# optimal rate for P1-type methods in 2D is #T^{-1/2}
print("slope err (last 5):", round(least_squares_slope(n[-5:], err[-5:]), 3))
print("slope est (last 5):", round(least_squares_slope(n[-5:], est[-5:]), 3))
print("output written to", config.out)
