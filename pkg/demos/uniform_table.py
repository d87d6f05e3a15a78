"""Uniform refinement of the kinked benchmark, printed as a convergence table.

Run from the repository root:  python3 demos/uniform_table.py [max_elements]
"""
import sys

from crlab.driver import RunConfig, run

max_elements = int(sys.argv[1]) if len(sys.argv) > 1 else 65_536
result = run(RunConfig(mode="uniform", max_elements=max_elements))

print(f"{'k':>2} {'#T':>8} {'err':>10} {'eoc':>6} {'est_CR':>10} {'eff_CR':>7} {'est_CRt':>10} {'eff_CRt':>7}")
for it in result.iterations:
    cr, crt = it.reports["cr"], it.reports["crtilde"]
    eoc = "" if cr.eoc is None else f"{cr.eoc:.2f}"
    print(
        f"{it.k:>2} {it.n_elements:>8} {cr.err:10.3e} {eoc:>6} "
        f"{cr.est:10.3e} {cr.effectivity:7.2f} {crt.est:10.3e} {crt.effectivity:7.2f}"
    )

# the solution only has H^{3/2 - eps} regularity, so uniform meshes give
# err ~ #T^{-1/4}; both estimators track the error with a fixed factor
