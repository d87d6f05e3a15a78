"""Step through the smoothed Crouzeix-Raviart pieces on the initial mesh."""
import numpy as np

from crlab import benchmark
from crlab.estimator import eta_cr, eta_crtilde, ncf_avg, surrogate_osc
from crlab.fe_spaces import CrFunction
from crlab.mesh import unit_square_initial, uniform_refine
from crlab.problem import apply
from crlab.solver import solve_problem
from crlab.transfer import average_acr, smooth_ecr

mesh = uniform_refine(unit_square_initial())
print(f"{mesh.n_elements} elements, {mesh.n_dofs} interior edges")

# one CR basis function and its conforming companions
e = int(mesh.interior_edges[0])
psi = CrFunction.basis(mesh, e)
avg = average_acr(psi)
smooth = smooth_ecr(psi)
print("nonzero vertex values of A psi:", np.count_nonzero(avg.vertex))
print("edge means kept by E psi:", np.allclose(smooth.edge_means(), psi.edge_values()))

# the smoothed method tests the source with E psi, so line sources make sense
f, exact = benchmark(2.0 / 3.0)
print("<f, E psi> =", apply(f, smooth))

u_h = solve_problem(mesh, f)
print("energy of u_h:", u_h.energy())
print("Ncf^2 =", ncf_avg(u_h).sum())
print("eta_CR^2 =", np.sum(eta_cr(u_h, f) ** 2), " eta_CRt^2 =", np.sum(eta_crtilde(u_h, f) ** 2))
print("Osc^2 =", surrogate_osc(f, mesh).sum())
