"""Assembly and solution of the smoothed Crouzeix-Raviart system.

The discrete problem tests the source only with smoothed CR functions,

    int grad_h u_h . grad_h v_h = <f, E v_h>    for all v_h in CR_1,

so the right-hand side is ``P_vertex^T b_hat + P_edge^T b_bubble`` where
``b_*`` are the exact loads of hats and edge bubbles.
"""
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe_spaces import CrFunction, mesh_cache
from .problem import integrate_cells, load_vectors
from .transfer import smoother_matrices

__all__ = [
    "SolverError",
    "local_stiffness",
    "stiffness_matrix",
    "assemble",
    "solve",
    "dense_solve",
    "solve_problem",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    """Raised when the iterative solver does not reach its tolerance."""


def local_stiffness(mesh):
    """(ne, 3, 3) element matrices of the CR basis, ordered by local edge."""
    g = mesh.bary_grads
    # grad phi_i = -2 grad lambda_i
    return 4.0 * np.einsum("tik,tjk->tij", g, g) * mesh.areas[:, None, None]


@mesh_cache
def stiffness_matrix(mesh):
    """Broken-gradient stiffness matrix on interior-edge dofs (CSR, SPD)."""
    local = local_stiffness(mesh)
    dof = mesh.edge_dof[mesh.el2edge]
    rows = np.repeat(dof[:, :, None], 3, axis=2)
    cols = np.repeat(dof[:, None, :], 3, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.n_dofs
    a = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    a.sum_duplicates()
    return a


def assemble(mesh, f, *, smoothed=True):
    """Return ``(A, rhs)`` for source ``f``.

    With ``smoothed=False`` the source is tested with the CR basis itself
    (classical method, only meaningful for square-integrable densities and
    evaluated by midpoint-exact quadrature of the hat loads); kept for
    comparison runs.
    """
    a = stiffness_matrix(mesh)
    loads = load_vectors(f, mesh)
    if smoothed:
        pv, pe = smoother_matrices(mesh)
        rhs = pv.T @ loads.vertex + pe.T @ loads.edge
    else:
        rhs = _classical_rhs(mesh, f)
    return a, np.asarray(rhs)


def _classical_rhs(mesh, f):
    if f.weight is not None:
        raise ValueError("the unsmoothed method cannot evaluate a line source")

    def integrand(parent, side, bary, x1, x2):
        dens = f.density(x1, x2, np.broadcast_to(side[:, None], x1.shape))
        return dens[..., None] * (1.0 - 2.0 * bary)

    local = integrate_cells(mesh, f.lam, integrand, 3)
    dof = mesh.edge_dof[mesh.el2edge]
    keep = dof >= 0
    return np.bincount(dof[keep], weights=local[keep], minlength=mesh.n_dofs)


def solve(a, b, tol=DEFAULT_TOL, maxiter=None):
    """Jacobi-preconditioned conjugate gradients to relative residual ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    n = len(b)
    if maxiter is None:
        maxiter = max(10 * n, 1000)
    inv_diag = 1.0 / a.diagonal()
    precond = spla.LinearOperator((n, n), matvec=lambda r: inv_diag * r, dtype=float)
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    # the recursive residual can drift from the true one; restart from x
    x = np.zeros(n)
    for _ in range(3):
        x, info = spla.cg(
            a, b, x0=x, rtol=tol, atol=0.0, maxiter=maxiter, M=precond, callback=count
        )
        res = np.linalg.norm(b - a @ x) / bnorm
        if res <= tol:
            break
    if info < 0 or res > tol:
        raise SolverError(
            f"CG stopped after {iterations} iterations with relative residual {res:.3e}"
        )
    log.debug("CG: n=%d, %d iterations, residual %.2e", n, iterations, res)
    return x


def dense_solve(a, b):
    """Cholesky solve of the densified system (oracle for small meshes)."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    return sla.solve(a, b, assume_a="pos")


def solve_problem(mesh, f, tol=DEFAULT_TOL, *, smoothed=True):
    """Assemble and solve; return the discrete solution as a :class:`CrFunction`."""
    a, b = assemble(mesh, f, smoothed=smoothed)
    return CrFunction(mesh, solve(a, b, tol))
