"""Maps from CR_1 into the conforming space.

``average_acr`` averages the one-sided vertex traces into continuous
piecewise-linears.  ``smooth_ecr`` adds one edge-bubble per interior edge
so that all edge means of the argument are reproduced exactly.  Both are
linear and are kept as sparse matrices acting on CR coefficient vectors.
"""
import numpy as np
import scipy.sparse as sp

from .fe_spaces import ConformingFunction, CrFunction, mesh_cache

__all__ = [
    "averaging_matrix",
    "smoother_matrices",
    "average_acr",
    "smooth_ecr",
    "smoothed_basis",
]


@mesh_cache
def averaging_matrix(mesh):
    """Sparse (n_vertices, n_dofs) matrix of the nodal averaging operator.

    Rows of boundary vertices are empty.
    """
    dof = mesh.edge_dof[mesh.el2edge]  # (ne, 3)
    weight = 1.0 / mesh.star_size[mesh.elements]  # (ne, 3) per local vertex
    weight[mesh.boundary_vertex[mesh.elements]] = 0.0
    # trace at local vertex j = sum_i c_i - 2 c_j
    local = np.ones((3, 3)) - 2.0 * np.eye(3)
    rows = np.repeat(mesh.elements[:, :, None], 3, axis=2)  # (ne, j, i)
    cols = np.repeat(dof[:, None, :], 3, axis=1)
    vals = weight[:, :, None] * local[None, :, :]
    keep = (cols >= 0) & (vals != 0)
    a = sp.coo_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(mesh.n_vertices, mesh.n_dofs)
    )
    return a.tocsr()


@mesh_cache
def smoother_matrices(mesh):
    """``(P_vertex, P_edge)`` with ``E v = P_vertex c`` hats + ``P_edge c`` bubbles.

    The bubble coefficient of interior edge F = (a, b) is
    ``(int_F v - int_F A v) / int_F Psi_F = 6 (v(m_F) - (Av(a) + Av(b)) / 2)``.
    """
    avg = averaging_matrix(mesh)
    inner = mesh.interior_edges
    e = mesh.edges[inner]
    n = mesh.n_dofs
    ident = sp.coo_matrix(
        (np.full(n, 6.0), (inner, np.arange(n))), shape=(mesh.n_edges, n)
    )
    endpoint = sp.coo_matrix(
        (np.full(2 * n, 3.0), (np.repeat(inner, 2), e.ravel())),
        shape=(mesh.n_edges, mesh.n_vertices),
    )
    p_edge = (ident.tocsr() - endpoint.tocsr() @ avg).tocsr()
    p_edge.eliminate_zeros()
    return avg, p_edge


def average_acr(v):
    """Nodal average of a CR function; an element of the P1 zero-trace space."""
    avg = averaging_matrix(v.mesh)
    return ConformingFunction(v.mesh, avg @ v.coefficients, np.zeros(v.mesh.n_edges))


def smooth_ecr(v):
    """Smoothed CR function: averaging plus edge-mean-restoring bubbles."""
    pv, pe = smoother_matrices(v.mesh)
    return ConformingFunction(v.mesh, pv @ v.coefficients, pe @ v.coefficients)


def smoothed_basis(mesh, edge):
    """``E_CR`` applied to the CR basis function of an interior edge."""
    return smooth_ecr(CrFunction.basis(mesh, edge))
