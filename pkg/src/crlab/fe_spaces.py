"""Crouzeix-Raviart and hierarchical conforming functions on a :class:`Mesh`.

On an element with barycentric coordinates ``lam`` the local bases are

* CR:         ``phi_i = 1 - 2 lam_i``  (one at the midpoint of local edge ``i``)
* hats:       ``lam_i``
* edge bubble of local edge ``i``: ``lam_j lam_k`` with ``{i, j, k} = {0, 1, 2}``
* element bubble: ``lam_0 lam_1 lam_2``
"""
from dataclasses import dataclass
import weakref

import numpy as np

from .quadrature import segment_rule, triangle_rule

__all__ = [
    "CrFunction",
    "ConformingFunction",
    "eval_cr",
    "eval_conforming",
    "local_bubble_gram",
    "bubble_energy",
    "element_bubble_energies",
    "edge_bubble_energies",
    "interpolate_cr",
    "mesh_cache",
]

# local edge i joins local vertices _EDGE_VERTS[i]
_EDGE_VERTS = np.array([[1, 2], [2, 0], [0, 1]])


def mesh_cache(func):
    """Memoise ``func(mesh)`` for as long as ``mesh`` is alive."""
    store = weakref.WeakKeyDictionary()

    def wrapper(mesh):
        try:
            return store[mesh]
        except KeyError:
            value = store[mesh] = func(mesh)
            return value

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    wrapper.__wrapped__ = func
    return wrapper


def _check_point(mesh, element, bary):
    if not 0 <= element < mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    bary = np.asarray(bary, dtype=float)
    if bary.shape[-1] != 3:
        raise ValueError("barycentric points need three coordinates")
    return bary


@dataclass(frozen=True, eq=False)
class CrFunction:
    """Element of CR_1: one midpoint value per interior edge."""

    mesh: object
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.mesh.n_dofs,):
            raise ValueError(
                f"expected {self.mesh.n_dofs} coefficients, got shape {c.shape}"
            )
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_dofs))

    @classmethod
    def basis(cls, mesh, edge):
        """The CR basis function of an interior edge (global edge index)."""
        dof = mesh.edge_dof[edge]
        if dof < 0:
            raise ValueError(f"edge {edge} is a boundary edge")
        c = np.zeros(mesh.n_dofs)
        c[dof] = 1.0
        return cls(mesh, c)

    def edge_values(self):
        """Midpoint value on every edge (zero on boundary edges)."""
        v = np.zeros(self.mesh.n_edges)
        v[self.mesh.interior_edges] = self.coefficients
        return v

    def local_values(self):
        """(ne, 3) midpoint values of local edges."""
        return self.edge_values()[self.mesh.el2edge]

    def gradients(self):
        """(ne, 2) broken gradient."""
        return -2.0 * np.einsum("ti,tik->tk", self.local_values(), self.mesh.bary_grads)

    def vertex_traces(self):
        """(ne, 3) value of each element's affine piece at its vertices."""
        c = self.local_values()
        return c.sum(axis=1, keepdims=True) - 2.0 * c

    def values_at(self, bary):
        """(ne, nq) values at barycentric points ``bary`` of every element."""
        return self.local_values() @ (1.0 - 2.0 * np.asarray(bary)).T

    def energy(self):
        """Squared broken energy norm ||grad_h v||^2."""
        g = self.gradients()
        return float(np.sum(self.mesh.areas * np.einsum("tk,tk->t", g, g)))


@dataclass(frozen=True, eq=False)
class ConformingFunction:
    """Continuous function in the hat + edge-bubble (+ element-bubble) basis.

    Coefficients are indexed by global vertex, edge and element numbers.
    Membership in the zero-trace space requires vanishing coefficients on
    boundary vertices and boundary edges; see :attr:`vanishes_on_boundary`.
    """

    mesh: object
    vertex: np.ndarray
    edge: np.ndarray
    element: np.ndarray | None = None

    def __post_init__(self):
        m = self.mesh
        vertex = np.asarray(self.vertex, dtype=float)
        edge = np.asarray(self.edge, dtype=float)
        if vertex.shape != (m.n_vertices,) or edge.shape != (m.n_edges,):
            raise ValueError("coefficient arrays do not match the mesh")
        object.__setattr__(self, "vertex", vertex)
        object.__setattr__(self, "edge", edge)
        if self.element is not None:
            element = np.asarray(self.element, dtype=float)
            if element.shape != (m.n_elements,):
                raise ValueError("element-bubble coefficients do not match the mesh")
            object.__setattr__(self, "element", element)

    @classmethod
    def zeros(cls, mesh, with_elements=False):
        return cls(
            mesh,
            np.zeros(mesh.n_vertices),
            np.zeros(mesh.n_edges),
            np.zeros(mesh.n_elements) if with_elements else None,
        )

    @classmethod
    def hat(cls, mesh, vertex):
        g = cls.zeros(mesh)
        g.vertex[vertex] = 1.0
        return g

    @classmethod
    def edge_bubble(cls, mesh, edge):
        g = cls.zeros(mesh)
        g.edge[edge] = 1.0
        return g

    @classmethod
    def element_bubble(cls, mesh, element):
        g = cls.zeros(mesh, with_elements=True)
        g.element[element] = 1.0
        return g

    @property
    def vanishes_on_boundary(self):
        m = self.mesh
        return not (
            np.any(self.vertex[m.boundary_vertex]) or np.any(self.edge[m.boundary_edge])
        )

    def _element_coefficients(self):
        m = self.mesh
        b = self.element if self.element is not None else np.zeros(m.n_elements)
        return self.vertex[m.elements], self.edge[m.el2edge], b

    def values_at(self, bary):
        """(ne, nq) values at barycentric points of every element."""
        bary = np.asarray(bary)
        hv, ev, bv = self._element_coefficients()
        edge_basis = bary[:, _EDGE_VERTS[:, 0]] * bary[:, _EDGE_VERTS[:, 1]]
        return hv @ bary.T + ev @ edge_basis.T + bv[:, None] * bary.prod(axis=1)[None, :]

    def gradients_at(self, bary):
        """(ne, nq, 2) gradients at barycentric points of every element."""
        bary = np.asarray(bary)
        hv, ev, bv = self._element_coefficients()
        dlam = _basis_bary_derivatives(bary)  # (nq, 7, 3) d/d lam_j of each basis
        coeff = np.concatenate([hv, ev, bv[:, None]], axis=1)  # (ne, 7)
        dl = np.einsum("tb,qbj->tqj", coeff, dlam)
        return np.einsum("tqj,tjk->tqk", dl, self.mesh.bary_grads)

    def gradients_at_points(self, elements, bary):
        """(n, nq, 2) gradients at per-element barycentric points (n, nq, 3)."""
        elements = np.asarray(elements)
        bary = np.asarray(bary)
        hv, ev, bv = (c[elements] for c in self._element_coefficients())
        l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
        # d/d lam_j of sum_i ev_i * lam_a lam_b and bv * lam_0 lam_1 lam_2
        d0 = hv[:, None, 0] + ev[:, None, 1] * l2 + ev[:, None, 2] * l1 + bv[:, None] * l1 * l2
        d1 = hv[:, None, 1] + ev[:, None, 0] * l2 + ev[:, None, 2] * l0 + bv[:, None] * l0 * l2
        d2 = hv[:, None, 2] + ev[:, None, 0] * l1 + ev[:, None, 1] * l0 + bv[:, None] * l0 * l1
        dl = np.stack([d0, d1, d2], axis=-1)
        return np.einsum("nqj,njk->nqk", dl, self.mesh.bary_grads[elements])

    def edge_means(self):
        """Exact mean value over every edge."""
        e = self.mesh.edges
        return 0.5 * (self.vertex[e[:, 0]] + self.vertex[e[:, 1]]) + self.edge / 6.0

    def energy(self):
        """Squared energy norm ||grad g||^2, exact for the cubic space."""
        bary, w = triangle_rule()
        g = self.gradients_at(bary)
        return float(np.sum(self.mesh.areas * (np.einsum("tqk,tqk->tq", g, g) @ w)))


def _basis_bary_derivatives(bary):
    """Partial derivatives w.r.t. lam_0..2 of [hat0-2, edge0-2, element]."""
    nq = len(bary)
    d = np.zeros((nq, 7, 3))
    d[:, 0, 0] = d[:, 1, 1] = d[:, 2, 2] = 1.0
    for i, (j, k) in enumerate(_EDGE_VERTS):
        d[:, 3 + i, j] = bary[:, k]
        d[:, 3 + i, k] = bary[:, j]
    d[:, 6, 0] = bary[:, 1] * bary[:, 2]
    d[:, 6, 1] = bary[:, 0] * bary[:, 2]
    d[:, 6, 2] = bary[:, 0] * bary[:, 1]
    return d


def eval_cr(f, element, bary):
    """Value and (constant) gradient of a CR function at one point."""
    bary = _check_point(f.mesh, element, bary)
    c = f.local_values()[element]
    value = float(c @ (1.0 - 2.0 * bary))
    return value, f.gradients()[element]


def eval_conforming(g, element, bary):
    """Value and gradient of a conforming function at one point."""
    bary = _check_point(g.mesh, element, bary)
    m = g.mesh
    hv = g.vertex[m.elements[element]]
    ev = g.edge[m.el2edge[element]]
    bv = 0.0 if g.element is None else g.element[element]
    coeff = np.concatenate([hv, ev, [bv]])
    pb = bary[None, :]
    value = coeff[:3] @ bary + sum(
        ev[i] * bary[j] * bary[k] for i, (j, k) in enumerate(_EDGE_VERTS)
    ) + bv * bary.prod()
    dl = coeff @ _basis_bary_derivatives(pb)[0]
    return float(value), dl @ m.bary_grads[element]


@mesh_cache
def local_bubble_gram(mesh):
    """(ne, 4, 4) local energy products of [element bubble, edge bubbles 0-2]."""
    bary, w = triangle_rule()
    d = _basis_bary_derivatives(bary)[:, [6, 3, 4, 5], :]  # (nq, 4, 3)
    # (ne, nq, 4, 2) gradients
    g = np.einsum("qbj,tjk->tqbk", d, mesh.bary_grads)
    gram = np.einsum("q,tqak,tqbk->tab", w, g, g)
    return gram * mesh.areas[:, None, None]


def element_bubble_energies(mesh):
    """||grad Psi_T|| for every element."""
    return np.sqrt(local_bubble_gram(mesh)[:, 0, 0])


def edge_bubble_energies(mesh):
    """||grad Psi_F|| over omega_F for every edge (boundary edges included)."""
    gram = local_bubble_gram(mesh)
    sq = np.zeros(mesh.n_edges)
    for side in range(2):
        t = mesh.edge2el[:, side]
        ok = t >= 0
        loc = mesh.edge_local[ok, side]
        sq[ok] += gram[t[ok], 1 + loc, 1 + loc]
    return np.sqrt(sq)


def bubble_energy(mesh, *, element=None, edge=None):
    """||grad Psi_K||_{L2} for an element bubble or an interior-edge bubble."""
    if (element is None) == (edge is None):
        raise TypeError("pass exactly one of element= or edge=")
    if element is not None:
        if not 0 <= element < mesh.n_elements:
            raise IndexError(f"element {element} out of range")
        return float(np.sqrt(local_bubble_gram(mesh)[element, 0, 0]))
    if mesh.boundary_edge[edge]:
        raise ValueError(f"edge {edge} lies on the boundary")
    return float(edge_bubble_energies(mesh)[edge])


def interpolate_cr(mesh, v):
    """Crouzeix-Raviart interpolant: preserve the mean over interior edges.

    ``v`` is either a :class:`ConformingFunction` on ``mesh`` (means are
    exact) or a callable mapping an (n, 2) point array to n values, whose
    edge means are taken with 5-point Gauss-Legendre.
    """
    if isinstance(v, ConformingFunction):
        means = v.edge_means()
    elif isinstance(v, CrFunction):
        means = v.edge_values()
    else:
        t, w = segment_rule()
        e = mesh.edges
        a = mesh.vertices[e[:, 0]]
        b = mesh.vertices[e[:, 1]]
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        vals = np.asarray(v(pts.reshape(-1, 2)), dtype=float).reshape(len(e), len(t))
        means = vals @ w
    return CrFunction(mesh, means[mesh.interior_edges])
