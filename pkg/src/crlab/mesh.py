"""Conforming triangulations of the unit square and newest-vertex bisection.

Elements are stored counter-clockwise with the *newest vertex first*: the
refinement edge of element ``(a, b, c)`` is the side ``(b, c)``.  Local edge
``i`` of an element is the side opposite local vertex ``i``.

Bisection of ``(a, b, c)`` at the midpoint ``m`` of ``(b, c)`` produces the
children ``(m, a, b)`` and ``(m, c, a)``, both again counter-clockwise and
with newest vertex ``m``.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh",
    "MeshError",
    "RefinementError",
    "PatchTables",
    "unit_square_initial",
    "refine",
    "uniform_refine",
    "topology",
]


class MeshError(ValueError):
    """Raised when a mesh violates one of its structural invariants."""


class RefinementError(RuntimeError):
    """Raised when the bisection closure fails to terminate."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangular mesh with bisection genealogy.

    Parameters
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array, counter-clockwise, newest vertex first
    generation : (ne,) int array, number of bisections since the initial mesh
    parent : (ne,) int array or None
        Index of the ancestor element in the mesh this one was refined from.
    """

    vertices: np.ndarray
    elements: np.ndarray
    generation: np.ndarray
    parent: np.ndarray | None = None

    def __post_init__(self):
        for name in ("vertices", "elements", "generation", "parent"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    # ------------------------------------------------------------------ sizes
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def refinement_edges(self):
        """(ne, 2) vertex pairs of the refinement edges (local edge 0)."""
        return self.elements[:, 1:]

    # --------------------------------------------------------------- topology
    @cached_property
    def _edge_tables(self):
        t = self.elements
        ne = len(t)
        local = np.stack(
            [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        local.sort(axis=1)
        keys = local[:, 0].astype(np.int64) * self.n_vertices + local[:, 1]
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        edges = local[first]
        el2edge = inverse.reshape(ne, 3)

        # occurrences sorted by (edge, element) put the lower element id first
        occ_elem = np.repeat(np.arange(ne), 3)
        occ_loc = np.tile(np.arange(3), ne)
        order = np.lexsort((occ_elem, inverse))
        inv_sorted = inverse[order]
        start = np.searchsorted(inv_sorted, np.arange(len(uniq)))
        count = np.bincount(inverse, minlength=len(uniq))
        if np.any(count > 2):
            raise MeshError("an edge is shared by more than two elements")
        edge2el = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge_local = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge2el[:, 0] = occ_elem[order[start]]
        edge_local[:, 0] = occ_loc[order[start]]
        two = count == 2
        edge2el[two, 1] = occ_elem[order[start[two] + 1]]
        edge_local[two, 1] = occ_loc[order[start[two] + 1]]
        return edges, el2edge, edge2el, edge_local

    @property
    def edges(self):
        """(n_edges, 2) sorted vertex pairs."""
        return self._edge_tables[0]

    @property
    def el2edge(self):
        """(ne, 3) global edge index of local edge ``i`` (opposite vertex ``i``)."""
        return self._edge_tables[1]

    @property
    def edge2el(self):
        """(n_edges, 2) incident elements, lower id first; -1 marks no neighbour."""
        return self._edge_tables[2]

    @property
    def edge_local(self):
        """(n_edges, 2) local edge index within the incident elements."""
        return self._edge_tables[3]

    @cached_property
    def boundary_edge(self):
        return self.edge2el[:, 1] < 0

    @cached_property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary_edge)

    @cached_property
    def edge_dof(self):
        """Map edge -> Crouzeix-Raviart dof number (-1 on boundary edges)."""
        dof = np.full(self.n_edges, -1, dtype=np.int64)
        dof[self.interior_edges] = np.arange(len(self.interior_edges))
        return dof

    @property
    def n_dofs(self):
        return len(self.interior_edges)

    @cached_property
    def boundary_vertex(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edge].ravel()] = True
        return mask

    @cached_property
    def vertex_element_matrix(self):
        """Sparse (nv, ne) incidence matrix of vertex stars."""
        ne = self.n_elements
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(ne), 3)
        return sp.csr_matrix(
            (np.ones(3 * ne), (rows, cols)), shape=(self.n_vertices, ne)
        )

    @cached_property
    def star_size(self):
        """Number of elements touching each vertex."""
        return np.bincount(self.elements.ravel(), minlength=self.n_vertices)

    # --------------------------------------------------------------- geometry
    @cached_property
    def areas(self):
        p = self.vertices[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def bary_grads(self):
        """(ne, 3, 2) constant gradients of the barycentric coordinates."""
        p = self.vertices[self.elements]
        # grad lambda_i = rot90(p_{i+2} - p_{i+1}) / (2|T|), outward-free form
        e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2.0 * self.areas)[:, None, None]

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def diameters(self):
        """h_T, the longest side of each element."""
        return self.edge_lengths[self.el2edge].max(axis=1)

    @cached_property
    def inball_diameters(self):
        """rho_T, diameter of the inscribed circle."""
        return 4.0 * self.areas / self.edge_lengths[self.el2edge].sum(axis=1)

    def shape_constant(self):
        """gamma = max_T h_T / rho_T."""
        return float(np.max(self.diameters / self.inball_diameters))

    @cached_property
    def edge_normals(self):
        """Unit normals of the edges.

        Interior normals point from the lower to the higher element id,
        boundary normals point outward.
        """
        v = self.vertices
        d = v[self.edges[:, 1]] - v[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        owner = self.edge2el[:, 0]
        centroid = v[self.elements[owner]].mean(axis=1)
        mid = 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])
        flip = np.einsum("ij,ij->i", n, mid - centroid) < 0
        n[flip] *= -1
        return n

    @cached_property
    def edge_midpoints(self):
        v = self.vertices
        return 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])

    @cached_property
    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    # ------------------------------------------------------------- validation
    def check(self):
        """Verify the structural invariants, raising :class:`MeshError`."""
        t = self.elements
        if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2]):
            raise MeshError("element with repeated vertex")
        if np.any(self.areas <= 0):
            raise MeshError("element with non-positive signed area")
        e = self.edges[self.boundary_edge]
        p, q = self.vertices[e[:, 0]], self.vertices[e[:, 1]]
        on_side = np.zeros(len(e), dtype=bool)
        for axis in (0, 1):
            for side in (0.0, 1.0):
                on_side |= (p[:, axis] == side) & (q[:, axis] == side)
        if not on_side.all():
            raise MeshError("boundary edge not on the boundary of the unit square")
        if not np.isclose(self.areas.sum(), 1.0, rtol=0, atol=1e-12):
            raise MeshError("elements do not cover the unit square")
        # a conforming triangulation of a disk has Euler characteristic 1
        if self.n_vertices - self.n_edges + self.n_elements != 1:
            raise MeshError("mesh is not face-to-face conforming")
        return self


@dataclass(frozen=True)
class PatchTables:
    """Vertex stars and interior-edge fans, in CSR layout.

    ``star_elements[star_ptr[z]:star_ptr[z + 1]]`` lists the elements of
    the star of ``z``; ``fan_edges[fan_ptr[z]:fan_ptr[z + 1]]`` lists the
    interior edges containing ``z``.  ``edge_patch`` is ``Mesh.edge2el``.
    """

    star_ptr: np.ndarray
    star_elements: np.ndarray
    fan_ptr: np.ndarray
    fan_edges: np.ndarray
    edge_patch: np.ndarray

    def star(self, z):
        return self.star_elements[self.star_ptr[z]:self.star_ptr[z + 1]]

    def fan(self, z):
        return self.fan_edges[self.fan_ptr[z]:self.fan_ptr[z + 1]]


def topology(mesh):
    """Build the vertex-patch tables needed by the estimators."""
    star = mesh.vertex_element_matrix.tocsr()
    star.sort_indices()
    inner = mesh.interior_edges
    rows = mesh.edges[inner].ravel()
    cols = np.repeat(inner, 2)
    fan = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(mesh.n_vertices, mesh.n_edges)
    )
    fan.sort_indices()
    return PatchTables(
        star_ptr=star.indptr.astype(np.int64),
        star_elements=star.indices.astype(np.int64),
        fan_ptr=fan.indptr.astype(np.int64),
        fan_edges=fan.indices.astype(np.int64),
        edge_patch=mesh.edge2el,
    )


def unit_square_initial():
    """Split the unit square along both diagonals into four triangles.

    The centre is the newest vertex of every triangle, so each refinement
    edge is the triangle's boundary side.
    """
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
    )
    elements = np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])
    return Mesh(vertices, elements, np.zeros(4, dtype=np.int64))


def refine(mesh, marked, *, max_sweeps=None):
    """Quarter every marked element and complete to a conforming mesh.

    Marking an element marks all three of its edges (two bisection
    generations).  The closure then marks the refinement edge of every
    element that has any marked edge, until stable; each element is then
    bisected at most twice.

    Returns a new :class:`Mesh`; ``parent`` indexes into ``mesh``.
    """
    if not isinstance(marked, np.ndarray):
        marked = np.fromiter(marked, dtype=np.int64)
    marked = np.unique(marked.astype(np.int64))
    ne = mesh.n_elements
    if marked.size and (marked[0] < 0 or marked[-1] >= ne):
        raise IndexError("marked element id out of range")
    if marked.size == 0:
        return mesh

    el2edge = mesh.el2edge
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[el2edge[marked].ravel()] = True

    if max_sweeps is None:
        max_sweeps = int(mesh.generation.max()) + 64
    for _ in range(max_sweeps):
        touched = edge_marked[el2edge].any(axis=1)
        need = touched & ~edge_marked[el2edge[:, 0]]
        if not need.any():
            break
        edge_marked[el2edge[need, 0]] = True
    else:
        raise RefinementError(
            f"completion did not terminate within {max_sweeps} sweeps; "
            "refinement edges are inconsistent"
        )

    new_edges = np.flatnonzero(edge_marked)
    mid_id = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid_id[new_edges] = mesh.n_vertices + np.arange(len(new_edges))
    e = mesh.edges[new_edges]
    vertices = np.concatenate(
        [mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])]
    )

    elements = mesh.elements.copy()
    generation = mesh.generation.copy()
    origin = np.arange(ne)
    # global edge of local edges 0 (refinement), 1, 2; -1 for edges born here
    edge_ids = el2edge.copy()

    for _ in range(2):
        hit = edge_ids[:, 0] >= 0
        hit[hit] = edge_marked[edge_ids[hit, 0]]
        if not hit.any():
            break
        a, b, c = elements[hit].T
        m = mid_id[edge_ids[hit, 0]]
        none = np.full(len(a), -1)
        child1 = np.stack([m, a, b], axis=1)
        child2 = np.stack([m, c, a], axis=1)
        ids1 = np.stack([edge_ids[hit, 2], none, none], axis=1)
        ids2 = np.stack([edge_ids[hit, 1], none, none], axis=1)
        keep = ~hit
        elements = np.concatenate([elements[keep], child1, child2])
        edge_ids = np.concatenate([edge_ids[keep], ids1, ids2])
        gen_hit = generation[hit] + 1
        generation = np.concatenate([generation[keep], gen_hit, gen_hit])
        origin = np.concatenate([origin[keep], origin[hit], origin[hit]])

    leftover = edge_ids >= 0
    leftover[leftover] = edge_marked[edge_ids[leftover]]
    if leftover.any():
        raise RefinementError("marked edges remain after two bisection sweeps")

    order = np.argsort(origin, kind="stable")
    return Mesh(vertices, elements[order], generation[order], origin[order])


def uniform_refine(mesh):
    """Quarter every element; the element count grows by exactly four."""
    return refine(mesh, np.arange(mesh.n_elements))
