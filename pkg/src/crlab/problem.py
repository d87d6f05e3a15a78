"""Sources in H^{-1}: a piecewise-polynomial density plus a weighted vertical line.

The density may have two branches split at ``x1 = lam``; the line part is
``v -> int_0^1 w(x2) v(lam, x2) dx2``.  Elements cut by the line are split
into sub-triangles on either side so that each density branch is
integrated by an exact rule on its own side.
"""
from dataclasses import dataclass
import weakref

import numpy as np

from .fe_spaces import CrFunction
from .quadrature import segment_rule, triangle_rule

__all__ = [
    "SourceTerm",
    "ExactSolution",
    "LineClip",
    "LoadVectors",
    "benchmark",
    "clip_to_line",
    "integrate_cells",
    "load_vectors",
    "apply",
]

_CHUNK = 1 << 17


@dataclass(frozen=True, eq=False)
class SourceTerm:
    """Density ``left``/``right`` split at ``lam`` plus optional line weight.

    ``left`` and ``right`` map ``(x1, x2)`` arrays to density values; with
    ``lam=None`` only ``left`` is used.  ``weight`` is a
    :class:`numpy.polynomial.Polynomial` in ``x2`` carried by the segment
    ``{x1 = lam}``; ``None`` means no line part.

    Quadrature is exact for densities of degree <= 4 and weights of
    degree <= 6 (tested against cubic bubbles).
    """

    left: object
    right: object = None
    lam: float | None = None
    weight: np.polynomial.Polynomial | None = None

    def __post_init__(self):
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if self.weight is not None and self.lam is None:
            raise ValueError("a line weight needs the line position lam")

    @classmethod
    def constant(cls, c):
        return cls(lambda x1, x2: np.full(np.shape(x1), float(c)))

    @classmethod
    def zero(cls):
        return cls.constant(0.0)

    def density(self, x1, x2, side=None):
        """Density at points; ``side`` (0 left, 1 right) selects a branch."""
        if self.lam is None or self.right is None:
            return self.left(x1, x2)
        if side is None:
            side = (np.asarray(x1) > self.lam).astype(int)
        return np.where(side == 0, self.left(x1, x2), self.right(x1, x2))

    def weight_max(self, a, b):
        """max of ``|weight|`` over ``[a, b]``, via critical points."""
        w = self.weight
        cands = [a, b]
        for r in w.deriv().roots():
            if abs(r.imag) < 1e-14 and a < r.real < b:
                cands.append(r.real)
        return float(np.max(np.abs(w(np.array(cands)))))


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Closed-form solution, possibly with a gradient jump across ``x1 = lam``."""

    value_left: object
    grad_left: object
    value_right: object = None
    grad_right: object = None
    lam: float | None = None

    def _pick(self, x1, side, fl, fr):
        if self.lam is None or fr is None:
            return None
        if side is None:
            side = (np.asarray(x1) > self.lam).astype(int)
        return side

    def value(self, x1, x2, side=None):
        side = self._pick(x1, side, self.value_left, self.value_right)
        if side is None:
            return self.value_left(x1, x2)
        return np.where(side == 0, self.value_left(x1, x2), self.value_right(x1, x2))

    def gradient(self, x1, x2, side=None):
        """Gradient as an array of shape ``x1.shape + (2,)``."""
        side = self._pick(x1, side, self.grad_left, self.grad_right)
        gl = np.stack(self.grad_left(x1, x2), axis=-1)
        if side is None:
            return gl
        gr = np.stack(self.grad_right(x1, x2), axis=-1)
        return np.where(np.asarray(side)[..., None] == 0, gl, gr)


def benchmark(lam=2.0 / 3.0):
    """Solution with a kink along ``x1 = lam`` and its source.

    ``u = x1 (lam - x1) x2 (1 - x2)`` left of the line and
    ``(1 - x1)(x1 - lam) x2 (1 - x2)`` right of it.  ``u`` has a convex
    kink along the line, so ``-Laplace u`` is a piecewise quadratic density
    plus the line measure with weight ``-x2 (1 - x2)``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must lie in (0, 1), got {lam}")

    def w(x2):
        return x2 * (1.0 - x2)

    def f_left(x1, x2):
        return 2.0 * x1 * (lam - x1) + 2.0 * w(x2)

    def f_right(x1, x2):
        return 2.0 * (1.0 - x1) * (x1 - lam) + 2.0 * w(x2)

    def u_left(x1, x2):
        return x1 * (lam - x1) * w(x2)

    def u_right(x1, x2):
        return (1.0 - x1) * (x1 - lam) * w(x2)

    def du_left(x1, x2):
        return (lam - 2.0 * x1) * w(x2), x1 * (lam - x1) * (1.0 - 2.0 * x2)

    def du_right(x1, x2):
        return (1.0 + lam - 2.0 * x1) * w(x2), (1.0 - x1) * (x1 - lam) * (1.0 - 2.0 * x2)

    source = SourceTerm(
        f_left, f_right, lam, np.polynomial.Polynomial([0.0, -1.0, 1.0])
    )
    exact = ExactSolution(u_left, du_left, u_right, du_right, lam)
    return source, exact


# --------------------------------------------------------------------------
# clipping


@dataclass(frozen=True)
class LineClip:
    """Intersection of the mesh with the line ``x1 = lam``.

    ``elements[i]`` is cut (or touched along an edge) by the segment
    ``segments[i]`` (bottom endpoint first).  ``sub_parent``/``sub_side``/
    ``sub_coords`` list the sub-triangles of the strictly cut elements.
    """

    lam: float
    elements: np.ndarray
    segments: np.ndarray
    sub_parent: np.ndarray
    sub_side: np.ndarray
    sub_coords: np.ndarray

    def records(self):
        """Per-element view: ``{element: (segment, left_tris, right_tris)}``."""
        out = {}
        for t, seg in zip(self.elements, self.segments):
            sel = self.sub_parent == t
            left = self.sub_coords[sel & (self.sub_side == 0)]
            right = self.sub_coords[sel & (self.sub_side == 1)]
            out[int(t)] = (seg, left, right)
        return out


def _clip_polygon(pts, s, keep_left, lam):
    """Sutherland-Hodgman clip of a triangle against ``x1 <= lam`` or ``>=``."""
    out = []
    sign = -1.0 if keep_left else 1.0
    n = len(pts)
    for i in range(n):
        p, q = pts[i], pts[(i + 1) % n]
        sp_, sq = sign * s[i], sign * s[(i + 1) % n]
        if sp_ >= 0:
            out.append(p)
        if (sp_ > 0 > sq) or (sp_ < 0 < sq):
            t = s[i] / (s[i] - s[(i + 1) % n])
            x = p + t * (q - p)
            x[0] = lam
            out.append(x)
    return out


def _signed_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


_CLIP_CACHE = weakref.WeakKeyDictionary()


def clip_to_line(mesh, lam):
    """Clip every element against the vertical line ``x1 = lam``."""
    per_mesh = _CLIP_CACHE.setdefault(mesh, {})
    if lam not in per_mesh:
        per_mesh[lam] = _clip_to_line(mesh, lam)
    return per_mesh[lam]


def _clip_to_line(mesh, lam):
    x = mesh.vertices[mesh.elements][..., 0]  # (ne, 3)
    s = x - lam
    cut = np.flatnonzero((s.min(axis=1) < 0) & (s.max(axis=1) > 0))
    # elements with an edge on the line: attribute the segment to the left one
    on = (s == 0).sum(axis=1) == 2
    on &= s.min(axis=1) < 0
    touch = np.flatnonzero(on)

    elements, segments = [], []
    sub_parent, sub_side, sub_coords = [], [], []
    for t in cut:
        pts = mesh.vertices[mesh.elements[t]].astype(float)
        st = s[t]
        on_line = []
        for side, keep_left in ((0, True), (1, False)):
            poly = _clip_polygon(pts, st, keep_left, lam)
            for k in range(1, len(poly) - 1):
                tri = np.array([poly[0], poly[k], poly[k + 1]])
                if _signed_area(*tri) > 0:
                    sub_parent.append(t)
                    sub_side.append(side)
                    sub_coords.append(tri)
            if side == 0:
                on_line = [p for p in poly if p[0] == lam]
        ys = sorted({float(p[1]) for p in on_line})
        elements.append(t)
        segments.append([[lam, ys[0]], [lam, ys[-1]]])
    for t in touch:
        pts = mesh.vertices[mesh.elements[t]]
        ys = np.sort(pts[s[t] == 0, 1])
        elements.append(t)
        segments.append([[lam, ys[0]], [lam, ys[1]]])

    order = np.argsort(elements, kind="stable")
    return LineClip(
        lam=float(lam),
        elements=np.asarray(elements, dtype=np.int64)[order],
        segments=np.asarray(segments, dtype=float).reshape(-1, 2, 2)[order],
        sub_parent=np.asarray(sub_parent, dtype=np.int64),
        sub_side=np.asarray(sub_side, dtype=np.int64),
        sub_coords=np.asarray(sub_coords, dtype=float).reshape(-1, 3, 2),
    )


# --------------------------------------------------------------------------
# integration


def _parent_bary(mesh, parent, x):
    """Barycentric coordinates in element ``parent`` of points ``x`` (n, nq, 2)."""
    g = mesh.bary_grads[parent]  # (n, 3, 2)
    c = mesh.centroids[parent]  # (n, 2)
    return 1.0 / 3.0 + np.einsum("nik,nqk->nqi", g, x - c[:, None, :])


def integrate_cells(mesh, lam, integrand, ncomp):
    """Integrate a vector-valued integrand over every element.

    ``integrand(parent, side, bary, x1, x2)`` receives arrays of shape
    ``(n,)``, ``(n,)``, ``(n, nq, 3)``, ``(n, nq)``, ``(n, nq)`` where
    ``bary`` are barycentric coordinates in the parent element and ``side``
    is 0 left / 1 right of ``x1 = lam``; it returns ``(n, nq, ncomp)``.
    Elements cut by the line are integrated piecewise on sub-triangles.

    Returns an ``(n_elements, ncomp)`` array.
    """
    qb, qw = triangle_rule()
    out = np.zeros((mesh.n_elements, ncomp))
    uncut = np.ones(mesh.n_elements, dtype=bool)
    clip = None
    if lam is not None:
        clip = clip_to_line(mesh, lam)
        uncut[clip.sub_parent] = False
    ids_all = np.flatnonzero(uncut)
    for start in range(0, len(ids_all), _CHUNK):
        ids = ids_all[start:start + _CHUNK]
        p = mesh.vertices[mesh.elements[ids]]
        x = np.einsum("qi,nik->nqk", qb, p)
        if lam is None:
            side = np.zeros(len(ids), dtype=np.int64)
        else:
            side = (mesh.centroids[ids, 0] > lam).astype(np.int64)
        bary = np.broadcast_to(qb, (len(ids),) + qb.shape)
        vals = integrand(ids, side, bary, x[..., 0], x[..., 1])
        out[ids] += mesh.areas[ids, None] * np.einsum("q,nqc->nc", qw, vals)
    if clip is not None and len(clip.sub_parent):
        par = clip.sub_parent
        x = np.einsum("qi,nik->nqk", qb, clip.sub_coords)
        bary = _parent_bary(mesh, par, x)
        vals = integrand(par, clip.sub_side, bary, x[..., 0], x[..., 1])
        c = clip.sub_coords
        area = 0.5 * (
            (c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
            - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0])
        )
        np.add.at(out, par, area[:, None] * np.einsum("q,nqc->nc", qw, vals))
    return out


def _basis_values(bary):
    """[hat0-2, edge0-2, element] at barycentric points (..., 3) -> (..., 7)."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack([l0, l1, l2, l1 * l2, l2 * l0, l0 * l1, l0 * l1 * l2], axis=-1)


@dataclass(frozen=True)
class LoadVectors:
    """Action of a source on every hat, edge bubble and element bubble."""

    vertex: np.ndarray
    edge: np.ndarray
    element: np.ndarray


_LOAD_CACHE = weakref.WeakKeyDictionary()


def load_vectors(f, mesh):
    """Exact ``<f, Psi>`` for all hats, edge bubbles and element bubbles."""
    per_mesh = _LOAD_CACHE.setdefault(mesh, {})
    if f not in per_mesh:
        per_mesh[f] = _load_vectors(f, mesh)
    return per_mesh[f]


def _load_vectors(f, mesh):
    def integrand(parent, side, bary, x1, x2):
        dens = f.density(x1, x2, np.broadcast_to(side[:, None], x1.shape))
        return dens[..., None] * _basis_values(bary)

    local = integrate_cells(mesh, f.lam, integrand, 7)

    if f.weight is not None:
        clip = clip_to_line(mesh, f.lam)
        if len(clip.elements):
            t, w = segment_rule()
            a, b = clip.segments[:, 0], clip.segments[:, 1]
            x = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
            length = np.hypot(*(b - a).T)
            bary = _parent_bary(mesh, clip.elements, x)
            vals = f.weight(x[..., 1])[..., None] * _basis_values(bary)
            np.add.at(local, clip.elements, length[:, None] * np.einsum("q,nqc->nc", w, vals))

    vertex = np.bincount(
        mesh.elements.ravel(), weights=local[:, :3].ravel(), minlength=mesh.n_vertices
    )
    edge = np.bincount(
        mesh.el2edge.ravel(), weights=local[:, 3:6].ravel(), minlength=mesh.n_edges
    )
    return LoadVectors(vertex, edge, local[:, 6].copy())


def apply(f, g):
    """Evaluate ``<f, g>`` for a conforming function with zero boundary trace."""
    if isinstance(g, CrFunction):
        raise TypeError("the source acts on conforming functions; smooth CR functions first")
    if not g.vanishes_on_boundary:
        raise ValueError("the argument does not vanish on the boundary")
    loads = load_vectors(f, g.mesh)
    value = loads.vertex @ g.vertex + loads.edge @ g.edge
    if g.element is not None:
        value += loads.element @ g.element
    return float(value)
