"""Error indicators for the smoothed Crouzeix-Raviart method.

All per-element quantities are returned *squared* unless the name says
otherwise (``eta_cr`` and ``eta_crtilde`` return the indicators
themselves, matching their max-over-bubbles definition).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .fe_spaces import (
    edge_bubble_energies,
    element_bubble_energies,
    local_bubble_gram,
)
from .mesh import topology
from .problem import clip_to_line, integrate_cells, load_vectors
from .transfer import average_acr

__all__ = [
    "VARIANTS",
    "EstimatorReport",
    "ncf_avg",
    "ncf_jump",
    "bubble_residuals",
    "eta_cr",
    "eta_crtilde",
    "patch_residual_norm",
    "patch_residual_norms",
    "surrogate_osc",
    "exact_error",
    "eoc",
    "combine",
    "estimate",
]

VARIANTS = ("cr", "crtilde")


def ncf_avg(u_h):
    """Squared ``||grad_h (u_h - A u_h)||`` per element."""
    mesh = u_h.mesh
    av = average_acr(u_h)
    grad_av = np.einsum("ti,tik->tk", av.vertex[mesh.elements], mesh.bary_grads)
    d = u_h.gradients() - grad_av
    return mesh.areas * np.einsum("tk,tk->t", d, d)


def ncf_jump(u_h):
    """Per-element share of ``int_Sigma |[u_h]|^2 / h_F``.

    The jump on an edge is affine with zero mean, so with endpoint jumps
    ``ja`` and ``jb`` the edge term is ``(ja^2 + ja jb + jb^2) / 3``.
    Interior edges give half to each neighbour.
    """
    mesh = u_h.mesh
    traces = u_h.vertex_traces()  # (ne, 3)
    e = mesh.edges
    jumps = np.zeros((mesh.n_edges, 2))
    for side, sign in ((0, 1.0), (1, -1.0)):
        t = mesh.edge2el[:, side]
        ok = t >= 0
        verts = mesh.elements[t[ok]]
        for k in range(2):
            loc = np.argmax(verts == e[ok, k][:, None], axis=1)
            jumps[ok, k] += sign * traces[t[ok], loc]
    ja, jb = jumps.T
    per_edge = (ja * ja + ja * jb + jb * jb) / 3.0
    out = np.zeros(mesh.n_elements)
    share = np.where(mesh.boundary_edge, 1.0, 0.5)
    for side in range(2):
        t = mesh.edge2el[:, side]
        ok = t >= 0
        np.add.at(out, t[ok], share[ok] * per_edge[ok])
    return out


def bubble_residuals(u_h, f):
    """Residuals ``<f, Psi_K> - int grad_h u_h . grad Psi_K``.

    Returns ``(element_res, edge_res)`` over all elements and all edges
    (boundary entries of ``edge_res`` are meaningless and set to 0).
    """
    mesh = u_h.mesh
    loads = load_vectors(f, mesh)
    grad = u_h.gradients()
    g = mesh.bary_grads
    # int_T grad(lam_j lam_k) = |T| / 3 (grad lam_j + grad lam_k)
    edge_int = (g[:, [1, 2, 0]] + g[:, [2, 0, 1]]) * (mesh.areas / 3.0)[:, None, None]
    contrib = np.einsum("tk,tik->ti", grad, edge_int)
    a_edge = np.bincount(mesh.el2edge.ravel(), weights=contrib.ravel(), minlength=mesh.n_edges)
    edge_res = loads.edge - a_edge
    edge_res[mesh.boundary_edge] = 0.0
    # grad u_h is constant on T and Psi_T vanishes on its boundary
    return loads.element.copy(), edge_res


def eta_crtilde(u_h, f):
    """Element-bubble indicator ``|<Res, Psi_T>| / ||grad Psi_T||`` per element."""
    elem_res, _ = bubble_residuals(u_h, f)
    return np.abs(elem_res) / element_bubble_energies(u_h.mesh)


def eta_cr(u_h, f):
    """Max over the element bubble and interior edge bubbles of each element."""
    mesh = u_h.mesh
    elem_res, edge_res = bubble_residuals(u_h, f)
    elem = np.abs(elem_res) / element_bubble_energies(mesh)
    energy = edge_bubble_energies(mesh)
    edge = np.zeros(mesh.n_edges)
    inner = ~mesh.boundary_edge
    edge[inner] = np.abs(edge_res[inner]) / energy[inner]
    return np.maximum(elem, edge[mesh.el2edge].max(axis=1))


def _patch_system(mesh, patch, z, elem_res, edge_res):
    """Gram matrix and residual vector of the bubble space around vertex z."""
    gram = local_bubble_gram(mesh)
    elems = patch.star(z)
    edges = patch.fan(z)
    n_t = len(elems)
    index = {("T", int(t)): i for i, t in enumerate(elems)}
    index.update({("F", int(e)): n_t + i for i, e in enumerate(edges)})
    a = np.zeros((len(index), len(index)))
    for t in elems:
        keys = [("T", int(t))] + [("F", int(e)) for e in mesh.el2edge[t]]
        pos = [index.get(k, -1) for k in keys]
        for p, kp in enumerate(pos):
            if kp < 0:
                continue
            for q, kq in enumerate(pos):
                if kq >= 0:
                    a[kp, kq] += gram[t, p, q]
    g = np.concatenate([elem_res[elems], edge_res[edges]])
    return a, g


def patch_residual_norm(u_h, f, z, *, _cache=None):
    """``g_z^T A_z^{-1} g_z`` on the bubble space of the star of vertex ``z``.

    The test space is spanned by the element bubbles of the star and the
    edge bubbles of interior edges through ``z``.
    """
    mesh = u_h.mesh
    if _cache is None:
        elem_res, edge_res = bubble_residuals(u_h, f)
        patch = topology(mesh)
    else:
        elem_res, edge_res, patch = _cache
    a, g = _patch_system(mesh, patch, z, elem_res, edge_res)
    if len(g) == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular patch Gram matrix at vertex {z}") from exc
    y = np.linalg.solve(chol, g)
    return float(y @ y)


def patch_residual_norms(u_h, f):
    """Patch norms for all vertices, and their equal split onto elements."""
    mesh = u_h.mesh
    cache = (*bubble_residuals(u_h, f), topology(mesh))
    per_vertex = np.array(
        [patch_residual_norm(u_h, f, z, _cache=cache) for z in range(mesh.n_vertices)]
    )
    share = per_vertex / mesh.star_size
    per_element = share[mesh.elements].sum(axis=1)
    return per_vertex, per_element


def surrogate_osc(f, mesh):
    """Squared surrogate oscillation per element.

    ``h_T^2 inf_c ||f_reg - c||^2_T`` plus, on elements meeting the line,
    ``h_T^2 (max_{T cap line} w)^2``.
    """

    def dens(parent, side, bary, x1, x2):
        return f.density(x1, x2, np.broadcast_to(side[:, None], x1.shape))[..., None]

    mean = integrate_cells(mesh, f.lam, dens, 1)[:, 0] / mesh.areas

    def dev(parent, side, bary, x1, x2):
        d = dens(parent, side, bary, x1, x2)[..., 0] - mean[parent][:, None]
        return (d * d)[..., None]

    out = mesh.diameters**2 * integrate_cells(mesh, f.lam, dev, 1)[:, 0]
    if f.weight is not None:
        clip = clip_to_line(mesh, f.lam)
        for t, seg in zip(clip.elements, clip.segments):
            wmax = f.weight_max(seg[0, 1], seg[1, 1])
            out[t] += mesh.diameters[t] ** 2 * wmax**2
    return out


def exact_error(u_h, exact):
    """``(||grad_h (u - u_h)||, per-element squared errors)``."""
    mesh = u_h.mesh
    grad_h = u_h.gradients()

    def integrand(parent, side, bary, x1, x2):
        d = exact.gradient(x1, x2, np.broadcast_to(side[:, None], x1.shape)) - grad_h[parent][:, None, :]
        return np.einsum("nqk,nqk->nq", d, d)[..., None]

    per = integrate_cells(mesh, exact.lam, integrand, 1)[:, 0]
    return math.sqrt(per.sum()), per


def eoc(err, err_prev, n, n_prev):
    """Experimental order of convergence with respect to element counts."""
    return math.log(err / err_prev) / math.log(n_prev / n)


@dataclass
class EstimatorReport:
    """Per-element squared indicators and the derived global quantities."""

    variant: str
    n_elements: int
    ncf2: np.ndarray
    eta2: np.ndarray
    osc2: np.ndarray
    C1: float = 1.0
    C2: float = 0.3
    err2: np.ndarray | None = None
    eoc: float | None = None
    total2: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown estimator variant {self.variant!r}")
        n = self.n_elements
        for name in ("ncf2", "eta2", "osc2"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} does not match the mesh size")
        if self.err2 is not None and len(self.err2) != n:
            raise ValueError("err2 does not match the mesh size")
        self.total2 = self.ncf2 + self.C1**2 * self.eta2 + self.C2**2 * self.osc2

    @property
    def ncf(self):
        return math.sqrt(self.ncf2.sum())

    @property
    def eta(self):
        return math.sqrt(self.eta2.sum())

    @property
    def osc(self):
        return math.sqrt(self.osc2.sum())

    @property
    def est(self):
        return math.sqrt(self.ncf**2 + self.C1**2 * self.eta**2 + self.C2**2 * self.osc**2)

    @property
    def err(self):
        return None if self.err2 is None else math.sqrt(self.err2.sum())

    @property
    def effectivity(self):
        err = self.err
        if err is None or err == 0.0 or self.est == 0.0:
            return None
        return self.est / err


def combine(ncf2, eta, osc2, C1=1.0, C2=0.3, variant="crtilde", *, err2=None, previous=None):
    """Assemble an :class:`EstimatorReport`.

    ``eta`` holds the (unsquared) per-element indicators.  ``previous`` is
    the report of the preceding mesh, used for the convergence order.
    """
    eta = np.asarray(eta)
    report = EstimatorReport(
        variant=variant,
        n_elements=len(ncf2),
        ncf2=np.asarray(ncf2),
        eta2=eta * eta,
        osc2=np.asarray(osc2),
        C1=C1,
        C2=C2,
        err2=err2,
    )
    if previous is not None and report.err and previous.err:
        report.eoc = eoc(report.err, previous.err, report.n_elements, previous.n_elements)
    return report


def estimate(u_h, f, exact=None, *, variants=VARIANTS, C1=1.0, C2=0.3, previous=None):
    """Compute reports for the requested variants, sharing common parts.

    ``previous`` maps variant names to the reports on the preceding mesh.
    """
    ncf2 = ncf_avg(u_h)
    osc2 = surrogate_osc(f, u_h.mesh)
    err2 = None if exact is None else exact_error(u_h, exact)[1]
    previous = previous or {}
    out = {}
    for v in variants:
        eta = eta_cr(u_h, f) if v == "cr" else eta_crtilde(u_h, f)
        out[v] = combine(ncf2, eta, osc2, C1, C2, v, err2=err2, previous=previous.get(v))
    return out
