import numpy as np
import pytest

import oracles
from crlab.fe_spaces import ConformingFunction, CrFunction, interpolate_cr
from crlab.mesh import unit_square_initial
from crlab.quadrature import triangle_rule
from crlab.transfer import average_acr, smooth_ecr, smoothed_basis


def p1_cr(mesh, rng):
    """A random element of the zero-trace P1 space, as CR and conforming function."""
    vertex = rng.standard_normal(mesh.n_vertices)
    vertex[mesh.boundary_vertex] = 0.0
    g = ConformingFunction(mesh, vertex, np.zeros(mesh.n_edges))
    return interpolate_cr(mesh, g), g


def broken_inner(u, g):
    """int grad_h u . grad g for a CR function u and conforming g."""
    bary, w = triangle_rule()
    gg = g.gradients_at(bary)
    return float(np.sum(u.mesh.areas * (np.einsum("tqk,tk->tq", gg, u.gradients()) @ w)))


def test_average_of_zero():
    m = unit_square_initial()
    a = average_acr(CrFunction.zeros(m))
    assert np.all(a.vertex == 0) and np.all(a.edge == 0)


def test_average_of_basis_on_initial_mesh():
    m = unit_square_initial()
    for e in m.interior_edges:
        v = CrFunction.basis(m, e)
        a = average_acr(v)
        # direct corner evaluation: value of each triangle's affine piece at z
        for z in range(m.n_vertices):
            if m.boundary_vertex[z]:
                assert a.vertex[z] == 0.0
                continue
            traces = []
            for t in range(m.n_elements):
                if z in m.elements[t]:
                    coords = m.vertices[m.elements[t]]
                    grads = oracles.cr_gradients(coords)
                    c = v.local_values()[t]
                    mids = np.array([(coords[1] + coords[2]) / 2, (coords[2] + coords[0]) / 2, (coords[0] + coords[1]) / 2])
                    # affine function through the midpoint values, evaluated at z
                    phi = [1.0 + grads[i] @ (m.vertices[z] - mids[i]) for i in range(3)]
                    traces.append(c @ np.array(phi))
            assert a.vertex[z] == pytest.approx(np.mean(traces), abs=1e-15)


def test_invariance_on_p1(levels, rng):
    for m in levels:
        v, g = p1_cr(m, rng)
        a = average_acr(v)
        assert np.max(np.abs(a.vertex - g.vertex)) <= 1e-14
        e = smooth_ecr(v)
        assert np.max(np.abs(e.vertex - g.vertex)) <= 1e-14
        assert np.max(np.abs(e.edge)) <= 1e-14


def test_outputs_vanish_on_boundary(graded, rng):
    v = CrFunction(graded, rng.standard_normal(graded.n_dofs))
    assert average_acr(v).vanishes_on_boundary
    assert smooth_ecr(v).vanishes_on_boundary


def test_moment_conservation(levels, rng):
    for m in levels:
        h = m.edge_lengths
        for _ in range(50):
            v = CrFunction(m, rng.standard_normal(m.n_dofs))
            e = smooth_ecr(v)
            # edge integrals: h_F times edge means
            assert np.all(np.abs(h * (e.edge_means() - v.edge_values())) <= 1e-13 * h)


def test_edge_bubble_mean():
    m = unit_square_initial()
    for e in range(m.n_edges):
        g = ConformingFunction.edge_bubble(m, e)
        means = g.edge_means()
        assert means[e] == pytest.approx(1 / 6)
        assert np.all(np.delete(means, e) == 0)


def test_overconsistency(levels, graded, rng):
    for m in levels[:4] + [graded]:
        for _ in range(50):
            w = CrFunction(m, rng.standard_normal(m.n_dofs))
            v = CrFunction(m, rng.standard_normal(m.n_dofs))
            lhs = w.gradients()
            inner_v = np.sum(m.areas * np.einsum("tk,tk->t", lhs, v.gradients()))
            inner_e = broken_inner(w, smooth_ecr(v))
            bound = 1e-12 * np.sqrt(w.energy() * v.energy())
            assert abs(inner_v - inner_e) <= bound


def test_locality(graded):
    # A_CR of the basis function is nonzero at all four vertices of the
    # edge patch, so the support is the union of their stars
    for e in graded.interior_edges[::7]:
        s = smoothed_basis(graded, e)
        corners = np.unique(graded.elements[graded.edge2el[e]])
        star = np.isin(graded.elements, corners).any(axis=1)
        allowed_vertices = np.unique(graded.elements[star])
        assert np.all(s.vertex[np.setdiff1d(np.arange(graded.n_vertices), allowed_vertices)] == 0)
        allowed_edges = np.unique(graded.el2edge[star])
        assert np.all(s.edge[np.setdiff1d(np.arange(graded.n_edges), allowed_edges)] == 0)
        opposite = corners[~np.isin(corners, graded.edges[e])]
        opposite = opposite[~graded.boundary_vertex[opposite]]
        assert np.all(s.vertex[opposite] != 0)


def test_stability_witness(levels, graded):
    for m in levels[:3] + [graded]:
        ratios = []
        for e in m.interior_edges[:: max(1, m.n_dofs // 200)]:
            s = smoothed_basis(m, e)
            ratios.append(np.sqrt(s.energy() / CrFunction.basis(m, e).energy()))
        assert max(ratios) <= 10.0
