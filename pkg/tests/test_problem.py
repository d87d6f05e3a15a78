import numpy as np
import pytest
import sympy as sp

import oracles
from crlab.fe_spaces import ConformingFunction, CrFunction
from crlab.mesh import unit_square_initial
from crlab.problem import (
    ExactSolution,
    SourceTerm,
    apply,
    benchmark,
    clip_to_line,
    integrate_cells,
    load_vectors,
)

LAM = 2.0 / 3.0


def symbolic_energy(lam):
    """||grad u||^2 of the benchmark solution, exactly."""
    x1, x2 = sp.symbols("x1 x2")
    w = x2 * (1 - x2)
    left = x1 * (lam - x1) * w
    right = (1 - x1) * (x1 - lam) * w
    total = 0
    for u, a, b in ((left, 0, lam), (right, lam, 1)):
        g2 = sp.diff(u, x1) ** 2 + sp.diff(u, x2) ** 2
        total += sp.integrate(g2, (x1, a, b), (x2, 0, 1))
    return total


def random_conforming(mesh, rng, with_elements=True):
    v = rng.standard_normal(mesh.n_vertices)
    e = rng.standard_normal(mesh.n_edges)
    v[mesh.boundary_vertex] = 0.0
    e[mesh.boundary_edge] = 0.0
    b = rng.standard_normal(mesh.n_elements) if with_elements else None
    return ConformingFunction(mesh, v, e, b)


def exact_inner(exact, g):
    """int grad u . grad g with each side of the line integrated separately."""

    def integrand(parent, side, bary, x1, x2):
        gu = exact.gradient(x1, x2, np.broadcast_to(side[:, None], x1.shape))
        gg = g.gradients_at_points(parent, bary)
        return np.einsum("nqk,nqk->nq", gu, gg)[..., None]

    return integrate_cells(g.mesh, exact.lam, integrand, 1).sum()


def test_benchmark_point_values(bench):
    f, u = bench
    assert u.value(np.array(1 / 3), np.array(0.5)) == pytest.approx(1 / 36)
    assert f.density(np.array(1 / 3), np.array(0.5)) == pytest.approx(13 / 18)


def test_solution_continuous_and_zero_on_boundary(bench):
    _, u = bench
    y = np.linspace(0, 1, 20)
    lam = np.full(20, LAM)
    assert np.allclose(u.value(lam, y, np.zeros(20, int)), 0.0)
    assert np.allclose(u.value(lam, y, np.ones(20, int)), 0.0)
    for x1, x2 in ((y, 0 * y), (y, 0 * y + 1), (0 * y, y), (0 * y + 1, y)):
        assert np.allclose(u.value(x1, x2), 0.0)
    # the gradient jumps across the line
    gl = u.gradient(lam, np.full(20, 0.5), np.zeros(20, int))
    gr = u.gradient(lam, np.full(20, 0.5), np.ones(20, int))
    assert np.allclose(gr[:, 0] - gl[:, 0], 0.25)


def test_gradient_matches_symbolic(bench):
    _, u = bench
    x1, x2 = sp.symbols("x1 x2")
    lam = sp.Rational(2, 3)
    branches = [x1 * (lam - x1) * x2 * (1 - x2), (1 - x1) * (x1 - lam) * x2 * (1 - x2)]
    pts = [(0.1, 0.3), (0.5, 0.9), (0.7, 0.2), (0.95, 0.5)]
    for px, py in pts:
        expr = branches[int(px > LAM)]
        ref = [float(sp.diff(expr, v).subs({x1: px, x2: py})) for v in (x1, x2)]
        assert np.allclose(u.gradient(np.array(px), np.array(py)), ref)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        benchmark(1.0)
    with pytest.raises(ValueError):
        SourceTerm(lambda x, y: x, lam=0.0)
    with pytest.raises(ValueError):
        SourceTerm(lambda x, y: x, weight=np.polynomial.Polynomial([1.0]))


def test_source_acting_on_solution(bench, levels):
    # u vanishes on the line, so <f, u> is the regular part only and
    # equals ||grad u||^2 by the weak form
    f, u = bench
    ref = float(symbolic_energy(sp.Rational(2, 3)))
    m = levels[2]

    def integrand(parent, side, bary, x1, x2):
        s = np.broadcast_to(side[:, None], x1.shape)
        return (f.density(x1, x2, s) * u.value(x1, x2, s))[..., None]

    # integrand has degree 6 per side: exact with the degree-7 rule
    assert integrate_cells(m, LAM, integrand, 1).sum() == pytest.approx(ref, rel=1e-13)

    def grad_sq(parent, side, bary, x1, x2):
        g = u.gradient(x1, x2, np.broadcast_to(side[:, None], x1.shape))
        return np.einsum("nqk,nqk->nq", g, g)[..., None]

    assert integrate_cells(m, LAM, grad_sq, 1).sum() == pytest.approx(ref, rel=1e-13)


def test_weak_form_identity(bench, graded, levels, rng):
    f, u = bench
    for m in (levels[1], graded):
        for _ in range(30):
            g = random_conforming(m, rng)
            lhs = apply(f, g)
            rhs = exact_inner(u, g)
            assert abs(lhs - rhs) <= 1e-10 * np.sqrt(g.energy())
            assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_positive_line_weight_breaks_weak_form(levels, rng):
    # with +w on the line the pair is not a weak solution
    f, u = benchmark(LAM)
    wrong = SourceTerm(f.left, f.right, LAM, -f.weight)
    m = levels[1]
    g = random_conforming(m, rng)
    assert abs(apply(wrong, g) - exact_inner(u, g)) > 1e-4


def test_clip_lengths(levels, graded):
    for m in levels + [graded]:
        clip = clip_to_line(m, LAM)
        lengths = clip.segments[:, 1, 1] - clip.segments[:, 0, 1]
        assert np.all(lengths > 0)
        assert np.allclose(clip.segments[:, :, 0], LAM)
        assert lengths.sum() == pytest.approx(1.0, abs=1e-12)


def test_clip_initial_mesh():
    m = unit_square_initial()
    clip = clip_to_line(m, LAM)
    crossed = [t for t in range(4) if oracles.line_segment(m.vertices[m.elements[t]], LAM)]
    assert sorted(clip.elements.tolist()) == crossed == [0, 1, 2]
    for t, seg in zip(clip.elements, clip.segments):
        lo, hi = oracles.line_segment(m.vertices[m.elements[t]], LAM)
        assert seg[0, 1] == pytest.approx(lo) and seg[1, 1] == pytest.approx(hi)


def test_clip_partition(graded):
    clip = clip_to_line(graded, LAM)
    c = clip.sub_coords
    area = 0.5 * ((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1]) - (c[:, 1, 1] - c[:, 0, 1]) * (c[:, 2, 0] - c[:, 0, 0]))
    assert np.all(area > 0)
    sums = np.bincount(clip.sub_parent, weights=area, minlength=graded.n_elements)
    cut = np.unique(clip.sub_parent)
    assert np.allclose(sums[cut], graded.areas[cut], rtol=1e-14)
    centroid = c.mean(axis=1)[:, 0]
    assert np.all((centroid < LAM) == (clip.sub_side == 0))
    rec = clip.records()
    assert set(rec) == set(clip.elements.tolist())
    for t, (seg, left, right) in rec.items():
        assert len(left) >= 1 and len(right) >= 1


def test_apply_zero_and_errors(graded, rng):
    g = random_conforming(graded, rng)
    assert apply(SourceTerm.zero(), g) == 0.0
    with pytest.raises(TypeError):
        apply(SourceTerm.zero(), CrFunction.zeros(graded))
    bad = ConformingFunction.hat(graded, int(np.flatnonzero(graded.boundary_vertex)[0]))
    with pytest.raises(ValueError):
        apply(SourceTerm.zero(), bad)


def test_apply_linear(bench, graded, rng):
    f, _ = bench
    g1, g2 = random_conforming(graded, rng), random_conforming(graded, rng)
    s = ConformingFunction(graded, 2 * g1.vertex - g2.vertex, 2 * g1.edge - g2.edge, 2 * g1.element - g2.element)
    assert apply(f, s) == pytest.approx(2 * apply(f, g1) - apply(f, g2), rel=1e-12)
    regular = SourceTerm(f.left, f.right, LAM)
    line = SourceTerm(lambda x, y: np.zeros_like(x), None, LAM, f.weight)
    assert apply(f, g1) == pytest.approx(apply(regular, g1) + apply(line, g1), rel=1e-12)


def test_element_bubble_load_oracle(levels, rng):
    one = SourceTerm.constant(1.0)
    m = levels[1]
    for t in rng.choice(m.n_elements, 5, replace=False):
        coords = m.vertices[m.elements[t]]
        lam, _ = oracles.barycentric(coords)
        ref = oracles.integrate_triangle(coords, lambda x, y: np.prod(lam(x, y), axis=-1))
        assert apply(one, ConformingFunction.element_bubble(m, t)) == pytest.approx(ref, rel=1e-13)
        assert ref == pytest.approx(m.areas[t] / 60, rel=1e-13)


def test_load_vectors_oracle(bench, graded, rng):
    f, _ = bench
    loads = load_vectors(f, graded)
    clip = clip_to_line(graded, LAM)
    cut = clip.elements[:10]
    for t in cut:
        coords = graded.vertices[graded.elements[t]]
        lam, _ = oracles.barycentric(coords)
        # element bubble: regular part on both sides plus the segment part
        reg = oracles.integrate_split(
            coords, LAM,
            {0: lambda x, y: f.left(x, y) * np.prod(lam(x, y), axis=-1),
             1: lambda x, y: f.right(x, y) * np.prod(lam(x, y), axis=-1)},
        )
        lo, hi = oracles.line_segment(coords, LAM)
        s, w = np.polynomial.legendre.leggauss(12)
        y = lo + (hi - lo) * (s + 1) / 2
        line = (hi - lo) / 2 * np.sum(w * f.weight(y) * np.prod(lam(np.full_like(y, LAM), y), axis=-1))
        assert loads.element[t] == pytest.approx(reg + line, rel=1e-12)


def test_weight_max():
    f, _ = benchmark(LAM)
    assert f.weight_max(0.3, 0.7) == pytest.approx(0.25)
    assert f.weight_max(0.0, 0.25) == pytest.approx(0.25 * 0.75)
    assert f.weight_max(0.8, 1.0) == pytest.approx(0.8 * 0.2)


def test_exact_solution_without_line():
    u = ExactSolution(lambda x, y: x * y, lambda x, y: (y, x))
    assert u.value(np.array(2.0), np.array(3.0)) == 6.0
    assert np.allclose(u.gradient(np.array([2.0]), np.array([3.0])), [[3.0, 2.0]])
