"""Fixed quadrature rules on triangles (barycentric) and segments.

The triangle rule is the 13-point symmetric rule of Dunavant, exact for
polynomials of total degree 7; its parameters were re-solved from the
moment equations so that they are accurate to double precision. Segment
integrals use 5-point Gauss-Legendre, exact for degree 9.
"""
from itertools import permutations

import numpy as np

__all__ = ["triangle_rule", "segment_rule", "TRIANGLE_DEGREE", "SEGMENT_DEGREE"]

TRIANGLE_DEGREE = 7
SEGMENT_DEGREE = 9

_W0 = -0.14957004446758784
_A1, _W1 = 0.2603459660790249, 0.1756152574331918
_A2, _W2 = 0.06513010290221755, 0.05334723560884121
_B3, _C3, _W3 = 0.3128654960048819, 0.6384441885698088, 0.07711376089024811


def _build_triangle_rule():
    points = [(1 / 3, 1 / 3, 1 / 3)]
    weights = [_W0]
    for a, w in ((_A1, _W1), (_A2, _W2)):
        for p in sorted(set(permutations((1 - 2 * a, a, a)))):
            points.append(p)
            weights.append(w)
    for p in permutations((1 - _B3 - _C3, _B3, _C3)):
        points.append(p)
        weights.append(_W3)
    points = np.array(points)
    # renormalise the barycentric rows after the (1 - 2a) subtraction
    points /= points.sum(axis=1, keepdims=True)
    return points, np.array(weights)


_TRI_POINTS, _TRI_WEIGHTS = _build_triangle_rule()
_SEG_NODES, _SEG_WEIGHTS = np.polynomial.legendre.leggauss(5)


def triangle_rule():
    """Return ``(bary, weights)`` with ``bary`` of shape (13, 3).

    Weights sum to one, i.e. ``area * weights @ g(bary)`` integrates ``g``
    over a triangle of the given area.
    """
    return _TRI_POINTS.copy(), _TRI_WEIGHTS.copy()


def segment_rule():
    """Return ``(t, weights)`` on the unit interval; weights sum to one."""
    return 0.5 * (_SEG_NODES + 1.0), 0.5 * _SEG_WEIGHTS
