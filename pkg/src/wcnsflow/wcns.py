"""Fifth-order weighted compact nonlinear scheme, one-dimensional kernels.

The scheme works in two steps per grid line: nonlinearly weighted
interpolation of point values to cell edges (midpoints), then an explicit
edge-to-node difference that is exact for polynomials through degree six.

Conventions used throughout:

* A "line" is the last axis of an array; all kernels broadcast over leading
  axes, so ``(5, ny, nz, L)`` slabs go through unchanged.
* For a line of ``L`` nodes the edge kernels produce ``L - 5`` edges where
  output edge ``j`` sits between input nodes ``j + 2`` and ``j + 3``.  The
  left-biased value at that edge uses nodes ``j .. j+4``, the right-biased
  value uses nodes ``j+1 .. j+5`` (the mirrored stencil).
* With the solver's halo width of 5, a line of ``n`` interior nodes arrives
  as ``L = n + 10`` values and yields the ``n + 5`` edges needed by the
  difference formula at every interior node.
"""

from __future__ import annotations

import numpy as np

from .errors import StencilError

# Ideal (linear) interpolation weights of the three 3-point substencils for
# the left-biased edge value; the right-biased value mirrors them.
IDEAL_WEIGHTS = (1.0 / 16.0, 10.0 / 16.0, 5.0 / 16.0)

# Regularization in the nonlinear weight denominators.
WEIGHT_EPS = 1.0e-6

# Edge-to-node difference coefficients for the three midpoint shells
# (h/2, 3h/2, 5h/2).  75/64 - 75/384 + 15/640 = 1 keeps first-order
# consistency; the formula is exact through degree-six polynomials.
EDGE_COEFFS = (75.0 / 64.0, 25.0 / 384.0, 3.0 / 640.0)

HALO_WIDTH = 5


def smoothness_indicators(w0, w1, w2, w3, w4):
    """Jiang-Shu smoothness of the three substencils of a 5-node window.

    Arguments are the window values (arrays broadcast elementwise).  Returns
    ``(beta0, beta1, beta2)`` for the left/center/right substencils.
    """
    c = 13.0 / 12.0
    d0 = w0 - 2.0 * w1 + w2
    d1 = w1 - 2.0 * w2 + w3
    d2 = w2 - 2.0 * w3 + w4
    b0 = c * d0 * d0 + 0.25 * (w0 - 4.0 * w1 + 3.0 * w2) ** 2
    b1 = c * d1 * d1 + 0.25 * (w1 - w3) ** 2
    b2 = c * d2 * d2 + 0.25 * (3.0 * w2 - 4.0 * w3 + w4) ** 2
    return b0, b1, b2


def nonlinear_weights(b0, b1, b2, eps: float = WEIGHT_EPS):
    """Normalized nonlinear weights from smoothness indicators."""
    d0, d1, d2 = IDEAL_WEIGHTS
    a0 = d0 / ((eps + b0) * (eps + b0))
    a1 = d1 / ((eps + b1) * (eps + b1))
    a2 = d2 / ((eps + b2) * (eps + b2))
    inv = 1.0 / (a0 + a1 + a2)
    return a0 * inv, a1 * inv, a2 * inv


def _edge_value(w0, w1, w2, w3, w4, eps: float, nonlinear: bool):
    # Quadratic substencil values interpolated to the edge between the
    # window's 3rd and 4th node (offset +1/2 from the window center).
    p0 = (3.0 * w0 - 10.0 * w1 + 15.0 * w2) * 0.125
    p1 = (-w1 + 6.0 * w2 + 3.0 * w3) * 0.125
    p2 = (3.0 * w2 + 6.0 * w3 - w4) * 0.125
    if nonlinear:
        b0, b1, b2 = smoothness_indicators(w0, w1, w2, w3, w4)
        o0, o1, o2 = nonlinear_weights(b0, b1, b2, eps)
    else:
        o0, o1, o2 = IDEAL_WEIGHTS
    return o0 * p0 + o1 * p1 + o2 * p2


def interpolate_edge(line: np.ndarray, edge: int, side: str = "left",
                     eps: float = WEIGHT_EPS, weights: str = "nonlinear") -> float:
    """Reference single-edge interpolation.

    ``edge`` selects the midpoint between nodes ``edge`` and ``edge + 1`` of
    ``line``.  ``side`` picks the upwind bias; ``weights="ideal"`` freezes the
    linear weights (useful for order checks on smooth data).
    """
    line = np.asarray(line)
    n = line.shape[-1]
    nonlinear = _weights_mode(weights)
    if side == "left":
        lo, hi = edge - 2, edge + 3
        if lo < 0 or hi > n:
            raise StencilError(f"left-biased edge {edge} needs nodes "
                               f"[{lo}, {hi}) of a {n}-node line")
        w = line[..., lo:hi]
        return _edge_value(w[..., 0], w[..., 1], w[..., 2], w[..., 3], w[..., 4],
                           eps, nonlinear)
    if side == "right":
        lo, hi = edge - 1, edge + 4
        if lo < 0 or hi > n:
            raise StencilError(f"right-biased edge {edge} needs nodes "
                               f"[{lo}, {hi}) of a {n}-node line")
        w = line[..., lo:hi]
        return _edge_value(w[..., 4], w[..., 3], w[..., 2], w[..., 1], w[..., 0],
                           eps, nonlinear)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _weights_mode(weights: str) -> bool:
    if weights == "nonlinear":
        return True
    if weights == "ideal":
        return False
    raise ValueError(f"weights must be 'nonlinear' or 'ideal', got {weights!r}")


def window_edge_value(w0, w1, w2, w3, w4, eps: float = WEIGHT_EPS,
                      weights: str = "nonlinear"):
    """Edge value from an already-gathered 5-node window.

    The window must be ordered upwind first: pass nodes left-to-right for a
    left-biased value and right-to-left for a right-biased one.  The result
    sits between ``w2`` and ``w3``.  Used directly when windows are built in
    a transformed basis rather than sliced from a line.
    """
    return _edge_value(w0, w1, w2, w3, w4, eps, _weights_mode(weights))


def interpolate_line_edges(f: np.ndarray, side: str = "left",
                           eps: float = WEIGHT_EPS,
                           weights: str = "nonlinear") -> np.ndarray:
    """Vectorized edge interpolation along the last axis.

    For input length ``L`` returns ``L - 5`` edges; output edge ``j`` lies
    between nodes ``j + 2`` and ``j + 3``, so left- and right-biased outputs
    of the same input align edge for edge.
    """
    f = np.asarray(f)
    ne = f.shape[-1] - 5
    if ne < 1:
        raise StencilError(f"line of {f.shape[-1]} nodes is too short "
                           "for edge interpolation")
    nonlinear = _weights_mode(weights)
    if side == "left":
        w = [f[..., k:k + ne] for k in range(5)]
    elif side == "right":
        w = [f[..., 5 - k:5 - k + ne] for k in range(5)]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return _edge_value(w[0], w[1], w[2], w[3], w[4], eps, nonlinear)


def edge_to_node_derivative(edges: np.ndarray, h: float) -> np.ndarray:
    """Node derivatives from midpoint values along the last axis.

    For ``m`` input edges returns ``m - 5`` node values; output node ``i``
    sits between input edges ``i + 2`` and ``i + 3`` and the formula reaches
    the midpoints at ``i +- 1/2, 3/2, 5/2``.
    """
    edges = np.asarray(edges)
    n = edges.shape[-1] - 5
    if n < 1:
        raise StencilError(f"{edges.shape[-1]} edges are too few "
                           "for the node derivative")
    c1, c2, c3 = EDGE_COEFFS
    e = edges
    d = (c1 / h) * (e[..., 3:3 + n] - e[..., 2:2 + n])
    d -= (c2 / h) * (e[..., 4:4 + n] - e[..., 1:1 + n])
    d += (c3 / h) * (e[..., 5:5 + n] - e[..., 0:0 + n])
    return d


def central4_derivative(f: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central node derivative along the last axis.

    For ``L`` input nodes returns ``L - 4`` values; output ``j`` is the
    derivative at input node ``j + 2``.
    """
    f = np.asarray(f)
    n = f.shape[-1] - 4
    if n < 1:
        raise StencilError(f"line of {f.shape[-1]} nodes is too short "
                           "for the central derivative")
    # Paired differences so identical neighbor values cancel exactly and a
    # uniform field yields a bitwise-zero derivative.
    return ((f[..., 0:0 + n] - f[..., 4:4 + n])
            + 8.0 * (f[..., 3:3 + n] - f[..., 1:1 + n])) / (12.0 * h)
