"""Gauss rules used to precompute convolution tensors."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure

__all__ = ["gauss_legendre01", "integrate_endpoint_singular"]


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights mapped to [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (t + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def integrate_endpoint_singular(f, *, tol=1e-13, order=12, max_levels=400,
                                budget=10**6, cost_per_point=1):
    """Integrate ``f`` over [0, 1] when ``f`` is singular (or non-smooth) at 0.

    The interval is cut into dyadic panels [2^-(k+1), 2^-k] that shrink toward
    the singular endpoint, each integrated with an ``order``-point Gauss rule.
    Panels are added until the geometric tail estimate built from the last two
    panel contributions drops below ``tol`` relative to the running sum, or
    until two successive extrapolated totals (sum plus tail) agree to ``tol``,
    which is what happens for slowly decaying power-law singularities; the
    tail estimate is then added to the result.

    ``f`` must be vectorised: it receives a 1D array of abscissae and returns
    an array of the same length.  ``cost_per_point`` lets callers whose ``f``
    does inner work per abscissa (e.g. a second quadrature) charge the
    evaluation budget correctly.

    Raises
    ------
    QuadratureFailure
        If the tolerance is not met within ``budget`` evaluations.
    """
    x, w = gauss_legendre01(order)
    total = 0.0
    prev = None
    prev_estimate = None
    evals = 0
    for k in range(max_levels):
        a = 2.0 ** -(k + 1)
        h = a  # panel [a, 2a]
        p = h * float(np.dot(w, f(a + h * x)))
        evals += order * cost_per_point
        total += p
        if p == 0.0 and k >= 3:
            return total
        if prev is not None and k >= 3 and p * prev > 0.0:
            r = p / prev
            if r < 1.0:
                tail = p * r / (1.0 - r)
                estimate = total + tail
                if abs(tail) <= tol * abs(total):
                    return estimate
                if prev_estimate is not None and k >= 8 and abs(estimate - prev_estimate) <= tol * abs(estimate):
                    return estimate
                prev_estimate = estimate
            else:
                prev_estimate = None
        else:
            prev_estimate = None
        prev = p
        if evals > budget:
            break
    raise QuadratureFailure(
        f"endpoint-singular quadrature did not reach tol={tol:g} "
        f"within {evals} evaluations (last panel {prev!r}, sum {total!r})"
    )
