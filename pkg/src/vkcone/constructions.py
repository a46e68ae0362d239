"""Explicit admissible configurations and the predicted energy scaling.

Two families of test configurations are provided:

* ``construct_invert`` turns the cone inside out on a disc of radius
  ``R = delta/2`` and glues the inverted part to the outer cone by a smooth
  transition of width ``2l`` with ``l = sqrt(h delta)/10``;
* ``construct_flatten`` keeps the cone and accommodates the indentation by a
  linear decrease of the slope in a rim layer of width ``L = sqrt(h)``.

In both cases the slope is mollified at the tip on the scale ``h`` by the ramp
``eta`` and ``u`` is chosen so that the radial strain ``u' + w'^2 - 1``
vanishes outside the tip region.  Nodal values are sampled from the closed
forms (``w`` included), so boundary conditions hold to round-off.
"""

from __future__ import annotations

import numpy as np

from .profiles import eta_integral, mollifier_eta, profile_w0
from .radial import Grid, Params, RadialField

__all__ = [
    "construct_invert",
    "construct_flatten",
    "invert_geometry",
    "flatten_geometry",
    "predicted_bound",
]


def _check(params, grid):
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    if not isinstance(grid, Grid):
        raise TypeError("grid must be a Grid instance")


def invert_geometry(params):
    """Inversion radius ``R`` and transition half width ``l``."""
    R = 0.5 * params.delta
    l = 0.1 * np.sqrt(params.h * params.delta)
    return R, l


def flatten_geometry(params):
    """Width ``L`` of the rim layer."""
    return np.sqrt(params.h)


def invert_closed_form(params):
    """Closed-form ``(u, w, wp)`` callables of the inversion construction."""
    h = params.h
    R, l = invert_geometry(params)
    eta = mollifier_eta()
    w0 = profile_w0()

    def wp(r):
        r = np.asarray(r, dtype=float)
        s = np.clip((r - R) / l, -1.0, 1.0)
        return np.where(r <= R - l, -eta(r / h), np.where(r >= R + l, 1.0, w0(s, 1)))

    def w(r):
        r = np.asarray(r, dtype=float)
        s = np.clip((r - R) / l, -1.0, 1.0)
        inner = -h * eta_integral(np.minimum(r, R - l) / h, eta)
        mid = -(R - l) + l * w0(s)
        return np.where(r <= R - l, inner, np.where(r >= R + l, r - 2.0 * R, mid))

    def u(r):
        r = np.asarray(r, dtype=float)
        s = np.clip((r - R) / l, -1.0, 1.0)
        sq = w0.running_integral(s, fn=lambda t: w0(t, 1) ** 2)
        mid = l * (s + 1.0 - sq)
        return np.where((r <= R - l) | (r >= R + l), 0.0, mid)

    return u, w, wp


def flatten_closed_form(params):
    """Closed-form ``(u, w, wp)`` callables of the flattening construction."""
    h, d = params.h, params.delta
    L = flatten_geometry(params)
    eta = mollifier_eta()

    def wp(r):
        r = np.asarray(r, dtype=float)
        s = r - (1.0 - L)
        return np.where(s <= 0.0, eta(r / h), 1.0 - 2.0 * d * s / L**2)

    def w(r):
        r = np.asarray(r, dtype=float)
        s = r - (1.0 - L)
        inner = h * eta_integral(np.minimum(r, 1.0 - L) / h, eta)
        return np.where(s <= 0.0, inner, (1.0 - L) + s - d * s * s / L**2)

    def u(r):
        r = np.asarray(r, dtype=float)
        s = np.maximum(r - (1.0 - L), 0.0)
        return 2.0 * d * s**2 / L**2 - (4.0 / 3.0) * d * d * s**3 / L**4

    return u, w, wp


def _sample(grid, closed):
    u, w, wp = closed
    r = grid.nodes
    uu, ww, ss = u(r), w(r), wp(r)
    # the constraints at the origin hold exactly in the closed forms
    uu[0] = ss[0] = ww[0] = 0.0
    return RadialField(grid, uu, ww, ss)


def construct_invert(params, grid):
    """Inverted-cap configuration sampled on ``grid``.

    Parameters
    ----------
    params : Params
        Requires ``h <= delta``.
    grid : Grid

    Returns
    -------
    RadialField
        ``wp = -eta(r/h)`` on ``[0, R - l]``, ``W0'((r - R)/l)`` on
        ``[R - l, R + l]`` and 1 beyond; ``u`` vanishes outside the
        transition.
    """
    _check(params, grid)
    if params.delta < params.h:
        raise ValueError(
            f"the inversion construction needs h <= delta (h={params.h}, delta={params.delta})"
        )
    return _sample(grid, invert_closed_form(params))


def construct_flatten(params, grid):
    """Rim-layer configuration sampled on ``grid``.

    ``wp = eta(r/h)`` up to ``1 - L`` and decreases linearly to
    ``1 - 2 delta / L`` at the rim; ``u`` cancels the radial strain there.
    """
    _check(params, grid)
    return _sample(grid, flatten_closed_form(params))


def predicted_bound(params):
    """``h^2 log(1/h) + min(delta^2 h^(1/2), delta^(1/2) h^(3/2))``."""
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    h, d = params.h, params.delta
    return h * h * np.log(1.0 / h) + min(d * d * np.sqrt(h), np.sqrt(d) * h**1.5)
