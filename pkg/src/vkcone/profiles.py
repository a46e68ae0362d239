"""Smooth one-dimensional profiles used by the explicit constructions.

All profiles are built from two C-infinity primitives with closed-form
derivatives:

* ``smoothstep(t)`` rises from 0 (``t <= 0``) to 1 (``t >= 1``) and satisfies
  ``smoothstep(t) + smoothstep(1 - t) = 1``;
* ``bump(x) = exp(-1 / (1 - x^2))`` on ``(-1, 1)``.

Integrals of profiles (running integrals, moments) are computed by composite
Gauss-Legendre quadrature on panels that are small compared to the support of
each transition, which is accurate to round-off for these functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import expit

_GX, _GW = np.polynomial.legendre.leggauss(20)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW

_EDGE = 1e-3  # below this distance from the support edge the primitives underflow to 0


def smoothstep(t, nu=0):
    """C-infinity step ``e(t) / (e(t) + e(1 - t))`` with ``e(t) = exp(-1/t)``."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, _EDGE, 1.0 - _EDGE)
    g = 1.0 / tc - 1.0 / (1.0 - tc)
    p = expit(-g)
    inside = (t > _EDGE) & (t < 1.0 - _EDGE)
    if nu == 0:
        return np.where(t >= 1.0 - _EDGE, 1.0, np.where(inside, p, 0.0))
    k = 1.0 / tc**2 + 1.0 / (1.0 - tc) ** 2
    pq = p * (1.0 - p)
    d1 = pq * k
    if nu == 1:
        return np.where(inside, d1, 0.0)
    dk = -2.0 / tc**3 + 2.0 / (1.0 - tc) ** 3
    if nu == 2:
        d2 = d1 * (1.0 - 2.0 * p) * k + pq * dk
        return np.where(inside, d2, 0.0)
    if nu == 3:
        ddk = 6.0 / tc**4 + 6.0 / (1.0 - tc) ** 4
        m = 1.0 - 2.0 * p
        d3 = pq * (m * m * k**3 - 2.0 * pq * k**3 + 3.0 * m * k * dk + ddk)
        return np.where(inside, d3, 0.0)
    raise ValueError("nu must be 0, 1, 2 or 3")


def bump(x, nu=0):
    """Standard bump ``exp(-1/(1 - x^2))`` supported on ``(-1, 1)``."""
    x = np.asarray(x, dtype=float)
    s = 1.0 - x * x
    inside = s > _EDGE
    sc = np.where(inside, s, 1.0)
    b = np.where(inside, np.exp(-1.0 / sc), 0.0)
    if nu == 0:
        return b
    if nu == 1:
        return b * (-2.0 * x / sc**2)
    if nu == 2:
        return b * (4.0 * x * x / sc**4 - 2.0 / sc**2 - 8.0 * x * x / sc**3)
    raise ValueError("nu must be 0, 1 or 2")


def panel_integral(fn, a, b, n_panels=64):
    """Composite 20-point Gauss-Legendre integral of ``fn`` over ``[a, b]``."""
    edges = np.linspace(a, b, n_panels + 1)
    lo, width = edges[:-1, None], np.diff(edges)[:, None]
    return float(np.sum(fn(lo + width * _GX) * width * _GW))


@lru_cache(maxsize=None)
def bump_mass():
    """``int_{-1}^{1} bump``."""
    return panel_integral(bump, -1.0, 1.0, 256)


@dataclass(frozen=True, eq=False)
class SmoothProfile:
    """A smooth function on ``[lo, hi]`` with closed-form derivatives.

    ``breaks`` lists the points where the closed form changes; panels used for
    running integrals never straddle them.
    """

    value: Callable
    d1: Callable
    d2: Callable
    lo: float
    hi: float
    breaks: tuple = ()
    params: dict = field(default_factory=dict)
    panels_per_piece: int = 64

    def __call__(self, x, nu=0):
        return (self.value, self.d1, self.d2)[nu](np.asarray(x, dtype=float))

    def running_integral(self, x, fn=None, start=None):
        """``int_start^x fn(t) dt`` for an array ``x`` (``fn`` defaults to the profile).

        ``fn`` receives abscissae and must be vectorized.
        """
        fn = self.value if fn is None else fn
        start = self.lo if start is None else start
        return running_integral(fn, x, start, self.lo, self.hi, self.breaks,
                                self.panels_per_piece)


def running_integral(fn, x, start, lo, hi, breaks=(), panels_per_piece=64):
    """``int_start^x fn`` on ``[lo, hi]`` by composite Gauss-Legendre panels.

    Panels subdivide each piece between consecutive ``breaks`` uniformly, so
    a closed form that changes at a break point is never integrated across it.
    """
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    edges = np.concatenate(
        [np.linspace(p, q, panels_per_piece + 1)[:-1] for p, q in zip(pts[:-1], pts[1:])] + [[hi]]
    )
    a0, width = edges[:-1, None], np.diff(edges)[:, None]
    cum = np.concatenate([[0.0], np.cumsum(np.sum(fn(a0 + width * _GX) * width * _GW, axis=1))])

    def from_lo(y):
        y = np.clip(np.asarray(y, dtype=float), lo, hi)
        k = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, edges.size - 2)
        a = edges[k]
        part = np.sum(fn(a[..., None] + (y - a)[..., None] * _GX) * _GW, axis=-1) * (y - a)
        return cum[k] + part

    return from_lo(x) - from_lo(start)


# ---------------------------------------------------------------------------
# the mollifier eta


def mollifier_eta():
    """Smooth ramp ``eta`` with ``eta = 0`` on ``[0, 1/5]``, ``eta = 1`` on ``[2/5, inf)``.

    On ``(1/5, 2/5)`` it is ``smoothstep(5x - 1) + c * bump(10x - 3)``, with
    ``c`` fixed by the mean condition ``(5/2) int_0^{2/5} eta = 1``.  Since
    ``smoothstep`` contributes exactly half of the required mass, the bump has
    to supply ``3/10`` and ``c = 3 / int bump``; ``eta`` therefore overshoots 1.
    """
    c = 3.0 / bump_mass()

    def value(x):
        t = 5.0 * x - 1.0
        return np.where(x >= 0.4, 1.0, smoothstep(t) + c * bump(2.0 * t - 1.0))

    def d1(x):
        t = 5.0 * x - 1.0
        return 5.0 * smoothstep(t, 1) + 10.0 * c * bump(2.0 * t - 1.0, 1)

    def d2(x):
        t = 5.0 * x - 1.0
        return 25.0 * smoothstep(t, 2) + 100.0 * c * bump(2.0 * t - 1.0, 2)

    return SmoothProfile(value, d1, d2, 0.0, 1.0, breaks=(0.2, 0.4),
                         params={"bump_amplitude": c, "ramp": (0.2, 0.4)})


def eta_integral(y, eta=None):
    """``int_0^y eta`` for ``y >= 0``; equals ``y`` once ``y >= 2/5``."""
    eta = mollifier_eta() if eta is None else eta
    y = np.asarray(y, dtype=float)
    inner = eta.running_integral(np.minimum(y, 0.4))
    return np.where(y >= 0.4, y, inner)


# ---------------------------------------------------------------------------
# the transition profile W0


# half width of the kernel that mollifies |x| and support of the correction
# bump; wide transitions keep int W0''^2 (the bending cost of the fold) small
W0_HALFWIDTH = 0.5
W0_SUPPORT = 1.0


def _w0_pieces():
    """Slope of the mollified ``|x| - 1`` and the correction bump."""
    b, c = W0_HALFWIDTH, W0_SUPPORT

    def mollified_sign(x, nu=0):
        # |x| convolved with an even kernel on (-b, b) has slope 2 S(x/2b + 1/2) - 1
        s = x / (2.0 * b) + 0.5
        if nu == 0:
            return 2.0 * smoothstep(s) - 1.0
        return 2.0 * (0.5 / b) ** nu * smoothstep(s, nu)

    def correction(x, nu=0):
        return (1.0 / c) ** nu * bump(x / c, nu)

    return mollified_sign, correction


@lru_cache(maxsize=None)
def _w0_amplitude():
    msign, corr = _w0_pieces()
    b, c = W0_HALFWIDTH, W0_SUPPORT
    p2 = 2.0 * panel_integral(lambda x: msign(x) ** 2, 0.0, b) + 2.0 * (1.0 - b)
    pq = 2.0 * panel_integral(lambda x: msign(x) * corr(x, 1), 0.0, c)
    q2 = 2.0 * panel_integral(lambda x: corr(x, 1) ** 2, 0.0, c)
    deficit = 2.0 - p2
    # int (msign - mu corr')^2 = 2 is q2 mu^2 - 2 pq mu - deficit = 0; pq < 0
    disc = pq * pq + q2 * deficit
    if not (q2 > 0.0 and disc >= 0.0):
        raise ArithmeticError("no real correction amplitude for W0")
    mu = (pq + np.sqrt(disc)) / q2
    return mu, deficit


@lru_cache(maxsize=None)
def _mollified_abs_at_zero():
    msign, _ = _w0_pieces()
    b = W0_HALFWIDTH
    return b + panel_integral(msign, -b, 0.0, 64)


def profile_w0():
    """Even profile on ``[-1, 1]`` with ``W0(+-1) = 0``, ``W0'(+-1) = +-1``
    and ``int (W0'^2 - 1) = 0``.

    ``W0 = m(x) - 1 - mu * bump(x / c)`` where ``m`` is ``|x|`` mollified on
    ``(-b, b)`` and the amplitude ``mu > 0`` is the positive root of the
    quadratic that restores the integral condition lost by the mollification
    (``b = W0_HALFWIDTH``, ``c = W0_SUPPORT``).
    """
    msign, corr = _w0_pieces()
    mu, deficit = _w0_amplitude()
    m0 = _mollified_abs_at_zero()
    b, c = W0_HALFWIDTH, W0_SUPPORT

    def slope(x):
        return msign(x) - mu * corr(x, 1)

    def curv(x):
        return msign(x, 1) - mu * corr(x, 2)

    def value(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = m0 + running_integral(msign, np.minimum(ax, b), 0.0, 0.0, b)
        m = np.where(ax >= b, ax, inner)
        return m - 1.0 - mu * corr(x)

    breaks = tuple(sorted({-c, -b, 0.0, b, c}))
    return SmoothProfile(value, slope, curv, -1.0, 1.0, breaks=breaks,
                         params={"correction_amplitude": mu, "mollifier_halfwidth": b,
                                 "correction_support": c, "slope_deficit": deficit})
