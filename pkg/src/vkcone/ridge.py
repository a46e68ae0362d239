"""Two-dimensional constructions: the sharp inverted pyramid and its ridges.

The energy of a planar map ``(V, W)`` on a domain ``U`` is

    E(V, W; U) = int_U |DV + DV^T + DW (x) DW|^2 + h^2 |D^2 W|^2 dx.

The sharp pyramid ``W = alpha min(|x1| + |x2|, 1 - |x1| - |x2|)`` with
``alpha = sqrt(pi/4)`` is piecewise affine and admits a piecewise-affine
``V`` with vanishing strain; its gradient jumps across 12 segments.  Each
segment is the diagonal ``[ac]`` of a quadrilateral ``abcd`` on which the fold
is replaced by a smooth ridge whose width grows like ``h^(1/3) (h + x)^(2/3)``
away from the endpoints, and the remaining kinks at the 9 endpoints are
removed by mollification on balls of radius ``h``.

Conventions
-----------
Points are arrays of shape ``(..., 2)``.  ``DV[..., i, j]`` is ``dV_i/dx_j``,
``D2W[..., i, j]`` is ``d^2 W / dx_i dx_j`` and ``x^perp = J x`` with
``J = [[0, -1], [1, 0]]``.

Ridges are built in a canonical frame where the fold runs from ``a = 0`` to
``c = (l, 0)``, ``b`` lies in the upper half plane and ``V_2,1 = 0``.  There
the sharp fold reads

    DV = [[A1, A2], [0, A3]],  DW = (A6, A7)   for y2 > 0,
    DV = [[A1, A4], [0, A5]],  DW = (A6, A8)   for y2 < 0,

and zero strain is ``2A1 + A6^2 = A2 + A6 A7 = A4 + A6 A8 = 2A3 + A7^2
= 2A5 + A8^2 = 0``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve

from ._validation import check_thickness
from .profiles import SmoothProfile, bump, panel_integral, running_integral, smoothstep

__all__ = [
    "ALPHA",
    "Fields",
    "PlanarMap",
    "PiecewiseAffineMap",
    "RidgePatch",
    "FoldProfile",
    "PatchEnergy",
    "PyramidEnergy",
    "sharp_pyramid",
    "canonical_fold",
    "fold_coeffs",
    "gamma_profiles",
    "width_profile",
    "ridge_fields",
    "patch_energy",
    "vertex_smooth",
    "ball_energy",
    "pyramid_quads",
    "pyramid_energy",
]

ALPHA = float(np.sqrt(np.pi / 4.0))
KERNEL_HALFWIDTH = 0.125  # support of the fold kernel in the strip variable t

_J = np.array([[0.0, -1.0], [1.0, 0.0]])
_COMPAT_TOL = 1e-10


class Fields(NamedTuple):
    """Values and derivatives of a planar map at a set of points."""

    V: np.ndarray
    DV: np.ndarray
    W: np.ndarray
    DW: np.ndarray
    D2W: np.ndarray


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise ValueError(f"points must have shape (..., 2), got {x.shape}")
    return x


def _outer(p, q):
    return p[..., :, None] * q[..., None, :]


def _rotation(e):
    """Rotation matrix with first column ``e`` (a unit vector)."""
    return np.array([[e[0], -e[1]], [e[1], e[0]]])


class PlanarMap:
    """Evaluator for ``V: R^2 -> R^2`` and ``W: R^2 -> R`` with derivatives.

    Subclasses implement :meth:`evaluate`; ``regions`` describes how the plane
    is decomposed (quadrants, quadrilaterals, strips, balls).
    """

    regions: dict = {}

    def evaluate(self, x) -> Fields:
        raise NotImplementedError

    def V(self, x):
        return self.evaluate(x).V

    def DV(self, x):
        return self.evaluate(x).DV

    def W(self, x):
        return self.evaluate(x).W

    def DW(self, x):
        return self.evaluate(x).DW

    def D2W(self, x):
        return self.evaluate(x).D2W

    def strain(self, x):
        """``DV + DV^T + DW (x) DW``."""
        F = self.evaluate(x)
        return F.DV + np.swapaxes(F.DV, -1, -2) + _outer(F.DW, F.DW)


class PiecewiseAffineMap(PlanarMap):
    """Map that is affine on each region returned by ``locate``.

    On region ``k``: ``V = cV[k] + DV[k] x`` and ``W = cW[k] + DW[k] . x``.

    Parameters
    ----------
    locate : callable
        Maps points ``(..., 2)`` to integer region labels ``(...)``.
    cV, DV, cW, DW : array_like
        Shapes ``(K, 2)``, ``(K, 2, 2)``, ``(K,)``, ``(K, 2)``.
    regions : dict, optional
        Descriptor; ``regions["labels"]`` names the regions.
    """

    def __init__(self, locate, cV, DV, cW, DW, regions=None):
        self.locate = locate
        self.cV = np.asarray(cV, dtype=float)
        self.DVk = np.asarray(DV, dtype=float)
        self.cW = np.asarray(cW, dtype=float)
        self.DWk = np.asarray(DW, dtype=float)
        self.regions = dict(regions or {})

    def evaluate(self, x):
        x = _points(x)
        k = np.asarray(self.locate(x))
        DV = self.DVk[k]
        DW = self.DWk[k]
        V = self.cV[k] + np.einsum("...ij,...j->...i", DV, x)
        W = self.cW[k] + np.sum(DW * x, axis=-1)
        return Fields(V, DV, W, DW, np.zeros(x.shape[:-1] + (2, 2)))

    def rigid(self, R, z):
        """The map ``x -> (R^T V(R x + z), W(R x + z))``."""
        R = np.asarray(R, dtype=float)
        z = np.asarray(z, dtype=float)
        DV = np.einsum("ji,kjl,lm->kim", R, self.DVk, R)
        cV = np.einsum("ji,kj->ki", R, self.cV + self.DVk @ z)
        DW = self.DWk @ R
        cW = self.cW + self.DWk @ z
        locate = self.locate
        return PiecewiseAffineMap(lambda x: locate(x @ R.T + z), cV, DV, cW, DW,
                                  dict(self.regions, rigid=(R.tolist(), z.tolist())))

    def skew_shift(self, coef, labels):
        """Add ``coef * x^perp`` to ``V`` on the listed regions."""
        DV = self.DVk.copy()
        DV[list(labels)] += coef * _J
        return PiecewiseAffineMap(self.locate, self.cV, DV, self.cW, self.DWk,
                                  dict(self.regions, skew_shift=(coef, list(labels))))


# ---------------------------------------------------------------------------
# the sharp pyramid


def _pyramid_locate(x):
    x1, x2 = x[..., 0], x[..., 1]
    quad = np.where(x2 >= 0.0, np.where(x1 >= 0.0, 0, 1), np.where(x1 < 0.0, 2, 3))
    outer = np.abs(x1) + np.abs(x2) > 0.5
    return 2 * quad + outer


def sharp_pyramid():
    """Sharp inverted pyramid with ``alpha = sqrt(pi/4)``.

    Returns
    -------
    PiecewiseAffineMap
        Eight affine regions, labelled ``2 q + o`` with quadrant ``q`` (0: both
        coordinates nonnegative, then counter-clockwise, ``x2 >= 0`` belongs to
        the upper quadrants) and ``o = 1`` where ``|x1| + |x2| > 1/2``.  ``V``
        depends only on the quadrant.  It is continuous across ``x1 = 0`` and
        across the positive ``x1``-axis and jumps by ``4 alpha^2 (0, x1)``
        across ``Sigma = {x2 = 0, x1 < 0}``; ``regions["sigma_correction"]``
        records the skew term ``-4 alpha^2 x^perp`` on ``{x2 > 0}`` that makes
        it continuous there (see :func:`sigma_corrected`).
    """
    a2 = ALPHA * ALPHA
    dv = -0.5 * a2 * np.array([
        [[1.0, 1.0], [1.0, 1.0]],
        [[1.0, 1.0], [-3.0, 1.0]],
        [[1.0, -3.0], [5.0, 1.0]],
        [[1.0, -3.0], [1.0, 1.0]],
    ])
    signs = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    DV = np.repeat(dv, 2, axis=0)
    DW = np.empty((8, 2))
    DW[0::2] = ALPHA * signs
    DW[1::2] = -ALPHA * signs
    cW = np.tile([0.0, ALPHA], 4)
    labels = [f"{q}-{o}" for q in ("Q1", "Q2", "Q3", "Q4") for o in ("inner", "outer")]
    regions = {
        "kind": "quadrants",
        "labels": labels,
        "alpha": ALPHA,
        "sigma": "x2 = 0, x1 < 0",
        "sigma_jump": "4 alpha^2 (0, x1)",
        "sigma_correction": (-4.0 * a2, [0, 1, 2, 3]),
    }
    return PiecewiseAffineMap(_pyramid_locate, np.zeros((8, 2)), DV, cW, DW, regions)


def sigma_corrected(pyramid):
    """The pyramid with ``-4 alpha^2 x^perp`` added on ``{x2 >= 0}``.

    The corrected ``V`` is continuous across ``Sigma`` (and discontinuous
    across the positive ``x1``-axis); the strain is unchanged since the
    correction is skew.
    """
    coef, labels = pyramid.regions["sigma_correction"]
    return pyramid.skew_shift(coef, labels)


def canonical_fold(A6, A7, A8):
    """Sharp fold along the ``x1``-axis with zero strain and ``V_2,1 = 0``.

    ``A1..A5`` follow from the zero-strain relations; label 0 is ``x2 >= 0``.
    """
    A1 = -0.5 * A6 * A6
    DV = np.array([[[A1, -A6 * A7], [0.0, -0.5 * A7 * A7]],
                   [[A1, -A6 * A8], [0.0, -0.5 * A8 * A8]]])
    DW = np.array([[A6, A7], [A6, A8]])
    return PiecewiseAffineMap(lambda x: (x[..., 1] < 0.0).astype(int), np.zeros((2, 2)),
                              DV, np.zeros(2), DW,
                              {"kind": "half-planes", "labels": ["upper", "lower"]})


# ---------------------------------------------------------------------------
# fold normalization


@dataclass(frozen=True, eq=False)
class RidgePatch:
    """A fold ``[ac]`` with its quadrilateral and normalized coefficients.

    Attributes
    ----------
    a, b, c, d : ndarray
        Vertices; ``b`` is on the left of ``a -> c`` (upper side in the
        canonical frame).
    length : float
        ``l = |c - a|``.
    A : ndarray
        ``A1..A8`` (``A[0]`` is ``A1``).
    tau : float
        Largest slope in ``(0, 1]`` such that the rhombus with diagonal
        ``[ac]`` and sides of slope ``+-tau`` lies in the quadrilateral.
    rotation : ndarray
        ``R`` with ``R e1 = (c - a)/l``; canonical coordinates are
        ``y = R^T (x - a)``.
    lam : float
        Skew normalization: the canonical ``V`` is ``R^T (V - V(a)) + lam y^perp``.
    Va, Wa : ndarray, float
        ``V(a)`` and ``W(a)`` of the sharp map.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    length: float
    A: np.ndarray
    tau: float
    rotation: np.ndarray
    lam: float
    Va: np.ndarray
    Wa: float

    def relations(self):
        """Residuals of the zero-strain relations between ``A1..A8``."""
        A1, A2, A3, A4, A5, A6, A7, A8 = self.A
        return np.array([2 * A1 + A6**2, A2 + A6 * A7, A4 + A6 * A8,
                         2 * A3 + A7**2, 2 * A5 + A8**2])

    def to_canonical(self, x):
        return (_points(x) - self.a) @ self.rotation

    def to_dict(self):
        return {"a": self.a.tolist(), "b": self.b.tolist(), "c": self.c.tolist(),
                "d": self.d.tolist(), "length": self.length, "A": self.A.tolist(),
                "tau": self.tau, "lam": self.lam}


def _affine_data(pmap, tri):
    """``V(p0)``, ``DV``, ``W(p0)``, ``DW`` of ``pmap`` on triangle ``tri``, checking affinity."""
    weights = np.array([[1, 1, 1], [4, 1, 1], [1, 4, 1], [1, 1, 4]], dtype=float) / 6.0
    weights /= weights.sum(axis=1, keepdims=True)
    pts = weights @ tri
    F = pmap.evaluate(pts)
    scale = 1.0 + np.max(np.abs(F.DV)) + np.max(np.abs(F.DW))
    spread = max(np.ptp(F.DV, axis=0).max(), np.ptp(F.DW, axis=0).max())
    pred_V = F.V[0] + (pts - pts[0]) @ F.DV[0].T
    pred_W = F.W[0] + (pts - pts[0]) @ F.DW[0]
    if spread > _COMPAT_TOL * scale or not (np.allclose(pred_V, F.V, atol=1e-10)
                                            and np.allclose(pred_W, F.W, atol=1e-10)):
        raise ValueError("map is not affine on a triangle of the quadrilateral")
    strain = F.DV[0] + F.DV[0].T + np.outer(F.DW[0], F.DW[0])
    if np.max(np.abs(strain)) > _COMPAT_TOL * scale:
        raise ValueError("map has nonzero strain on a triangle of the quadrilateral")
    return pts[0], F.V[0], F.DV[0], F.W[0], F.DW[0]


def _rhombus_slope(p, length):
    """Largest slope allowed by an off-fold vertex ``p`` (canonical, ``p[1] > 0``)."""
    slopes = [1.0]
    if p[0] > 0.0:
        slopes.append(p[1] / p[0])
    if p[0] < length:
        slopes.append(p[1] / (length - p[0]))
    return min(slopes)


def fold_coeffs(pmap, quad):
    """Normalize a sharp fold and extract ``A1..A8``.

    Parameters
    ----------
    pmap : PlanarMap
        Affine with zero strain on the triangles ``abc`` and ``acd``.
    quad : array_like, shape (4, 2)
        Vertices ``a, b, c, d``; ``[ac]`` is the fold.  If ``b`` lies on the
        right of ``a -> c`` the roles of ``b`` and ``d`` are swapped.

    Returns
    -------
    RidgePatch

    Raises
    ------
    ValueError
        If ``b`` and ``d`` lie on the same side of the fold, the map is not
        affine with zero strain on both triangles, or ``V`` or ``W`` are
        discontinuous across the fold.
    """
    a, b, c, d = np.asarray(quad, dtype=float).reshape(4, 2)
    length = float(np.hypot(*(c - a)))
    if length == 0.0:
        raise ValueError("degenerate quadrilateral: a == c")
    R = _rotation((c - a) / length)
    yb, yd = (b - a) @ R, (d - a) @ R
    if yb[1] * yd[1] >= 0.0:
        raise ValueError("degenerate quadrilateral: b and d are not on opposite sides of [ac]")
    if yb[1] < 0.0:
        b, d, yb, yd = d, b, yd, yb
    p_up, V_up, DV_up, W_up, DW_up = _affine_data(pmap, np.array([a, b, c]))
    p_lo, V_lo, DV_lo, W_lo, DW_lo = _affine_data(pmap, np.array([a, c, d]))
    Va = V_up + DV_up @ (a - p_up)
    Wa = float(W_up + DW_up @ (a - p_up))
    e = R[:, 0]
    scale = 1.0 + np.abs(DV_up).max() + np.abs(DW_up).max()
    jump_V = np.abs(Va - V_lo - DV_lo @ (a - p_lo)).max() + np.abs((DV_up - DV_lo) @ e).max()
    jump_W = abs(Wa - W_lo - DW_lo @ (a - p_lo)) + abs((DW_up - DW_lo) @ e)
    if jump_V > _COMPAT_TOL * scale or jump_W > _COMPAT_TOL * scale:
        raise ValueError("V or W is discontinuous across the fold")
    DVc_up, DVc_lo = R.T @ DV_up @ R, R.T @ DV_lo @ R
    dw_up, dw_lo = R.T @ DW_up, R.T @ DW_lo
    lam = -DVc_up[1, 0]
    DVc_up = DVc_up + lam * _J
    DVc_lo = DVc_lo + lam * _J
    A = np.array([DVc_up[0, 0], DVc_up[0, 1], DVc_up[1, 1], DVc_lo[0, 1], DVc_lo[1, 1],
                  dw_up[0], dw_up[1], dw_lo[1]])
    yd_up = np.array([yd[0], -yd[1]])
    tau = min(_rhombus_slope(yb, length), _rhombus_slope(yd_up, length))
    return RidgePatch(a, b, c, d, length, A, float(tau), R, float(lam), Va, Wa)


# ---------------------------------------------------------------------------
# fold profiles


def _kernel(t, nu=0):
    """Even kernel on ``(-1/8, 1/8)``: ``4 smoothstep'(4t + 1/2)`` and derivatives."""
    return 4.0 ** (nu + 1) * smoothstep(4.0 * np.asarray(t, dtype=float) + 0.5, nu + 1)


def _kernel_cdf(t):
    return smoothstep(4.0 * np.asarray(t, dtype=float) + 0.5)


def _kernel_ramp(t):
    """``int_{-inf}^t cdf``; equals ``max(t, 0)`` outside the support."""
    t = np.asarray(t, dtype=float)
    k = KERNEL_HALFWIDTH
    inner = running_integral(_kernel_cdf, np.clip(t, -k, k), -k, -k, k)
    return np.where(t >= k, t, np.where(t <= -k, 0.0, inner))


@lru_cache(maxsize=None)
def _kernel_moments():
    k = KERNEL_HALFWIDTH
    return (panel_integral(lambda t: _kernel(t) ** 2, -k, k),
            panel_integral(lambda t: _kernel(t, 1) ** 2, -k, k))


class FoldProfile:
    """Profiles ``gamma2, gamma3`` on ``[-1, 1]`` and their auxiliaries.

    ``gamma3 = phi * g + lam phi`` where ``g(t) = A8 t + (A7 - A8) max(t, 0)``
    and ``phi`` is an even kernel supported in ``(-1/8, 1/8)``;
    ``gamma2(t) = A8^2/2 - 1/2 int_{-1}^t gamma3'^2``.  Derived quantities:
    ``eta_i = gamma_i - t gamma_i'``, ``omega = int_{-1}^t (eta2 + gamma3' eta3)``
    and ``xi = t omega' - omega``.  Integrating by parts with
    ``2 gamma2' + gamma3'^2 = 0`` gives ``omega = t gamma2 + gamma3^2 / 2``, which
    is how ``omega`` is evaluated.

    Methods take ``t`` and a derivative order ``nu``.
    """

    def __init__(self, A7, A8, lam):
        self.A7, self.A8, self.lam = float(A7), float(A8), float(lam)
        k = KERNEL_HALFWIDTH
        self._g2_right = float(self._gamma2_inner(np.array(k)))
        self.gamma3_profile = SmoothProfile(
            lambda t: self.gamma3(t), lambda t: self.gamma3(t, 1), lambda t: self.gamma3(t, 2),
            -1.0, 1.0, breaks=(-k, k), params={"A7": self.A7, "A8": self.A8, "lam": self.lam})
        self.gamma2_profile = SmoothProfile(
            lambda t: self.gamma2(t), lambda t: self.gamma2(t, 1), lambda t: self.gamma2(t, 2),
            -1.0, 1.0, breaks=(-k, k), params={"A7": self.A7, "A8": self.A8, "lam": self.lam})

    def gamma3(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        dl = self.A7 - self.A8
        if nu == 0:
            return self.A8 * t + dl * _kernel_ramp(t) + self.lam * _kernel(t)
        if nu == 1:
            return self.A8 + dl * _kernel_cdf(t) + self.lam * _kernel(t, 1)
        if nu == 2:
            return dl * _kernel(t) + self.lam * _kernel(t, 2)
        raise ValueError("nu must be 0, 1 or 2")

    def _gamma2_inner(self, t):
        k = KERNEL_HALFWIDTH
        sq = running_integral(lambda s: self.gamma3(s, 1) ** 2, np.clip(t, -k, k), -k, -k, k)
        return self.A8**2 * k / 2.0 - 0.5 * sq

    def gamma2(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if nu == 0:
            k = KERNEL_HALFWIDTH
            left = -0.5 * self.A8**2 * t
            right = self._g2_right - 0.5 * self.A7**2 * (t - k)
            inner = self._gamma2_inner(t)
            return np.where(t <= -k, left, np.where(t >= k, right, inner))
        if nu == 1:
            return -0.5 * self.gamma3(t, 1) ** 2
        if nu == 2:
            return -self.gamma3(t, 1) * self.gamma3(t, 2)
        raise ValueError("nu must be 0, 1 or 2")

    def eta2(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if nu == 0:
            return self.gamma2(t) - t * self.gamma2(t, 1)
        return -t * self.gamma2(t, 2)

    def eta3(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if nu == 0:
            return self.gamma3(t) - t * self.gamma3(t, 1)
        return -t * self.gamma3(t, 2)

    def omega(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if nu == 0:
            return t * self.gamma2(t) + 0.5 * self.gamma3(t) ** 2
        if nu == 1:
            return self.eta2(t) + self.gamma3(t, 1) * self.eta3(t)
        return (self.eta2(t, 1) + self.gamma3(t, 2) * self.eta3(t)
                + self.gamma3(t, 1) * self.eta3(t, 1))

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return t * self.omega(t, 1) - self.omega(t)

    def table(self, t):
        """All quantities needed by the ridge fields at ``t``, computed once."""
        t = np.asarray(t, dtype=float)
        g3, g3p, g3pp = self.gamma3(t), self.gamma3(t, 1), self.gamma3(t, 2)
        g2, g2p = self.gamma2(t), -0.5 * g3p**2
        eta2, eta3 = g2 - t * g2p, g3 - t * g3p
        eta3p = -t * g3pp
        om = t * g2 + 0.5 * g3**2
        omp = eta2 + g3p * eta3
        return {"g3": g3, "g3p": g3p, "g3pp": g3pp, "g2": g2, "g2p": g2p,
                "eta2": eta2, "eta3": eta3, "eta3p": eta3p, "omega": om,
                "omegap": omp, "xi": t * omp - om}


def gamma_profiles(A7, A8):
    """Fold profiles with end slopes ``A7`` (``t > 0``) and ``A8`` (``t < 0``).

    The amplitude ``lam`` of the added kernel restores
    ``int_{-1}^1 gamma3'^2 = A7^2 + A8^2``, a quadratic in ``lam`` whose root of
    smaller magnitude is taken.

    Raises
    ------
    ArithmeticError
        If the quadratic has no real root.
    """
    A7, A8 = float(A7), float(A8)
    dl = A7 - A8
    if dl == 0.0:
        return FoldProfile(A7, A8, 0.0)
    k = KERNEL_HALFWIDTH
    m0, m1 = _kernel_moments()
    # int (A8 + dl Phi + lam phi')^2: the cross term integrates by parts to -dl int phi^2
    qa = m1
    qb = -2.0 * dl * m0
    qc = (panel_integral(lambda t: (A8 + dl * _kernel_cdf(t)) ** 2, -k, k)
          - 2.0 * k * (A7**2 + A8**2) / 2.0)
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        if disc < -1e-14 * qb * qb:
            raise ArithmeticError("no real kernel amplitude for the fold profile")
        disc = 0.0
    q = -0.5 * (qb + np.copysign(np.sqrt(disc), qb))
    lam = qc / q if q != 0.0 else 0.0
    return FoldProfile(A7, A8, lam)


# ---------------------------------------------------------------------------
# width profile


def width_profile(tau, h, l):
    """Ridge half width ``f`` on ``[0, l]``.

    ``f = f0(x) f0(l - x) / (f0(x) + f0(l - x))`` with
    ``f0(x) = tau h^(1/3) (h + x)^(2/3) - tau h``.

    Raises
    ------
    ValueError
        Unless ``0 < h < l/8`` and ``0 < tau <= 1``.
    """
    h, l, tau = float(h), float(l), float(tau)
    if not (0.0 < h < l / 8.0):
        raise ValueError(f"width profile needs 0 < h < l/8 (h={h}, l={l})")
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    c = tau * h ** (1.0 / 3.0)

    def f0(x, nu=0):
        s = h + x
        if nu == 0:
            # tau h ((1 + x/h)^(2/3) - 1) without cancellation near x = 0
            return tau * h * np.expm1((2.0 / 3.0) * np.log1p(np.asarray(x) / h))
        if nu == 1:
            return (2.0 / 3.0) * c * s ** (-1.0 / 3.0)
        return -(2.0 / 9.0) * c * s ** (-4.0 / 3.0)

    def parts(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, l)
        a, b = f0(x), f0(l - x)
        return x, a, b, a + b

    def value(x):
        x, a, b, s = parts(x)
        return a * b / s

    def d1(x):
        x, a, b, s = parts(x)
        da, db = f0(x, 1), -f0(l - x, 1)
        return (da * b * b + a * a * db) / s**2

    def d2(x):
        x, a, b, s = parts(x)
        da, db = f0(x, 1), -f0(l - x, 1)
        dda, ddb = f0(x, 2), f0(l - x, 2)
        num = da * b * b + a * a * db
        dnum = dda * b * b + 2.0 * da * b * db + 2.0 * a * da * db + a * a * ddb
        return dnum / s**2 - 2.0 * num * (da + db) / s**3

    prof = SmoothProfile(value, d1, d2, 0.0, l,
                         params={"tau": tau, "h": h, "l": l, "kind": "soft-min"})
    object.__setattr__(prof, "f0", f0)
    return prof


# ---------------------------------------------------------------------------
# ridge fields


class RidgeMap(PlanarMap):
    """Smoothed fold on a quadrilateral; the sharp fold outside the strip."""

    def __init__(self, patch, profile, f, h):
        self.patch, self.profile, self.f, self.h = patch, profile, f, float(h)
        A1, A2, A3, A4, A5, A6, A7, A8 = patch.A
        self._DV = np.array([[[A1, A2], [0.0, A3]], [[A1, A4], [0.0, A5]]])
        self._DW = np.array([[A6, A7], [A6, A8]])
        self.regions = {"kind": "strip", "quad": [patch.a.tolist(), patch.b.tolist(),
                                                  patch.c.tolist(), patch.d.tolist()]}

    def canonical(self, y):
        """Fields in the canonical frame (without the skew normalization)."""
        y = _points(y)
        side = (y[..., 1] < 0.0).astype(int)
        DV = self._DV[side].copy()
        DW = self._DW[side].copy()
        V = np.einsum("...ij,...j->...i", DV, y)
        W = np.sum(DW * y, axis=-1)
        D2W = np.zeros(y.shape[:-1] + (2, 2))
        l = self.patch.length
        y1 = np.clip(y[..., 0], 0.0, l)
        fy = self.f(y1)
        strip = (y[..., 0] > 0.0) & (y[..., 0] < l) & (np.abs(y[..., 1]) < fy)
        if np.any(strip):
            A1, A6 = self.patch.A[0], self.patch.A[5]
            x1, x2 = y[strip, 0], y[strip, 1]
            f, fp, fpp = fy[strip], self.f(x1, 1), self.f(x1, 2)
            t = x2 / f
            P = self.profile.table(t)
            W[strip] = A6 * x1 + f * P["g3"]
            DW[strip] = np.stack([A6 + fp * P["eta3"], P["g3p"]], axis=-1)
            w11 = fpp * P["eta3"] - t * fp**2 * P["eta3p"] / f
            w12 = fp * P["eta3p"] / f
            w22 = P["g3pp"] / f
            D2W[strip] = np.stack([np.stack([w11, w12], -1), np.stack([w12, w22], -1)], -2)
            beta = -f * fp * P["omega"]
            V[strip] = np.stack([A1 * x1 - A6 * f * P["g3"] + beta, f * P["g2"]], axis=-1)
            v11 = (A1 - A6 * fp * P["eta3"] - (fp**2 + f * fpp) * P["omega"]
                   + t * fp**2 * P["omegap"])
            v12 = -A6 * P["g3p"] - fp * P["omegap"]
            DV[strip] = np.stack([np.stack([v11, v12], -1),
                                  np.stack([fp * P["eta2"], P["g2p"]], -1)], -2)
        return Fields(V, DV, W, DW, D2W), strip

    def evaluate(self, x):
        p = self.patch
        R = p.rotation
        y = p.to_canonical(x)
        F, _ = self.canonical(y)
        lamJ = p.lam * _J
        V = (F.V - y @ lamJ.T) @ R.T + p.Va
        DV = R @ (F.DV - lamJ) @ R.T
        W = F.W + p.Wa
        DW = F.DW @ R.T
        D2W = R @ F.D2W @ R.T
        return Fields(V, DV, W, DW, D2W)

    def longitudinal_strain(self, y1, t):
        """Closed form ``2 (f'^2 xi - f f'' omega) + f'^2 eta3^2`` of the canonical ``e11``."""
        f, fp, fpp = self.f(y1), self.f(y1, 1), self.f(y1, 2)
        P = self.profile.table(t)
        return 2.0 * (fp**2 * P["xi"] - f * fpp * P["omega"]) + fp**2 * P["eta3"] ** 2


class _SkewShifted(PlanarMap):
    """``V + coef x^perp`` on ``{x2 > 0}``; everything else unchanged."""

    def __init__(self, base, coef):
        self.base, self.coef = base, float(coef)
        self.regions = dict(base.regions, skew_shift=self.coef)

    def evaluate(self, x):
        x = _points(x)
        F = self.base.evaluate(x)
        up = (x[..., 1] > 0.0)[..., None]
        V = F.V + np.where(up, self.coef * (x @ _J.T), 0.0)
        DV = F.DV + np.where(up[..., None], self.coef * _J, 0.0)
        return Fields(V, DV, F.W, F.DW, F.D2W)


def _in_quad(x, patch):
    """Points in the closed triangles ``abc`` or ``acd``."""
    def in_tri(p, q, r):
        def cross(u, v, w):
            return (v[0] - u[0]) * (w[..., 1] - u[1]) - (v[1] - u[1]) * (w[..., 0] - u[0])
        s1, s2, s3 = cross(p, q, x), cross(q, r, x), cross(r, p, x)
        eps = 1e-14
        return ((s1 >= -eps) & (s2 >= -eps) & (s3 >= -eps)) | (
            (s1 <= eps) & (s2 <= eps) & (s3 <= eps))
    return in_tri(patch.a, patch.b, patch.c) | in_tri(patch.a, patch.c, patch.d)


def ridge_fields(patch, profile, f, h):
    """Smooth ridge replacing the fold of ``patch``.

    In the canonical frame, on the strip ``|y2| < f(y1)`` with ``t = y2/f``::

        V1 = A1 y1 - A6 f gamma3(t) - f f' omega(t)
        V2 = f gamma2(t)
        W  = A6 y1 + f gamma3(t)

    and the sharp fold elsewhere.  The shear and transverse strains vanish
    identically and the longitudinal strain is
    ``2 (f'^2 xi - f f'' omega) + f'^2 eta3^2``.

    Raises
    ------
    ValueError
        If the profile does not match the patch, ``h >= l/8``, or the strip
        leaves the quadrilateral.
    """
    check_thickness(h)
    A7, A8 = patch.A[6], patch.A[7]
    if not (np.isclose(profile.A7, A7, rtol=1e-12, atol=1e-14)
            and np.isclose(profile.A8, A8, rtol=1e-12, atol=1e-14)):
        raise ValueError("fold profile and patch have different end slopes")
    if not h < patch.length / 8.0:
        raise ValueError(f"ridge needs h < l/8 (h={h}, l={patch.length})")
    l = patch.length
    if not np.isclose(f.params.get("l", l), l, rtol=1e-12):
        raise ValueError("width profile length differs from the fold length")
    xs = np.linspace(0.0, l, 2001)[1:-1]
    if np.any(f(xs) > patch.tau * np.minimum(xs, l - xs) * (1.0 + 1e-12)):
        raise ValueError("ridge strip leaves the quadrilateral (rhombus condition violated)")
    return RidgeMap(patch, profile, f, h)


# ---------------------------------------------------------------------------
# patch energies


_GAUSS_CACHE = {}


def _gauss(n):
    if n not in _GAUSS_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GAUSS_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GAUSS_CACHE[n]


def _panel_nodes(edges, n):
    gx, gw = _gauss(n)
    a, w = edges[:-1, None], np.diff(edges)[:, None]
    return (a + w * gx).ravel(), (w * gw).ravel()


@dataclass(frozen=True)
class PatchEnergy:
    """Membrane and bending energy of one ridge patch.

    ``rel_change`` compares the two quadrature levels; ``converged`` is false
    when it exceeds 1%.
    """

    membrane: float
    bending: float
    rel_change: float
    converged: bool
    x_panels: int
    t_panels: int

    @property
    def total(self):
        return self.membrane + self.bending

    def to_dict(self):
        return {"membrane": self.membrane, "bending": self.bending, "total": self.total,
                "rel_change": self.rel_change, "converged": self.converged,
                "x_panels": self.x_panels, "t_panels": self.t_panels}


def _x1_edges(h, l, n_half):
    """Panels on ``[h', l - h']`` geometric in ``h + x1`` toward both ends."""
    hp = h / np.sqrt(2.0)
    z = np.geomspace(h + hp, h + 0.5 * l, n_half + 1) - h
    z[0], z[-1] = hp, 0.5 * l
    return np.concatenate([z, (l - z[::-1])[1:]])


def _strip_integrals(fields, h, n_half, t_panels, quad_points):
    patch, prof, f = fields.patch, fields.profile, fields.f
    l = patch.length
    x1, wx = _panel_nodes(_x1_edges(h, l, n_half), quad_points)
    k = KERNEL_HALFWIDTH
    t, wt = _panel_nodes(np.linspace(-k, k, t_panels + 1), quad_points)
    P = prof.table(t)
    fx, fp, fpp = f(x1)[:, None], f(x1, 1)[:, None], f(x1, 2)[:, None]
    e11 = 2.0 * (fp**2 * P["xi"] - fx * fpp * P["omega"]) + fp**2 * P["eta3"] ** 2
    w11 = fpp * P["eta3"] - t * fp**2 * P["eta3p"] / fx
    w12 = fp * P["eta3p"] / fx
    w22 = P["g3pp"] / fx
    jac = (wx[:, None] * fx) * wt
    membrane = float(np.sum(jac * e11**2))
    bending = float(h * h * np.sum(jac * (w11**2 + 2.0 * w12**2 + w22**2)))
    return membrane, bending


def patch_energy(fields, patch, h, quad_points=8, refine=1):
    """Energy of the ridge on ``patch`` minus the balls ``B_h(a)``, ``B_h(c)``.

    Integrates over ``h/sqrt(2) <= y1 <= l - h/sqrt(2)`` in strip coordinates
    ``(y1, t = y2/f(y1))``; outside the strip the integrand vanishes.  The
    ``y1`` panels are geometric in ``h + y1`` with first panel at most ``h``;
    ``t`` uses panels on the kernel support.  Both are evaluated at two
    levels (``refine`` and ``2 refine`` times the base panel counts).

    Parameters
    ----------
    fields : RidgeMap
        Output of :func:`ridge_fields`.
    patch : RidgePatch
    h : float
    quad_points : int, default 8
        Gauss points per panel in each direction.
    refine : int, default 1
        Panel multiplier of the coarser level.

    Returns
    -------
    PatchEnergy
        Values of the finer level.
    """
    check_thickness(h)
    if not isinstance(fields, RidgeMap) or fields.patch is not patch:
        raise ValueError("fields must be the ridge_fields of this patch")
    l = patch.length
    hp = h / np.sqrt(2.0)
    ratio = 1.0 + h / (h + hp)
    n_half = max(8, int(np.ceil(np.log((h + 0.5 * l) / (h + hp)) / np.log(ratio)))) * refine
    t_panels = 8 * refine
    coarse = _strip_integrals(fields, h, n_half, t_panels, quad_points)
    fine = _strip_integrals(fields, h, 2 * n_half, 2 * t_panels, quad_points)
    tot_c, tot_f = sum(coarse), sum(fine)
    rel = abs(tot_f - tot_c) / tot_f if tot_f > 0.0 else abs(tot_f - tot_c)
    converged = bool(rel <= 0.01)
    if not converged:
        warnings.warn(f"patch quadrature changed by {rel:.2%} between levels", RuntimeWarning,
                      stacklevel=2)
    return PatchEnergy(fine[0], fine[1], float(rel), converged, 4 * n_half, 2 * t_panels)


# ---------------------------------------------------------------------------
# vertex smoothing


class VertexSmoothedMap(PlanarMap):
    """``W~ = psi (W * phi_h) + (1 - psi) W`` on ``B_h(center)``; ``V`` unchanged.

    ``phi_h`` is a radial bump of radius ``h`` and ``psi`` a radial cutoff that
    is 1 on ``B_{h/2}`` and 0 outside ``B_h``.  The convolutions of ``W``,
    ``DW`` and (for ``D^2 W~``) ``DW * D phi_h`` are computed on a uniform grid
    and interpolated linearly; ``psi`` and the unsmoothed fields are exact.
    """

    def __init__(self, base, center, h, spacing=None):
        self.base = base
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        dx = self.h / 32.0 if spacing is None else float(spacing)
        m = int(np.ceil(self.h / dx))
        dx = self.h / m
        self.spacing = dx
        # base samples on the box of half width 2h, kernel on half width h
        ks = np.arange(-2 * m, 2 * m + 1) * dx
        X = self.center + np.stack(np.meshgrid(ks, ks, indexing="ij"), axis=-1)
        F = base.evaluate(X)
        kk = np.arange(-m, m + 1) * dx
        K = np.stack(np.meshgrid(kk, kk, indexing="ij"), axis=-1)
        rho = np.hypot(K[..., 0], K[..., 1]) / self.h
        phi = bump(rho)
        norm = 1.0 / (phi.sum() * dx * dx)
        phi *= norm
        dphi = norm * bump(rho, 1) / self.h
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[..., None] > 0, K / (rho[..., None] * self.h), 0.0)
        grad_phi = dphi[..., None] * unit
        area = dx * dx
        # fftconvolve flips the kernel; phi is even and grad_phi odd
        conv = lambda a, k: fftconvolve(a, k, mode="valid") * area  # noqa: E731
        cW = conv(F.W, phi)
        cDW = np.stack([conv(F.DW[..., i], phi) for i in range(2)], axis=-1)
        cD2W = np.stack([np.stack([conv(F.DW[..., i], grad_phi[..., j]) for j in range(2)],
                                  axis=-1) for i in range(2)], axis=-2)
        self._axis = kk
        grid = (kk, kk)
        self._interp = [RegularGridInterpolator(grid, a, bounds_error=False, fill_value=None)
                        for a in (cW, cDW, cD2W)]
        self.regions = dict(base.regions, vertex=self.center.tolist(), radius=self.h)

    def cutoff(self, x):
        """``psi``, ``D psi``, ``D^2 psi`` at ``x``."""
        r = _points(x) - self.center
        rho = np.hypot(r[..., 0], r[..., 1])
        s = 2.0 * rho / self.h - 1.0
        psi = 1.0 - smoothstep(s)
        d1 = -smoothstep(s, 1) * 2.0 / self.h
        d2 = -smoothstep(s, 2) * 4.0 / self.h**2
        safe = np.where(rho > 0, rho, 1.0)
        n = np.where((rho > 0)[..., None], r / safe[..., None], 0.0)
        nn = _outer(n, n)
        Dpsi = d1[..., None] * n
        D2psi = d2[..., None, None] * nn + (d1 / safe)[..., None, None] * (np.eye(2) - nn)
        return psi, Dpsi, D2psi

    def evaluate(self, x):
        x = _points(x)
        F = self.base.evaluate(x)
        r = x - self.center
        inside = np.hypot(r[..., 0], r[..., 1]) < self.h
        if not np.any(inside):
            return F
        xi = x[inside]
        ri = xi - self.center
        cW, cDW, cD2W = (f(ri) for f in self._interp)
        psi, Dpsi, D2psi = self.cutoff(xi)
        W0, DW0, D2W0 = F.W[inside], F.DW[inside], F.D2W[inside]
        gap, dgap = cW - W0, cDW - DW0
        W = F.W.copy()
        DW = F.DW.copy()
        D2W = F.D2W.copy()
        W[inside] = W0 + psi * gap
        DW[inside] = DW0 + psi[:, None] * dgap + Dpsi * gap[:, None]
        D2W[inside] = (D2W0 + psi[:, None, None] * (cD2W - D2W0) + _outer(Dpsi, dgap)
                       + _outer(dgap, Dpsi) + D2psi * gap[:, None, None])
        return Fields(F.V, F.DV, W, DW, D2W)

    def grid_points(self, clip_unit_disc=False):
        """Grid nodes in ``B_h(center)`` (optionally also in the unit disc) and their weight."""
        kk = self._axis
        X = self.center + np.stack(np.meshgrid(kk, kk, indexing="ij"), axis=-1).reshape(-1, 2)
        keep = np.hypot(*(X - self.center).T) < self.h
        if clip_unit_disc:
            keep &= np.hypot(X[:, 0], X[:, 1]) < 1.0
        return X[keep], self.spacing**2


def vertex_smooth(fields, center, h, spacing=None):
    """Mollify ``W`` of ``fields`` on ``B_h(center)``.

    Parameters
    ----------
    fields : PlanarMap
    center : array_like, shape (2,)
    h : float
        Radius of the ball and of the mollifier.
    spacing : float, optional
        Grid spacing of the discrete convolution, ``h/32`` by default.

    Returns
    -------
    VertexSmoothedMap
    """
    if not h > 0.0:
        raise ValueError(f"radius must be positive, got {h}")
    return VertexSmoothedMap(fields, center, h, spacing)


def ball_energy(smoothed, h, clip_unit_disc=True):
    """Membrane and bending energy of ``smoothed`` on its ball (grid-cell sum)."""
    X, area = smoothed.grid_points(clip_unit_disc)
    F = smoothed.evaluate(X)
    e = F.DV + np.swapaxes(F.DV, -1, -2) + _outer(F.DW, F.DW)
    membrane = float(np.sum(e**2) * area)
    bending = float(h * h * np.sum(F.D2W**2) * area)
    return membrane, bending


# ---------------------------------------------------------------------------
# pyramid assembly


class AssembledMap(PlanarMap):
    """A base map overridden by ridge maps on their quadrilaterals."""

    def __init__(self, base, pieces):
        self.base = base
        self.pieces = list(pieces)
        self.regions = {"kind": "quadrilaterals",
                        "quads": [p.regions.get("quad") for p in self.pieces]}

    def evaluate(self, x):
        x = _points(x)
        F = self.base.evaluate(x)
        out = [a.copy() for a in F]
        free = np.ones(x.shape[:-1], dtype=bool)
        for piece in self.pieces:
            patch = piece.patch if hasattr(piece, "patch") else piece.base.patch
            mask = free & _in_quad(x, patch)
            if np.any(mask):
                G = piece.evaluate(x[mask])
                for dst, src in zip(out, G):
                    dst[mask] = src
                free &= ~mask
        return Fields(*out)


# incenter of the inner face (triangle 0, e1/2, e2/2) and center of the outer
# face (incenter of the trapezoid e1/2, e1, e2, e2/2), first quadrant
_INNER_CENTER = 0.25 / (1.0 + np.sqrt(0.5))
_OUTER_CENTER = 0.375


def pyramid_quads():
    """The 12 quadrilaterals ``(name, a, b, c, d, crosses_sigma)`` of the pyramid.

    Off-fold vertices are the centers of the adjacent faces: the incenter of
    the inner triangle and ``(3/8, 3/8)`` (up to symmetry) for the outer
    face.  Axis folds run outward from ``0`` and from ``e_i/2``.
    """
    quads = []
    signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    p = [np.array(s, dtype=float) * _INNER_CENTER for s in signs]
    q = [np.array(s, dtype=float) * _OUTER_CENTER for s in signs]
    axes = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([-1.0, 0.0]),
            np.array([0.0, -1.0])]
    # faces adjacent to axis k are quadrants k-1 and k (mod 4) in signs order
    for k, e in enumerate(axes):
        left, right = (k - 1) % 4, k
        sigma = k == 2
        quads.append((f"inner-axis-{k}", 0.0 * e, p[right], 0.5 * e, p[left], sigma))
        quads.append((f"outer-axis-{k}", 0.5 * e, q[right], e, q[left], sigma))
    for k in range(4):
        a, c = 0.5 * axes[k], 0.5 * axes[(k + 1) % 4]
        quads.append((f"diamond-{k}", a, p[k], c, q[k], False))
    return quads


def pyramid_vertices():
    """The 9 endpoints of the fold segments."""
    pts = [np.zeros(2)]
    for e in ([1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]):
        pts += [0.5 * np.array(e), np.array(e)]
    return pts


@dataclass
class PyramidEnergy:
    """Energy of the smoothed pyramid with per-patch and per-vertex parts."""

    h: float
    total: float
    membrane: float
    bending: float
    patches: list = field(default_factory=list)
    vertices: list = field(default_factory=list)
    field: PlanarMap | None = None

    def to_dict(self):
        return {"h": self.h, "total": self.total, "membrane": self.membrane,
                "bending": self.bending, "patches": self.patches, "vertices": self.vertices}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def pyramid_energy(h, quad_points=8, refine=1, spacing=None):
    """Energy of the smoothed inverted pyramid on the unit disc.

    Parameters
    ----------
    h : float
        Thickness; every fold needs ``h < l/8``, i.e. ``h < 1/16``.
    quad_points, refine : int
        Passed to :func:`patch_energy`.
    spacing : float, optional
        Grid spacing of the vertex mollification (``h/32`` by default).

    Returns
    -------
    PyramidEnergy
        ``total`` is the sum of the 12 patch energies and the 9 vertex-ball
        energies; the affine remainder contributes nothing.  ``field`` is the
        smoothed map.
    """
    check_thickness(h)
    if not h < 1.0 / 16.0:
        raise ValueError(f"pyramid construction needs h < 1/16, got {h}")
    pyr = sharp_pyramid()
    corrected = sigma_corrected(pyr)
    coef = -pyr.regions["sigma_correction"][0]
    profiles = {}
    ridges, patches = [], []
    for name, a, b, c, d, sigma in pyramid_quads():
        patch = fold_coeffs(corrected if sigma else pyr, [a, b, c, d])
        key = (round(patch.A[6], 14), round(patch.A[7], 14))
        if key not in profiles:
            profiles[key] = gamma_profiles(patch.A[6], patch.A[7])
        f = width_profile(patch.tau, h, patch.length)
        rmap = ridge_fields(patch, profiles[key], f, h)
        en = patch_energy(rmap, patch, h, quad_points=quad_points, refine=refine)
        patches.append(dict(name=name, sigma=sigma, tau=patch.tau, length=patch.length,
                            A=patch.A.tolist(), **en.to_dict()))
        ridges.append(_SkewShifted(rmap, coef) if sigma else rmap)
    assembled = AssembledMap(pyr, ridges)
    smoothed = assembled
    vertices = []
    for z in pyramid_vertices():
        vs = vertex_smooth(assembled, z, h, spacing)
        mem, ben = ball_energy(vs, h)
        vertices.append({"center": z.tolist(), "membrane": mem, "bending": ben,
                         "total": mem + ben})
        smoothed = _Chained(smoothed, vs)
    membrane = sum(p["membrane"] for p in patches) + sum(v["membrane"] for v in vertices)
    bending = sum(p["bending"] for p in patches) + sum(v["bending"] for v in vertices)
    return PyramidEnergy(float(h), membrane + bending, membrane, bending, patches, vertices,
                         smoothed)


class _Chained(PlanarMap):
    """``outer`` on its ball, ``inner`` elsewhere (balls are disjoint)."""

    def __init__(self, inner, outer):
        self.inner, self.outer = inner, outer
        self.regions = inner.regions

    def evaluate(self, x):
        x = _points(x)
        F = self.inner.evaluate(x)
        r = x - self.outer.center
        mask = np.hypot(r[..., 0], r[..., 1]) < self.outer.h
        if np.any(mask):
            G = self.outer.evaluate(x[mask])
            F = Fields(*[a.copy() for a in F])
            for dst, src in zip(F, G):
                dst[mask] = src
        return F
