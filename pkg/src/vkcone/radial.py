"""Radially symmetric configurations and the reduced von Karman energy.

A configuration is described by the in-plane displacement ``u`` and the slope
``wp = w'`` as continuous piecewise-linear functions on a graded grid of
``[0, 1]``.  The height ``w`` is the exact running integral of ``wp`` (a
piecewise quadratic), so ``w''`` is piecewise constant.  For such fields the
energy

    E_h(u, w) = int_0^1 u^2/r + r (u' + w'^2 - 1)^2 + h^2 (r w''^2 + w'^2/r) dr

is a polynomial in the nodal values and every integral below is evaluated
exactly (up to round-off) cell by cell:

* terms weighted by ``r`` use 3-point Gauss-Legendre, exact for the degree-5
  integrands that occur;
* terms weighted by ``1/r`` use a 2-point Gauss rule built for the weight
  ``1/r`` on each cell, exact for the quadratic integrands ``u^2`` and
  ``wp^2``.  On the first cell ``u(0) = wp(0) = 0`` so the integrand divided
  by ``r`` is linear and plain Gauss-Legendre is exact there.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ._validation import (
    check_finite_array,
    check_indentation,
    check_nodal,
    check_positive_int,
    check_thickness,
)

DIVERGENCE_LIMIT = 1e12

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)
_GL3_X = 0.5 * (_GL3_X + 1.0)
_GL3_W = 0.5 * _GL3_W
_GL2_X, _GL2_W = np.polynomial.legendre.leggauss(2)
_GL2_X = 0.5 * (_GL2_X + 1.0)
_GL2_W = 0.5 * _GL2_W
_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)
_GL20_X = 0.5 * (_GL20_X + 1.0)
_GL20_W = 0.5 * _GL20_W


@dataclass(frozen=True)
class Params:
    """Thickness ``h`` and indentation ``delta`` (both dimensionless)."""

    h: float
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "h", check_thickness(self.h))
        object.__setattr__(self, "delta", check_indentation(self.delta))


# ---------------------------------------------------------------------------
# grids


def _one_over_r_rule(a, hc):
    """Two-point Gauss rule for the weight ``1/r`` on the cells ``[a, a+hc]``.

    Returns local abscissae in ``[0, 1]`` and weights such that
    ``int_a^b p(r)/r dr = sum_k w_k p(a + hc x_k)`` for cubic ``p``.
    The first cell (``a == 0``) gets Gauss-Legendre weights divided by ``r``.
    """
    n = a.size
    x = np.empty((n, 2))
    w = np.empty((n, 2))
    first = a == 0.0
    rest = ~first
    rho = np.where(rest, a / np.where(hc > 0, hc, 1.0), 1.0)

    # moments m_k = int_0^1 t^k / (rho + t) dt
    m = np.empty((n, 4))
    small = rest & (rho <= 1.0)
    large = rest & (rho > 1.0)
    if np.any(small):
        rs = rho[small]
        mk = np.log1p(1.0 / rs)
        m[small, 0] = mk
        for k in range(1, 4):
            mk = 1.0 / k - rs * mk
            m[small, k] = mk
    if np.any(large):
        rl = rho[large][:, None]
        base = _GL20_W / (rl + _GL20_X)
        for k in range(4):
            m[large, k] = np.sum(base * _GL20_X**k, axis=1)

    mr = m[rest]
    det = mr[:, 0] * mr[:, 2] - mr[:, 1] ** 2
    c0 = (-mr[:, 2] * mr[:, 2] + mr[:, 1] * mr[:, 3]) / det
    c1 = (-mr[:, 0] * mr[:, 3] + mr[:, 1] * mr[:, 2]) / det
    disc = np.sqrt(c1 * c1 - 4.0 * c0)
    # stable quadratic roots
    q = -0.5 * (c1 + np.copysign(disc, c1))
    r1 = q
    r2 = c0 / q
    x1 = np.minimum(r1, r2)
    x2 = np.maximum(r1, r2)
    w2 = (mr[:, 1] - x1 * mr[:, 0]) / (x2 - x1)
    w1 = mr[:, 0] - w2
    x[rest, 0], x[rest, 1] = x1, x2
    w[rest, 0], w[rest, 1] = w1, w2

    if np.any(first):
        x[first] = _GL2_X
        w[first] = _GL2_W / _GL2_X  # hc * w / (hc * x)
    return x, w


@dataclass(frozen=True)
class _Quadrature:
    a: np.ndarray
    hc: np.ndarray
    rq: np.ndarray  # (N, 3) radial Gauss points
    wr: np.ndarray  # (N, 3) weights including the factor r
    xi: np.ndarray  # (N, 2) local points of the 1/r rule
    wi: np.ndarray  # (N, 2) weights of the 1/r rule
    rb: np.ndarray  # (N,) int r dr over the cell


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing nodes ``0 = r_0 < ... < r_N = 1``."""

    nodes: np.ndarray
    grading: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("grid needs at least two nodes")
        if r[0] != 0.0 or r[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1 exactly")
        if not np.all(np.diff(r) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def n_cells(self):
        return self.nodes.size - 1

    @property
    def widths(self):
        return np.diff(self.nodes)

    @cached_property
    def quadrature(self):
        r = self.nodes
        a, b = r[:-1], r[1:]
        hc = b - a
        rq = a[:, None] + hc[:, None] * _GL3_X
        wr = hc[:, None] * _GL3_W * rq
        xi, wi = _one_over_r_rule(a, hc)
        rb = 0.5 * (b - a) * (b + a)
        return _Quadrature(a, hc, rq, wr, xi, wi, rb)

    @cached_property
    def trapezoid_weights(self):
        """Weights ``c`` with ``int_0^1 wp dr = c @ wp`` for piecewise-linear ``wp``."""
        hc = self.widths
        c = np.zeros(self.nodes.size)
        c[:-1] += 0.5 * hc
        c[1:] += 0.5 * hc
        return c

    def cells_in(self, lo, hi):
        """Number of cells entirely inside ``[lo, hi]``."""
        r = self.nodes
        return int(np.sum((r[:-1] >= lo) & (r[1:] <= hi)))


def _spacing(r, w0, q, cap, focus):
    s = np.minimum(np.maximum(w0, (q - 1.0) * r), cap)
    for lo, hi, width in focus:
        dist = np.maximum(0.0, np.maximum(lo - r, r - hi))
        s = np.minimum(s, width + (q - 1.0) * dist)
    return s


def make_grid(n_cells, h, focus=None, first_cell=None):
    """Build a grid graded geometrically towards ``r = 0``.

    The local spacing is ``min(cap, max(h/20, (q - 1) r))``: constant ``h/20``
    next to the origin, geometric growth with ratio ``q`` and a uniform tail of
    width ``cap``.  ``cap`` is chosen so that exactly ``n_cells`` cells fit.

    Parameters
    ----------
    n_cells : int
        Number of cells, at least 16.
    h : float
        Thickness the grid has to resolve.
    focus : sequence of (lo, hi, width), optional
        Extra windows where the spacing may not exceed ``width``; the spacing
        grows geometrically away from each window.
    first_cell : float, optional
        Override for the spacing at the origin (default ``h/20``).

    Raises
    ------
    ValueError
        If ``n_cells`` is too small to put 8 cells inside ``[0, h]``.
    """
    n_cells = check_positive_int(n_cells, "n_cells", minimum=16)
    h = check_thickness(h)
    w0 = h / 20.0 if first_cell is None else float(first_cell)
    q = max(1.05, (1.0 / w0) ** (4.0 / (3.0 * n_cells)))
    focus = [(float(a), float(b), float(w)) for a, b, w in (focus or [])]

    pts = [np.linspace(0.0, 1.0, 20001), np.geomspace(w0 * 1e-2, 1.0, 20001)]
    for lo, hi, width in focus:
        span = max(hi - lo, width)
        pts.append(np.linspace(max(lo - 4 * span, 0.0), min(hi + 4 * span, 1.0), 20001))
    rs = np.unique(np.clip(np.concatenate(pts), 0.0, 1.0))

    def count(cap):
        s = _spacing(rs, w0, q, cap, focus)
        return cumulative_trapezoid(1.0 / s, rs, initial=0.0)

    total_free = count(np.inf)[-1]
    if total_free > n_cells:
        raise ValueError(
            f"n_cells={n_cells} cannot resolve the boundary layer for h={h}: "
            f"at least {int(np.ceil(total_free))} cells are needed"
        )
    lo, hi = np.log(1e-12), np.log(1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if count(np.exp(mid))[-1] > n_cells:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    cap = np.exp(hi)
    m = count(cap)
    m *= n_cells / m[-1]
    nodes = np.interp(np.arange(n_cells + 1, dtype=float), m, rs)
    nodes[0], nodes[-1] = 0.0, 1.0
    grid = Grid(nodes, grading={"h": h, "first_cell": w0, "ratio": q, "cap": cap,
                                "focus": focus})
    if grid.cells_in(0.0, h) < 8:
        raise ValueError(f"n_cells={n_cells} cannot resolve the boundary layer for h={h}")
    return grid


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class RadialField:
    """Nodal values of ``u``, ``w`` and ``wp`` on a grid."""

    grid: Grid
    u: np.ndarray
    w: np.ndarray
    wp: np.ndarray

    def __post_init__(self):
        n = self.grid.nodes.size
        for name in ("u", "w", "wp"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_slopes(cls, grid, u, wp):
        """Build a field whose ``w`` is the exact running integral of ``wp``."""
        wp = np.asarray(wp, dtype=float)
        w = np.concatenate([[0.0], np.cumsum(0.5 * grid.widths * (wp[:-1] + wp[1:]))])
        return cls(grid, u, w, wp)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "u", "w", "wp"])
            for row in zip(self.grid.nodes, self.u, self.w, self.wp):
                writer.writerow([format(v, ".17g") for v in row])

    @classmethod
    def read_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        for col in ("r", "u", "w", "wp"):
            if col not in data.dtype.names:
                raise ValueError(f"field CSV lacks column {col!r}")
        return cls(Grid(data["r"]), data["u"], data["w"], data["wp"])


@dataclass(frozen=True)
class EnergyBreakdown:
    hoop_stretch: float
    radial_stretch: float
    radial_bend: float
    hoop_bend: float
    total: float
    diverged: bool = False

    def to_dict(self):
        return {
            "hoop_stretch": self.hoop_stretch,
            "radial_stretch": self.radial_stretch,
            "radial_bend": self.radial_bend,
            "hoop_bend": self.hoop_bend,
            "total": self.total,
        }

    def to_json(self):
        return json.dumps({k: float(format(v, ".17g")) for k, v in self.to_dict().items()})

    @classmethod
    def from_dict(cls, d):
        return cls(*(float(d[k]) for k in ("hoop_stretch", "radial_stretch",
                                           "radial_bend", "hoop_bend", "total")))


# ---------------------------------------------------------------------------
# energy, gradient and Hessian


def _interp(v, x):
    """Values of the piecewise-linear nodal function ``v`` at local points ``x``."""
    return v[:-1, None] * (1.0 - x) + v[1:, None] * x


def _terms(grid, u, wp, h):
    qd = grid.quadrature
    uq = _interp(u, qd.xi)
    wpi = _interp(wp, qd.xi)
    wpr = _interp(wp, _GL3_X[None, :])
    du = np.diff(u) / qd.hc
    dwp = np.diff(wp) / qd.hc
    res = du[:, None] + wpr * wpr - 1.0
    return qd, uq, wpi, wpr, du, dwp, res


def _check_field(field, params):
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    n = field.grid.nodes.size
    u = check_nodal(field.u, n, "u")
    wp = check_nodal(field.wp, n, "wp")
    check_finite_array(field.w, "w")
    return u, wp


def cell_energies(grid, u, wp, h):
    """Per-cell contributions, shape ``(n_cells, 4)``, columns ordered as in
    :class:`EnergyBreakdown` (no validation)."""
    qd, uq, wpi, wpr, du, dwp, res = _terms(grid, u, wp, h)
    return np.column_stack([
        np.sum(qd.wi * uq * uq, axis=1),
        np.sum(qd.wr * res * res, axis=1),
        h * h * qd.rb * dwp * dwp,
        h * h * np.sum(qd.wi * wpi * wpi, axis=1),
    ])


def energy_parts(grid, u, wp, h):
    """The four energy contributions for raw nodal arrays (no validation)."""
    qd, uq, wpi, wpr, du, dwp, res = _terms(grid, u, wp, h)
    hoop_stretch = float(np.sum(qd.wi * uq * uq))
    radial_stretch = float(np.sum(qd.wr * res * res))
    radial_bend = h * h * float(np.sum(qd.rb * dwp * dwp))
    hoop_bend = h * h * float(np.sum(qd.wi * wpi * wpi))
    return hoop_stretch, radial_stretch, radial_bend, hoop_bend


def energy(field, params):
    """Evaluate the reduced energy of ``field`` for thickness ``params.h``.

    Returns an :class:`EnergyBreakdown`; if any contribution exceeds
    ``DIVERGENCE_LIMIT`` (or overflows) the breakdown is marked ``diverged``.
    """
    u, wp = _check_field(field, params)
    with np.errstate(over="ignore", invalid="ignore"):
        parts = energy_parts(field.grid, u, wp, params.h)
    total = float(sum(parts))
    diverged = not all(np.isfinite(p) and p <= DIVERGENCE_LIMIT for p in parts)
    return EnergyBreakdown(*parts, total=total, diverged=diverged)


def _gradient_arrays(grid, u, wp, h):
    qd, uq, wpi, wpr, du, dwp, res = _terms(grid, u, wp, h)
    n = u.size
    gu = np.zeros(n)
    gw = np.zeros(n)
    # hoop stretch  sum wi uq^2
    t = 2.0 * qd.wi * uq
    gu[:-1] += np.sum(t * (1.0 - qd.xi), axis=1)
    gu[1:] += np.sum(t * qd.xi, axis=1)
    # hoop bend
    t = 2.0 * h * h * qd.wi * wpi
    gw[:-1] += np.sum(t * (1.0 - qd.xi), axis=1)
    gw[1:] += np.sum(t * qd.xi, axis=1)
    # radial stretch  sum wr (du + wp^2 - 1)^2
    t = 2.0 * qd.wr * res
    s = np.sum(t, axis=1) / qd.hc
    gu[:-1] -= s
    gu[1:] += s
    t2 = 2.0 * t * wpr
    gw[:-1] += np.sum(t2 * (1.0 - _GL3_X), axis=1)
    gw[1:] += np.sum(t2 * _GL3_X, axis=1)
    # radial bend  h^2 sum rb dwp^2
    s = 2.0 * h * h * qd.rb * dwp / qd.hc
    gw[:-1] -= s
    gw[1:] += s
    return gu, gw


@dataclass(frozen=True)
class EnergyGradient:
    """Partial derivatives with respect to the nodal ``u`` and ``wp``.

    Entries for the fixed values ``u(0)`` and ``wp(0)`` are zero.
    """

    u: np.ndarray
    wp: np.ndarray

    def free(self):
        """Interleaved free components ``(u_1, wp_1, u_2, wp_2, ...)``."""
        return pack(self.u, self.wp)


def energy_gradient(field, params):
    """Exact gradient of the discrete energy with respect to the free nodal values."""
    u, wp = _check_field(field, params)
    gu, gw = _gradient_arrays(field.grid, u, wp, params.h)
    gu[0] = 0.0
    gw[0] = 0.0
    return EnergyGradient(gu, gw)


def pack(u, wp):
    """Interleave the free nodal values into one vector."""
    x = np.empty(2 * (u.size - 1))
    x[0::2] = u[1:]
    x[1::2] = wp[1:]
    return x


def unpack(x):
    n = x.size // 2
    u = np.concatenate([[0.0], x[0::2]])
    wp = np.concatenate([[0.0], x[1::2]])
    assert u.size == n + 1
    return u, wp


def hessian_banded(grid, u, wp, h, gauss_newton=True):
    """Banded (upper, bandwidth 3) Hessian in the interleaved free variables.

    The exact Hessian contains the term ``4 r res`` from the curvature of
    ``wp^2`` in the residual ``res = u' + wp^2 - 1``.  With ``gauss_newton``
    only its positive part (``res > 0``) is kept, which makes the matrix
    positive definite while retaining the stiffening under tension.
    """
    qd, uq, wpi, wpr, du, dwp, res = _terms(grid, u, wp, h)
    n_cells = grid.n_cells
    loc = np.zeros((n_cells, 4, 4))
    xi = qd.xi
    # hoop stretch on (u_a, u_b)
    ja = 1.0 - xi
    jb = xi
    loc[:, 0, 0] += 2.0 * np.sum(qd.wi * ja * ja, axis=1)
    loc[:, 0, 2] += 2.0 * np.sum(qd.wi * ja * jb, axis=1)
    loc[:, 2, 2] += 2.0 * np.sum(qd.wi * jb * jb, axis=1)
    # hoop bend on (wp_a, wp_b)
    hh = h * h
    loc[:, 1, 1] += 2.0 * hh * np.sum(qd.wi * ja * ja, axis=1)
    loc[:, 1, 3] += 2.0 * hh * np.sum(qd.wi * ja * jb, axis=1)
    loc[:, 3, 3] += 2.0 * hh * np.sum(qd.wi * jb * jb, axis=1)
    # radial stretch
    inv = 1.0 / qd.hc[:, None]
    x3 = _GL3_X[None, :]
    J = [-inv * np.ones_like(wpr), 2.0 * wpr * (1.0 - x3), inv * np.ones_like(wpr), 2.0 * wpr * x3]
    for p in range(4):
        for q in range(p, 4):
            loc[:, p, q] += 2.0 * np.sum(qd.wr * J[p] * J[q], axis=1)
    t = 4.0 * qd.wr * (np.maximum(res, 0.0) if gauss_newton else res)
    loc[:, 1, 1] += np.sum(t * (1.0 - x3) ** 2, axis=1)
    loc[:, 1, 3] += np.sum(t * (1.0 - x3) * x3, axis=1)
    loc[:, 3, 3] += np.sum(t * x3 * x3, axis=1)
    # radial bend
    kb = 2.0 * hh * qd.rb / qd.hc**2
    loc[:, 1, 1] += kb
    loc[:, 1, 3] -= kb
    loc[:, 3, 3] += kb

    ndof = 2 * n_cells
    ab = np.zeros((4, ndof))
    base = 2 * np.arange(n_cells) - 2
    for p in range(4):
        for q in range(p, 4):
            gi = base + p
            gj = base + q
            ok = gi >= 0
            np.add.at(ab, (3 + gi[ok] - gj[ok], gj[ok]), loc[ok, p, q])
    return ab


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    w0_residual: float
    w1_residual: float
    u0: float
    wp0: float
    weighted_norms: dict
    flags: tuple

    @property
    def ok(self):
        return not self.flags

    def max_residual(self):
        return max(self.w0_residual, self.w1_residual)


def check_admissible(field, delta, tol=1e-10):
    """Boundary residuals and weighted norms of a field.

    The weighted norms are the quantities whose finiteness characterizes the
    admissible class: ``u`` in ``L^2(dr/r)``, ``u'`` in ``L^2(r dr)``, ``w'``
    in ``L^2(dr/r)`` and ``w''`` in ``L^2(r dr)``.  A nonzero ``u(0)`` or
    ``wp(0)`` makes the corresponding ``1/r`` integral diverge and is flagged.
    """
    delta = check_indentation(delta)
    grid = field.grid
    u = np.asarray(field.u, float)
    wp = np.asarray(field.wp, float)
    w = np.asarray(field.w, float)
    flags = []
    w0_res = abs(float(w[0]))
    w1_res = abs(float(w[-1]) - (1.0 - delta))
    if w0_res > tol:
        flags.append("w(0) != 0")
    if w1_res > tol:
        flags.append("w(1) != 1 - delta")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(wp)) and np.all(np.isfinite(w))):
        flags.append("non-finite nodal values")
        return AdmissibilityReport(w0_res, w1_res, float(u[0]), float(wp[0]), {}, tuple(flags))

    qd = grid.quadrature
    norms = {}
    if u[0] != 0.0:
        flags.append("u(0) != 0: hoop-stretch weight 1/r diverges")
        norms["u_L2_dr_over_r"] = np.inf
    else:
        norms["u_L2_dr_over_r"] = float(np.sqrt(np.sum(qd.wi * _interp(u, qd.xi) ** 2)))
    if wp[0] != 0.0:
        flags.append("wp(0) != 0: hoop-bend weight 1/r diverges")
        norms["wp_L2_dr_over_r"] = np.inf
    else:
        norms["wp_L2_dr_over_r"] = float(np.sqrt(np.sum(qd.wi * _interp(wp, qd.xi) ** 2)))
    du = np.diff(u) / qd.hc
    dwp = np.diff(wp) / qd.hc
    norms["du_L2_r_dr"] = float(np.sqrt(np.sum(qd.rb * du * du)))
    norms["d2w_L2_r_dr"] = float(np.sqrt(np.sum(qd.rb * dwp * dwp)))
    return AdmissibilityReport(w0_res, w1_res, float(u[0]), float(wp[0]), norms, tuple(flags))
