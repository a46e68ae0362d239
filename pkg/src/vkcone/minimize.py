"""Constrained minimization of the discrete radial energy.

The free variables are the interleaved nodal values ``x = (u_1, wp_1, ...,
u_N, wp_N)``; ``u_0 = wp_0 = 0`` are fixed and ``w(0) = 0`` holds by
construction.  The remaining boundary condition ``w(1) = 1 - delta`` is the
single linear constraint ``a @ x = 1 - delta`` (trapezoid weights on the
``wp`` entries).  Iterates are kept feasible by orthogonal projection.

The descent is a limited-memory BFGS recursion whose initial matrix is the
inverse of the banded exact Hessian (shifted by a multiple of its convexified
diagonal when it is not positive definite), restricted to the constraint
tangent space.  The energy couples scales from ``h/20`` to 1 and the
unpreconditioned problem is far too stiff for plain quasi-Newton updates.

Folds and fronts move by about one cell per iteration, so each start is first
relaxed on a chain of coarser grids (every other node dropped) and prolongated
by linear interpolation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from ._validation import check_positive_int
from .constructions import construct_flatten, construct_invert
from .profiles import mollifier_eta
from .radial import (
    EnergyBreakdown,
    Grid,
    Params,
    RadialField,
    _gradient_arrays,
    energy,
    energy_parts,
    hessian_banded,
    pack,
    unpack,
)

__all__ = ["MinResult", "StartRecord", "initial_set", "minimize", "DEFAULT_SEED"]

DEFAULT_SEED = 0x5EED
MEMORY = 10
ARMIJO_C1 = 1e-4
MAX_BACKTRACK = 60


@dataclass(frozen=True)
class StartRecord:
    """Outcome of one start of the multi-start descent."""

    name: str
    energy: float
    kkt_residual: float
    iterations: int
    converged: bool
    history: tuple = ()


@dataclass(frozen=True, eq=False)
class MinResult:
    """Best configuration found by :func:`minimize`.

    Attributes
    ----------
    field : RadialField
    breakdown : EnergyBreakdown
        Energy of ``field`` re-evaluated from scratch.
    kkt_residual : float
        Max-norm of the projected gradient at ``field``.
    starts : tuple of StartRecord
        One entry per start, in the order of :func:`initial_set`.
    iterations : int
        Iterations used by the winning start.
    converged : bool
    seed : int
    tol : float
        Absolute projected-gradient tolerance that was applied.
    best_start : str
    """

    field: RadialField
    breakdown: EnergyBreakdown
    kkt_residual: float
    starts: tuple
    iterations: int
    converged: bool
    seed: int
    tol: float
    best_start: str = ""

    def to_dict(self):
        return {
            "breakdown": self.breakdown.to_dict(),
            "kkt_residual": self.kkt_residual,
            "starts": [
                {k: v for k, v in dataclasses.asdict(s).items() if k != "history"}
                for s in self.starts
            ],
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "tol": self.tol,
            "best_start": self.best_start,
            "n_cells": self.field.grid.n_cells,
        }


# ---------------------------------------------------------------------------
# feasibility


class _Problem:
    """Energy, gradient and constraint algebra in the free variables."""

    def __init__(self, params, grid):
        self.params = params
        self.grid = grid
        self.h = params.h
        self.target = 1.0 - params.delta
        a = np.zeros(2 * grid.n_cells)
        a[1::2] = grid.trapezoid_weights[1:]
        self.a = a
        self.aa = float(a @ a)
        self.n_evals = 0

    def project(self, x):
        return x - self.a * ((self.a @ x - self.target) / self.aa)

    def tangent(self, v):
        return v - self.a * ((self.a @ v) / self.aa)

    def value(self, x):
        self.n_evals += 1
        u, wp = unpack(x)
        with np.errstate(over="ignore", invalid="ignore"):
            parts = energy_parts(self.grid, u, wp, self.h)
        total = sum(parts)
        return total if np.isfinite(total) else np.inf

    def gradient(self, x):
        u, wp = unpack(x)
        gu, gw = _gradient_arrays(self.grid, u, wp, self.h)
        return pack(gu, gw)

    def preconditioner(self, x):
        """Solver for the regularized Newton system on the tangent space.

        The exact banded Hessian is used when it is positive definite; if not,
        a multiple of the diagonal of its convexified (Gauss-Newton) part is
        added, with the smallest factor in a geometric ladder that makes the
        Cholesky factorization succeed.
        """
        u, wp = unpack(x)
        full = hessian_banded(self.grid, u, wp, self.h, gauss_newton=False)
        gn_diag = hessian_banded(self.grid, u, wp, self.h, gauss_newton=True)[-1]
        factor = None
        for shift in _SHIFTS:
            ab = full.copy()
            ab[-1] += shift * gn_diag
            try:
                factor = cholesky_banded(ab, check_finite=False)
                break
            except np.linalg.LinAlgError:
                continue
        if factor is None:
            return None
        ma = cho_solve_banded((factor, False), self.a, check_finite=False)
        ama = float(self.a @ ma)

        def apply(v):
            mv = cho_solve_banded((factor, False), v, check_finite=False)
            return mv - ma * ((self.a @ mv) / ama)

        return apply


_SHIFTS = (0.0,) + tuple(10.0 ** k for k in range(-10, 3))


def _to_field(grid, x):
    u, wp = unpack(x)
    return RadialField.from_slopes(grid, u, wp)


# ---------------------------------------------------------------------------
# starting configurations


def _smooth_perturbation(grid, rng, amplitude, n_modes=6):
    r = grid.nodes
    k = np.arange(1, n_modes + 1)
    coef = rng.standard_normal(n_modes) / k
    shape = np.sin(np.pi * np.outer(r, k)) @ coef
    shape /= max(np.max(np.abs(shape)), 1e-300)
    return amplitude * shape


def _projected_field(params, grid, u, wp):
    prob = _Problem(params, grid)
    return _to_field(grid, prob.project(pack(np.asarray(u), np.asarray(wp))))


def initial_set(params, grid, seed=DEFAULT_SEED):
    """Admissible starting configurations for the multi-start descent.

    Returns a list of ``(name, RadialField)`` pairs:

    ``flatten``
        the rim-layer construction;
    ``invert``
        the inverted-cap construction (only when ``h <= delta``);
    ``cone``
        the uniformly scaled cone ``wp = (1 - delta) eta(r/h)`` with ``u``
        cancelling the radial strain cell by cell;
    ``perturbed``
        the rim-layer construction plus a random smooth slope perturbation of
        amplitude ``0.1 delta``.

    Each start is projected onto the discrete constraint and carries the
    running integral of its slope as ``w``.
    """
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    if not isinstance(grid, Grid):
        raise TypeError("grid must be a Grid instance")
    starts = []
    flat = construct_flatten(params, grid)
    starts.append(("flatten", _projected_field(params, grid, flat.u, flat.wp)))
    if params.h <= params.delta:
        inv = construct_invert(params, grid)
        starts.append(("invert", _projected_field(params, grid, inv.u, inv.wp)))
    r = grid.nodes
    wp = (1.0 - params.delta) * mollifier_eta()(r / params.h)
    du = 1.0 - 0.5 * (wp[:-1] ** 2 + wp[1:] ** 2)
    u = np.concatenate([[0.0], np.cumsum(du * grid.widths)])
    starts.append(("cone", _projected_field(params, grid, u, wp)))
    rng = np.random.default_rng(seed)
    wp = flat.wp + _smooth_perturbation(grid, rng, 0.1 * params.delta)
    starts.append(("perturbed", _projected_field(params, grid, flat.u, wp)))
    return starts


# ---------------------------------------------------------------------------
# descent


def _two_loop(g, S, Y, rho, apply_h0):
    q = g.copy()
    alpha = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alpha.append(a)
        q -= a * y
    z = apply_h0(q)
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alpha)):
        b = r * (y @ z)
        z += (a - b) * s
    return z


def _descend(prob, x, tol, max_iter, rtol=1e-12):
    """Preconditioned projected L-BFGS from the feasible point ``x``."""
    f = prob.value(x)
    g = prob.tangent(prob.gradient(x))
    kkt = float(np.max(np.abs(g)))
    S, Y, rho = [], [], []
    history = [f]
    it = 0
    converged = False
    while True:
        precond = prob.preconditioner(x)
        apply_h0 = precond if precond is not None else (lambda v: prob.tangent(v))
        d = -_two_loop(g, S, Y, rho, apply_h0)
        d = prob.tangent(d)
        slope = float(g @ d)
        if not slope < 0.0:
            # curvature pairs produced an ascent direction; restart from H0
            S, Y, rho = [], [], []
            d = -prob.tangent(apply_h0(g))
            slope = float(g @ d)
        decrement = -0.5 * slope
        if kkt <= tol and decrement <= rtol * max(abs(f), 1e-300):
            converged = True
            break
        if it >= max_iter or not slope < 0.0:
            break
        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK):
            xn = prob.project(x + step * d)
            fn = prob.value(xn)
            if fn <= f + ARMIJO_C1 * step * slope:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            # no decrease representable in floating point: at a minimum to round-off
            converged = kkt <= tol
            break
        gn = prob.tangent(prob.gradient(xn))
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > MEMORY:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        x, f, g = xn, fn, gn
        kkt = float(np.max(np.abs(g)))
        history.append(f)
    return x, f, kkt, it, converged, tuple(history)


def _nested_grids(grid, coarsest):
    """Grids obtained by dropping every other node, coarse to fine.

    Coarsening stops before the grid would have fewer than ``coarsest``
    cells; every coarse node is a node of ``grid``.
    """
    chain = [(grid, np.arange(grid.nodes.size))]
    while chain[-1][0].n_cells % 2 == 0 and chain[-1][0].n_cells // 2 >= coarsest:
        g, idx = chain[-1]
        idx = idx[::2]
        chain.append((Grid(grid.nodes[idx], grading=dict(grid.grading)), idx))
    return chain[::-1]


def _descend_nested(params, chain, x_fine, tol, max_iter, rtol, problems):
    """Descend on each grid of ``chain`` in turn, prolongating linearly."""
    fine_grid = chain[-1][0]
    u, wp = unpack(x_fine)
    total_it = 0
    x = None
    for level, (g, idx) in enumerate(chain):
        prob = problems[level]
        if x is None:
            x = prob.project(pack(u[idx], wp[idx]))
        else:
            uc, wpc = unpack(x)
            prev = chain[level - 1][0].nodes
            x = prob.project(pack(np.interp(g.nodes, prev, uc), np.interp(g.nodes, prev, wpc)))
        fine = g is fine_grid
        # coarse levels only need the decrement test; the gradient tolerance
        # refers to the cell sizes of the target grid
        x, f, kkt, it, conv, hist = _descend(prob, x, tol if fine else np.inf, max_iter,
                                             rtol if fine else max(rtol, 1e-10))
        total_it += it
    return x, f, kkt, total_it, conv, hist


def minimize(params, grid, tol=None, max_iter=2000, seed=DEFAULT_SEED, rtol=1e-12,
             starts=None, coarsest=512):
    """Minimize the discrete energy over the admissible class.

    Parameters
    ----------
    params : Params
    grid : Grid
    tol : float, optional
        Absolute tolerance on the max-norm of the projected gradient.  The
        default is ``1e-9 * max(1, E)`` with ``E`` the smallest starting
        energy.
    max_iter : int
        Iteration cap per start.
    seed : int
        Seed of the random start.
    rtol : float
        A start is converged once, in addition, the Gauss-Newton decrement
        ``-g.d/2`` falls below ``rtol * E``.  This matters because energies
        can be as small as ``1e-8``.
    starts : list of (name, RadialField), optional
        Custom starting configurations (default :func:`initial_set`).
    coarsest : int
        Each start is first relaxed on nested coarsenings of ``grid`` (every
        other node dropped, down to about ``coarsest`` cells) and prolongated
        back.  Folds and inverted regions travel one cell per iteration or
        so, which makes them cheap to move on coarse grids.  Use a value
        larger than ``grid.n_cells`` to disable.

    Returns
    -------
    MinResult
        The lowest energy over all starts.  Ties within ``1e-12`` are broken
        by the smaller KKT residual and then by the start order.
    """
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    max_iter = check_positive_int(max_iter, "max_iter", minimum=0)
    if tol is not None and not (np.isfinite(tol) and tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    seed = int(seed)
    prob = _Problem(params, grid)
    starts = initial_set(params, grid, seed=seed) if starts is None else list(starts)
    xs = [prob.project(pack(np.asarray(f.u, float), np.asarray(f.wp, float))) for _, f in starts]
    if tol is None:
        e0 = min(prob.value(x) for x in xs)
        tol = 1e-9 * max(1.0, e0)

    chain = _nested_grids(grid, coarsest)
    problems = [_Problem(params, g) for g, _ in chain[:-1]] + [prob]
    records, finals = [], []
    for (name, _), x0 in zip(starts, xs):
        x, f, kkt, it, conv, hist = _descend_nested(params, chain, x0, tol, max_iter, rtol,
                                                    problems)
        records.append(StartRecord(name, float(f), kkt, it, conv, hist))
        finals.append(x)

    order = sorted(
        range(len(records)),
        key=lambda i: (records[i].energy, records[i].kkt_residual, i),
    )
    best = order[0]
    for i in order[1:]:
        # within 1e-12 the smaller residual wins, then the earlier start
        if abs(records[i].energy - records[best].energy) <= 1e-12 * abs(records[best].energy):
            if (records[i].kkt_residual, i) < (records[best].kkt_residual, best):
                best = i
    fld = _to_field(grid, finals[best])
    bd = energy(fld, params)
    rec = records[best]
    return MinResult(
        field=fld,
        breakdown=bd,
        kkt_residual=rec.kkt_residual,
        starts=tuple(records),
        iterations=rec.iterations,
        converged=rec.converged,
        seed=seed,
        tol=float(tol),
        best_start=rec.name,
    )
