"""Parameter sweeps, exponent fits, regime labels and profile diagnostics.

A sweep runs, for every ``(h, delta)`` pair, the two explicit constructions,
the multi-start minimizer and a few diagnostics of the minimizer.  Records
are appended to a JSON-lines file as soon as they are computed, keyed by
``(h, delta, grid, seed)``, so an interrupted sweep can be resumed.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .constructions import construct_flatten, construct_invert, predicted_bound
from .minimize import DEFAULT_SEED, minimize
from .radial import Params, RadialField, energy, make_grid

__all__ = [
    "SweepRecord",
    "ExponentFit",
    "sweep_grid",
    "well_exit_radius",
    "excess_function",
    "excess_ratio",
    "oscillation_check",
    "run_point",
    "sweep",
    "read_records",
    "write_summary",
    "fit_exponent",
    "classify_regime",
]

log = logging.getLogger(__name__)

UPPER_WELL = (0.5, 1.5)
LOWER_WELL = (-1.5, -0.5)
SWEEP_MAX_ITER = 400
TIP_RADIUS = 2.0
SUMMARY_COLUMNS = ("h", "delta", "e_min", "e_invert", "e_flatten", "bound", "tau", "regime")


# ---------------------------------------------------------------------------
# grids


def sweep_grid(params, n_cells, policy="focus"):
    """Grid used for a sweep point.

    ``policy="graded"`` is :func:`~vkcone.radial.make_grid` as is.  With
    ``"focus"`` and ``delta >= h`` the spacing is additionally limited to
    ``sqrt(h delta)/200`` within ``6 sqrt(h delta)`` of ``r = delta/2``, where
    an inverted cap would fold back.  Piecewise-linear ``u`` cannot cancel the
    quadratic ``wp^2`` inside a cell, so a fold of width ``sqrt(h delta)``
    spread over a few cells costs far too much stretching energy.  The
    window never takes more than half of the cells; on coarse grids its
    spacing is relaxed accordingly.
    """
    if policy == "graded":
        return make_grid(n_cells, params.h)
    if policy != "focus":
        raise ValueError(f"unknown grid policy {policy!r}")
    h, d = params.h, params.delta
    focus = None
    if d >= h:
        lw = np.sqrt(h * d)
        lo, hi = max(h, 0.5 * d - 6.0 * lw), min(1.0, 0.5 * d + 6.0 * lw)
        # at most half of the cells go into the window
        focus = [(lo, hi, max(0.005 * lw, 2.0 * (hi - lo) / n_cells))]
    return make_grid(n_cells, h, focus=focus)


# ---------------------------------------------------------------------------
# profile diagnostics


def _in_wells(wp):
    return ((wp > UPPER_WELL[0]) & (wp < UPPER_WELL[1])) | (
        (wp > LOWER_WELL[0]) & (wp < LOWER_WELL[1]))


def well_exit_radius(field):
    """Largest node radius in ``(0, 1]`` where ``wp`` is outside both wells.

    The wells are ``(1/2, 3/2)`` and ``(-3/2, -1/2)``; returns 0 when ``wp``
    stays in them on all of ``(0, 1]``.
    """
    r = field.grid.nodes[1:]
    out = ~_in_wells(np.asarray(field.wp)[1:])
    return float(r[out].max()) if np.any(out) else 0.0


def _section(field, lo, hi):
    """Sample points covering ``[lo, hi]`` (nodes plus end points) and ``wp`` there."""
    r = field.grid.nodes
    inner = r[(r > lo) & (r < hi)]
    s = np.concatenate([[lo], inner, [hi]])
    return s, np.interp(s, r, field.wp)


def excess_function(field, a):
    """Zero-mean running integral of ``1 - wp^2`` on ``I_a = [a, 2a]``.

    ``g_a(r) = int_a^r (1 - wp^2) dt + c_a`` sampled at ``a``, the grid nodes
    inside ``I_a`` and ``2a``.  The integral is exact for piecewise-linear
    ``wp`` (Simpson's rule per sub-interval) and ``c_a`` makes the trapezoid
    mean of the samples vanish.

    Returns
    -------
    r, g : ndarray
    """
    a = float(a)
    if not (0.0 < a <= 0.5):
        raise ValueError(f"a must lie in (0, 1/2], got {a}")
    s, wp = _section(field, a, 2.0 * a)
    mid = np.interp(0.5 * (s[:-1] + s[1:]), field.grid.nodes, field.wp)
    ds = np.diff(s)
    piece = ds * ((1 - wp[:-1] ** 2) + 4 * (1 - mid**2) + (1 - wp[1:] ** 2)) / 6.0
    g = np.concatenate([[0.0], np.cumsum(piece)])
    mean = np.sum(0.5 * ds * (g[:-1] + g[1:])) / a
    return s, g - mean


def _l2(x, y):
    return float(np.sqrt(np.sum(0.5 * np.diff(x) * (y[:-1] ** 2 + y[1:] ** 2))))


def excess_ratio(field, a, e):
    """``||g_a||_{L2(I_a)} / (a^(1/2) e^(1/2))`` for the energy ``e``."""
    r, g = excess_function(field, a)
    return _l2(r, g) / np.sqrt(a * e)


def oscillation_check(x, f, f2=None):
    """``osc f / (||f||^(3/4) ||f''||^(1/4) + |I|^(-1/2) ||f||)`` on ``I = [x0, xn]``.

    Norms are ``L2(I)`` by the trapezoid rule.  Without ``f2`` the second
    derivative is that of the cubic spline through the samples.

    Raises
    ------
    ValueError
        If the denominator vanishes although ``f`` oscillates.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if x.ndim != 1 or x.shape != f.shape or x.size < 3:
        raise ValueError("x and f must be 1-D arrays of equal length >= 3")
    if f2 is None:
        f2 = CubicSpline(x, f)(x, 2)
    osc = float(f.max() - f.min())
    nf, nf2 = _l2(x, f), _l2(x, np.asarray(f2, dtype=float))
    den = nf**0.75 * nf2**0.25 + nf / np.sqrt(x[-1] - x[0])
    if den == 0.0:
        if osc > 0.0:
            raise ValueError("vanishing denominator for an oscillating profile")
        return 0.0
    return osc / den


def _diagnostics(field, params, e):
    h, d = params.h, params.delta
    a = 0.25 * d if d >= 4.0 * h else 0.25
    r, g = excess_function(field, a)
    wp = np.asarray(field.wp)
    nodes = field.grid.nodes
    beyond = nodes >= max(d / 8.0, TIP_RADIUS * h)
    diag = {
        "excess_radius": a,
        "excess_ratio": excess_ratio(field, a, e) if e > 0 else 0.0,
        "oscillation_ratio": oscillation_check(r, g),
        "upper_well_beyond": bool(np.all((wp[beyond] > UPPER_WELL[0])
                                         & (wp[beyond] < UPPER_WELL[1]))),
        "slope_l1_near_origin": float(np.sum(np.abs(np.interp(
            np.linspace(0, h, 65), nodes, wp))) * h / 65),
    }
    k = 1
    while 2.0 ** -k >= max(h, 1e-6) and k <= 30:
        s, v = _section(field, 2.0 ** -k, 2.0 ** (1 - k))
        diag[f"misfit_l1_2^-{k}"] = float(np.sum(0.5 * np.diff(s) * (
            np.abs(1 - v[:-1] ** 2) + np.abs(1 - v[1:] ** 2))))
        k += 1
    return diag


# ---------------------------------------------------------------------------
# records


@dataclass
class SweepRecord:
    """Outcome of one sweep point.

    ``e_invert`` is ``None`` when ``delta < h`` (construction not admissible).
    ``regime`` is ``None`` when the minimizer did not converge; ``error``
    holds the message of a failed point.
    """

    h: float
    delta: float
    grid: str
    seed: int
    e_min: float | None = None
    e_invert: float | None = None
    e_flatten: float | None = None
    bound: float | None = None
    tau: float | None = None
    regime: str | None = None
    converged: bool = False
    kkt_residual: float | None = None
    best_start: str = ""
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None
    runtime: float = 0.0

    @property
    def params(self):
        return Params(self.h, self.delta)

    @property
    def key(self):
        return (repr(float(self.h)), repr(float(self.delta)), self.grid, int(self.seed))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of ``log response = slope log predictor + intercept``."""

    slope: float
    intercept: float
    stderr: float
    n_points: int
    axis: str
    window: tuple = ()


def _grid_id(policy, n_cells):
    return f"{policy}:{int(n_cells)}"


def run_point(h, delta, n_cells=8192, policy="focus", seed=DEFAULT_SEED,
              max_iter=SWEEP_MAX_ITER, return_field=False):
    """Constructions, minimizer and diagnostics at one ``(h, delta)``.

    Failures are caught and stored in the record's ``error``.
    """
    rec = SweepRecord(float(h), float(delta), _grid_id(policy, n_cells), int(seed))
    t0 = time.perf_counter()
    best = None
    try:
        params = Params(rec.h, rec.delta)
        grid = sweep_grid(params, n_cells, policy)
        rec.bound = float(predicted_bound(params))
        rec.e_flatten = energy(construct_flatten(params, grid), params).total
        if params.delta >= params.h:
            rec.e_invert = energy(construct_invert(params, grid), params).total
        res = minimize(params, grid, seed=seed, max_iter=max_iter)
        best = res.field
        rec.e_min = res.breakdown.total
        rec.converged = bool(res.converged)
        rec.kkt_residual = res.kkt_residual
        rec.best_start = res.best_start
        rec.tau = well_exit_radius(res.field)
        rec.diagnostics = _diagnostics(res.field, params, rec.e_min)
        rec.diagnostics["starts"] = {s.name: [s.energy, s.converged] for s in res.starts}
        rec.regime = classify_regime(rec)
    except Exception as exc:  # a failing point must not abort the sweep
        rec.error = f"{type(exc).__name__}: {exc}"
        log.debug("sweep point failed\n%s", traceback.format_exc())
    rec.runtime = time.perf_counter() - t0
    return (rec, best) if return_field else rec


def _run_star(args):
    return run_point(*args)


def read_records(path):
    """Records of a JSON-lines file (missing file: empty list)."""
    if not os.path.exists(path):
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SweepRecord.from_dict(json.loads(line)))
    return out


def _dump(rec):
    return json.dumps(rec.to_dict(), default=float, allow_nan=True)


def sweep(h_list, delta_list, n_cells=8192, policy="focus", seed=DEFAULT_SEED,
          max_iter=SWEEP_MAX_ITER, path=None, resume=False, jobs=1):
    """Run every ``(h, delta)`` pair of the two lists.

    Parameters
    ----------
    h_list, delta_list : sequence of float
    n_cells : int
    policy : {"focus", "graded"}
        Grid policy, see :func:`sweep_grid`.
    seed : int
    max_iter : int
        Iteration cap per start and grid level.
    path : str, optional
        JSON-lines file; each record is appended as soon as it is done.
    resume : bool
        Skip pairs whose key is already present in ``path``.
    jobs : int
        Worker processes; records are written by the calling process only.

    Returns
    -------
    list of SweepRecord
        One per pair, in ``h``-major order.
    """
    h_list, delta_list = list(h_list), list(delta_list)
    if not h_list or not delta_list:
        raise ValueError("h_list and delta_list must be nonempty")
    for h in h_list:
        Params(h, 0.0)
    for d in delta_list:
        Params(0.1, d)
    gid = _grid_id(policy, n_cells)
    done = {}
    if resume and path:
        done = {r.key: r for r in read_records(path)}
    tasks = []
    for h in h_list:
        for d in delta_list:
            key = (repr(float(h)), repr(float(d)), gid, int(seed))
            if key not in done:
                tasks.append((float(h), float(d), n_cells, policy, seed, max_iter))

    def emit(rec):
        done[rec.key] = rec
        if path:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(_dump(rec) + "\n")

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(_run_star, tasks):
                emit(rec)
    else:
        for t in tasks:
            emit(run_point(*t))
    return [done[(repr(float(h)), repr(float(d)), gid, int(seed))]
            for h in h_list for d in delta_list]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_summary(records, path):
    """CSV with columns ``h, delta, e_min, e_invert, e_flatten, bound, tau, regime``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in records:
            writer.writerow([_fmt(getattr(r, c)) for c in SUMMARY_COLUMNS])


# ---------------------------------------------------------------------------
# fits and labels


def _loglog_fit(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = x.size
    resid = y - A @ coef
    s2 = float(resid @ resid) / (n - 2) if n > 2 else 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    return float(coef[0]), float(coef[1]), float(np.sqrt(s2 / sxx)) if sxx > 0 else np.inf


def fit_exponent(records, predictor="h", response="e_min", window=None):
    """Ordinary least squares of ``log response`` against ``log predictor``.

    Parameters
    ----------
    records : sequence of SweepRecord or of (predictor, response) pairs
    predictor : {"h", "delta"}
    response : str
        Record attribute (ignored for pairs).
    window : (lo, hi), optional
        Only predictor values in ``[lo, hi]`` are used.

    Raises
    ------
    ValueError
        With fewer than 4 points or non-positive responses.
    """
    if predictor not in ("h", "delta"):
        raise ValueError(f"predictor must be 'h' or 'delta', got {predictor!r}")
    pts = []
    for r in records:
        if isinstance(r, SweepRecord):
            pts.append((getattr(r, predictor), getattr(r, response)))
        else:
            pts.append(tuple(r))
    if window is not None:
        lo, hi = window
        pts = [p for p in pts if lo <= p[0] <= hi]
    if len(pts) < 4:
        raise ValueError(f"at least 4 points are needed, got {len(pts)}")
    x, y = np.array(pts, dtype=float).T
    if not (np.all(np.isfinite(y)) and np.all(y > 0) and np.all(x > 0)):
        raise ValueError("responses and predictors must be positive and finite")
    slope, intercept, stderr = _loglog_fit(x, y)
    return ExponentFit(slope, intercept, stderr, len(pts), predictor,
                       tuple(window) if window is not None else (float(x.min()), float(x.max())))


def classify_regime(record):
    """Regime label from the computed minimizer.

    ``cone`` if ``delta <= h``; otherwise ``boundary-layer`` when the exit
    radius is at most ``max(delta/8, TIP_RADIUS * h)`` and ``wp`` stays in the
    upper well beyond ``delta/8``, and ``inversion`` when it is not.  The
    floor ``TIP_RADIUS * h`` discounts the mollified tip, where ``wp`` rises
    from 0 over a length of order ``h`` in every regime.  Returns ``None`` for
    an unconverged or failed record.
    """
    if record.error is not None or not record.converged or record.tau is None:
        return None
    if record.delta <= record.h:
        return "cone"
    limit = max(record.delta / 8.0, TIP_RADIUS * record.h)
    if record.tau <= limit and record.diagnostics.get("upper_well_beyond", False):
        return "boundary-layer"
    return "inversion"
