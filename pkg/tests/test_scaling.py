import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vkcone.minimize import minimize
from vkcone.radial import Params, RadialField, make_grid
from vkcone.scaling import (
    SUMMARY_COLUMNS,
    SweepRecord,
    classify_regime,
    excess_function,
    excess_ratio,
    fit_exponent,
    oscillation_check,
    read_records,
    run_point,
    sweep,
    sweep_grid,
    well_exit_radius,
    write_summary,
)

# measured on the sweep corpus (regression fixtures)
EXCESS_RATIO_FIXTURE = 0.6
SINE_OSCILLATION_FIXTURE = 2.0
SANDWICH_FIXTURE = (0.5, 5.0)


def field_with_slope(wp_fn, n=1024, h=0.01):
    g = make_grid(n, h)
    wp = wp_fn(g.nodes)
    wp[0] = 0.0
    return RadialField.from_slopes(g, np.zeros_like(g.nodes), wp)


@pytest.fixture(scope="module")
def inversion_record():
    rec, field = run_point(1e-3, 0.5, n_cells=4096, return_field=True)
    return rec, field


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    path = tmp_path_factory.mktemp("sweep") / "s.jsonl"
    recs = sweep([1e-2], [0.02, 0.05, 0.1, 0.2, 0.4], n_cells=1024, path=str(path))
    return path, recs


# ---------------------------------------------------------------------------
# well exit radius


def test_exit_radius_in_well():
    f = field_with_slope(np.ones_like)
    assert well_exit_radius(f) == 0.0


def test_exit_radius_of_flat_core():
    f = field_with_slope(lambda r: np.where(r <= 0.3, 0.0, 1.0))
    g = f.grid.nodes
    cell = np.diff(g)[np.searchsorted(g, 0.3) - 1]
    assert abs(well_exit_radius(f) - 0.3) <= cell


def test_exit_radius_of_inversion_minimizer(inversion_record):
    rec, _ = inversion_record
    assert rec.delta / 8 <= rec.tau <= rec.delta
    assert rec.regime == "inversion"


# ---------------------------------------------------------------------------
# excess function


def test_excess_vanishes_in_upper_well():
    f = field_with_slope(np.ones_like)
    _, g = excess_function(f, 0.2)
    assert np.abs(g).max() <= 1e-15


@pytest.mark.parametrize("a", [0.05, 0.2, 0.5])
def test_excess_of_flat_field(a):
    f = field_with_slope(np.zeros_like)
    r, g = excess_function(f, a)
    np.testing.assert_allclose(g, (r - a) - a / 2, atol=1e-14)
    assert r[0] == a and r[-1] == 2 * a


def test_excess_rejects_radius():
    f = field_with_slope(np.ones_like)
    for a in (0.0, 0.6):
        with pytest.raises(ValueError):
            excess_function(f, a)


def test_excess_ratio_fixture(inversion_record):
    rec, field = inversion_record
    ratio = excess_ratio(field, rec.delta / 4, rec.e_min)
    assert ratio == pytest.approx(rec.diagnostics["excess_ratio"], rel=1e-12)
    assert ratio <= EXCESS_RATIO_FIXTURE


# ---------------------------------------------------------------------------
# oscillation


def test_oscillation_of_constant():
    x = np.linspace(0, 1, 11)
    assert oscillation_check(x, np.full(11, 2.0), np.zeros(11)) == 0.0


@given(st.floats(-5, 5).filter(lambda s: abs(s) > 1e-3), st.floats(0.1, 10.0))
def test_oscillation_of_zero_mean_linear(slope, length):
    x = np.linspace(0.0, length, 2001)
    f = slope * (x - length / 2)
    ratio = oscillation_check(x, f, np.zeros_like(x))
    assert ratio == pytest.approx(2 * np.sqrt(3), rel=1e-6)


def test_oscillation_of_sines_is_uniformly_bounded():
    x = np.linspace(0, 2 * np.pi, 4001)
    ratios = [oscillation_check(x, np.sin(k * x), -k * k * np.sin(k * x)) for k in (1, 2, 4, 8)]
    assert max(ratios) <= SINE_OSCILLATION_FIXTURE
    # the spline second derivative gives the same numbers
    spline = [oscillation_check(x, np.sin(k * x)) for k in (1, 2, 4, 8)]
    np.testing.assert_allclose(spline, ratios, rtol=1e-3)


def test_oscillation_rejects_bad_input():
    with pytest.raises(ValueError):
        oscillation_check(np.arange(2.0), np.arange(2.0))


# ---------------------------------------------------------------------------
# sweeps


def test_single_point_sweep_matches_minimize():
    p = Params(1e-2, 0.3)
    rec = sweep([p.h], [p.delta], n_cells=1024)[0]
    res = minimize(p, sweep_grid(p, 1024), max_iter=400)
    assert rec.e_min == res.breakdown.total
    assert rec.kkt_residual == res.kkt_residual


def test_record_count_and_order(small_sweep):
    _, recs = small_sweep
    assert len(recs) == 5
    assert [r.delta for r in recs] == [0.02, 0.05, 0.1, 0.2, 0.4]


def test_records_are_persisted(small_sweep):
    path, recs = small_sweep
    back = read_records(str(path))
    assert [r.key for r in back] == [r.key for r in recs]
    assert all(a.e_min == b.e_min for a, b in zip(back, recs))


def test_resume_skips_present_keys(small_sweep, tmp_path):
    path, recs = small_sweep
    dst = tmp_path / "copy.jsonl"
    dst.write_text(path.read_text())
    again = sweep([1e-2], [0.02, 0.05, 0.1, 0.2, 0.4, 0.6], n_cells=1024, path=str(dst),
                  resume=True)
    lines = dst.read_text().strip().splitlines()
    assert len(lines) == 6
    assert [r.e_min for r in again[:5]] == [r.e_min for r in recs]


def test_energy_is_monotone_in_indentation(small_sweep):
    _, recs = small_sweep
    e = [r.e_min for r in recs]
    assert np.all(np.diff(e) >= 0.0)


def test_record_invariants(small_sweep):
    _, recs = small_sweep
    for r in recs:
        assert r.converged and r.error is None
        upper = min(v for v in (r.e_invert, r.e_flatten) if v is not None)
        assert r.e_min <= upper + r.kkt_residual
        assert 0.0 <= r.tau <= 1.0


def test_energy_is_sandwiched_by_the_scaling_law(small_sweep):
    _, recs = small_sweep
    lo, hi = SANDWICH_FIXTURE
    assert hi / lo <= 100
    flat = run_point(1e-2, 0.0, n_cells=1024)
    for r in recs + [flat]:
        assert lo <= r.e_min / r.bound <= hi


def test_record_reproduces_from_seed(small_sweep):
    _, recs = small_sweep
    r = recs[2]
    again = run_point(r.h, r.delta, n_cells=1024, seed=r.seed)
    assert again.e_min == pytest.approx(r.e_min, rel=1e-12)


def test_failed_point_does_not_abort():
    recs = sweep([1e-4, 0.1], [0.1], n_cells=64)
    assert recs[0].error is not None and recs[0].e_min is None
    assert recs[1].error is None and recs[1].e_min > 0


def test_sweep_validates_lists():
    with pytest.raises(ValueError):
        sweep([], [0.1])
    with pytest.raises(ValueError):
        sweep([0.1], [1.5])


def test_summary_csv(small_sweep, tmp_path):
    _, recs = small_sweep
    out = tmp_path / "summary.csv"
    write_summary(recs, out)
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert len(rows) == 6
    assert float(rows[1][2]) == recs[0].e_min


def test_record_dict_roundtrip(small_sweep):
    _, recs = small_sweep
    r = recs[0]
    assert SweepRecord.from_dict(r.to_dict()) == r


# ---------------------------------------------------------------------------
# exponent fits


def test_fit_of_exact_power():
    x = np.geomspace(1e-4, 1e-1, 6)
    fit = fit_exponent(list(zip(x, x**1.5)), predictor="h")
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.stderr <= 1e-12
    assert fit.n_points == 6 and fit.axis == "h"


def test_fit_window():
    x = np.geomspace(1e-4, 1e-1, 7)
    y = np.where(x < 1e-2, x**2, x)
    fit = fit_exponent(list(zip(x, y)), predictor="delta", window=(1e-4, 5e-3))
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.window == (1e-4, 5e-3)


def test_fit_errors():
    x = np.geomspace(1e-3, 1e-1, 5)
    with pytest.raises(ValueError):
        fit_exponent(list(zip(x[:3], x[:3])))
    with pytest.raises(ValueError):
        fit_exponent(list(zip(x, -x)))
    with pytest.raises(ValueError):
        fit_exponent(list(zip(x, x)), predictor="e")


@given(st.floats(-3, 3), st.floats(-5, 5))
def test_fit_recovers_any_power(slope, logc):
    x = np.geomspace(1e-3, 1.0, 5)
    fit = fit_exponent(list(zip(x, np.exp(logc) * x**slope)))
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(logc, abs=1e-8)


# ---------------------------------------------------------------------------
# regimes


def test_classify_cone():
    rec = run_point(1e-3, 1e-4, n_cells=2048)
    assert classify_regime(rec) == "cone"


def test_classify_boundary_layer():
    rec = run_point(1e-4, 5e-4, n_cells=4096)
    assert rec.regime == "boundary-layer"


def test_classify_inversion():
    rec = run_point(1e-4, 0.3, n_cells=2048)
    assert rec.regime == "inversion"


def test_classify_withholds_unconverged():
    rec = SweepRecord(1e-3, 0.5, "focus:8", 0, e_min=1.0, tau=0.2, converged=False)
    assert classify_regime(rec) is None
    rec = SweepRecord(1e-3, 0.5, "focus:8", 0, error="ValueError: x")
    assert classify_regime(rec) is None


@given(st.floats(1e-4, 0.1), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.booleans())
def test_classify_labels(h, delta, tau, upper):
    rec = SweepRecord(h, delta, "focus:8", 0, e_min=1.0, tau=tau, converged=True,
                      diagnostics={"upper_well_beyond": upper})
    label = classify_regime(rec)
    assert label in ("cone", "boundary-layer", "inversion")
    if delta <= h:
        assert label == "cone"
    elif tau > max(delta / 8, 2 * h):
        assert label == "inversion"


def test_grid_policies():
    p = Params(1e-3, 0.5)
    assert np.array_equal(sweep_grid(p, 2048, "graded").nodes, make_grid(2048, 1e-3).nodes)
    g = sweep_grid(p, 2048)
    lw = np.sqrt(p.h * p.delta)
    assert g.cells_in(0.25 - lw, 0.25 + lw) >= 100
    with pytest.raises(ValueError):
        sweep_grid(p, 2048, "uniform")
