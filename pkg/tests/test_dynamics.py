from __future__ import annotations

import numpy as np
import pytest

from hhgspt.dynamics import (ClassifierSettings, PatternClass, Trajectory, classify_pattern,
                             default_initial, extract_events, integrate, simulate_and_classify,
                             sweep_current, system_rhs)
from hhgspt.errors import LeftDomain, TooShort
from hhgspt.geometry import true_equilibrium
from hhgspt.model_core import ModelParameters, full_vector_field
from hhgspt.reduction import mu, reduced_vector_field
from conftest import at
from oracles import rk4_slaved


def _run(I, regime="h_slow", system="slaved_m", T=8000.0):
    p = at(I, regime)
    return p, integrate(system, default_initial(p, system), T, p, dt=0.02)


# ------------------------------------------------------------ integration

@pytest.mark.parametrize("system", ["full4d", "reduced3d", "slaved_m"])
def test_equilibrium_stays_put(system):
    p = at(2)
    eq = true_equilibrium(p).point
    y0 = default_initial(p, system, shift=0.0)
    assert y0[0] == pytest.approx(eq.v)
    tr = integrate(system, y0, 50.0, p)
    assert np.max(np.abs(tr.states - tr.states[0])) < 1e-6


def test_trajectory_invariants():
    p, tr = _run(20, T=100.0)
    assert np.all(np.diff(tr.times) > 0)
    assert np.all(np.isfinite(tr.states))
    assert np.array_equal(tr.states[0], default_initial(p))
    assert tr.meta["integrator"] == "LSODA" and tr.meta["steps"] > 0
    assert tr.state(0).v == tr.v[0]
    empty = integrate("slaved_m", default_initial(p), 0.0, p)
    assert len(empty) == 1


def test_kernels_match_python_vector_fields():
    p = at(23.0)
    y4 = np.array([-0.4, 0.2, 0.45, 0.5])
    f4 = system_rhs("full4d", p)(y4)
    ref = full_vector_field(y4, p) / (p.gamma * p.epsilon_mid)
    assert np.allclose(f4, ref, rtol=1e-12)
    y3 = y4[[0, 2, 3]]
    f3 = system_rhs("reduced3d", p)(y3)
    assert np.allclose(f3, reduced_vector_field(y3, p) / p.epsilon_mid, rtol=1e-10)


def test_reduced3d_relaxation_sustained():
    p, tr = _run(26.2, system="reduced3d", T=3000.0)
    v = tr.tail(0.3).v
    assert v.max() - v.min() > 0.8


def test_tolerance_halving_and_fixed_step_oracle():
    p = at(20)
    y0 = default_initial(p)
    _, ref = rk4_slaved(y0, p, 5.0, 1e-5, 0.01)
    ends = []
    for tol in (1e-8, 5e-9):
        tr = integrate("slaved_m", y0, 5.0, p, rel_tol=tol, abs_tol=tol * 1e-2)
        ends.append(tr.states[-1])
        assert np.max(np.abs(tr.states[-1] - ref[-1])) < 10 * tol
    assert np.max(np.abs(ends[0] - ends[1])) < 10 * 1e-8


def test_left_domain():
    p = at(20)
    with pytest.raises(LeftDomain):
        integrate("slaved_m", [-0.6, 1.5, 0.4], 1.0, p)


def test_bad_arguments():
    p = at(20)
    with pytest.raises(ValueError):
        integrate("slaved_m", default_initial(p), -1.0, p)
    with pytest.raises(ValueError):
        integrate("slaved_m", default_initial(p), 1.0, p, rel_tol=0.0)
    with pytest.raises(ValueError):
        integrate("bogus", default_initial(p), 1.0, p)


def _m_defect(gamma, y3, I=20.0, T=0.02, fast_time=False):
    p = ModelParameters.h_slow(gamma=gamma).with_current(I)
    if fast_time:
        # full_vector_field runs on the fast time; convert to the common time
        T = T * gamma * p.epsilon_mid
    tr = integrate("full4d", y3, T, p, rel_tol=1e-12, abs_tol=1e-14, dt=0.001)
    s = tr.states
    return np.abs(s[:, 1] - mu(s[:, 0], s[:, 2], s[:, 3], p).value)


def test_fenichel_closeness_slope_one():
    # upper attracting sheet, where m is away from zero and the cube root is smooth
    for y3 in ([0.1, 0.2, 0.7], [0.2, 0.3, 0.7]):
        d2, d3 = _m_defect(1e-2, y3)[-1], _m_defect(1e-3, y3)[-1]
        assert np.log10(d2 / d3) == pytest.approx(1.0, abs=0.15)


def test_fenichel_defect_bound():
    p = at(20)
    for y3 in (default_initial(p), [0.1, 0.2, 0.7]):
        d = _m_defect(1e-3, list(y3), T=10.0, fast_time=True)
        assert d.max() < 5e-3


def test_reduction_fidelity_and_class():
    p = at(20)
    y = integrate("reduced3d", default_initial(p, "reduced3d"), 2000.0, p, dt=0.5).states[-1]
    t4 = integrate("full4d", y, 200.0, p, dt=0.01)
    t3 = integrate("reduced3d", y, 200.0, p, dt=0.01)
    assert np.max(np.abs(t4.v - t3.v)) < 0.05
    classes = {classify_pattern(_run(20, system=s)[1], p=p).pattern for s in
               ("full4d", "reduced3d", "slaved_m")}
    assert classes == {PatternClass.DoubleEpoch}


# ------------------------------------------------------------ events

def test_constant_trajectory_has_no_events():
    t = np.linspace(0, 100, 1001)
    tr = Trajectory(t, np.tile([-0.6, 0.4, 0.3], (len(t), 1)))
    assert extract_events(tr) == []
    assert classify_pattern(tr).pattern is PatternClass.Steady


def test_synthetic_drift_with_ripples_is_one_epoch():
    t = np.linspace(0, 200, 20001)
    v = -0.6 + 0.02 * t / 200 + 2e-3 * np.sin(t)
    tr = Trajectory(t, np.column_stack([v, 0 * v, 0 * v]))
    ev = extract_events(tr, v_split=-0.3, settings=ClassifierSettings(slow_rate=0.01))
    assert [e.kind for e in ev] == ["epoch"]
    assert ev[0].tag == "below" and ev[0].sao_count >= 25


def test_relaxation_trace_has_only_laos():
    p, tr = _run(26.2)
    ev = extract_events(tr.tail(0.3), p=p)
    assert ev and all(e.kind == "LAO" for e in ev)


def test_too_short():
    tr = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 3)))
    with pytest.raises(TooShort):
        extract_events(tr)


def test_integrator_independence():
    p = at(20.051)
    y0 = default_initial(p)
    ts, s = rk4_slaved(y0, p, 8000.0, 2e-3, 0.02)
    fixed = classify_pattern(Trajectory(ts, s), p=p)
    adaptive = classify_pattern(integrate("slaved_m", y0, 8000.0, p, dt=0.02), p=p)
    assert fixed.pattern is adaptive.pattern is PatternClass.DoubleEpoch


@pytest.mark.parametrize("I,expected", [
    (8.0, PatternClass.Steady),
    (20.051, PatternClass.DoubleEpoch),
    (23.5, PatternClass.TransitionalMMO),
    (25.5, PatternClass.SingleEpoch),
    (26.2, PatternClass.Relaxation),
    (274.0, PatternClass.Steady),
])
def test_classes_h_slow(I, expected):
    rep = simulate_and_classify(I, "h_slow")
    assert rep.pattern is expected


def test_report_invariants():
    rep = simulate_and_classify(20.051, "h_slow")
    assert rep.epochs_above >= 1 and rep.epochs_below >= 1
    assert rep.period_estimate > 0
    single = simulate_and_classify(64.5, "n_slow")
    assert single.pattern is PatternClass.SingleEpoch and single.epochs_above == 0
    relax = simulate_and_classify(26.2, "h_slow")
    assert relax.lao_count >= 1 and relax.epochs_above == relax.epochs_below == 0


def test_sweep_small_range():
    res = sweep_current((7.0, 10.0), "h_slow", grid=[7.0, 8.5, 10.0], resolution=0.2, workers=1)
    assert len(res.boundaries) == 1
    b = res.boundaries[0]
    assert b.left == "Steady" and b.right == "DoubleEpoch"
    assert b.upper - b.lower <= 0.2
    with pytest.raises(ValueError):
        sweep_current((10.0, 7.0), "h_slow")


_RANK = {"Steady": 0, "DoubleEpoch": 1, "TransitionalMMO": 2, "SingleEpoch": 3, "Relaxation": 4}


def test_class_monotonicity_h_slow():
    from sweeps import sweep

    pts = list(sweep("h_slow", "low").points) + list(sweep("h_slow", "high").points)
    bounds = [b.location for part in ("low", "high") for b in sweep("h_slow", part).boundaries]
    ranks, seen_relax = [], False
    for pt in sorted(pts, key=lambda q: q.I_physical):
        r = _RANK.get(pt.label)
        if r is None:
            continue
        if pt.label == "Relaxation":
            seen_relax = True
        if pt.label == "Steady" and seen_relax:
            r = 5
        if min(abs(pt.I_physical - b) for b in bounds) < 1.0 and r in (2, 3):
            continue
        ranks.append(r)
    assert ranks == sorted(ranks)
