"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every check inside a criterion is evaluated and reported before the test
asserts, so a failing criterion still shows which of its parts hold.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from hhgspt.dynamics import PatternClass, integrate, simulate_and_classify
from hhgspt.geometry import SheetLabel, fold_points_Mh, folded_singularities, sheet_of
from hhgspt.local_analysis import hopf_point, jacobian_partial, node_hopf_distance, point_on_manifold
from hhgspt.model_core import GateKind, ModelParameters, V_partials, rhs_V, steady_state_v
from hhgspt.reduction import V_slaved, V_slaved_partials, eta, mu, nu
from hhgspt.return_map import (displacement, dhq_dIbar, find_threshold, psi_partials,
                               return_map_hat)
from conftest import at
from oracles import simulated_return
from sweeps import first_boundary


def close(x, target, rel):
    return bool(np.isfinite(x)) and abs(x - target) <= rel * abs(target)


def verdict(capsys, number: int, title: str, checks: list[tuple[str, bool, str]]):
    ok = all(c[1] for c in checks)
    with capsys.disabled():
        print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {title}")
        for name, good, detail in checks:
            print(f"    [{'ok' if good else 'XX'}] {name}: {detail}")
    assert ok, "; ".join(f"{c[0]} ({c[2]})" for c in checks if not c[1])


# ---------------------------------------------------------------- 1

def test_criterion_1_thresholds(capsys):
    targets = [("I_minus", "h_slow", 4.8, 0.02), ("I_plus", "h_slow", 280, 0.02),
               ("I_a", "h_slow", 26.49, 0.01), ("I_r", "h_slow", 29.705, 0.01),
               ("I_p", "h_slow", 120, 0.02), ("I_a", "n_slow", 10.1, 0.02),
               ("I_p", "n_slow", 81.7, 0.02), ("I_minus", "n_slow", 4.8, 0.02),
               ("I_plus", "n_slow", 280, 0.02)]
    t0 = time.perf_counter()
    checks = []
    for name, regime, value, rel in targets:
        got = find_threshold(name, regime).I_physical
        checks.append((f"{name} {regime}", close(got, value, rel),
                       f"{got:.6g} vs {value} +-{rel:.0%}"))
    elapsed = time.perf_counter() - t0
    checks.append(("runtime", elapsed < 60, f"{elapsed:.1f} s"))
    verdict(capsys, 1, "threshold reproduction", checks)


# ---------------------------------------------------------------- 2

def test_criterion_2_psi_partials(capsys):
    p = ModelParameters.h_slow(Ibar=find_threshold("I_r", "h_slow").Ibar)
    hq = folded_singularities(p)[0].h
    d = psi_partials(hq, p)
    slope = dhq_dIbar(p)
    checks = [("dPsi/dh", close(d.d_level, -15.0377, 0.02), f"{d.d_level:.6g} vs -15.0377"),
              ("dPsi/dIbar", close(d.d_Ibar, -278.4470, 0.02), f"{d.d_Ibar:.6g} vs -278.447"),
              ("dh_q/dIbar", close(slope, -279.416, 0.02), f"{slope:.6g} vs -279.416")]
    verdict(capsys, 2, "Psi partials at the relaxation threshold", checks)


# ---------------------------------------------------------------- 3

def test_criterion_3_sign_table(capsys):
    Ia = find_threshold("I_a", "h_slow").I_physical
    Ir = find_threshold("I_r", "h_slow").I_physical
    Ip = find_threshold("I_p", "h_slow").I_physical
    below = np.linspace(Ia, Ir, 12)[1:-1]
    above = np.linspace(Ir, Ip, 12)[1:-1]
    checks = []
    for I, sign in [(float(I), -1) for I in below] + [(float(I), 1) for I in above]:
        d = displacement(None, at(I)).delta
        checks.append((f"I={I:.4f}", np.sign(d) == sign, f"Delta={d:+.3e}"))
    r = displacement(None, at(Ir))
    checks.append(("zero at I_r", abs(r.delta) <= max(10 * r.quadrature_error, 1e-9),
                   f"Delta={r.delta:+.2e}, quadrature error {r.quadrature_error:.1e}"))
    verdict(capsys, 3, "sign table of the displacement at q_minus (20 points)", checks)


# ---------------------------------------------------------------- 4

def test_criterion_4_return_map_oracle(capsys):
    p = at(27)
    qm, qp = folded_singularities(p)
    level = 0.5 * (qm.h + qp.h)
    deltas = (1e-3, 5e-4, 2.5e-4)
    errs = [abs(return_map_hat(level, p, delta_slow=d) - simulated_return(level, p, d)) for d in deltas]
    checks = []
    for k in range(len(deltas) - 1):
        ratio = errs[k] / errs[k + 1]
        checks.append((f"delta {deltas[k]:g} -> {deltas[k + 1]:g}", 3.2 <= ratio <= 4.8,
                       f"error {errs[k]:.3e} -> {errs[k + 1]:.3e}, ratio {ratio:.3f}"))
    verdict(capsys, 4, "return-map prediction error is second order in delta", checks)


# ---------------------------------------------------------------- 5

@pytest.mark.slow
def test_criterion_5_sweep_boundaries(capsys):
    DE, T, SE, R, S = (c.value for c in (PatternClass.DoubleEpoch, PatternClass.TransitionalMMO,
                                        PatternClass.SingleEpoch, PatternClass.Relaxation,
                                        PatternClass.Steady))
    found = [
        ("h onset", first_boundary("h_slow", "low", S, None), 8.1),
        ("h DoubleEpoch->Transitional", first_boundary("h_slow", "low", DE, T), 23.09),
        ("h Transitional->SingleEpoch", first_boundary("h_slow", "low", T, SE), 26.0),
        ("h SingleEpoch->Relaxation", first_boundary("h_slow", "low", SE, R), 26.127),
        ("h cessation", first_boundary("h_slow", "high", None, S), 272.0),
        ("n onset", first_boundary("n_slow", "low", S, None), 6.6),
        ("n end of DoubleEpoch", first_boundary("n_slow", "low", DE, None), 9.4),
        ("n cessation", first_boundary("n_slow", "high", None, S), 268.0),
    ]
    checks = [(name, close(got, want, 0.05), f"{got:.4f} vs {want} +-5%") for name, got, want in found]
    verdict(capsys, 5, "simulation sweep boundaries", checks)


# ---------------------------------------------------------------- 6

@pytest.mark.slow
def test_criterion_6_reference_classes(capsys):
    DE, T, SE, R = "DoubleEpoch", "TransitionalMMO", "SingleEpoch", "Relaxation"
    cases = [("h_slow", 20.051, {DE}), ("h_slow", 23.051, {DE}), ("h_slow", 23.5, {T}),
             ("h_slow", 26.03452346, {SE}), ("h_slow", 26.1209956, {SE}), ("h_slow", 26.2, {R}),
             ("n_slow", 9.0, {DE}), ("n_slow", 64.5, {SE}), ("n_slow", 90.0, {SE, R}),
             ("n_slow", 150.0, {SE, R})]
    checks = []
    for regime, I, allowed in cases:
        got = simulate_and_classify(I, regime).pattern.value
        checks.append((f"{regime} I={I}", got in allowed, f"{got}, expected {'/'.join(sorted(allowed))}"))
    verdict(capsys, 6, "pattern classes at the reference currents", checks)


# ---------------------------------------------------------------- 7

def _fd(f, x, k, s=1e-6):
    up, dn = list(x), list(x)
    up[k] += s
    dn[k] -= s
    return (f(*up) - f(*dn)) / (2 * s)


def _rel_ok(an, fd, rel=1e-5, abs_=1e-8):
    return abs(an - fd) <= max(rel * abs(fd), abs_)


def _m_defect(gamma, y3, I=20.0, T=0.02):
    p = ModelParameters.h_slow(gamma=gamma).with_current(I)
    tr = integrate("full4d", y3, T, p, rel_tol=1e-12, abs_tol=1e-14, dt=0.001)
    s = tr.states
    return abs(s[-1, 1] - mu(s[-1, 0], s[-1, 2], s[-1, 3], p).value)


def test_criterion_7_property_suites(capsys):
    p = at(20)
    rng = np.random.default_rng(2024)
    v = rng.uniform(-0.74, 0.45, 1000)
    h = rng.uniform(0.05, 0.95, 1000)
    n = rng.uniform(0.05, 0.95, 1000)
    checks = []

    r_mu = np.max(np.abs(rhs_V(v, mu(v, h, n, p).value, h, n, p)))
    r_eta = np.max(np.abs(V_slaved(v, eta(v, n, p).value, n, p)))
    ok = (p.Ibar - (v - p.Ebar_Na) * steady_state_v(GateKind.m, v, p) ** 3 * h
          - p.gbar_L * (v - p.Ebar_L)) > 0
    r_nu = np.max(np.abs(V_slaved(v[ok], h[ok], nu(v[ok], h[ok], p).value, p)))
    worst = max(r_mu, r_eta, r_nu)
    checks.append(("graph residuals (mu, eta, nu)", worst < 1e-10, f"max {worst:.2e} on 1000 points"))

    bad = 0
    for k in range(200):
        x = (v[k], 0.5 * (h[k] + 0.1), n[k])
        m_ = 0.5
        pv = V_partials(x[0], m_, x[1], x[2], p)
        fv = lambda a, b, c, d: rhs_V(a, b, c, d, p)  # noqa: E731
        bad += sum(not _rel_ok(pv[j], _fd(fv, (x[0], m_, x[1], x[2]), j), abs_=1e-9) for j in range(4))
        g = mu(*x, p)
        fm = lambda a, b, c: mu(a, b, c, p).value  # noqa: E731
        bad += sum(not _rel_ok(an, _fd(fm, x, j))
                   for j, an in enumerate((g.partial_v, g.partial_h, g.partial_n)))
        sp = V_slaved_partials(*x, p)
        fs = lambda a, b, c: V_slaved(a, b, c, p)  # noqa: E731
        bad += sum(not _rel_ok(sp[j], _fd(fs, x, j), abs_=1e-9) for j in range(3))
    checks.append(("closed-form partials vs differences", bad == 0, f"{bad} mismatches in 2000 comparisons"))

    slopes = []
    for y3 in ([0.1, 0.2, 0.7], [0.2, 0.3, 0.7]):
        slopes.append(float(np.log10(_m_defect(1e-2, y3) / _m_defect(1e-3, y3))))
    checks.append(("Fenichel closeness slope", all(abs(s - 1) <= 0.15 for s in slopes),
                   ", ".join(f"{s:.3f}" for s in slopes)))

    Ip = find_threshold("I_p", "h_slow").I_physical
    off = 0
    for I in np.linspace(6.0, 0.98 * Ip, 20):
        q = at(float(I))
        pts = fold_points_Mh(q)
        off += (len(pts) != 2) + sum(sheet_of(f.v, f.h, f.n, q) is not SheetLabel.S_r for f in pts)
    checks.append(("fold points of M_h on S_r", off == 0, f"{off} violations over 20 currents"))

    order = [find_threshold(nm, "h_slow").I_physical for nm in ("I_minus", "I_a", "I_r", "I_p", "I_plus")]
    checks.append(("threshold ordering", order == sorted(order), " < ".join(f"{x:.4g}" for x in order)))

    e = ModelParameters().epsilon
    checks.append(("epsilon = 1/120", e == 1 / 120, repr(e)))
    verdict(capsys, 7, "property suites", checks)


# ---------------------------------------------------------------- 8

def test_criterion_8_local_analysis(capsys):
    p = at(20)
    hv = hopf_point(p, 0.1)
    checks = []
    if hv is None:
        checks.append(("Hopf point", False, "none found"))
    else:
        J = jacobian_partial(point_on_manifold(hv, p), 0.1, p)
        checks.append(("Hopf point", abs(J.trace) < 1e-8 and J.det > 0,
                       f"v={hv:.6f}, trace={J.trace:.1e}, det={J.det:.3e}"))
    eps = (0.1, 0.025, 0.00625)
    ratios = [node_hopf_distance(p, e) / np.sqrt(e) for e in eps]
    spread = max(ratios) / min(ratios)
    checks.append(("node distance / sqrt(eps)", bool(np.isfinite(spread)) and spread < 2,
                   ", ".join(f"{r:.4f}" for r in ratios) + f" (spread {spread:.3f})"))
    verdict(capsys, 8, "Hopf point and degenerate-node scaling", checks)
