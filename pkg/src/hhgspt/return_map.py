"""Return-map displacement integrals, the Psi function and threshold solvers."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import HHGSPTError, NoSignChange, NotFound, SingularIntegrand
from .geometry import (
    FoldPoint,
    check_regime,
    fold_margin_1d,
    folded_singularities,
    orbital_relation,
    project_fold,
    slice_folds,
    true_equilibrium,
    _slice_arrays,
    _slice_point,
)
from .model_core import GateKind, ModelParameters, physical_current, rescale_current
from .reduction import V_slaved_partials, relax

__all__ = [
    "DisplacementResult",
    "ThresholdReport",
    "RelaxationFixedPoint",
    "IntegrationLimits",
    "THRESHOLD_NAMES",
    "DEFAULT_BRACKETS",
    "integration_limits",
    "displacement",
    "displacement_at_q",
    "return_map_hat",
    "psi",
    "psi_partials",
    "dhq_dIbar",
    "relaxation_fixed_point",
    "relaxation_window_upper",
    "threshold_function",
    "find_threshold",
]

THRESHOLD_NAMES = ("I_minus", "I_plus", "I_p", "I_a", "I_r")
ENDPOINT_GAP = 1e-8
SINGULAR_TOL = 1e-10

# physical uA/cm^2 brackets used when the caller gives none
DEFAULT_BRACKETS = {
    ("I_minus", "h_slow"): (1.0, 15.0),
    ("I_minus", "n_slow"): (1.0, 15.0),
    ("I_plus", "h_slow"): (200.0, 350.0),
    ("I_plus", "n_slow"): (200.0, 295.0),
    ("I_p", "h_slow"): (60.0, 200.0),
    ("I_p", "n_slow"): (40.0, 150.0),
    ("I_a", "h_slow"): (15.0, 40.0),
    ("I_a", "n_slow"): (6.0, 20.0),
    ("I_r", "h_slow"): (27.0, 40.0),
    ("I_r", "n_slow"): (12.0, 250.0),  # a sign change exists here too
}


@dataclass(frozen=True)
class IntegrationLimits:
    v_min: float
    v_max: float
    v_q_minus: float
    v_q_plus: float
    v_fold_minus: float
    v_fold_plus: float
    level: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.v_min, self.v_max, self.v_q_minus, self.v_q_plus


@dataclass(frozen=True)
class DisplacementResult:
    g_minus: float
    g_plus: float
    delta: float
    quadrature_error: float
    limits: IntegrationLimits


@dataclass(frozen=True)
class ThresholdReport:
    name: str
    regime: str
    Ibar: float
    bracket_width: float
    residual: float
    I_physical: float = float("nan")
    found: bool = True


@dataclass(frozen=True)
class RelaxationFixedPoint:
    level: float
    derivative: float
    stable: bool
    outside_funnel: bool
    level_q_minus: float


# ------------------------------------------------------------------ limits

def integration_limits(p: ModelParameters, regime: str = "h_slow",
                       level: float | None = None) -> IntegrationLimits:
    """Landing points of the folds at the slow level (default: that of q_minus)."""
    check_regime(regime)
    qm, qp = folded_singularities(p, regime)
    lvl = qm.slow() if level is None else float(level)
    folds = slice_folds(lvl, p, regime)
    if len(folds) < 2:
        raise NotFound(f"slice at level {lvl} has {len(folds)} folds")
    lo, hi = folds[0], folds[-1]
    down = project_fold(FoldPoint(hi.v, hi.h, hi.n, "L_plus"), p)
    up = project_fold(FoldPoint(lo.v, lo.h, lo.n, "L_minus"), p)
    return IntegrationLimits(down.v, up.v, qm.v, qp.v, lo.v, hi.v, lvl)


# -------------------------------------------------------------- integrands

def _integrand(v: float, level: float, p: ModelParameters, regime: str) -> float:
    h, n = _slice_point(v, level, p, regime)
    Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
    H = relax(GateKind.h, v, h, p)[0]
    N = relax(GateKind.n, v, n, p)[0]
    if regime == "h_slow":
        return Vv * H / (Vn * N)
    return Vv * N / (Vh * H)


def _fast_gate_on_slice(vs: np.ndarray, level: float, p: ModelParameters, regime: str):
    """Relaxation rate of the non-frozen gate along the slice (its zeros are poles)."""
    h, n = _slice_arrays(vs, level, p, regime)
    if regime == "h_slow":
        return relax(GateKind.n, vs, n, p)[0]
    return relax(GateKind.h, vs, h, p)[0]


def _check_regular(a: float, b: float, level: float, p: ModelParameters, regime: str) -> None:
    vs = np.linspace(a, b, 2001)
    X = _fast_gate_on_slice(vs, level, p, regime)
    if not np.all(np.isfinite(X)):
        raise SingularIntegrand("slice leaves the critical manifold inside the interval")
    if np.any(np.sign(X[:-1]) * np.sign(X[1:]) <= 0) or np.min(np.abs(X)) < SINGULAR_TOL:
        raise SingularIntegrand(
            f"denominator vanishes inside [{a:.6g}, {b:.6g}] at level {level:.10g}")


def _branch_integral(v_start: float, v_end: float, level: float, p: ModelParameters,
                     regime: str, tol: float) -> tuple[float, float]:
    """-int_{v_start}^{v_end} f dv, stopping ENDPOINT_GAP short of the fold end."""
    direction = np.sign(v_end - v_start)
    stop = v_end - direction * ENDPOINT_GAP
    a, b = sorted((v_start, stop))
    _check_regular(a, b, level, p, regime)
    val, err = quad(_integrand, v_start, stop, args=(level, p, regime), epsabs=tol,
                    epsrel=1e-12, limit=400)
    return -val, err


def displacement(level: float | None, p: ModelParameters, regime: str = "h_slow",
                 tol: float = 1e-11) -> DisplacementResult:
    """Delta = G_minus + G_plus along the attracting sheets at a fixed slow level.

    The lower integral runs from the landing point of the upper fold to the
    lower fold of the same slice (which is q_minus when the level is that of
    q_minus); the upper one runs from the landing point of the lower fold to
    the upper fold of the slice.
    """
    lim = integration_limits(p, regime, level)
    g_minus, e1 = _branch_integral(lim.v_min, lim.v_fold_minus, lim.level, p, regime, tol)
    g_plus, e2 = _branch_integral(lim.v_max, lim.v_fold_plus, lim.level, p, regime, tol)
    return DisplacementResult(g_minus, g_plus, g_minus + g_plus, e1 + e2, lim)


def displacement_at_q(p: ModelParameters, regime: str = "h_slow", tol: float = 1e-11) -> float:
    return displacement(None, p, regime, tol).delta


def return_map_hat(level: float, p: ModelParameters, regime: str = "h_slow",
                   delta_slow: float | None = None) -> float:
    """First-order return level: level + delta * Delta(level)."""
    if delta_slow is None:
        delta_slow = p.delta_h if regime == "h_slow" else p.delta_n
    if delta_slow == 0:
        return float(level)
    return float(level + delta_slow * displacement(level, p, regime).delta)


def psi(level: float, p: ModelParameters, delta_slow: float = 0.0, regime: str = "h_slow") -> float:
    """Psi(level, Ibar, delta) to leading order, i.e. Delta; the O(delta) part is not modelled."""
    return displacement(level, p, regime).delta


@dataclass(frozen=True)
class PsiPartials:
    d_level: float
    d_Ibar: float
    d_level_steps: tuple[float, float]
    d_Ibar_steps: tuple[float, float]

    def __iter__(self):
        return iter((self.d_level, self.d_Ibar))


def psi_partials(level: float, p: ModelParameters, regime: str = "h_slow",
                 level_step: float = 1e-5, ibar_step: float = 1e-6) -> PsiPartials:
    """Partials of Psi at delta = 0 by Richardson-extrapolated differences.

    At the level of q_minus the displacement is only defined on one side (the
    funnel side puts a pole inside the lower integral), so the differences are
    one-sided towards the feasible side: increasing level, and increasing
    current (which lowers q_minus below the fixed level). The step ratio is 2,
    with steps s and 2s; the extrapolation is 2 D(s) - D(2s).
    """
    base = psi(level, p, regime=regime)

    def d_level(s):
        return (psi(level + s, p, regime=regime) - base) / s

    def d_ibar(s):
        return (psi(level, replace(p, Ibar=p.Ibar + s), regime=regime) - base) / s

    l1, l2 = d_level(level_step), d_level(2 * level_step)
    i1, i2 = d_ibar(ibar_step), d_ibar(2 * ibar_step)
    return PsiPartials(2 * l1 - l2, 2 * i1 - i2, (l1, l2), (i1, i2))


def dhq_dIbar(p: ModelParameters, regime: str = "h_slow") -> float:
    """Slope of the slow coordinate of q_minus in the current with v held at v_q_minus.

    For h_slow this is d eta / d Ibar = 1/((v - E_Na) m_inf^3), the first
    approximation used to compare q_minus with the relaxation fixed point.
    """
    from .model_core import steady_state_v

    qm, _ = folded_singularities(p, regime)
    if regime == "h_slow":
        m = steady_state_v(GateKind.m, qm.v, p)
        return float(1.0 / ((qm.v - p.Ebar_Na) * m ** 3))
    # n = nu(v, h): d nu / d Ibar = 1/(4 n^3 gK (v - E_K))
    return float(1.0 / (4.0 * qm.n ** 3 * p.gbar_K * (qm.v - p.Ebar_K)))


# --------------------------------------------------------- fixed point

def relaxation_fixed_point(p: ModelParameters, delta_slow: float | None = None,
                           regime: str = "h_slow", level_step: float = 1e-6) -> RelaxationFixedPoint:
    """Fixed point of the first-order return map above q_minus (relaxation cycle)."""
    if delta_slow is None:
        delta_slow = p.delta_h if regime == "h_slow" else p.delta_n
    qm, _ = folded_singularities(p, regime)
    hq = qm.slow()

    def D(h):
        return displacement(h, p, regime).delta

    a = hq + 1e-9
    try:
        fa = D(a)
    except HHGSPTError as exc:
        raise NotFound(f"displacement undefined just above q_minus: {exc}") from exc
    if fa <= 0:
        raise NotFound("no relaxation fixed point: Delta <= 0 at q_minus")
    step, b, fb = 1e-3, a, fa
    while fb > 0:
        b_new = b + step
        try:
            fb_new = D(b_new)
        except HHGSPTError:
            step /= 4
            if step < 1e-9:
                raise NotFound("fixed point bracket left the sheet")
            continue
        a, fa, b, fb = b, fb, b_new, fb_new
        step *= 2
    root = brentq(D, a, b, xtol=1e-13)
    dD = (D(root + level_step) - D(root - level_step)) / (2 * level_step)
    deriv = 1.0 + delta_slow * dD
    return RelaxationFixedPoint(float(root), float(deriv), bool(0.0 < deriv < 1.0),
                                bool(root > hq), float(hq))


def relaxation_window_upper(p: ModelParameters, I_lo: float, I_hi: float,
                            delta_slow: float | None = None, n_points: int = 20,
                            regime: str = "h_slow") -> float:
    """Largest scanned physical current above I_lo where the attracting fixed point persists."""
    last = float("nan")
    for I in np.linspace(I_lo, I_hi, n_points):
        try:
            fp = relaxation_fixed_point(p.with_current(I), delta_slow, regime)
        except HHGSPTError:
            break
        if not fp.stable:
            break
        last = float(I)
    return last


# --------------------------------------------------------- thresholds

def threshold_function(name: str, regime: str, p: ModelParameters):
    """Scalar defining function of Ibar whose sign change marks the threshold."""
    check_regime(regime)
    if name not in THRESHOLD_NAMES:
        raise ValueError(f"unknown threshold {name!r}")

    def at(Ibar: float) -> ModelParameters:
        return replace(p, Ibar=float(Ibar))

    if name == "I_a":
        return lambda I: orbital_relation(at(I), regime).gap
    if name == "I_r":
        return lambda I: displacement_at_q(at(I), regime)
    if name in ("I_minus", "I_plus"):
        # the equilibrium leaves through q_minus at both ends in h-slow; in
        # n-slow the upper crossing happens at q_plus
        upper = name == "I_plus" and regime == "n_slow"

        def f(I):
            q = at(I)
            eq = true_equilibrium(q, regime).point
            qm, qp = folded_singularities(q, regime)
            return eq.v - (qp.v if upper else qm.v)
        return f
    return lambda I: fold_margin_1d(at(I), regime)


def find_threshold(name: str, regime: str = "h_slow", bracket: tuple[float, float] | None = None,
                   tol: float = 1e-10, p: ModelParameters | None = None,
                   physical_bracket: bool = True) -> ThresholdReport:
    """Bracketed root of the defining function; bracket in uA/cm^2 unless told otherwise."""
    p = p or ModelParameters()
    check_regime(regime)
    if bracket is None:
        bracket = DEFAULT_BRACKETS[(name, regime)]
    lo, hi = (rescale_current(b, p) for b in bracket) if physical_bracket else bracket
    f = threshold_function(name, regime, p)
    try:
        flo, fhi = f(lo), f(hi)
    except HHGSPTError as exc:
        raise NoSignChange(f"{name} ({regime}): defining function undefined at bracket end: {exc}") from exc
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise NoSignChange(f"{name} ({regime}): no sign change on [{bracket[0]}, {bracket[1]}]")
    root, info = brentq(f, lo, hi, xtol=tol * abs(lo + hi) / 2, rtol=1e-15, full_output=True,
                        maxiter=200)
    width = tol * abs(root)
    resid = abs(f(root))
    return ThresholdReport(name, regime, float(root), float(width), float(resid),
                           float(physical_current(root, p)))
