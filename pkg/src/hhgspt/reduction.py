"""Graphs mu, nu, eta of the slow and critical manifolds and the reduced flows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, FoldSingularity, NegativeRadicand, PartialVanishes
from .model_core import (
    GateKind,
    ModelParameters,
    ReducedState,
    _relax_and_slopes,
    steady_state_dv,
    steady_state_v,
    t_scaled,
)

__all__ = [
    "GraphEvaluation",
    "DENOM_TOL",
    "mu",
    "nu",
    "eta",
    "V_slaved",
    "V_slaved_partials",
    "V_slaved_vv",
    "relax",
    "reduced_vector_field",
    "intermediate_flow_h",
    "intermediate_flow_n",
    "slow_flow_on_Mh",
    "slow_flow_on_Mn",
    "desingularized_flow_h",
    "desingularized_flow_n",
    "U_value",
    "U_partials_on_manifold",
]

DENOM_TOL = 1e-12
FOLD_TOL = 1e-10


@dataclass(frozen=True)
class GraphEvaluation:
    value: float
    partial_v: float
    partial_h: float
    partial_n: float
    negative_radicand: bool = False


def _check_denominator(den, what: str) -> None:
    if np.any(np.abs(den) < DENOM_TOL):
        raise DegenerateDenominator(f"{what} denominator vanishes (left the analysis window)")


def mu(v, h, n, p: ModelParameters) -> GraphEvaluation:
    """Real cube root graph m = mu(v, h, n) of the three-dimensional slow manifold."""
    num = p.Ibar - p.gbar_K * (v - p.Ebar_K) * n ** 4 - p.gbar_L * (v - p.Ebar_L)
    den = (v - p.Ebar_Na) * h
    _check_denominator(den, "mu")
    R = num / den
    val = np.cbrt(R)
    R_v = ((-p.gbar_K * n ** 4 - p.gbar_L) * den - num * h) / den ** 2
    R_h = -R / h
    R_n = -4.0 * p.gbar_K * (v - p.Ebar_K) * n ** 3 / den
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 1.0 / (3.0 * val ** 2)
    return GraphEvaluation(val, R_v * k, R_h * k, R_n * k, bool(np.any(R < 0)))


def V_slaved(v, h, n, p: ModelParameters):
    """V(v, m_inf(v), h, n), whose zero set is the critical manifold M2."""
    m = steady_state_v(GateKind.m, v, p)
    return (p.Ibar - (v - p.Ebar_Na) * m ** 3 * h - p.gbar_K * (v - p.Ebar_K) * n ** 4
            - p.gbar_L * (v - p.Ebar_L))


def V_slaved_partials(v, h, n, p: ModelParameters):
    """(d_v, d_h, d_n) of V(v, m_inf(v), h, n); d_v includes the m_inf' term."""
    m = steady_state_v(GateKind.m, v, p)
    dm = steady_state_dv(GateKind.m, v, p)
    dv = (-m ** 3 * h - 3.0 * (v - p.Ebar_Na) * m ** 2 * dm * h
          - p.gbar_K * n ** 4 - p.gbar_L)
    dh = -(v - p.Ebar_Na) * m ** 3
    dn = -4.0 * p.gbar_K * (v - p.Ebar_K) * n ** 3
    return dv, dh, dn


def V_slaved_vv(v, h, n, p: ModelParameters, step: float = 1e-6):
    """Second v-derivative by a central difference of the closed-form first one."""
    return (V_slaved_partials(v + step, h, n, p)[0]
            - V_slaved_partials(v - step, h, n, p)[0]) / (2.0 * step)


def nu(v, h, p: ModelParameters) -> GraphEvaluation:
    """Positive fourth-root graph n = nu(v, h) of M2."""
    m = steady_state_v(GateKind.m, v, p)
    dm = steady_state_dv(GateKind.m, v, p)
    num = p.Ibar - (v - p.Ebar_Na) * m ** 3 * h - p.gbar_L * (v - p.Ebar_L)
    den = p.gbar_K * (v - p.Ebar_K)
    _check_denominator(den, "nu")
    R = num / den
    if np.any(R < 0):
        raise NegativeRadicand("slice does not meet the critical manifold")
    val = R ** 0.25
    num_v = -m ** 3 * h - 3.0 * (v - p.Ebar_Na) * m ** 2 * dm * h - p.gbar_L
    R_v = (num_v * den - num * p.gbar_K) / den ** 2
    R_h = -(v - p.Ebar_Na) * m ** 3 / den
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 1.0 / (4.0 * val ** 3)
    return GraphEvaluation(val, R_v * k, R_h * k, 0.0 * R)


def eta(v, n, p: ModelParameters) -> GraphEvaluation:
    """Graph h = eta(v, n) of M2."""
    m = steady_state_v(GateKind.m, v, p)
    dm = steady_state_dv(GateKind.m, v, p)
    num = p.Ibar - p.gbar_K * (v - p.Ebar_K) * n ** 4 - p.gbar_L * (v - p.Ebar_L)
    den = (v - p.Ebar_Na) * m ** 3
    _check_denominator(den, "eta")
    val = num / den
    num_v = -p.gbar_K * n ** 4 - p.gbar_L
    den_v = m ** 3 + 3.0 * (v - p.Ebar_Na) * m ** 2 * dm
    e_v = (num_v * den - num * den_v) / den ** 2
    e_n = -4.0 * p.gbar_K * (v - p.Ebar_K) * n ** 3 / den
    return GraphEvaluation(val, e_v, 0.0 * val, e_n)


def relax(gate, v, x, p: ModelParameters):
    """(X, dX/dv, dX/dx) for X = (x_inf(v) - x)/t_x(v)."""
    return _relax_and_slopes(gate, v, x, p)


def _unpack3(state):
    if isinstance(state, ReducedState):
        return state.v, state.h, state.n
    v, h, n = state
    return float(v), float(h), float(n)


def U_value(v, h, n, p: ModelParameters, epsilon_mid: float, delta_h: float, delta_n: float):
    g = mu(v, h, n, p)
    if abs(g.partial_v) < DENOM_TOL:
        raise PartialVanishes("d_v mu vanishes")
    m_inf = steady_state_v(GateKind.m, v, p)
    t_m = t_scaled(GateKind.m, v, p)
    H = relax(GateKind.h, v, h, p)[0]
    N = relax(GateKind.n, v, n, p)[0]
    return ((m_inf - g.value) / (t_m * g.partial_v)
            - epsilon_mid * delta_h * H * g.partial_h / g.partial_v
            - epsilon_mid * delta_n * N * g.partial_n / g.partial_v)


def reduced_vector_field(state, p: ModelParameters, epsilon_mid: float | None = None,
                         delta_h: float | None = None, delta_n: float | None = None) -> np.ndarray:
    """(U, eps delta_h H, eps delta_n N) on the fast time of the 3D reduction."""
    v, h, n = _unpack3(state)
    e = p.epsilon_mid if epsilon_mid is None else epsilon_mid
    dh = p.delta_h if delta_h is None else delta_h
    dn = p.delta_n if delta_n is None else delta_n
    U = U_value(v, h, n, p, e, dh, dn)
    H = relax(GateKind.h, v, h, p)[0]
    N = relax(GateKind.n, v, n, p)[0]
    return np.array([U, e * dh * H, e * dn * N], dtype=float)


def U_partials_on_manifold(v, h, n, p: ModelParameters, epsilon_mid: float, regime: str):
    """Closed-form (d_v U, d_slow U) at a point of M2 where the fast gate is relaxed.

    For ``h_slow`` the perturbation is U(.; eps, 0, 1) and the second entry is
    d_n U; for ``n_slow`` it is U(.; eps, 1, 0) and the entry is d_h U. Terms
    multiplied by m_inf - mu or by the vanishing gate relaxation drop out.
    """
    g = mu(v, h, n, p)
    if abs(g.partial_v) < DENOM_TOL:
        raise PartialVanishes("d_v mu vanishes")
    t_m = t_scaled(GateKind.m, v, p)
    dm = steady_state_dv(GateKind.m, v, p)
    base_v = (dm - g.partial_v) / (t_m * g.partial_v)
    if regime == "h_slow":
        _, X_v, X_x = relax(GateKind.n, v, n, p)
        dU_v = base_v - epsilon_mid * X_v * g.partial_n / g.partial_v
        dU_s = -g.partial_n / (t_m * g.partial_v) - epsilon_mid * X_x * g.partial_n / g.partial_v
    else:
        _, X_v, X_x = relax(GateKind.h, v, h, p)
        dU_v = base_v - epsilon_mid * X_v * g.partial_h / g.partial_v
        dU_s = -g.partial_h / (t_m * g.partial_v) - epsilon_mid * X_x * g.partial_h / g.partial_v
    return dU_v, dU_s


def intermediate_flow_h(v, h, p: ModelParameters):
    """d_n[V] N on M2 at frozen h (desingularised intermediate fibre flow)."""
    n = nu(v, h, p).value
    _, _, Vn = V_slaved_partials(v, h, n, p)
    return Vn * relax(GateKind.n, v, n, p)[0]


def intermediate_flow_n(v, n, p: ModelParameters):
    """d_h[V] H on M2 at frozen n."""
    h = eta(v, n, p).value
    _, Vh, _ = V_slaved_partials(v, h, n, p)
    return Vh * relax(GateKind.h, v, h, p)[0]


def slow_flow_on_Mh(v, p: ModelParameters):
    """One-dimensional v-flow on M_h (h = eta(v, n_inf), n = n_inf)."""
    n = steady_state_v(GateKind.n, v, p)
    h = eta(v, n, p).value
    Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
    den = Vv + Vn * steady_state_dv(GateKind.n, v, p)
    if abs(den) < FOLD_TOL:
        raise FoldSingularity("fold point of M_h")
    return Vv * Vh / den * relax(GateKind.h, v, h, p)[0]


def slow_flow_on_Mn(v, p: ModelParameters):
    """One-dimensional v-flow on M_n (h = h_inf, n = nu(v, h_inf))."""
    h = steady_state_v(GateKind.h, v, p)
    n = nu(v, h, p).value
    Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
    den = Vv + Vh * steady_state_dv(GateKind.h, v, p)
    if abs(den) < FOLD_TOL:
        raise FoldSingularity("fold point of M_n")
    return Vv * Vn / den * relax(GateKind.n, v, n, p)[0]


def desingularized_flow_h(v, h, p: ModelParameters, delta_h: float | None = None,
                          delta_n: float | None = None) -> np.ndarray:
    """Desingularised reduced flow on S^a in (v, h) coordinates."""
    dh = p.delta_h if delta_h is None else delta_h
    dn = p.delta_n if delta_n is None else delta_n
    n = nu(v, h, p).value
    Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
    H = relax(GateKind.h, v, h, p)[0]
    N = relax(GateKind.n, v, n, p)[0]
    return np.array([dh * Vh * H + dn * Vn * N, -dh * Vv * H], dtype=float)


def desingularized_flow_n(v, n, p: ModelParameters, delta_h: float | None = None,
                          delta_n: float | None = None) -> np.ndarray:
    """Desingularised reduced flow on S^a in (v, n) coordinates."""
    dh = p.delta_h if delta_h is None else delta_h
    dn = p.delta_n if delta_n is None else delta_n
    h = eta(v, n, p).value
    Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
    H = relax(GateKind.h, v, h, p)[0]
    N = relax(GateKind.n, v, n, p)[0]
    return np.array([dh * Vh * H + dn * Vn * N, -dn * Vv * N], dtype=float)
