"""Gating kinetics, nondimensionalisation and the 4D vector field.

Gating rates take the membrane potential on the mV scale (the classical
shifted forms); helpers suffixed with ``_v`` take the dimensionless
potential v = V/k_v and convert at the boundary.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "GateKind",
    "ModelParameters",
    "FullState",
    "ReducedState",
    "DEFAULT_BETA_N_SCALE",
    "alpha",
    "beta",
    "gate_inf",
    "t_hat",
    "rates_and_slopes",
    "timescale_T",
    "timescale_info",
    "TimescaleInfo",
    "t_scaled",
    "steady_state_v",
    "steady_state_dv",
    "rhs_V",
    "rhs_M",
    "rhs_H",
    "rhs_N",
    "V_partials",
    "full_vector_field",
    "rescale_current",
    "physical_current",
]

# Classical HH value of the beta_n prefactor; see README for the choice.
DEFAULT_BETA_N_SCALE = 0.125
_SERIES_CUTOFF = 1e-4


class GateKind(str, enum.Enum):
    m = "m"
    h = "h"
    n = "n"

    @classmethod
    def coerce(cls, gate: "GateKind | str") -> "GateKind":
        return gate if isinstance(gate, cls) else cls(str(gate))


@dataclass(frozen=True)
class ModelParameters:
    """Dimensionless constants, scale-separation parameters and units.

    ``gamma`` defaults to the published 0.083; ``gamma_consistent`` gives
    epsilon/epsilon_mid, which differs in the third digit.
    """

    gbar_K: float = 0.3
    gbar_L: float = 0.0025
    Ebar_Na: float = 0.5
    Ebar_K: float = -0.77
    Ebar_L: float = -0.544
    Ibar: float = 0.0
    gamma: float = 0.083
    epsilon_mid: float = 0.1
    delta_h: float = 0.025
    delta_n: float = 1.0
    k_v: float = 100.0
    k_t: float = 1.0
    C: float = 1.0
    g_Na: float = 120.0
    beta_n_scale: float = DEFAULT_BETA_N_SCALE

    def __post_init__(self) -> None:
        for name in ("delta_h", "delta_n", "k_v", "k_t", "C", "g_Na"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        # the singular limits gamma = 0 and epsilon_mid = 0 are allowed
        for name in ("gamma", "epsilon_mid"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be non-negative, got {val}")
        if not self.Ebar_K < self.Ebar_Na:
            raise ValueError("Ebar_K must lie below Ebar_Na")
        if not np.isfinite(self.Ibar):
            raise ValueError("Ibar must be finite")

    @property
    def epsilon(self) -> float:
        """Capacitive small parameter C/(k_t g_Na)."""
        return self.C / (self.k_t * self.g_Na)

    @property
    def gamma_consistent(self) -> float:
        return self.epsilon / self.epsilon_mid

    @property
    def current_scale(self) -> float:
        return self.k_v * self.g_Na

    @property
    def tau_m(self) -> float:
        return self.epsilon_mid * timescale_T(GateKind.m, self)

    @property
    def tau_h(self) -> float:
        return timescale_T(GateKind.h, self) / self.delta_h

    @property
    def tau_n(self) -> float:
        return timescale_T(GateKind.n, self) / self.delta_n

    @classmethod
    def from_time_constants(cls, tau_m: float = 1.0, tau_h: float = 1.0,
                            tau_n: float = 1.0, **kwargs) -> "ModelParameters":
        """Build parameters from the channel constants tau_x (delta_x = T_x/tau_x)."""
        base = cls(**kwargs)
        T = {g: timescale_T(g, base) for g in GateKind}
        eps_mid = tau_m / T[GateKind.m]
        return replace(base, epsilon_mid=eps_mid, gamma=base.epsilon / eps_mid,
                       delta_h=T[GateKind.h] / tau_h, delta_n=T[GateKind.n] / tau_n)

    def with_current(self, I_physical: float) -> "ModelParameters":
        return replace(self, Ibar=rescale_current(I_physical, self))

    def with_(self, **changes) -> "ModelParameters":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def h_slow(cls, **kwargs) -> "ModelParameters":
        kw = {"delta_h": 0.025, "delta_n": 1.0}
        kw.update(kwargs)
        return cls(**kw)

    @classmethod
    def n_slow(cls, **kwargs) -> "ModelParameters":
        kw = {"delta_h": 1.0, "delta_n": 0.01}
        kw.update(kwargs)
        return cls(**kw)


@dataclass(frozen=True)
class FullState:
    v: float
    m: float
    h: float
    n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.m, self.h, self.n], dtype=float)

    @classmethod
    def from_array(cls, y) -> "FullState":
        return cls(*(float(c) for c in y))


@dataclass(frozen=True)
class ReducedState:
    v: float
    h: float
    n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.h, self.n], dtype=float)

    @classmethod
    def from_array(cls, y) -> "ReducedState":
        return cls(*(float(c) for c in y))


# ---------------------------------------------------------------- rates

def _xexp(s):
    """s/(1 - exp(-s)) with a series fallback near the removable point."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    out = np.where(small, 1.0 + s / 2.0 + s * s / 12.0, safe / -np.expm1(-safe))
    return out[()] if out.ndim == 0 else out


def _xexp_prime(s):
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    em = np.exp(-safe)
    d = -np.expm1(-safe)
    out = np.where(small, 0.5 + s / 6.0, (d - safe * em) / (d * d))
    return out[()] if out.ndim == 0 else out


def _xexp_scalar(s: float) -> tuple[float, float]:
    if abs(s) < _SERIES_CUTOFF:
        return 1.0 + s / 2.0 + s * s / 12.0, 0.5 + s / 6.0
    d = -math.expm1(-s)
    return s / d, (d - s * math.exp(-s)) / (d * d)


def _rates_scalar(gate: GateKind, V: float, beta_n_scale: float):
    if gate is GateKind.m:
        a, da = _xexp_scalar((V + 40.0) / 10.0)
        b = 4.0 * math.exp(-(V + 65.0) / 18.0)
        return a, b, da / 10.0, -b / 18.0
    if gate is GateKind.h:
        a = 0.07 * math.exp(-(V + 65.0) / 20.0)
        b = 1.0 / (1.0 + math.exp(-(V + 35.0) / 10.0))
        return a, b, -a / 20.0, b * (1.0 - b) / 10.0
    a, da = _xexp_scalar((V + 55.0) / 10.0)
    b = beta_n_scale * math.exp(-(V + 65.0) / 80.0)
    return 0.1 * a, b, 0.01 * da, -b / 80.0


def rates_and_slopes(gate, V, beta_n_scale: float = DEFAULT_BETA_N_SCALE):
    """Return (alpha, beta, d alpha/dV, d beta/dV) on the mV scale."""
    gate = GateKind.coerce(gate)
    if np.ndim(V) == 0:
        return _rates_scalar(gate, float(V), beta_n_scale)
    V = np.asarray(V, dtype=float)
    if gate is GateKind.m:
        s = (V + 40.0) / 10.0
        a, da = _xexp(s), _xexp_prime(s) / 10.0
        b = 4.0 * np.exp(-(V + 65.0) / 18.0)
        db = -b / 18.0
    elif gate is GateKind.h:
        a = 0.07 * np.exp(-(V + 65.0) / 20.0)
        da = -a / 20.0
        b = 1.0 / (1.0 + np.exp(-(V + 35.0) / 10.0))
        db = b * (1.0 - b) / 10.0
    else:
        s = (V + 55.0) / 10.0
        a, da = 0.1 * _xexp(s), 0.01 * _xexp_prime(s)
        b = beta_n_scale * np.exp(-(V + 65.0) / 80.0)
        db = -b / 80.0
    return a, b, da, db


def alpha(gate, V, beta_n_scale: float = DEFAULT_BETA_N_SCALE):
    """Opening rate alpha_x(V), V in mV."""
    return rates_and_slopes(gate, V, beta_n_scale)[0]


def beta(gate, V, beta_n_scale: float = DEFAULT_BETA_N_SCALE):
    """Closing rate beta_x(V), V in mV."""
    return rates_and_slopes(gate, V, beta_n_scale)[1]


def gate_inf(gate, V, beta_n_scale: float = DEFAULT_BETA_N_SCALE):
    a, b, _, _ = rates_and_slopes(gate, V, beta_n_scale)
    return a / (a + b)


def t_hat(gate, V, beta_n_scale: float = DEFAULT_BETA_N_SCALE):
    a, b, _, _ = rates_and_slopes(gate, V, beta_n_scale)
    return 1.0 / (a + b)


# ------------------------------------------------------------ timescales

@dataclass(frozen=True)
class TimescaleInfo:
    T: float
    v_star: float
    at_endpoint: bool
    window: tuple[float, float] = field(default=(0.0, 0.0))


@lru_cache(maxsize=64)
def _timescale(gate: GateKind, k_v: float, lo: float, hi: float,
               beta_n_scale: float, n_grid: int) -> TimescaleInfo:
    def rate(v):
        a, b, _, _ = rates_and_slopes(gate, k_v * v, beta_n_scale)
        return a + b

    vs = np.linspace(lo, hi, n_grid)
    r = rate(vs)
    k = int(np.argmax(r))
    if k == 0 or k == n_grid - 1:
        # the closed interval is used, so an endpoint maximum is exact
        return TimescaleInfo(float(r[k]), float(vs[k]), True, (lo, hi))
    res = minimize_scalar(lambda v: -rate(v), bracket=(vs[k - 1], vs[k], vs[k + 1]),
                          method="golden", tol=1e-10)
    return TimescaleInfo(float(-res.fun), float(res.x), False, (lo, hi))


def timescale_info(gate, p: ModelParameters | None = None, n_grid: int = 10_001) -> TimescaleInfo:
    """Maximum of 1/t_hat over [Ebar_K, Ebar_Na] with the maximiser location."""
    p = p or ModelParameters()
    return _timescale(GateKind.coerce(gate), float(p.k_v), float(p.Ebar_K),
                      float(p.Ebar_Na), float(p.beta_n_scale), int(n_grid))


def timescale_T(gate, p: ModelParameters | None = None, n_grid: int = 10_001) -> float:
    return timescale_info(gate, p, n_grid).T


def t_scaled(gate, v, p: ModelParameters | None = None):
    """t_x(v) = T_x t_hat_x(v) for the dimensionless potential v."""
    p = p or ModelParameters()
    return timescale_T(gate, p) * t_hat(gate, p.k_v * np.asarray(v, dtype=float), p.beta_n_scale)


def steady_state_v(gate, v, p: ModelParameters):
    return gate_inf(gate, p.k_v * np.asarray(v, dtype=float), p.beta_n_scale)


def steady_state_dv(gate, v, p: ModelParameters):
    """d x_inf / dv with respect to the dimensionless potential."""
    a, b, da, db = rates_and_slopes(gate, p.k_v * np.asarray(v, dtype=float), p.beta_n_scale)
    return p.k_v * (da * b - a * db) / (a + b) ** 2


def _relax_and_slopes(gate, v, x, p: ModelParameters):
    """(X, dX/dv, dX/dx) for X = (x_inf - x)/t_x."""
    T = timescale_T(gate, p)
    a, b, da, db = rates_and_slopes(gate, p.k_v * np.asarray(v, dtype=float), p.beta_n_scale)
    r = a + b
    xi = a / r
    dxi = p.k_v * (da * b - a * db) / r ** 2
    dr = p.k_v * (da + db)
    X = (xi - x) * r / T
    dXv = (dxi * r + (xi - x) * dr) / T
    dXx = -r / T
    return X, dXv, dXx


# --------------------------------------------------------- vector field

def rhs_V(v, m, h, n, p: ModelParameters):
    return (p.Ibar - (v - p.Ebar_Na) * m ** 3 * h - p.gbar_K * (v - p.Ebar_K) * n ** 4
            - p.gbar_L * (v - p.Ebar_L))


def V_partials(v, m, h, n, p: ModelParameters):
    """Partial derivatives of V with respect to (v, m, h, n)."""
    dv = -m ** 3 * h - p.gbar_K * n ** 4 - p.gbar_L
    dm = -3.0 * (v - p.Ebar_Na) * m ** 2 * h
    dh = -(v - p.Ebar_Na) * m ** 3
    dn = -4.0 * p.gbar_K * (v - p.Ebar_K) * n ** 3
    return dv, dm, dh, dn


def rhs_M(v, m, p: ModelParameters):
    return _relax_and_slopes(GateKind.m, v, m, p)[0]


def rhs_H(v, h, p: ModelParameters):
    return _relax_and_slopes(GateKind.h, v, h, p)[0]


def rhs_N(v, n, p: ModelParameters):
    return _relax_and_slopes(GateKind.n, v, n, p)[0]


def full_vector_field(state, p: ModelParameters) -> np.ndarray:
    """(V, gamma M, gamma eps delta_h H, gamma eps delta_n N) on the fast time."""
    if isinstance(state, FullState):
        v, m, h, n = state.v, state.m, state.h, state.n
    else:
        v, m, h, n = (float(c) for c in state)
    g, e = p.gamma, p.epsilon_mid
    return np.array([
        rhs_V(v, m, h, n, p),
        g * rhs_M(v, m, p),
        g * e * p.delta_h * rhs_H(v, h, p),
        g * e * p.delta_n * rhs_N(v, n, p),
    ], dtype=float)


def rescale_current(I_physical, p: ModelParameters | None = None):
    """Ibar = I/(k_v g_Na), I in uA/cm^2."""
    p = p or ModelParameters()
    return I_physical / p.current_scale


def physical_current(Ibar, p: ModelParameters | None = None):
    p = p or ModelParameters()
    return Ibar * p.current_scale
