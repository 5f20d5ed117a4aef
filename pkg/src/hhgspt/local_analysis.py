"""Local analysis of the partially perturbed system along M_h and M_n.

Along M_h the slow gate h is frozen and (v, n) evolve under
v' = U(v, h, n; eps, 0, 1), n' = eps N. Points of M_h are equilibria of that
planar system, so the 2x2 Jacobian decides whether trajectories near M_h spiral
(small oscillations by bifurcation delay) or approach it monotonically. The
n-slow analogue freezes n and uses (v, h) on M_n.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NotOnManifold
from .geometry import check_regime, manifold_1d
from .model_core import GateKind, ModelParameters, steady_state_v
from .reduction import U_partials_on_manifold, U_value, V_slaved, eta, nu, relax

__all__ = [
    "StabilityKind",
    "StabilitySegment",
    "LocalJacobian",
    "ON_MANIFOLD_TOL",
    "point_on_manifold",
    "jacobian_partial",
    "jacobian_finite_difference",
    "stability_segments",
    "hopf_point",
    "degenerate_node",
    "node_hopf_distance",
]

ON_MANIFOLD_TOL = 1e-6


class StabilityKind(str, enum.Enum):
    FocalAttracting = "FocalAttracting"
    NodalAttracting = "NodalAttracting"
    FocalRepelling = "FocalRepelling"
    NodalRepelling = "NodalRepelling"
    Saddle = "Saddle"


@dataclass(frozen=True)
class LocalJacobian:
    matrix: np.ndarray
    eigenvalues: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    @property
    def discriminant(self) -> float:
        return self.trace ** 2 - 4.0 * self.det


@dataclass(frozen=True)
class StabilitySegment:
    v_interval: tuple[float, float]
    kind: StabilityKind
    hopf_v: float | None = None
    degenerate_v: float | None = None


def _fast_and_slow(regime: str) -> tuple[GateKind, GateKind]:
    """(perturbing gate, frozen gate) of the planar system."""
    return (GateKind.n, GateKind.h) if regime == "h_slow" else (GateKind.h, GateKind.n)


def point_on_manifold(v: float, p: ModelParameters, regime: str = "h_slow") -> tuple[float, float, float]:
    """(v, h, n) of M_h (h-slow) or M_n (n-slow) at the given v."""
    if check_regime(regime) == "h_slow":
        n = float(steady_state_v(GateKind.n, v, p))
        return float(v), float(eta(v, n, p).value), n
    h = float(steady_state_v(GateKind.h, v, p))
    return float(v), h, float(nu(v, h, p).value)


def _residual(v, h, n, p, regime) -> float:
    gate, _ = _fast_and_slow(regime)
    x = n if gate is GateKind.n else h
    return max(abs(float(V_slaved(v, h, n, p))), abs(float(relax(gate, v, x, p)[0])))


def jacobian_partial(point, epsilon_mid: float, p: ModelParameters,
                     regime: str = "h_slow") -> LocalJacobian:
    """Jacobian [[d_v U, d_x U], [eps d_v X, eps d_x X]] at a point of M_h / M_n.

    ``x`` is n for h-slow and h for n-slow. ``p.Ibar`` sets the current.
    """
    regime = check_regime(regime)
    v, h, n = (float(c) for c in point)
    res = _residual(v, h, n, p, regime)
    if not res < ON_MANIFOLD_TOL:
        raise NotOnManifold(f"residual {res:.3e} exceeds {ON_MANIFOLD_TOL}")
    gate, _ = _fast_and_slow(regime)
    x = n if gate is GateKind.n else h
    dU_v, dU_x = U_partials_on_manifold(v, h, n, p, epsilon_mid, regime)
    _, X_v, X_x = relax(gate, v, x, p)
    J = np.array([[dU_v, dU_x], [epsilon_mid * X_v, epsilon_mid * X_x]], dtype=float)
    return LocalJacobian(J, np.linalg.eigvals(J))


def _planar_field(y, frozen: float, epsilon_mid: float, p: ModelParameters, regime: str):
    v, x = y
    gate, _ = _fast_and_slow(regime)
    if regime == "h_slow":
        h, n = frozen, x
        dh, dn = 0.0, 1.0
    else:
        h, n = x, frozen
        dh, dn = 1.0, 0.0
    U = U_value(v, h, n, p, epsilon_mid, dh, dn)
    return np.array([U, epsilon_mid * relax(gate, v, x, p)[0]])


def jacobian_finite_difference(point, epsilon_mid: float, p: ModelParameters,
                               regime: str = "h_slow", step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the planar field, for cross-checks."""
    regime = check_regime(regime)
    v, h, n = (float(c) for c in point)
    frozen, x = (h, n) if regime == "h_slow" else (n, h)
    y0 = np.array([v, x])
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        J[:, j] = (_planar_field(y0 + e, frozen, epsilon_mid, p, regime)
                   - _planar_field(y0 - e, frozen, epsilon_mid, p, regime)) / (2 * step)
    return J


def _kind(J: LocalJacobian) -> StabilityKind:
    if J.det < 0:
        return StabilityKind.Saddle
    focal = J.discriminant < 0
    if J.trace < 0:
        return StabilityKind.FocalAttracting if focal else StabilityKind.NodalAttracting
    return StabilityKind.FocalRepelling if focal else StabilityKind.NodalRepelling


def _jac_at(v, epsilon_mid, p, regime) -> LocalJacobian:
    return jacobian_partial(point_on_manifold(v, p, regime), epsilon_mid, p, regime)


def _valid_grid(v_grid, p, regime) -> np.ndarray:
    vs = np.asarray(v_grid, dtype=float)
    if regime == "n_slow":
        vs = manifold_1d(p, regime, vs)[:, 0]
    return vs


def stability_segments(p: ModelParameters, epsilon_mid: float | None = None,
                       regime: str = "h_slow", v_grid=None) -> list[StabilitySegment]:
    """Split M_h (or M_n) into intervals of constant eigenvalue type.

    Each boundary is refined by bisection on the quantity that changes sign
    there (trace, determinant or discriminant). A segment touching a Hopf
    point or degenerate node records its location.
    """
    regime = check_regime(regime)
    e = p.epsilon_mid if epsilon_mid is None else float(epsilon_mid)
    if v_grid is None:
        v_grid = np.linspace(-0.76, 0.49, 2501)
    vs = _valid_grid(v_grid, p, regime)
    if len(vs) < 2:
        return []
    jacs = [_jac_at(v, e, p, regime) for v in vs]
    kinds = [_kind(J) for J in jacs]

    def refine(a, b, which):
        f = lambda v: getattr(_jac_at(v, e, p, regime), which)  # noqa: E731
        fa, fb = f(a), f(b)
        if fa == 0.0:
            return a
        if np.sign(fa) == np.sign(fb):
            return 0.5 * (a + b)
        return brentq(f, a, b, xtol=1e-13, rtol=1e-14)

    cuts: list[tuple[int, float, str]] = []
    for k in range(len(vs) - 1):
        if kinds[k] == kinds[k + 1]:
            continue
        J0, J1 = jacs[k], jacs[k + 1]
        if np.sign(J0.det) != np.sign(J1.det):
            which = "det"
        elif np.sign(J0.trace) != np.sign(J1.trace):
            which = "trace"
        else:
            which = "discriminant"
        cuts.append((k, refine(vs[k], vs[k + 1], which), which))

    segments: list[StabilitySegment] = []
    start, start_idx = float(vs[0]), 0
    marks: dict[int, tuple[str, float]] = {}
    for k, vc, which in cuts:
        marks[len(segments)] = (which, vc)
        segments.append(StabilitySegment((start, vc), kinds[start_idx]))
        start, start_idx = vc, k + 1
    segments.append(StabilitySegment((start, float(vs[-1])), kinds[start_idx]))

    # attach Hopf points and degenerate nodes to the attracting side of each cut
    out = list(segments)
    for i, (which, vc) in marks.items():
        left, right = out[i], out[i + 1]
        if which == "trace" and _jac_at(vc, e, p, regime).det > 0:
            j = i if left.kind is StabilityKind.FocalAttracting else i + 1
            out[j] = StabilitySegment(out[j].v_interval, out[j].kind, vc, out[j].degenerate_v)
        elif which == "discriminant":
            attracting = {StabilityKind.FocalAttracting, StabilityKind.NodalAttracting}
            if left.kind in attracting and right.kind in attracting:
                j = i if left.kind is StabilityKind.NodalAttracting else i + 1
                out[j] = StabilitySegment(out[j].v_interval, out[j].kind, out[j].hopf_v, vc)
    return out


def hopf_point(p: ModelParameters, epsilon_mid: float | None = None,
               regime: str = "h_slow", v_grid=None) -> float | None:
    """v of the first trace root with positive determinant, or None."""
    for seg in stability_segments(p, epsilon_mid, regime, v_grid):
        if seg.hopf_v is not None:
            return seg.hopf_v
    return None


def degenerate_node(p: ModelParameters, epsilon_mid: float | None = None,
                    regime: str = "h_slow", v_grid=None) -> float | None:
    """v of the discriminant root on the attracting side next to the Hopf point."""
    segs = stability_segments(p, epsilon_mid, regime, v_grid)
    hv = next((s.hopf_v for s in segs if s.hopf_v is not None), None)
    nodes = [s.degenerate_v for s in segs if s.degenerate_v is not None]
    if not nodes:
        return None
    if hv is None:
        return nodes[0]
    return min(nodes, key=lambda d: abs(d - hv))


def node_hopf_distance(p: ModelParameters, epsilon_mid: float, regime: str = "h_slow",
                       v_grid=None) -> float:
    """|v_node - v_Hopf|; NaN if either is missing."""
    hv = hopf_point(p, epsilon_mid, regime, v_grid)
    dv = degenerate_node(p, epsilon_mid, regime, v_grid)
    if hv is None or dv is None:
        return float("nan")
    return abs(dv - hv)
