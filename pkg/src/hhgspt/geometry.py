"""Singular geometry: critical manifolds, folds, folded singularities, cycles."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import NoFoldAtV, NoLandingPoint, NotFound, NotOnManifold
from .model_core import GateKind, ModelParameters, ReducedState, steady_state_dv, steady_state_v
from .reduction import V_slaved, V_slaved_partials, V_slaved_vv, eta, nu

__all__ = [
    "REGIMES",
    "SheetLabel",
    "FoldPoint",
    "FoldedSingularity",
    "OrbitalRelation",
    "Segment",
    "SingularCycle",
    "Equilibrium",
    "FoldCurves",
    "window",
    "check_regime",
    "sheet_of",
    "sheet_info",
    "slice_folds",
    "fold_point_at",
    "fold_curves",
    "manifold_Mh",
    "manifold_Mn",
    "manifold_1d",
    "fold_points_Mh",
    "fold_points_Mn",
    "fold_points_1d",
    "branch_count",
    "folded_singularities",
    "orbital_relation",
    "relation_gap",
    "relation_kind",
    "fold_margin_1d",
    "true_equilibrium",
    "project_fold",
    "fast_gate_point",
    "singular_cycle",
]

REGIMES = ("h_slow", "n_slow")
ALIGN_TOL = 1e-9
NERNST_MARGIN = 1e-3
ON_MANIFOLD_TOL = 1e-6


def check_regime(regime: str) -> str:
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    return regime


def window(p: ModelParameters) -> tuple[float, float]:
    """The Nernst interval shrunk away from the vertical asymptotes of M2."""
    return p.Ebar_K + NERNST_MARGIN, p.Ebar_Na - NERNST_MARGIN


class SheetLabel(str, enum.Enum):
    S_a_minus = "S_a_minus"
    S_r = "S_r"
    S_a_plus = "S_a_plus"

    @property
    def attracting(self) -> bool:
        return self is not SheetLabel.S_r


@dataclass(frozen=True)
class FoldPoint:
    v: float
    h: float
    n: float
    curve: str  # L_minus / L_plus for M2 folds, p_minus / p_plus for folds of M_h or M_n


@dataclass(frozen=True)
class FoldedSingularity:
    v: float
    h: float
    n: float
    branch: str
    regime: str

    def slow(self) -> float:
        return self.h if self.regime == "h_slow" else self.n


@dataclass(frozen=True)
class OrbitalRelation:
    kind: str  # Connected / Aligned / Remote
    gap: float


@dataclass(frozen=True)
class Segment:
    kind: str  # fast / intermediate / slow
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    label: str = ""


@dataclass
class SingularCycle:
    segments: list[Segment]
    relation: OrbitalRelation

    def closure_defect(self) -> float:
        defects = [np.max(np.abs(np.subtract(a.end, b.start)))
                   for a, b in zip(self.segments, self.segments[1:] + self.segments[:1])]
        return float(max(defects))

    def count(self, kind: str) -> int:
        return sum(1 for s in self.segments if s.kind == kind)


@dataclass(frozen=True)
class Equilibrium:
    point: ReducedState
    branch: str
    sheet: SheetLabel


@dataclass
class FoldCurves:
    L_minus: list[FoldPoint]
    L_plus: list[FoldPoint]
    connection: FoldPoint | None
    skipped: list[float] = field(default_factory=list)

    @property
    def points(self) -> list[FoldPoint]:
        return self.L_minus + self.L_plus


# ------------------------------------------------------------------ helpers

def _slice_arrays(vs: np.ndarray, level: float, p: ModelParameters, regime: str):
    """(h, n) on M2 along a fixed slow level, nan where the slice misses M2."""
    m = steady_state_v(GateKind.m, vs, p)
    if regime == "h_slow":
        h = np.full_like(vs, level)
        R = (p.Ibar - (vs - p.Ebar_Na) * m ** 3 * level - p.gbar_L * (vs - p.Ebar_L)) / (
            p.gbar_K * (vs - p.Ebar_K))
        n = np.where(R >= 0, np.abs(R) ** 0.25, np.nan)
    else:
        n = np.full_like(vs, level)
        h = (p.Ibar - p.gbar_K * (vs - p.Ebar_K) * level ** 4 - p.gbar_L * (vs - p.Ebar_L)) / (
            (vs - p.Ebar_Na) * m ** 3)
    return h, n


def _slice_point(v: float, level: float, p: ModelParameters, regime: str):
    if regime == "h_slow":
        return level, float(nu(v, level, p).value)
    return float(eta(v, level, p).value), level


def _nu_array(vs, h, p: ModelParameters):
    m = steady_state_v(GateKind.m, vs, p)
    R = (p.Ibar - (vs - p.Ebar_Na) * m ** 3 * h - p.gbar_L * (vs - p.Ebar_L)) / (
        p.gbar_K * (vs - p.Ebar_K))
    return np.where(R >= 0, np.abs(R) ** 0.25, np.nan)


def _sign_changes(vs: np.ndarray, f: np.ndarray) -> list[int]:
    ok = np.isfinite(f[:-1]) & np.isfinite(f[1:])
    return list(np.nonzero(ok & (np.sign(f[:-1]) * np.sign(f[1:]) < 0))[0])


def _roots(fun, vs: np.ndarray, vals: np.ndarray, xtol: float = 1e-14) -> list[float]:
    out = []
    for k in _sign_changes(vs, vals):
        out.append(brentq(fun, vs[k], vs[k + 1], xtol=xtol, rtol=4 * np.finfo(float).eps,
                          maxiter=200))
    return out


# ------------------------------------------------------------------ sheets

def slice_folds(level: float, p: ModelParameters, regime: str = "h_slow",
                n_grid: int = 2000) -> list[FoldPoint]:
    """Folds of M2 along a fixed slow level, ordered by v (L_minus first)."""
    check_regime(regime)
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    h, n = _slice_arrays(vs, level, p, regime)
    Vv = V_slaved_partials(vs, h, n, p)[0]

    def F(v):
        hh, nn = _slice_point(v, level, p, regime)
        return V_slaved_partials(v, hh, nn, p)[0]

    pts = []
    for r in _roots(F, vs, Vv):
        hh, nn = _slice_point(r, level, p, regime)
        pts.append((r, hh, nn))
    labels = ["L_minus", "L_plus"] if len(pts) == 2 else ["L"] * len(pts)
    return [FoldPoint(v, hh, nn, lab) for (v, hh, nn), lab in zip(pts, labels)]


def sheet_info(v: float, h: float, n: float, p: ModelParameters) -> tuple[SheetLabel, bool]:
    """Sheet label plus a flag set when the point sits on the fold itself."""
    if abs(V_slaved(v, h, n, p)) > ON_MANIFOLD_TOL:
        raise NotOnManifold(f"|V| = {abs(V_slaved(v, h, n, p)):.3g} at ({v}, {h}, {n})")
    Vv = V_slaved_partials(v, h, n, p)[0]
    if abs(Vv) < 1e-12:
        return SheetLabel.S_r, True
    if Vv > 0:
        return SheetLabel.S_r, False
    folds = slice_folds(h, p, "h_slow")
    if folds:
        lower = v < folds[0].v
    else:
        lower = v < _connection_v(p)
    return (SheetLabel.S_a_minus if lower else SheetLabel.S_a_plus), False


def sheet_of(v: float, h: float, n: float, p: ModelParameters) -> SheetLabel:
    return sheet_info(v, h, n, p)[0]


# ------------------------------------------------------------- fold curves

def _fold_solve(v, p: ModelParameters):
    """The fold system is linear in (h, n^4): solve it directly."""
    m = steady_state_v(GateKind.m, v, p)
    dm = steady_state_dv(GateKind.m, v, p)
    a = (v - p.Ebar_Na) * m ** 3
    b = m ** 3 + 3.0 * (v - p.Ebar_Na) * m ** 2 * dm
    c = p.gbar_K * (v - p.Ebar_K)
    rhs1 = p.Ibar - p.gbar_L * (v - p.Ebar_L)
    rhs2 = -p.gbar_L
    det = a * p.gbar_K - c * b
    h = (rhs1 * p.gbar_K - c * rhs2) / det
    n4 = (a * rhs2 - b * rhs1) / det
    return h, n4


def fold_point_at(v: float, p: ModelParameters) -> FoldPoint:
    """Point of the fold set F over potential v (curve label left blank)."""
    h, n4 = _fold_solve(v, p)
    if not (np.isfinite(h) and np.isfinite(n4) and 0.0 < h <= 1.0 and 0.0 < n4 <= 1.0):
        raise NoFoldAtV(f"no fold of M2 over v = {v}")
    n = n4 ** 0.25
    # one Newton polish in (h, n) on the original residuals
    for _ in range(2):
        Vv, Vh, Vn = V_slaved_partials(v, h, n, p)
        r1 = V_slaved(v, h, n, p)
        r2 = Vv
        m = steady_state_v(GateKind.m, v, p)
        dm = steady_state_dv(GateKind.m, v, p)
        J = np.array([[Vh, Vn], [-(m ** 3 + 3.0 * (v - p.Ebar_Na) * m ** 2 * dm),
                                 -4.0 * p.gbar_K * n ** 3]])
        dh, dn = np.linalg.solve(J, [-r1, -r2])
        h, n = h + dh, n + dn
    return FoldPoint(float(v), float(h), float(n), "")


def _fold_v_range(p: ModelParameters, n_grid: int = 4000) -> np.ndarray:
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    h, n4 = _fold_solve(vs, p)
    ok = np.isfinite(h) & np.isfinite(n4) & (h > 0) & (h <= 1) & (n4 > 0) & (n4 <= 1)
    return vs[ok]


def _connection_v(p: ModelParameters) -> float:
    """v of the tangential connection of L_minus and L_plus (d_v^2 V = 0 on F)."""
    vs = _fold_v_range(p)
    if vs.size < 3:
        raise NotFound("fold set is empty")
    h, _ = _fold_solve(vs, p)
    k = int(np.argmax(h)) if _h_extremum_is_max(h) else int(np.argmin(h))
    k = min(max(k, 1), vs.size - 2)

    def g(v):
        fp = fold_point_at(v, p)
        return V_slaved_vv(v, fp.h, fp.n, p)

    a, b = vs[k - 1], vs[k + 1]
    ga, gb = g(a), g(b)
    while ga * gb > 0 and (a > vs[0] or b < vs[-1]):
        a, b = max(vs[0], a - 0.01), min(vs[-1], b + 0.01)
        ga, gb = g(a), g(b)
    if ga * gb > 0:
        return float(vs[k])
    return float(brentq(g, a, b, xtol=1e-13))


def _h_extremum_is_max(h: np.ndarray) -> bool:
    interior = h[1:-1]
    return bool(interior.size and np.max(interior) >= max(h[0], h[-1]))


def fold_curves(p: ModelParameters, v_grid=None) -> FoldCurves:
    """Fold curves L_minus and L_plus of M2 sampled over v_grid."""
    if v_grid is None:
        vs = _fold_v_range(p)
        v_grid = np.linspace(vs[0], vs[-1], 400) if vs.size else []
    vc = _connection_v(p)
    minus, plus, skipped = [], [], []
    for v in v_grid:
        try:
            fp = fold_point_at(float(v), p)
        except NoFoldAtV:
            skipped.append(float(v))
            continue
        if fp.v <= vc:
            minus.append(FoldPoint(fp.v, fp.h, fp.n, "L_minus"))
        else:
            plus.append(FoldPoint(fp.v, fp.h, fp.n, "L_plus"))
    if not minus and not plus:
        raise NoFoldAtV("no grid potential carries a fold point")
    c = fold_point_at(vc, p)
    return FoldCurves(minus, plus, FoldPoint(c.v, c.h, c.n, "connection"), skipped)


# ---------------------------------------------------- one-dimensional manifolds

def manifold_Mh(p: ModelParameters, v_grid) -> np.ndarray:
    """Samples (v, eta(v, n_inf), n_inf) of M_h."""
    vs = np.asarray(v_grid, dtype=float)
    n = steady_state_v(GateKind.n, vs, p)
    h = eta(vs, n, p).value
    return np.column_stack([vs, h, n])


def manifold_Mn(p: ModelParameters, v_grid, skip_infeasible: bool = False) -> np.ndarray:
    """Samples (v, h_inf, nu(v, h_inf)) of M_n; raises NegativeRadicand unless skipping."""
    vs = np.asarray(v_grid, dtype=float)
    h = steady_state_v(GateKind.h, vs, p)
    if skip_infeasible:
        n = _nu_array(vs, h, p)
        keep = np.isfinite(n)
        return np.column_stack([vs[keep], h[keep], n[keep]])
    n = nu(vs, h, p).value
    return np.column_stack([vs, h, n])


def manifold_1d(p: ModelParameters, regime: str, v_grid) -> np.ndarray:
    if check_regime(regime) == "h_slow":
        return manifold_Mh(p, v_grid)
    return manifold_Mn(p, v_grid, skip_infeasible=True)


def _along_1d(vs, p: ModelParameters, regime: str):
    """Total v-derivative of V(v, m_inf, h, n) along M_h / M_n and the fold function."""
    if regime == "h_slow":
        n = steady_state_v(GateKind.n, vs, p)
        h = eta(vs, n, p).value
        Vv, Vh, Vn = V_slaved_partials(vs, h, n, p)
        total = Vv + Vn * steady_state_dv(GateKind.n, vs, p)
    else:
        h = steady_state_v(GateKind.h, vs, p)
        n = _nu_array(np.atleast_1d(vs), np.atleast_1d(h), p)
        if np.ndim(vs) == 0:
            n = n[0]
        Vv, Vh, Vn = V_slaved_partials(vs, h, n, p)
        total = Vv + Vh * steady_state_dv(GateKind.h, vs, p)
    return h, n, Vv, total


def fold_points_1d(p: ModelParameters, regime: str, n_grid: int = 2000) -> list[FoldPoint]:
    """Fold points p_minus, p_plus of M_h (h_slow) or M_n (n_slow)."""
    check_regime(regime)
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    total = _along_1d(vs, p, regime)[3]
    roots = _roots(lambda v: float(_along_1d(v, p, regime)[3]), vs, total)
    if len(roots) != 2:
        return [] if len(roots) < 2 else _pick_outer(roots, p, regime)
    return [_fold_1d_point(r, lab, p, regime) for r, lab in zip(roots, ("p_minus", "p_plus"))]


def _pick_outer(roots, p, regime):
    return [_fold_1d_point(roots[0], "p_minus", p, regime),
            _fold_1d_point(roots[-1], "p_plus", p, regime)]


def _fold_1d_point(v, label, p, regime):
    h, n, _, _ = _along_1d(v, p, regime)
    return FoldPoint(float(v), float(h), float(n), label)


def fold_points_Mh(p: ModelParameters) -> list[FoldPoint]:
    return fold_points_1d(p, "h_slow")


def fold_points_Mn(p: ModelParameters) -> list[FoldPoint]:
    return fold_points_1d(p, "n_slow")


def fold_margin_1d(p: ModelParameters, regime: str, n_grid: int = 2000) -> float:
    """Largest value of the total derivative along M_h / M_n.

    It is positive while two fold points exist and crosses zero where they
    annihilate; its root in the current is the threshold I_p.
    """
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    total = _along_1d(vs, p, regime)[3]
    finite = np.isfinite(total)
    idx = np.nonzero(finite)[0]
    k = idx[int(np.argmax(total[finite]))]
    if 0 < k < n_grid - 1:
        res = minimize_scalar(lambda v: -float(_along_1d(v, p, regime)[3]),
                              bracket=(vs[k - 1], vs[k], vs[k + 1]), method="brent",
                              tol=1e-12)
        return float(max(-res.fun, total[k]))
    return float(total[k])


def branch_count(p: ModelParameters, regime: str) -> int:
    """Number of branches of M_h / M_n: three with fold points, otherwise one."""
    return 1 + len(fold_points_1d(p, regime))


# ------------------------------------------------------ folded singularities

def folded_singularities(p: ModelParameters, regime: str = "h_slow",
                         n_grid: int = 4000) -> tuple[FoldedSingularity, FoldedSingularity]:
    """q_minus and q_plus: intersections of M_h (or M_n) with the fold curves."""
    check_regime(regime)
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    Vv = _along_1d(vs, p, regime)[2]
    roots = _roots(lambda v: float(_along_1d(v, p, regime)[2]), vs, Vv)
    if len(roots) < 2:
        raise NotFound(f"only {len(roots)} folded singularities at Ibar = {p.Ibar}")
    out = []
    for v, branch in ((roots[0], "minus"), (roots[-1], "plus")):
        h, n, _, _ = _along_1d(v, p, regime)
        out.append(FoldedSingularity(float(v), float(h), float(n), branch, regime))
    return out[0], out[1]


def relation_gap(qm: FoldedSingularity, qp: FoldedSingularity) -> float:
    """Signed gap that is positive exactly when a singular cycle links q_minus and q_plus.

    In h_slow this is h_q_minus - h_q_plus. Along M2 the n coordinate grows
    with v while h decreases, so in n_slow the orientation flips and the gap
    is n_q_plus - n_q_minus (checked against the fibre construction in
    ``singular_cycle``).
    """
    if qm.regime == "h_slow":
        return qm.slow() - qp.slow()
    return qp.slow() - qm.slow()


def orbital_relation(p: ModelParameters, regime: str = "h_slow") -> OrbitalRelation:
    qm, qp = folded_singularities(p, regime)
    gap = relation_gap(qm, qp)
    return OrbitalRelation(relation_kind(gap), gap)


def relation_kind(gap: float, tol: float = ALIGN_TOL) -> str:
    if gap > tol:
        return "Connected"
    if gap < -tol:
        return "Remote"
    return "Aligned"


# ------------------------------------------------------------- equilibrium

def _equilibrium_residual(v, p: ModelParameters):
    h = steady_state_v(GateKind.h, v, p)
    n = steady_state_v(GateKind.n, v, p)
    return V_slaved(v, h, n, p)


def true_equilibrium(p: ModelParameters, regime: str = "h_slow",
                     n_grid: int = 4000) -> Equilibrium:
    """Equilibrium of the full system with its branch of M_h / M_n and sheet."""
    check_regime(regime)
    lo, hi = window(p)
    vs = np.linspace(lo, hi, n_grid)
    roots = _roots(lambda v: float(_equilibrium_residual(v, p)), vs, _equilibrium_residual(vs, p))
    if not roots:
        raise NotFound(f"no equilibrium at Ibar = {p.Ibar}")
    v = roots[0]
    h = float(steady_state_v(GateKind.h, v, p))
    n = float(steady_state_v(GateKind.n, v, p))
    folds = fold_points_1d(p, regime)
    if len(folds) == 2:
        branch = "minus" if v < folds[0].v else ("plus" if v > folds[1].v else "r")
    else:
        branch = "unique"
    return Equilibrium(ReducedState(v, h, n), branch, sheet_of(v, h, n, p))


# ------------------------------------------------------------- projections

def project_fold(fold: FoldPoint, p: ModelParameters, n_grid: int = 4000,
                 exclusion: float = 1e-4) -> ReducedState:
    """Landing point of the fast fibre through a fold on the opposite attracting sheet."""
    lo, hi = window(p)
    h, n = fold.h, fold.n
    upward = fold.curve in ("L_minus", "p_minus") or fold.curve.endswith("minus")
    a, b = (fold.v + exclusion, hi) if upward else (lo, fold.v - exclusion)
    if a >= b:
        raise NoLandingPoint("fold sits at the edge of the window")
    vs = np.linspace(a, b, n_grid)
    f = lambda v: float(V_slaved(v, h, n, p))
    roots = _roots(f, vs, V_slaved(vs, h, n, p))
    if not roots:
        raise NoLandingPoint(f"no landing point from fold at v = {fold.v}")
    v = roots[-1] if upward else roots[0]
    return ReducedState(float(v), float(h), float(n))


def fast_gate_point(level: float, v_from: float, v_to: float, p: ModelParameters,
                    regime: str, n_grid: int = 800) -> float | None:
    """Potential between v_from and v_to where the slice meets M_h / M_n, if any."""
    a, b = sorted((v_from, v_to))
    vs = np.linspace(a, b, n_grid)
    h, n = _slice_arrays(vs, level, p, regime)
    if regime == "h_slow":
        g = n - steady_state_v(GateKind.n, vs, p)

        def fun(v):
            return nu(v, level, p).value - steady_state_v(GateKind.n, v, p)
    else:
        g = h - steady_state_v(GateKind.h, vs, p)

        def fun(v):
            return eta(v, level, p).value - steady_state_v(GateKind.h, v, p)
    roots = _roots(lambda v: float(fun(v)), vs, g)
    if not roots:
        return None
    return min(roots, key=lambda r: abs(r - v_from))


def singular_cycle(p: ModelParameters, regime: str = "h_slow") -> SingularCycle:
    """Singular cycle through q_minus built from fast, intermediate and slow pieces."""
    check_regime(regime)
    qm, qp = folded_singularities(p, regime)
    gap = relation_gap(qm, qp)
    rel = OrbitalRelation(relation_kind(gap), gap)

    def pt(v, level):
        hh, nn = _slice_point(v, level, p, regime)
        return (float(v), float(hh), float(nn))

    segs: list[Segment] = []
    s_minus = qm.slow()
    q_minus = (qm.v, qm.h, qm.n)
    land_up = project_fold(FoldPoint(qm.v, qm.h, qm.n, "L_minus"), p)
    segs.append(Segment("fast", q_minus, (land_up.v, land_up.h, land_up.n), "jump up from q_minus"))
    if rel.kind == "Connected":
        folds = slice_folds(s_minus, p, regime)
        v_turn = folds[-1].v
        v_upper = fast_gate_point(s_minus, land_up.v, v_turn, p, regime)
        if v_upper is None:
            raise NotFound("intermediate fibre misses the upper branch")
        segs.append(Segment("intermediate", (land_up.v, land_up.h, land_up.n),
                            pt(v_upper, s_minus), "upper sheet"))
        segs.append(Segment("slow", pt(v_upper, s_minus), (qp.v, qp.h, qp.n), "upper branch"))
        land_down = project_fold(FoldPoint(qp.v, qp.h, qp.n, "L_plus"), p)
        segs.append(Segment("fast", (qp.v, qp.h, qp.n), (land_down.v, land_down.h, land_down.n),
                            "jump down from q_plus"))
        s_plus = qp.slow()
        low_folds = slice_folds(s_plus, p, regime)
        v_stop = low_folds[0].v if low_folds else qm.v
        v_lower = fast_gate_point(s_plus, land_down.v, v_stop, p, regime)
        if v_lower is None:
            raise NotFound("intermediate fibre misses the lower branch")
        segs.append(Segment("intermediate", (land_down.v, land_down.h, land_down.n),
                            pt(v_lower, s_plus), "lower sheet"))
        segs.append(Segment("slow", pt(v_lower, s_plus), q_minus, "lower branch"))
    else:
        folds = slice_folds(s_minus, p, regime)
        if len(folds) < 2:
            raise NotFound("slice through q_minus has no upper fold")
        top = folds[-1]
        top = FoldPoint(top.v, top.h, top.n, "L_plus")
        segs.append(Segment("intermediate", (land_up.v, land_up.h, land_up.n),
                            (top.v, top.h, top.n), "upper sheet to fold"))
        land_down = project_fold(top, p)
        segs.append(Segment("fast", (top.v, top.h, top.n),
                            (land_down.v, land_down.h, land_down.n), "jump down"))
        segs.append(Segment("intermediate", (land_down.v, land_down.h, land_down.n),
                            q_minus, "lower sheet to q_minus"))
        # degenerate slow piece: the lower branch is met exactly at q_minus
        segs.append(Segment("slow", q_minus, q_minus, "lower branch"))
    return SingularCycle(segs, rel)
