"""Time integration of the full and reduced models, event extraction and pattern classes.

All systems are integrated on the common time t in which dh/dt = delta_h H and
dn/dt = delta_n N, so durations and periods are comparable between systems:

* ``full4d``:   gamma eps v' = V,  eps m' = M,  h' = delta_h H,  n' = delta_n N
* ``reduced3d``: eps v' = U (m = mu on the three-dimensional slow manifold)
* ``slaved_m``:  e v' = V(v, m_inf(v), h, n) with e = C/(k_t g_Na)
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.integrate import odeint

from .errors import LeftDomain, StepUnderflow, TooShort, Unclassifiable
from .model_core import FullState, GateKind, ModelParameters, ReducedState, timescale_T

__all__ = [
    "SYSTEMS",
    "Trajectory",
    "PatternClass",
    "PatternReport",
    "Event",
    "ClassifierSettings",
    "SweepPoint",
    "SweepResult",
    "Boundary",
    "system_rhs",
    "default_initial",
    "integrate",
    "extract_events",
    "classify_pattern",
    "simulate_and_classify",
    "sweep_current",
]

SYSTEMS = ("full4d", "reduced3d", "slaved_m")
DOMAIN_INFLATION = 0.1
MIN_STEP = 1e-14
MAX_STEP = 0.5


# ----------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _xexp(s):
    # s / (1 - exp(-s)), removable singularity at s = 0
    if abs(s) < 1e-4:
        return 1.0 + s / 2.0 + s * s / 12.0
    return s / (1.0 - math.exp(-s))


@numba.njit(cache=True)
def _rates(V, bn):
    am = _xexp((V + 40.0) / 10.0)
    bm = 4.0 * math.exp(-(V + 65.0) / 18.0)
    ah = 0.07 * math.exp(-(V + 65.0) / 20.0)
    bh = 1.0 / (1.0 + math.exp(-(V + 35.0) / 10.0))
    an = 0.1 * _xexp((V + 55.0) / 10.0)
    b_n = bn * math.exp(-(V + 65.0) / 80.0)
    return am, bm, ah, bh, an, b_n


# parameter vector layout shared by the kernels
# 0 Ibar, 1 gK, 2 gL, 3 ENa, 4 EK, 5 EL, 6 gamma, 7 eps, 8 delta_h, 9 delta_n,
# 10 T_m, 11 T_h, 12 T_n, 13 beta_n_scale, 14 k_v, 15 e (= C/(k_t g_Na))

@numba.njit(cache=True)
def _rhs_full4d(y, t, q):
    v, m, h, n = y[0], y[1], y[2], y[3]
    am, bm, ah, bh, an, b_n = _rates(q[14] * v, q[13])
    V = q[0] - (v - q[3]) * m ** 3 * h - q[1] * (v - q[4]) * n ** 4 - q[2] * (v - q[5])
    out = np.empty(4)
    out[0] = V / (q[6] * q[7])
    out[1] = (am - (am + bm) * m) / q[10] / q[7]
    out[2] = q[8] * (ah - (ah + bh) * h) / q[11]
    out[3] = q[9] * (an - (an + b_n) * n) / q[12]
    return out


@numba.njit(cache=True)
def _rhs_slaved(y, t, q):
    v, h, n = y[0], y[1], y[2]
    am, bm, ah, bh, an, b_n = _rates(q[14] * v, q[13])
    mi = am / (am + bm)
    V = q[0] - (v - q[3]) * mi ** 3 * h - q[1] * (v - q[4]) * n ** 4 - q[2] * (v - q[5])
    out = np.empty(3)
    out[0] = V / q[15]
    out[1] = q[8] * (ah - (ah + bh) * h) / q[11]
    out[2] = q[9] * (an - (an + b_n) * n) / q[12]
    return out


@numba.njit(cache=True)
def _rhs_reduced(y, t, q):
    v, h, n = y[0], y[1], y[2]
    am, bm, ah, bh, an, b_n = _rates(q[14] * v, q[13])
    mi = am / (am + bm)
    num = q[0] - q[1] * (v - q[4]) * n ** 4 - q[2] * (v - q[5])
    den = (v - q[3]) * h
    R = num / den
    mu = math.copysign(abs(R) ** (1.0 / 3.0), R)
    k = 1.0 / (3.0 * mu * mu)
    R_v = ((-q[1] * n ** 4 - q[2]) * den - num * h) / (den * den)
    mu_v = R_v * k
    mu_h = -R / h * k
    mu_n = -4.0 * q[1] * (v - q[4]) * n ** 3 / den * k
    H = (ah - (ah + bh) * h) / q[11]
    N = (an - (an + b_n) * n) / q[12]
    t_m = q[10] / (am + bm)
    U = ((mi - mu) / (t_m * mu_v) - q[7] * q[8] * H * mu_h / mu_v
         - q[7] * q[9] * N * mu_n / mu_v)
    out = np.empty(3)
    out[0] = U / q[7]
    out[1] = q[8] * H
    out[2] = q[9] * N
    return out


_KERNELS = {"full4d": _rhs_full4d, "reduced3d": _rhs_reduced, "slaved_m": _rhs_slaved}


def _param_vector(p: ModelParameters) -> np.ndarray:
    return np.array([
        p.Ibar, p.gbar_K, p.gbar_L, p.Ebar_Na, p.Ebar_K, p.Ebar_L, p.gamma, p.epsilon_mid,
        p.delta_h, p.delta_n, timescale_T(GateKind.m, p), timescale_T(GateKind.h, p),
        timescale_T(GateKind.n, p), p.beta_n_scale, p.k_v, p.epsilon,
    ], dtype=float)


def _check_system(system: str) -> str:
    if system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}, got {system!r}")
    return system


def system_rhs(system: str, p: ModelParameters):
    """Right-hand side f(y, t) of the chosen system (compiled kernel bound to p)."""
    kern = _KERNELS[_check_system(system)]
    q = _param_vector(p)
    return lambda y, t=0.0: kern(np.asarray(y, dtype=float), t, q)


# ------------------------------------------------------------- trajectories

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def system(self) -> str:
        return self.meta.get("system", "")

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 0]

    def state(self, k: int):
        y = self.states[k]
        return FullState.from_array(y) if len(y) == 4 else ReducedState.from_array(y)

    def __len__(self) -> int:
        return len(self.times)

    def tail(self, fraction: float) -> "Trajectory":
        """Drop the leading fraction of the time span (transient)."""
        if len(self.times) == 0:
            return self
        t0 = self.times[0] + fraction * (self.times[-1] - self.times[0])
        k = int(np.searchsorted(self.times, t0))
        return Trajectory(self.times[k:], self.states[k:], dict(self.meta))


def _as_array(initial, system: str, p: ModelParameters) -> np.ndarray:
    if isinstance(initial, (FullState, ReducedState)):
        y = initial.as_array()
    else:
        y = np.asarray(initial, dtype=float).ravel()
    dim = 4 if system == "full4d" else 3
    if len(y) == 3 and dim == 4:
        from .reduction import mu

        m = float(mu(y[0], y[1], y[2], p).value)
        y = np.array([y[0], m, y[1], y[2]])
    elif len(y) == 4 and dim == 3:
        y = y[[0, 2, 3]]
    if len(y) != dim:
        raise ValueError(f"initial condition has length {len(y)}, expected {dim}")
    return y


def default_initial(p: ModelParameters, system: str = "slaved_m", shift: float = 0.05):
    """Equilibrium of the full model shifted by +shift in v (gates kept at steady state)."""
    from .geometry import true_equilibrium

    eq = true_equilibrium(p).point
    y = np.array([eq.v + shift, eq.h, eq.n])
    if system == "full4d":
        from .model_core import steady_state_v

        return np.array([y[0], float(steady_state_v(GateKind.m, y[0], p)), y[1], y[2]])
    return y


def _check_domain(states: np.ndarray, p: ModelParameters) -> None:
    if not np.all(np.isfinite(states)):
        raise LeftDomain("state became non-finite")
    v = states[:, 0]
    g = states[:, 1:]
    d = DOMAIN_INFLATION
    if np.any(v < p.Ebar_K - d) or np.any(v > p.Ebar_Na + d) or np.any(g < -d) or np.any(g > 1 + d):
        raise LeftDomain("state left the inflated domain")


def integrate(system: str, initial, duration: float, p: ModelParameters,
              rel_tol: float = 1e-8, abs_tol: float = 1e-10, dt: float = 0.01,
              max_steps: int = 2_000_000, max_step: float = MAX_STEP) -> Trajectory:
    """Integrate with LSODA (stiff/non-stiff switching, local error control).

    Output is sampled every ``dt`` time units; the first state is ``initial``.
    The step cap keeps the implicit phase from stepping over the period of a
    weakly growing focus, which would otherwise damp it numerically.
    """
    _check_system(system)
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if system == "full4d" and p.gamma * p.epsilon_mid == 0:
        raise ValueError("full4d needs gamma > 0 and epsilon_mid > 0")
    if system == "reduced3d" and p.epsilon_mid == 0:
        raise ValueError("reduced3d needs epsilon_mid > 0")
    y0 = _as_array(initial, system, p)
    meta = {"system": system, "integrator": "LSODA", "rel_tol": rel_tol, "abs_tol": abs_tol,
            "max_step": max_step, "Ibar": p.Ibar}
    if duration == 0:
        return Trajectory(np.array([0.0]), y0[None, :].copy(), {**meta, "steps": 0, "rhs_evals": 0})
    n_out = max(int(round(duration / dt)), 1)
    times = np.linspace(0.0, duration, n_out + 1)
    q = _param_vector(p)
    kern = _KERNELS[system]
    states, info = odeint(kern, y0, times, args=(q,), rtol=rel_tol, atol=abs_tol,
                          full_output=True, mxstep=max_steps, hmin=MIN_STEP,
                          hmax=max_step)
    ok = info["message"].startswith("Integration successful")
    if not ok:
        if not np.all(np.isfinite(states)):
            raise LeftDomain(info["message"])
        raise StepUnderflow(info["message"])
    _check_domain(states, p)
    meta.update(steps=int(info["nst"][-1]), rhs_evals=int(info["nfe"][-1]),
                min_step=float(np.min(info["hu"][info["hu"] > 0])) if np.any(info["hu"] > 0) else 0.0)
    states[0] = y0
    return Trajectory(times, states, meta)


# ------------------------------------------------------------------- events

class PatternClass(str, enum.Enum):
    Steady = "Steady"
    DoubleEpoch = "DoubleEpoch"
    TransitionalMMO = "TransitionalMMO"
    SingleEpoch = "SingleEpoch"
    Relaxation = "Relaxation"


@dataclass(frozen=True)
class Event:
    """A large excursion (``kind='LAO'``, at its peak) or a slow epoch."""

    kind: str
    start: float
    end: float
    tag: str = ""
    sao_count: int = 0
    v_mean: float = float("nan")


@dataclass(frozen=True)
class ClassifierSettings:
    """Operational thresholds; ``None`` means derived from the trajectory.

    amplitude_threshold: LAO prominence (default half the v range).
    v_split: above/below boundary (default midpoint of v_q_minus and v_q_plus).
    slow_rate_fraction: slow epochs have |v'| below this fraction of the
        median |v'| over fast samples (those with |v'| above the range per unit time).
    slow_rate: absolute |v'| threshold that replaces the relative one when set.
    min_above_duration, min_below_duration: shortest slow interval counted as
        an epoch on each side. Epochs above are brief pauses at the top of the
        first spike; below, a longer floor keeps the return ramp of a
        relaxation cycle from counting.
    transient_fraction: leading part of the trajectory discarded.
    steady_tolerance: v range below which the trajectory is Steady.
    """

    amplitude_threshold: float | None = None
    v_split: float | None = None
    slow_rate_fraction: float = 0.004
    slow_rate: float | None = None
    min_above_duration: float = 0.25
    min_below_duration: float = 4.0
    transient_fraction: float = 0.3
    steady_tolerance: float = 1e-3
    min_periods: int = 3
    sao_prominence: float = 1e-4


@dataclass(frozen=True)
class PatternReport:
    pattern: PatternClass
    epochs_above: float
    epochs_below: float
    lao_count: float
    sao_counts: tuple[int, ...]
    period_estimate: float
    symbols: str = ""

    @property
    def cls(self) -> PatternClass:
        return self.pattern


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [a, b) where mask is True."""
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return list(zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]))


def _default_split(p: ModelParameters | None, v: np.ndarray, regime: str) -> float:
    if p is not None:
        try:
            from .geometry import folded_singularities

            qm, qp = folded_singularities(p, regime)
            return 0.5 * (qm.v + qp.v)
        except Exception:
            pass
    return float(0.5 * (v.min() + v.max()))


def extract_events(traj: Trajectory, v_split: float | None = None,
                   amplitude_threshold: float | None = None,
                   settings: ClassifierSettings | None = None,
                   p: ModelParameters | None = None, regime: str = "h_slow") -> list[Event]:
    """LAO peaks and slow epochs of v, ordered in time.

    |v'| comes from finite differences of the sampled v, so the result does not
    depend on which integrator produced the samples.
    """
    from scipy.signal import find_peaks

    s = settings or ClassifierSettings()
    t, v = traj.times, traj.v
    if len(t) < 5:
        raise TooShort("trajectory has fewer than five samples")
    rng = float(v.max() - v.min())
    if rng < s.steady_tolerance:
        return []
    amp = amplitude_threshold if amplitude_threshold is not None else (
        s.amplitude_threshold if s.amplitude_threshold is not None else 0.5 * rng)
    split = v_split if v_split is not None else (
        s.v_split if s.v_split is not None else _default_split(p, v, regime))

    events: list[Event] = []
    peaks, _ = find_peaks(v, prominence=amp)
    for k in peaks:
        events.append(Event("LAO", float(t[k]), float(t[k]), "above" if v[k] > split else "below",
                            0, float(v[k])))

    dv = np.abs(np.gradient(v, t))
    fast = dv[dv > rng]
    if fast.size == 0:
        fast = dv
    slow_rate = s.slow_rate if s.slow_rate is not None else (
        s.slow_rate_fraction * float(np.median(fast)))
    epochs = []
    for a, b in _runs(dv < slow_rate):
        if b - a < 2:
            continue
        tag = "above" if float(np.mean(v[a:b])) > split else "below"
        floor = s.min_above_duration if tag == "above" else s.min_below_duration
        if t[b - 1] - t[a] < floor:
            continue
        epochs.append([a, b, tag])
    # join same-side epochs split by brief faster wiggles with no LAO between them
    merged: list[list] = []
    for e in epochs:
        if merged and merged[-1][2] == e[2]:
            prev = merged[-1]
            between = (peaks > prev[1]) & (peaks < e[0])
            crossed = np.any(np.sign(v[prev[1]:e[0]] - split) != np.sign(v[prev[0]] - split))
            if not np.any(between) and not crossed:
                prev[1] = e[1]
                continue
        merged.append(list(e))
    for a, b, tag in merged:
        seg = v[a:b]
        saos = len(find_peaks(seg, prominence=s.sao_prominence)[0]) if b - a > 2 else 0
        events.append(Event("epoch", float(t[a]), float(t[b - 1]), tag, saos, float(np.mean(seg))))
    events.sort(key=lambda e: e.start)
    return events


def _symbols(events: list[Event]) -> str:
    out = []
    for e in events:
        out.append("L" if e.kind == "LAO" else ("A" if e.tag == "above" else "B"))
    return "".join(out)


def _period(events: list[Event], symbols: str) -> float:
    """Mean spacing of the most regular recurring marker (below epochs, else LAOs)."""
    for mark in ("B", "A", "L"):
        ts = [e.start for e, c in zip(events, symbols) if c == mark]
        if len(ts) >= 2:
            return float(np.mean(np.diff(ts)))
    return float("nan")


def classify_pattern(traj: Trajectory, settings: ClassifierSettings | None = None,
                     p: ModelParameters | None = None, regime: str = "h_slow") -> PatternReport:
    """Apply the pattern definitions to the post-transient part of a trajectory."""
    s = settings or ClassifierSettings()
    tail = traj.tail(s.transient_fraction)
    if len(tail) < 5:
        raise TooShort("nothing left after discarding the transient")
    v = tail.v
    if float(v.max() - v.min()) < s.steady_tolerance:
        return PatternReport(PatternClass.Steady, 0.0, 0.0, 0.0, (), float("nan"), "")
    events = extract_events(tail, settings=s, p=p, regime=regime)
    sym = _symbols(events)
    n_lao, n_a, n_b = sym.count("L"), sym.count("A"), sym.count("B")
    period = _period(events, sym)
    n_periods = max(n_b, 1) if n_b else (n_a if n_a else n_lao)
    saos = tuple(e.sao_count for e in events if e.kind == "epoch")
    if n_lao == 0 and n_a + n_b == 0:
        raise Unclassifiable("oscillation without large excursions or slow epochs")
    if n_lao + n_a + n_b < s.min_periods:
        raise TooShort(f"only {n_lao + n_a + n_b} events after the transient")

    # epochs above and below separated by an excursion: an LAO after an A and before the next B
    separated = False
    last_a = False
    for c in sym:
        if c == "A":
            last_a = True
        elif c == "L" and last_a:
            separated = True
        elif c == "B":
            last_a = False
    if n_a and n_b:
        pattern = PatternClass.TransitionalMMO if separated else PatternClass.DoubleEpoch
        if separated and _only_at_edges(sym):
            pattern = PatternClass.DoubleEpoch
    elif n_b:
        pattern = PatternClass.SingleEpoch
    elif n_a:
        # slow dynamics only above is not among the known classes
        raise Unclassifiable(f"slow epochs only above the split: {sym[:40]}")
    else:
        pattern = PatternClass.Relaxation
    per = float(n_periods)
    return PatternReport(pattern, n_a / per, n_b / per, n_lao / per, saos, period, sym)


def _only_at_edges(sym: str) -> bool:
    """A separating LAO that only appears in the final, truncated cycle does not count."""
    core = sym[: sym.rfind("B")] if "B" in sym else sym
    last_a = False
    for c in core:
        if c == "A":
            last_a = True
        elif c == "L" and last_a:
            return False
        elif c == "B":
            last_a = False
    return True


# ------------------------------------------------------------------- sweeps

DEFAULT_DURATION = {"h_slow": 8000.0, "n_slow": 20000.0}
UNCLASSIFIABLE = "Unclassifiable"


def _preset(regime: str) -> ModelParameters:
    if regime == "h_slow":
        return ModelParameters.h_slow()
    if regime == "n_slow":
        return ModelParameters.n_slow()
    raise ValueError(f"unknown regime {regime!r}")


def simulate_and_classify(I_physical: float, regime: str = "h_slow",
                          p: ModelParameters | None = None, system: str = "slaved_m",
                          duration: float | None = None, dt: float = 0.02,
                          settings: ClassifierSettings | None = None) -> PatternReport:
    """Simulate from the default initial condition at one current and classify."""
    base = p if p is not None else _preset(regime)
    q = base.with_current(I_physical)
    T = duration if duration is not None else DEFAULT_DURATION.get(regime, 8000.0)
    traj = integrate(system, default_initial(q, system), T, q, dt=dt)
    return classify_pattern(traj, settings, p=q, regime=regime)


@dataclass(frozen=True)
class SweepPoint:
    I_physical: float
    label: str
    report: PatternReport | None = None


@dataclass(frozen=True)
class Boundary:
    """A class change located between ``lower`` and ``upper`` (physical current)."""

    lower: float
    upper: float
    left: str
    right: str

    @property
    def location(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    boundaries: tuple[Boundary, ...]

    def labels(self) -> list[str]:
        return [pt.label for pt in self.points]

    def find(self, left: str, right: str) -> list[Boundary]:
        return [b for b in self.boundaries if b.left == left and b.right == right]


def _classify_job(args) -> SweepPoint:
    I, regime, p, system, duration, settings = args
    try:
        rep = simulate_and_classify(I, regime, p, system, duration, settings=settings)
        return SweepPoint(float(I), rep.pattern.value, rep)
    except (Unclassifiable, TooShort):
        return SweepPoint(float(I), UNCLASSIFIABLE, None)


def _map(jobs: list, workers: int) -> list[SweepPoint]:
    if workers <= 1 or len(jobs) <= 1:
        return [_classify_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(_classify_job, jobs))


def sweep_current(I_range: tuple[float, float], regime: str = "h_slow",
                  p: ModelParameters | None = None, n_points: int = 21,
                  resolution: float = 0.1, workers: int | None = None,
                  system: str = "slaved_m", duration: float | None = None,
                  settings: ClassifierSettings | None = None,
                  grid=None) -> SweepResult:
    """Classify on a grid, then bisect every class change down to ``resolution``.

    All brackets are refined together, one round at a time, so each round is a
    single batch for the worker pool.
    """
    lo, hi = map(float, I_range)
    if not hi > lo:
        raise ValueError("empty current range")
    base = p if p is not None else _preset(regime)
    if workers is None:
        workers = os.cpu_count() or 1
    xs = np.asarray(grid, dtype=float) if grid is not None else np.linspace(lo, hi, n_points)
    mk = lambda I: (float(I), regime, base, system, duration, settings)  # noqa: E731
    points = {pt.I_physical: pt for pt in _map([mk(I) for I in xs], workers)}

    brackets = []
    ordered = sorted(points)
    for a, b in zip(ordered[:-1], ordered[1:]):
        if points[a].label != points[b].label:
            brackets.append((a, b))
    while True:
        todo = [(a, b) for a, b in brackets if b - a > resolution]
        if not todo:
            break
        mids = _map([mk(0.5 * (a + b)) for a, b in todo], workers)
        nxt = [br for br in brackets if br[1] - br[0] <= resolution]
        for (a, b), pt in zip(todo, mids):
            m = pt.I_physical
            points[m] = pt
            if pt.label != points[a].label:
                nxt.append((a, m))
            if pt.label != points[b].label:
                nxt.append((m, b))
        brackets = sorted(nxt)
    bounds = tuple(Boundary(a, b, points[a].label, points[b].label) for a, b in sorted(brackets))
    return SweepResult(tuple(points[k] for k in sorted(points)), bounds)
