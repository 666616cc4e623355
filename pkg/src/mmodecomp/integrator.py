"""Adaptive explicit Runge-Kutta integration with dense output and events.

The stepper is an embedded Dormand-Prince 5(4) pair with PI step-size
control and the standard quartic dense-output interpolant.  Section
crossings are located on the dense interpolant by bisection with a secant
polish to a time tolerance of 1e-12.  Everything here is pure: no shared
mutable state, so concurrent use over disjoint problems is safe.

Backward integration (t_end < t0) is supported; trajectory times are then
strictly decreasing instead of strictly increasing.  Events are assumed to
cross at most once per accepted step, which holds for the monotone section
functions used by the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    MaxStepsExceeded,
    NonFiniteState,
    SectionNotReached,
    StepSizeUnderflow,
)

__all__ = [
    "OdeProblem",
    "EventSpec",
    "EventHit",
    "Trajectory",
    "SolveResult",
    "solve_adaptive",
    "flow_to_section",
]

# Dormand-Prince 5(4) tableau (FSAL: last stage reused as next first stage).
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0),
)
# 5th-order propagating weights (row 7 of the extended tableau).
_B = np.array(_A[6])
# Difference between 5th- and 4th-order weights (error estimator).
_E = np.array([71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
               -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0])
# Dense-output coefficients: y(t0+theta*h) = y0 + h*(K^T P) @ [theta..theta^4].
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
     -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0,
     69997945.0 / 29380423.0],
])

_SAFETY = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_EVENT_TIME_TOL = 1e-12
_UNDERFLOW_FRACTION = 1e-14


@dataclass(frozen=True)
class OdeProblem:
    """An initial value problem dy/dt = rhs(t, y).

    Parameters are expected to be closed over by ``rhs``.  Tolerances apply
    per step: local error is kept below abs_tol + rel_tol*|y| componentwise
    (RMS-normed).
    """

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    y0: np.ndarray
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_step: float = np.inf

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not (self.abs_tol > 0.0 and self.rel_tol > 0.0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0.0:
            raise ValueError("max_step must be positive")
        y0 = np.asarray(self.y0, dtype=float)
        if y0.shape != (self.dimension,):
            raise ValueError("y0 length must equal dimension")
        object.__setattr__(self, "y0", y0)


@dataclass(frozen=True)
class EventSpec:
    """Scalar event g(y) = 0 with a crossing direction.

    direction: 'rising' (- to +), 'falling' (+ to -) or 'any'.  A start
    exactly on the section counts as an immediate crossing only for
    direction 'any'; otherwise integration proceeds, so trajectories that
    begin on a section (e.g. jump points on a fold line) do not
    self-trigger.
    """

    event_fn: Callable[[np.ndarray], float]
    direction: str = "any"
    terminal: bool = False

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class EventHit:
    event_index: int
    t: float
    y: np.ndarray


class Trajectory:
    """Accepted integration nodes plus per-step dense interpolation data.

    ``times``/``states`` hold the accepted step endpoints (strictly
    monotone in integration direction).  Calling the trajectory evaluates
    the quartic dense interpolant; at stored nodes it reproduces the stored
    states to machine precision.
    """

    def __init__(self, t0: float, y0: np.ndarray):
        self._times = [t0]
        self._states = [np.array(y0, dtype=float)]
        # per step: (t_left, h, y_left, K) with K shape (7, dim)
        self._segments: list[tuple[float, float, np.ndarray, np.ndarray]] = []
        self._q_cache: dict[int, np.ndarray] = {}

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times)

    @property
    def states(self) -> np.ndarray:
        return np.array(self._states)

    def _append(self, t: float, y: np.ndarray, segment) -> None:
        self._times.append(t)
        self._states.append(y.copy())
        self._segments.append(segment)

    def _truncate_last(self, t: float, y: np.ndarray) -> None:
        # Terminal event landed inside the last step: clip the node there
        # but keep the step's dense data for interpolation up to t.
        self._times[-1] = t
        self._states[-1] = y.copy()

    def _segment_q(self, idx: int) -> np.ndarray:
        q = self._q_cache.get(idx)
        if q is None:
            _, h, _, k = self._segments[idx]
            q = k.T @ _P
            self._q_cache[idx] = q
        return q

    def _eval_segment(self, idx: int, t: float) -> np.ndarray:
        t_left, h, y_left, _ = self._segments[idx]
        theta = (t - t_left) / h
        p = np.array([theta, theta * theta, theta**3, theta**4])
        return y_left + h * (self._segment_q(idx) @ p)

    def _locate_segment(self, t: float) -> int:
        times = self._times
        n_seg = len(self._segments)
        if n_seg == 0:
            raise ValueError("empty trajectory has no dense output")
        increasing = times[-1] >= times[0]
        lo, hi = 0, n_seg - 1
        while lo < hi:
            mid = (lo + hi) // 2
            t_right = times[mid + 1]
            inside = t <= t_right if increasing else t >= t_right
            if inside:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t_arr.size, self._states[0].size))
        for i, ti in enumerate(t_arr):
            out[i] = self._eval_segment(self._locate_segment(ti), ti)
        if np.isscalar(t) or np.ndim(t) == 0:
            return out[0]
        return out


@dataclass
class SolveResult:
    trajectory: Trajectory
    events: list[EventHit]
    status: str  # 'reached_t_end' or 'terminal_event'
    t_final: float
    y_final: np.ndarray


def _initial_step(rhs, t0, y0, f0, direction, span, abs_tol, rel_tol, max_step):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 * span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = np.asarray(rhs(t0 + h0 * direction, y1), dtype=float)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span, max_step)


def _refine_event(traj_eval, g_fn, t_lo, t_hi, g_lo, g_hi):
    """Root of g(traj(t)) in [t_lo, t_hi] by bisection + secant polish."""
    # bisection to a coarse bracket
    for _ in range(200):
        if abs(t_hi - t_lo) <= 1e-6 * max(1.0, abs(t_lo)):
            break
        t_mid = 0.5 * (t_lo + t_hi)
        g_mid = g_fn(traj_eval(t_mid))
        if g_mid == 0.0:
            return t_mid
        if (g_lo < 0.0) == (g_mid < 0.0):
            t_lo, g_lo = t_mid, g_mid
        else:
            t_hi, g_hi = t_mid, g_mid
    # secant polish inside the bracket, falling back to bisection
    for _ in range(100):
        if abs(t_hi - t_lo) <= _EVENT_TIME_TOL:
            break
        denom = g_hi - g_lo
        if denom != 0.0:
            t_new = t_lo - g_lo * (t_hi - t_lo) / denom
        else:
            t_new = 0.5 * (t_lo + t_hi)
        lo, hi = (t_lo, t_hi) if t_lo < t_hi else (t_hi, t_lo)
        if not (lo < t_new < hi):
            t_new = 0.5 * (t_lo + t_hi)
        g_new = g_fn(traj_eval(t_new))
        if g_new == 0.0:
            return t_new
        if (g_new < 0.0) == (g_lo < 0.0):
            t_lo, g_lo = t_new, g_new
        else:
            t_hi, g_hi = t_new, g_new
    return 0.5 * (t_lo + t_hi)


def _is_crossing(g_prev, g_new, direction):
    if direction == "rising":
        return g_prev < 0.0 and g_new >= 0.0
    if direction == "falling":
        return g_prev > 0.0 and g_new <= 0.0
    return (g_prev < 0.0 and g_new >= 0.0) or (g_prev > 0.0 and g_new <= 0.0)


def solve_adaptive(
    problem: OdeProblem,
    t_end: float,
    events: Sequence[EventSpec] = (),
    max_steps: int = 1_000_000,
) -> SolveResult:
    """Integrate to t_end, recording dense output and locating events.

    Each located crossing satisfies |event_fn| <= 1e-10 at the reported
    state; terminal events stop the integration there.
    """
    t0, y0 = problem.t0, problem.y0
    if t_end == t0:
        raise ValueError("t_end must differ from t0")
    rhs = problem.rhs
    dim = problem.dimension
    direction = 1.0 if t_end > t0 else -1.0
    span = abs(t_end - t0)
    abs_tol, rel_tol = problem.abs_tol, problem.rel_tol

    traj = Trajectory(t0, y0)
    hits: list[EventHit] = []

    g_prev = [ev.event_fn(y0) for ev in events]
    for i, ev in enumerate(events):
        if g_prev[i] == 0.0 and ev.direction == "any":
            hits.append(EventHit(i, t0, y0.copy()))
            if ev.terminal:
                return SolveResult(traj, hits, "terminal_event", t0, y0.copy())

    f0 = np.asarray(rhs(t0, y0), dtype=float)
    if not np.all(np.isfinite(f0)):
        raise NonFiniteState(f"non-finite derivative at t0={t0}")
    h = _initial_step(rhs, t0, y0, f0, direction, span, abs_tol, rel_tol,
                      problem.max_step)

    t, y, f = t0, y0.copy(), f0
    fac_old = 1e-4
    k = np.empty((7, dim))
    n_steps = 0

    while (t_end - t) * direction > 0.0:
        if n_steps >= max_steps:
            raise MaxStepsExceeded(f"exceeded {max_steps} steps at t={t}")
        remaining = abs(t_end - t)
        h = min(h, problem.max_step, remaining)
        if h < _UNDERFLOW_FRACTION * span:
            raise StepSizeUnderflow(
                f"step size {h:.3e} underflowed at t={t} "
                "(stiffness or singularity)")
        reaches_end = h == remaining
        hs = h * direction
        k[0] = f
        for s in range(1, 7):
            acc = _A[s][0] * k[0]
            for j in range(1, s):
                a_sj = _A[s][j]
                if a_sj != 0.0:
                    acc = acc + a_sj * k[j]
            k[s] = rhs(t + _C[s] * hs, y + hs * acc)
        y_new = y + hs * (k[:6].T @ _B)
        # FSAL: stage 7 is the derivative at the new point
        f_new = np.asarray(rhs(t + hs, y_new), dtype=float)
        k[6] = f_new
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            raise NonFiniteState(f"non-finite state near t={t}")
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean(((hs * (_E @ k)) / scale) ** 2)))

        if err <= 1.0:
            # snap the clamped final step exactly onto t_end
            t_new = t_end if reaches_end else t + hs
            traj._append(t_new, y_new, (t, hs, y.copy(), k.copy()))
            seg_idx = len(traj._segments) - 1

            terminal_hit = None
            if events:
                for i, ev in enumerate(events):
                    g_new = ev.event_fn(y_new)
                    if _is_crossing(g_prev[i], g_new, ev.direction):
                        t_ev = _refine_event(
                            lambda tt: traj._eval_segment(seg_idx, tt),
                            ev.event_fn, t, t_new, g_prev[i], g_new)
                        y_ev = traj._eval_segment(seg_idx, t_ev)
                        hit = EventHit(i, t_ev, y_ev)
                        if ev.terminal and (terminal_hit is None
                                            or (hit.t - terminal_hit.t)
                                            * direction < 0.0):
                            terminal_hit = hit
                        elif not ev.terminal:
                            hits.append(hit)
                    g_prev[i] = g_new
            if terminal_hit is not None:
                # drop non-terminal hits recorded past the stopping time
                hits = [hh for hh in hits
                        if (hh.t - terminal_hit.t) * direction <= 0.0]
                hits.append(terminal_hit)
                hits.sort(key=lambda hh: hh.t * direction)
                traj._truncate_last(terminal_hit.t, terminal_hit.y)
                return SolveResult(traj, hits, "terminal_event",
                                   terminal_hit.t, terminal_hit.y.copy())

            t, y, f = t_new, y_new, f_new
            n_steps += 1
            err = max(err, 1e-10)
            fac = err**_EXPO1 / fac_old**_BETA
            fac = max(1.0 / _MAX_FACTOR, min(1.0 / _MIN_FACTOR, fac / _SAFETY))
            h = h / fac
            fac_old = max(err, 1e-4)
        else:
            fac = min(1.0 / _MIN_FACTOR, err**_EXPO1 / _SAFETY)
            h = h / fac

    hits.sort(key=lambda hh: hh.t * direction)
    return SolveResult(traj, hits, "reached_t_end", t, y.copy())


def flow_to_section(
    problem: OdeProblem,
    section: EventSpec,
    t_max: float,
    max_steps: int = 1_000_000,
) -> tuple[np.ndarray, float]:
    """Flow until the first crossing of ``section``; return (state, time).

    ``t_max`` is the horizon measured from t0 (sign gives the integration
    direction).  Raises SectionNotReached when the horizon is exhausted.
    """
    if t_max == 0.0:
        raise ValueError("t_max must be nonzero")
    terminal = replace(section, terminal=True)
    result = solve_adaptive(problem, problem.t0 + t_max, events=[terminal],
                            max_steps=max_steps)
    if result.status != "terminal_event":
        raise SectionNotReached(
            "section not crossed within the time horizon",
            last_state=result.y_final, last_time=result.t_final)
    hit = result.events[-1]
    return hit.y, hit.t
