"""Local-global hybrid model of mixed-mode oscillations.

Small oscillations come from integrating one of two local normal forms in
fast time between the sections {x = k1} and {x = -k2} (offsets are stored
as multiples of sqrt(eps)); the large-amplitude global return is an
abstract map applied to (y, z) at the exit section,

    m21(y, z) = (k1^2, m(z)) + eps * [A (y, z)^T + b] + O(eps^2),
    m(z) = m2 z^2 + m1 z + m0,

whose singular limit (eps-order terms disabled) is used for all reference
sweeps.  Every application of the global map contributes exactly one
symbolic large-amplitude oscillation; no large-amplitude trajectory is
integrated.

Small oscillations are counted as local maxima of x(t) strictly between
the sections with |x| below a configurable amplitude window (default
2*sqrt(eps)).  The window multiplier reproduces the reference signature
sweeps and is an explicit, documented choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import Escape, ResonantMu, SectionNotReached
from .integrator import EventSpec, OdeProblem, solve_adaptive

__all__ = [
    "FoldedNodeNF",
    "SingularHopfNF",
    "SectionPair",
    "GlobalReturnModel",
    "MmoSignature",
    "ReturnRecord",
    "HybridRun",
    "singular_hopf_equilibria",
    "canard_count",
    "local_flow_map",
    "global_return",
    "run_hybrid",
    "extract_signature",
    "signature_to_counts",
    "sao_counts_from_series",
    "detect_chaos",
    "ChaosReport",
]

_DEFAULT_SAO_WINDOW = 2.0
_DEFAULT_T_MAX = 20000.0
_ESCAPE_X = 5.0


@dataclass(frozen=True)
class FoldedNodeNF:
    """Folded-node normal form; mu is the eigenvalue-ratio parameter.

        eps * dx/dt = y - x^2
              dy/dt = -(mu + 1) x - z
              dz/dt = mu / 2

    The node regime needs 0 < mu < 1.
    """

    eps: float
    mu: float

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError("folded node regime requires mu in (0, 1)")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")

    def fast_rhs(self, t, s):
        x, y, z = s
        return np.array((y - x * x,
                         self.eps * (-(self.mu + 1.0) * x - z),
                         self.eps * self.mu * 0.5))


@dataclass(frozen=True)
class SingularHopfNF:
    """Singular-Hopf normal form with a global equilibrium.

        eps * dx/dt = y - x^2
              dy/dt = z - x
              dz/dt = -nu - a x - b y - c z
    """

    eps: float
    nu: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")

    def fast_rhs(self, t, s):
        x, y, z = s
        return np.array((y - x * x,
                         self.eps * (z - x),
                         self.eps * (-self.nu - self.a * x
                                     - self.b * y - self.c * z)))


NormalForm = Union[FoldedNodeNF, SingularHopfNF]


@dataclass(frozen=True)
class SectionPair:
    """Entry/exit section offsets as positive multiples of sqrt(eps)."""

    k1: float = 1.0
    k2: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0.0 or self.k2 <= 0.0:
            raise ValueError("section offsets must be positive")


@dataclass(frozen=True)
class GlobalReturnModel:
    """Coefficients of the abstract global return map."""

    m2: float = 0.0
    m1: float = 0.0
    m0: float = 0.0
    A: tuple = ((0.0, 0.0), (0.0, 0.0))
    b: tuple = (0.0, 0.0)
    eps_order_terms_enabled: bool = False

    def __post_init__(self):
        a = np.asarray(self.A, dtype=float)
        if a.shape != (2, 2):
            raise ValueError("A must be 2x2")
        if self.eps_order_terms_enabled and abs(np.linalg.det(a)) < 1e-14:
            raise ValueError("A must be invertible when eps-order terms "
                             "are enabled")
        object.__setattr__(self, "A", tuple(map(tuple, a.tolist())))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))

    def m(self, z: float) -> float:
        return self.m2 * z * z + self.m1 * z + self.m0


@dataclass
class MmoSignature:
    """Symbolic oscillation signature of a per-return SAO count sequence."""

    counts: list
    detected_period: Optional[int]
    canonical: Optional[str]

    @property
    def aperiodic(self) -> bool:
        return self.detected_period is None


@dataclass(frozen=True)
class ReturnRecord:
    return_index: int
    y_pre: float
    z_pre: float
    sao_count: int


@dataclass
class HybridRun:
    records: list
    signature: MmoSignature

    @property
    def sao_counts(self):
        return [r.sao_count for r in self.records]

    @property
    def z_pre(self):
        return np.array([r.z_pre for r in self.records])


def singular_hopf_equilibria(nf: SingularHopfNF) -> list:
    """Global equilibria (x, y, z) = (x, x^2, x), -nu = (a+c)x + b x^2.

    Solved with the numerically stable quadratic formula; 0, 1 or 2
    solutions, sorted by |x|.
    """
    A, B, C = nf.b, nf.a + nf.c, nf.nu
    if A == 0.0:
        if B == 0.0:
            return []
        roots = [-C / B]
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            return []
        sq = math.sqrt(disc)
        q = -0.5 * (B + math.copysign(sq, B if B != 0.0 else 1.0))
        if sq == 0.0:
            roots = [q / A]
        elif q == 0.0:  # B = 0 and C = 0
            roots = [0.0, -B / A]
        else:
            roots = [q / A, C / q]
    return [(x, x * x, x) for x in sorted(set(roots), key=abs)]


def canard_count(mu: float):
    """(k, n_canards, max_saos) for a folded node with ratio mu.

    k is the integer with 2k+1 < 1/mu < 2k+3; there are k+2 canards and at
    most k+1 small oscillations.  Odd-integer 1/mu values sit on a
    canard-count transition and are rejected.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must be in (0, 1)")
    inv = 1.0 / mu
    nearest = round(inv)
    if abs(inv - nearest) < 1e-9 and nearest % 2 == 1:
        raise ResonantMu(f"1/mu = {nearest} is an odd integer")
    k = int((inv - 1.0) // 2.0)
    return k, k + 2, k + 1


@dataclass(frozen=True)
class LocalPassage:
    exit_y: float
    exit_z: float
    sao_count: int
    exit_time: float


def local_flow_map(nf: NormalForm, sections: SectionPair, entry,
                   sao_window: float = _DEFAULT_SAO_WINDOW,
                   t_max: float = _DEFAULT_T_MAX,
                   abs_tol: float = 1e-8,
                   rel_tol: float = 1e-8) -> LocalPassage:
    """Flow map between the sections, in fast time, with an SAO count.

    ``entry`` is (y, z) on {x = k1*sqrt(eps)}.  The passage ends at the
    first crossing of {x = -k2*sqrt(eps)}; small oscillations are the
    local maxima of x(t) strictly between entry and exit whose amplitude
    satisfies |x| < sao_window*sqrt(eps).
    """
    sq = math.sqrt(nf.eps)
    x_in = sections.k1 * sq
    x_out = -sections.k2 * sq
    y0 = np.array([x_in, entry[0], entry[1]])
    prob = OdeProblem(3, nf.fast_rhs, 0.0, y0,
                      abs_tol=abs_tol, rel_tol=rel_tol)
    exit_ev = EventSpec(lambda s: s[0] - x_out, direction="falling",
                        terminal=True)
    # local maxima of x(t): the fast component y - x^2 falls through zero
    max_ev = EventSpec(lambda s: s[1] - s[0] * s[0], direction="falling")
    escape_ev = EventSpec(lambda s: s[0] - _ESCAPE_X, direction="rising",
                          terminal=True)
    res = solve_adaptive(prob, t_max, events=[max_ev, exit_ev, escape_ev])
    if res.status != "terminal_event":
        raise SectionNotReached(
            "exit section not crossed within the fast-time horizon",
            last_state=res.y_final, last_time=res.t_final)
    last = res.events[-1]
    if last.event_index == 2:
        raise Escape("trajectory left the local region",
                     last_state=res.y_final, last_time=res.t_final)
    window = sao_window * sq
    count = sum(1 for h in res.events
                if h.event_index == 0 and 0.0 < h.t < last.t
                and abs(h.y[0]) < window)
    return LocalPassage(float(res.y_final[1]), float(res.y_final[2]),
                        count, float(res.t_final))


def global_return(model: GlobalReturnModel, state, k1_abs: float,
                  eps: float) -> np.ndarray:
    """Abstract global return applied to (y, z) at the exit section.

    With eps-order terms disabled this is the singular limit
    (k1_abs^2, m(z)).
    """
    y, z = float(state[0]), float(state[1])
    out = np.array((k1_abs * k1_abs, model.m(z)))
    if model.eps_order_terms_enabled:
        a = np.asarray(model.A)
        out = out + eps * (a @ np.array((y, z)) + np.asarray(model.b))
    return out


def run_hybrid(nf: NormalForm, sections: SectionPair,
               model: GlobalReturnModel, initial, n_returns: int,
               sao_window: float = _DEFAULT_SAO_WINDOW,
               transient_fraction: float = 0.5,
               max_period: int = 8,
               t_max: float = _DEFAULT_T_MAX,
               abs_tol: float = 1e-8,
               rel_tol: float = 1e-8) -> HybridRun:
    """Alternate the local flow map and the global return.

    ``initial`` is the first (y, z) entry on {x = k1*sqrt(eps)}.  Records
    hold the pre-return states (the section values the global map is
    applied to) and per-return SAO counts; the signature is extracted
    after discarding the transient fraction.
    """
    if n_returns < 1:
        raise ValueError("n_returns must be >= 1")
    sq = math.sqrt(nf.eps)
    k1_abs = sections.k1 * sq
    yz = np.asarray(initial, dtype=float)
    records = []
    for idx in range(n_returns):
        passage = local_flow_map(nf, sections, yz, sao_window, t_max,
                                 abs_tol, rel_tol)
        records.append(ReturnRecord(idx, passage.exit_y, passage.exit_z,
                                    passage.sao_count))
        yz = global_return(model, (passage.exit_y, passage.exit_z),
                           k1_abs, nf.eps)
    counts = [r.sao_count for r in records]
    signature = extract_signature(counts, max_period,
                                  transient_fraction=transient_fraction)
    return HybridRun(records, signature)


# --- signatures ----------------------------------------------------------


def _canonical_from_period(period: Sequence) -> str:
    """Canonical L^s string: runs of zero-SAO returns merge into the L count.

    The period is rotated so it ends with a nonzero entry (when one
    exists); among valid rotations the lexicographically smallest string
    is chosen, making the form rotation invariant.
    """
    period = list(period)
    if all(s == 0 for s in period):
        return f"{len(period)}^0"
    candidates = []
    n = len(period)
    for r in range(n):
        rot = period[r:] + period[:r]
        if rot[-1] == 0:
            continue
        groups = []
        zeros = 0
        for s in rot:
            if s == 0:
                zeros += 1
            else:
                groups.append((zeros + 1, s))
                zeros = 0
        candidates.append(" ".join(f"{L}^{s}" for L, s in groups))
    return min(candidates)


def signature_to_counts(canonical: str) -> list:
    """Inverse of the canonical form: one period of per-return SAO counts."""
    counts = []
    for token in canonical.split():
        L, s = token.split("^")
        counts.extend([0] * (int(L) - 1))
        counts.append(int(s))
    return counts


def extract_signature(sao_sequence: Sequence, max_period: int,
                      transient_fraction: float = 0.5) -> MmoSignature:
    """Detect the minimal period of the post-transient SAO counts.

    The leading ``transient_fraction`` of the sequence is discarded; the
    smallest p <= max_period making the tail exactly p-periodic wins.  An
    aperiodic tail is reported (period None), not raised.
    """
    seq = [int(s) for s in sao_sequence]
    if len(seq) < 2 * max_period:
        raise ValueError(
            f"need at least {2 * max_period} returns for max_period="
            f"{max_period}, got {len(seq)}")
    tail = seq[int(len(seq) * transient_fraction):]
    for p in range(1, max_period + 1):
        if all(tail[i] == tail[i + p] for i in range(len(tail) - p)):
            return MmoSignature(seq, p, _canonical_from_period(tail[:p]))
    return MmoSignature(seq, None, None)


def sao_counts_from_series(x: Sequence, lao_threshold: float) -> list:
    """Per-return SAO counts from a sampled oscillation series.

    Local maxima above ``lao_threshold`` are large oscillations; the j-th
    count is the number of small maxima between large maxima j and j+1.
    Samples before the first large maximum are discarded.
    """
    x = np.asarray(x, dtype=float)
    interior = (x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:])
    idx = np.nonzero(interior)[0] + 1
    counts = []
    current = None
    for i in idx:
        if x[i] > lao_threshold:
            if current is not None:
                counts.append(current)
            current = 0
        elif current is not None:
            current += 1
    return counts


@dataclass(frozen=True)
class ChaosReport:
    aperiodic: bool
    period: Optional[int]
    symbolic_aperiodic: bool


def detect_chaos(z_pre: Sequence, sao_counts: Sequence, max_period: int,
                 tol: float, transient_fraction: float = 0.5) -> ChaosReport:
    """Periodicity verdict on the pre-return z values of a hybrid run.

    'aperiodic' means no period p <= max_period makes the post-transient
    z sequence p-periodic within ``tol``.  The symbolic verdict applies
    the same test exactly to the SAO counts.  This is a bounded-period
    periodicity check, not a Lyapunov estimate.
    """
    z_pre = np.asarray(z_pre, dtype=float)
    if len(z_pre) < 10 * max_period:
        raise ValueError(
            f"need at least {10 * max_period} returns, got {len(z_pre)}")
    tail = z_pre[int(len(z_pre) * transient_fraction):]
    period = None
    for p in range(1, max_period + 1):
        if np.all(np.abs(tail[:-p] - tail[p:]) <= tol):
            period = p
            break
    counts = [int(s) for s in sao_counts]
    ctail = counts[int(len(counts) * transient_fraction):]
    symbolic_periodic = any(
        all(ctail[i] == ctail[i + p] for i in range(len(ctail) - p))
        for p in range(1, max_period + 1))
    return ChaosReport(period is None, period, not symbolic_periodic)
