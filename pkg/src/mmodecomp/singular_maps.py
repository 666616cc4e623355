"""Singular-limit (eps = 0) flow maps of the Koper model.

Builds the one-dimensional maps, parametrized by z, that decompose the
global return:

    m_j      : fold line {x=1} -> drop to {x=-2} -> slow flow -> {x=-1}
    m_a_plus : drop curve {x=2} -> slow flow -> section {x=1+mu}
    m_f      : strong canard -> forward jump -> slow flow -> {x=-1}
    m_b      : strong canard -> backward jump -> slow flow -> {x=1+mu}
    m_s      : section {x=1+mu} -> fold line (analytic fold-region map)

Fast jumps conserve (y, z); landings solve c(x') = c(x) on the requested
attracting side.  Slow segments integrate the desingularized subsystem,
which shares trajectories with the true slow flow on the attracting
sheets.  Per-sample failures are recorded as status markers rather than
aborting a sweep, so sampled maps may have gaps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CanardEscape, NoLandingRoot, OutOfRangeLambda
from .integrator import EventSpec, OdeProblem, solve_adaptive
from .koper_model import (
    KoperParams,
    LAMBDA_FSN_II,
    LAMBDA_NODE_FOCUS,
    desingularized_slow_flow,
    funnel_boundary_z,
    strong_eigenvector_x,
)

__all__ = [
    "GeometricCurves",
    "CanardCurve",
    "MapSample",
    "jump_target",
    "strong_canard",
    "compute_m_j",
    "compute_m_a_plus",
    "compute_m_f",
    "compute_m_b",
    "m_s_eval",
    "default_z_grid",
    "map_sample_to_csv",
    "map_sample_from_csv",
]

STATUS_OK = "ok"
STATUS_SECTION_NOT_REACHED = "section_not_reached"
STATUS_NO_LANDING = "no_landing_root"
STATUS_LEFT_SHEET = "left_sheet"

_CANARD_SEED_OFFSET = 1e-6
_DEFAULT_ARC_STEP = 0.02
_DEFAULT_ARC_BUDGET = 8.0
_FLOW_T_MAX = 40.0
_MAX_GRID_H = 0.02


@dataclass(frozen=True)
class GeometricCurves:
    """Fold lines, drop curves and the offset section, for one mu."""

    mu: float
    F_plus: tuple = (1.0, -2.0)     # (x, y); z free
    F_minus: tuple = (-1.0, 2.0)
    L_a_minus_x: float = -2.0
    L_a_plus_x: float = 2.0

    @property
    def L_mu_x(self) -> float:
        return 1.0 + self.mu


@dataclass
class CanardCurve:
    """Strong-canard segment inside the repelling sheet.

    Samples are ordered by arclength from p_+; ``arclengths`` and ``points``
    (columns x, z) have equal length.  ``knee_index``/``knee_z`` mark the
    extremal-z sample (parabolically refined value in ``knee_z``);
    ``end_fold`` names the fold line the curve terminated on.
    """

    lam: float
    arclengths: np.ndarray
    points: np.ndarray
    knee_index: int
    knee_z: float
    end_fold: str  # 'F_minus' | 'F_plus'

    def __post_init__(self):
        if len(self.arclengths) != len(self.points):
            raise ValueError("arclengths/points length mismatch")


@dataclass
class MapSample:
    """A sampled singular map: ordered (z_in, z_out) pairs with branches.

    ``branch`` entries are 'single', 'upper' or 'lower'; within a branch
    pairs are sorted by z_in.  ``domains`` maps branch labels to the
    [z_min, z_max] over which the branch is defined (gaps recorded via
    non-'ok' ``status`` markers).  Grid spacing within a branch never
    exceeds 0.02.
    """

    map_id: str
    lam: float
    z_in: np.ndarray
    z_out: np.ndarray
    branch: list
    status: list
    domains: dict

    def __post_init__(self):
        self.z_in = np.asarray(self.z_in, dtype=float)
        self.z_out = np.asarray(self.z_out, dtype=float)
        self.domains = {b: (float(lo), float(hi))
                        for b, (lo, hi) in self.domains.items()}
        n = len(self.z_in)
        if not (len(self.z_out) == len(self.branch) == len(self.status) == n):
            raise ValueError("field lengths disagree")
        order = np.lexsort((self.z_in, [_BRANCH_ORDER[b] for b in self.branch]))
        self.z_in = self.z_in[order]
        self.z_out = self.z_out[order]
        self.branch = [self.branch[i] for i in order]
        self.status = [self.status[i] for i in order]

    def ok_mask(self) -> np.ndarray:
        return np.array([s == STATUS_OK for s in self.status])

    def branch_arrays(self, branch: str):
        """(z_in, z_out) of successful samples on one branch."""
        sel = np.array([b == branch for b in self.branch]) & self.ok_mask()
        return self.z_in[sel], self.z_out[sel]

    def branches(self) -> list:
        seen = []
        for b in self.branch:
            if b not in seen:
                seen.append(b)
        return seen

    def validate_grid(self, max_h: float = _MAX_GRID_H) -> None:
        for b in self.branches():
            zi, _ = self.branch_arrays(b)
            if len(zi) > 1 and np.max(np.diff(zi)) > max_h + 1e-12:
                raise ValueError(
                    f"grid spacing exceeds {max_h} on branch {b!r}")
        for b in self.branches():
            zi, zo = self.branch_arrays(b)
            if np.any(~np.isfinite(zo)):
                raise ValueError("NaN output inside declared domain")


_BRANCH_ORDER = {"single": 0, "upper": 1, "lower": 2}


def default_z_grid(lam: float, k: float = -10.0, n: int = 101) -> np.ndarray:
    """Uniform grid over (2*lam - (4+k) - 1, 2*lam - (4+k) + 1).

    n is raised if needed so that the spacing stays at or below 0.02.
    """
    center = 2.0 * lam - (4.0 + k)
    n = max(n, int(math.ceil(2.0 / _MAX_GRID_H)) + 1)
    return np.linspace(center - 1.0, center + 1.0, n)


def jump_target(x: float, side: str) -> float:
    """Landing point of the fast fiber through (x, c(x)).

    The fiber conserves (y, z); the landing solves c(x') = c(x) with
    x' <= -1 for side 'forward' and x' >= 1 for side 'backward', excluding
    the trivial root x' = x.  Uses the exact quadratic factor
    x'^2 + x*x' + x^2 - 3 of c(x') - c(x).
    """
    if side not in ("forward", "backward"):
        raise ValueError("side must be 'forward' or 'backward'")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"jump origin x={x} outside [-1, 1]")
    disc = 12.0 - 3.0 * x * x
    root = math.sqrt(disc)
    target = 0.5 * (-x - root) if side == "forward" else 0.5 * (-x + root)
    if abs(target - x) <= 1e-9 * (1.0 + abs(x)):
        raise NoLandingRoot(
            f"no landing distinct from x={x} on side {side!r}")
    return target


def _desing_problem(params: KoperParams, x0: float, z0: float,
                    abs_tol: float = 1e-8, rel_tol: float = 1e-8):
    def rhs(t, s):
        return desingularized_slow_flow(s, params)
    return OdeProblem(2, rhs, 0.0, np.array([x0, z0]),
                      abs_tol=abs_tol, rel_tol=rel_tol)


def strong_canard(params: KoperParams,
                  arc_step: float = _DEFAULT_ARC_STEP,
                  arc_budget: float = _DEFAULT_ARC_BUDGET,
                  seed_offset: float = _CANARD_SEED_OFFSET,
                  abs_tol: float = 1e-8,
                  rel_tol: float = 1e-8) -> CanardCurve:
    """Continue the strong canard from p_+ through the repelling sheet.

    The curve is the desingularized-flow trajectory through p_+ along the
    strong eigendirection.  Integration runs backward in desingularized
    time from a seed offset by ``seed_offset`` along the eigendirection
    into -1 < x < 1 (where desingularized time opposes true slow time),
    using the unit-speed field so time equals arclength; samples are taken
    every ``arc_step`` of arclength until a fold is reached.
    """
    lam = params.lam
    if not (LAMBDA_FSN_II < lam < LAMBDA_NODE_FOCUS):
        raise OutOfRangeLambda(
            f"strong canard requires lambda in (-8, -23/6), got {lam}")
    if arc_step <= 0.0:
        raise ValueError("arc_step must be positive")
    sx = strong_eigenvector_x(lam)
    norm = math.hypot(sx, 1.0)
    z_node = 2.0 * lam + 6.0
    seed = np.array([1.0 - seed_offset * sx / norm,
                     z_node - seed_offset / norm])

    def unit_backward(t, s):
        v = desingularized_slow_flow(s, params)
        speed = math.hypot(v[0], v[1])
        if speed < 1e-12:
            raise CanardEscape("canard stalled near an equilibrium",
                               last_point=tuple(s))
        return -v / speed

    prob = OdeProblem(2, unit_backward, 0.0, seed,
                      abs_tol=abs_tol, rel_tol=rel_tol)
    hits_minus = EventSpec(lambda s: s[0] + 1.0, terminal=True)
    hits_plus = EventSpec(lambda s: s[0] - 1.0, direction="rising",
                          terminal=True)
    res = solve_adaptive(prob, arc_budget, events=[hits_minus, hits_plus])
    if res.status != "terminal_event":
        raise CanardEscape(
            f"canard did not reach a fold within arclength {arc_budget}",
            last_point=tuple(res.y_final))
    end_fold = "F_minus" if res.y_final[0] < 0.0 else "F_plus"
    total = res.t_final
    arclengths = np.arange(0.0, total, arc_step)
    if total - arclengths[-1] > 1e-9:
        arclengths = np.append(arclengths, total)
    points = res.trajectory(arclengths)

    knee_index = int(np.argmin(points[:, 1]))
    knee_z = points[knee_index, 1]
    if 0 < knee_index < len(points) - 1:
        # parabolic refinement of the extremal z through its neighbors
        s0, s1, s2 = arclengths[knee_index - 1:knee_index + 2]
        z0, z1, z2 = points[knee_index - 1:knee_index + 2, 1]
        denom = (s0 - s1) * (s0 - s2) * (s1 - s2)
        if denom != 0.0:
            a = (s2 * (z1 - z0) + s1 * (z0 - z2) + s0 * (z2 - z1)) / denom
            b = (s2 * s2 * (z0 - z1) + s1 * s1 * (z2 - z0)
                 + s0 * s0 * (z1 - z2)) / denom
            if a > 0.0:
                s_v = -b / (2.0 * a)
                if s0 <= s_v <= s2:
                    knee_z = float(res.trajectory(s_v)[1])
    return CanardCurve(lam, arclengths, points, knee_index, knee_z, end_fold)


def _sweep(params, map_id, starts, x_target, abort_x, branches,
           abs_tol, rel_tol, t_max=_FLOW_T_MAX):
    """Integrate one slow segment per start; collect a MapSample."""
    z_in, z_out, branch, status = [], [], [], []
    for (zi, x0, z0, br) in starts:
        z_in.append(zi)
        branch.append(br)
        if x0 is None:
            z_out.append(np.nan)
            status.append(STATUS_NO_LANDING)
            continue
        prob = _desing_problem(params, x0, z0, abs_tol, rel_tol)
        events = [EventSpec(lambda s: s[0] - x_target, terminal=True)]
        if abort_x is not None and abort_x != x_target:
            ax = abort_x
            events.append(EventSpec(lambda s: s[0] - ax, terminal=True))
        res = solve_adaptive(prob, t_max, events=events)
        if res.status != "terminal_event":
            z_out.append(np.nan)
            status.append(STATUS_SECTION_NOT_REACHED)
        elif res.events[-1].event_index == 1:
            z_out.append(np.nan)
            status.append(STATUS_LEFT_SHEET)
        else:
            z_out.append(res.y_final[1])
            status.append(STATUS_OK)

    domains = {}
    for br in branches:
        vals = [z for z, b, s in zip(z_in, branch, status)
                if b == br and s == STATUS_OK]
        if vals:
            domains[br] = (min(vals), max(vals))
    return MapSample(map_id, params.lam, np.array(z_in), np.array(z_out),
                     branch, status, domains)


def compute_m_j(params: KoperParams, z_grid=None,
                abs_tol: float = 1e-8, rel_tol: float = 1e-8,
                t_max: float = _FLOW_T_MAX) -> MapSample:
    """Regular-jump map: {x=1} -> {x=-2} -> slow flow -> {x=-1}.

    Jumps preserve z, so z_out is the z at the {x=-1} crossing; single
    branch.
    """
    if z_grid is None:
        z_grid = default_z_grid(params.lam, params.k)
    starts = [(z, -2.0, z, "single") for z in np.asarray(z_grid, dtype=float)]
    return _sweep(params, "m_j", starts, -1.0, None, ["single"],
                  abs_tol, rel_tol, t_max)


def compute_m_a_plus(params: KoperParams, z_grid=None,
                     abs_tol: float = 1e-8, rel_tol: float = 1e-8,
                     t_max: float = _FLOW_T_MAX) -> MapSample:
    """Sheet-crossing map: {x=2} -> slow flow -> {x=1+mu}; single branch."""
    if z_grid is None:
        z_grid = default_z_grid(params.lam, params.k)
    x_target = 1.0 + params.mu
    starts = [(z, 2.0, z, "single") for z in np.asarray(z_grid, dtype=float)]
    return _sweep(params, "m_a_plus", starts, x_target, 1.0, ["single"],
                  abs_tol, rel_tol, t_max)


def _canard_starts(canard: CanardCurve, side: str):
    starts = []
    for i, (x, z) in enumerate(canard.points):
        br = "upper" if i <= canard.knee_index else "lower"
        try:
            x_land = jump_target(min(1.0, max(-1.0, float(x))), side)
        except NoLandingRoot:
            x_land = None
        starts.append((float(z), x_land, float(z), br))
    return starts


def compute_m_f(params: KoperParams, canard: CanardCurve,
                abs_tol: float = 1e-8, rel_tol: float = 1e-8) -> MapSample:
    """Forward-jump canard map: canard -> {x<=-1} landing -> {x=-1}.

    Pairs are keyed by the canard point's z; branches split at the
    extremal z of the canard.  The upper branch extends continuously to
    the folded-node value 2*lam + 6, which is declared as its domain
    maximum.
    """
    if canard.lam != params.lam:
        raise ValueError("canard computed at a different lambda")
    starts = _canard_starts(canard, "forward")
    sample = _sweep(params, "m_f", starts, -1.0, None, ["upper", "lower"],
                    abs_tol, rel_tol)
    _attach_canard_domains(sample, canard, upper_max=2.0 * params.lam + 6.0)
    return sample


def compute_m_b(params: KoperParams, canard: CanardCurve,
                abs_tol: float = 1e-8, rel_tol: float = 1e-8) -> MapSample:
    """Backward-jump canard map: canard -> {x>=1} landing -> {x=1+mu}.

    Landings between the fold and the section flow back onto the fold and
    are recorded as out of domain, so the upper branch generally does not
    extend all the way to the folded node.
    """
    if canard.lam != params.lam:
        raise ValueError("canard computed at a different lambda")
    starts = _canard_starts(canard, "backward")
    sample = _sweep(params, "m_b", starts, 1.0 + params.mu, 1.0,
                    ["upper", "lower"], abs_tol, rel_tol)
    _attach_canard_domains(sample, canard, upper_max=None)
    return sample


def _attach_canard_domains(sample: MapSample, canard: CanardCurve,
                           upper_max):
    for br in ("upper", "lower"):
        zi, _ = sample.branch_arrays(br)
        if len(zi) == 0:
            sample.domains.pop(br, None)
            continue
        lo = min(canard.knee_z, float(zi.min()))
        hi = float(zi.max())
        if br == "upper" and upper_max is not None:
            hi = upper_max
        sample.domains[br] = (lo, hi)


def m_s_eval(z: float, params: KoperParams) -> float:
    """Analytic fold-region map from {x = 1+mu} to the fold line.

    Funnel inputs (z at or above the funnel boundary) collapse onto the
    folded node; the rest project parallel to the strong eigendirection:

        m_s(z) = 2*lam + 6                      if z >= z_funnel
                 z - mu * (5 - sqrt(-23-6*lam)) otherwise

    The projection error is O(mu) as mu -> 0.
    """
    lam = params.lam
    z_funnel = funnel_boundary_z(params)  # validates lambda range (low side)
    sx = strong_eigenvector_x(lam)        # validates lambda range (high side)
    if z >= z_funnel:
        return 2.0 * lam + 6.0
    return z - params.mu / sx


# --- serialization -------------------------------------------------------

_CSV_HEADER = ["map", "lambda", "branch", "z_in", "z_out", "status"]


def map_sample_to_csv(sample: MapSample, fh, timestamp: str = "") -> None:
    """Write the CSV schema map,lambda,branch,z_in,z_out,status.

    Branch domains travel as leading comment lines so a written sample
    re-parses bit-equivalently.
    """
    writer = csv.writer(fh, lineterminator="\n")
    if timestamp:
        fh.write(f"# generated {timestamp}\n")
    for br in sorted(sample.domains):
        lo, hi = sample.domains[br]
        fh.write(f"# domain,{br},{lo!r},{hi!r}\n")
    writer.writerow(_CSV_HEADER)
    for zi, zo, br, st in zip(sample.z_in, sample.z_out,
                              sample.branch, sample.status):
        writer.writerow([sample.map_id, repr(sample.lam), br,
                         repr(float(zi)),
                         "" if not np.isfinite(zo) else repr(float(zo)), st])


def map_sample_from_csv(fh) -> MapSample:
    domains = {}
    reader = csv.reader(fh)
    header = next(reader)
    while header and header[0].startswith("#"):
        if header[0] == "# domain" and len(header) == 4:
            domains[header[1]] = (float(header[2]), float(header[3]))
        header = next(reader)
    if header != _CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    map_id = None
    lam = None
    z_in, z_out, branch, status = [], [], [], []
    for row in reader:
        if not row:
            continue
        map_id = row[0]
        lam = float(row[1])
        branch.append(row[2])
        z_in.append(float(row[3]))
        z_out.append(float(row[4]) if row[4] else np.nan)
        status.append(row[5])
    if map_id is None:
        raise ValueError("empty map CSV")
    if not domains:
        for br in set(branch):
            vals = [z for z, b, s in zip(z_in, branch, status)
                    if b == br and s == STATUS_OK]
            if vals:
                domains[br] = (min(vals), max(vals))
    return MapSample(map_id, lam, np.array(z_in), np.array(z_out),
                     branch, status, domains)
