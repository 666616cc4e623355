"""Global return-map analysis: funnel re-entry, fixed points, onset value.

Composes the fitted one-dimensional maps into the global return

    {x=1, z <= 2*lam+6}  --m_j-->  {x=2}  --m_a_plus-->  {x=1+mu}
                         --m_s-->  {x=1}

finds its fixed points (candidates for relaxation oscillations), measures
the funnel re-entry margin, and locates the parameter value at which the
folded node is returned exactly to the funnel boundary.  The onset search
runs on freshly fitted maps at every probe, with a direct
trajectory-based cross-check reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NoSignChange, OutOfDomain
from .integrator import EventSpec, OdeProblem, flow_to_section
from .koper_model import (
    KoperParams,
    desingularized_slow_flow,
    funnel_boundary_z,
    strong_eigenvector_x,
)
from .map_fit import PiecewisePolyMap, fit_piecewise
from .singular_maps import compute_m_a_plus, compute_m_j, m_s_eval

__all__ = [
    "FoldRegionStage",
    "CompositeMap",
    "FixedPointResult",
    "FunnelEntry",
    "GlobalMapModel",
    "LambdaRResult",
    "compose_and_eval",
    "funnel_margin",
    "find_lambda_r",
    "fixed_points",
    "direct_return_z",
]

_SCAN_POINTS = 400
_BOUNDARY_FRACTION = 0.05


@dataclass(frozen=True)
class FoldRegionStage:
    """Analytic fold-region stage (the m_s map) inside a composition."""

    params: KoperParams

    @property
    def domain(self):
        return (-math.inf, math.inf)

    def eval(self, z: float, branch: str = "single") -> float:
        return m_s_eval(z, self.params)

    def derivative(self, z: float, branch: str = "single") -> float:
        # constant on the funnel side, a unit-slope shift below it
        return 0.0 if z >= funnel_boundary_z(self.params) else 1.0


def _stage_domain(stage):
    if isinstance(stage, PiecewisePolyMap):
        if len(stage.pieces) != 1:
            raise ValueError("composition stages must be single-valued")
        return stage.pieces[0].domain
    return stage.domain


@dataclass
class CompositeMap:
    """Ordered composition of single-valued stages.

    ``domain`` restricts the first stage's input; evaluation raises
    OutOfDomain with the offending stage index when an intermediate value
    leaves a stage domain (tolerance ``pad``).
    """

    stages: list
    domain: tuple
    pad: float = 1e-9

    def eval(self, z: float) -> float:
        return self._eval(z, want_derivative=False)[0]

    def eval_with_derivative(self, z: float):
        return self._eval(z, want_derivative=True)

    __call__ = eval

    def _eval(self, z, want_derivative):
        lo, hi = self.domain
        if not (lo - self.pad <= z <= hi + self.pad):
            raise OutOfDomain(f"input {z} outside composite domain", stage=0)
        deriv = 1.0
        value = z
        for idx, stage in enumerate(self.stages):
            lo, hi = _stage_domain(stage)
            if not (lo - self.pad <= value <= hi + self.pad):
                raise OutOfDomain(
                    f"stage {idx} input {value} outside its domain",
                    stage=idx)
            if want_derivative:
                deriv *= stage.derivative(value)
            value = stage.eval(value)
        return value, deriv

    def effective_domain(self, n_scan: int = _SCAN_POINTS):
        """Hull of first-stage inputs whose full evaluation succeeds."""
        zs = np.linspace(self.domain[0], self.domain[1], n_scan)
        good = []
        for z in zs:
            try:
                self.eval(z)
            except OutOfDomain:
                continue
            good.append(z)
        if not good:
            raise OutOfDomain("composition empty on the scanned domain")
        return (min(good), max(good))


def compose_and_eval(stages: Sequence, z: float) -> float:
    """Evaluate a stage list at z (stage domains enforced)."""
    first = _stage_domain(stages[0])
    return CompositeMap(list(stages), first).eval(z)


@dataclass(frozen=True)
class FixedPointResult:
    z_star: float
    derivative: float
    stable: bool
    on_domain_boundary: bool


@dataclass(frozen=True)
class FunnelEntry:
    """Margin of one global return relative to the funnel boundary.

    ``margin`` is z_at_section - z_funnel; positive means the return lands
    inside the funnel (same sign convention as the distance to the strong
    canard).
    """

    z_in: float
    z_at_section: float
    margin: float


@dataclass
class GlobalMapModel:
    """Fitted m_j and m_a_plus plus the section geometry for one lambda."""

    params: KoperParams
    m_j_fit: PiecewisePolyMap
    m_a_fit: PiecewisePolyMap
    z_funnel: float

    @classmethod
    def build(cls, params: KoperParams, n_grid: int = 101,
              abs_tol: float = 1e-8, rel_tol: float = 1e-8):
        """Sample and fit the two global stages at ``params.lam``.

        m_j is sampled on the width-2 window ending at the folded node
        (the composition's domain); m_a_plus on the hull of m_j outputs
        united with the standard window, so the composition never leaves
        the second stage's fitted domain.
        """
        lam = params.lam
        z_node = 2.0 * lam + 6.0
        grid_j = _grid(z_node - 2.0, z_node, n_grid)
        sample_j = compute_m_j(params, grid_j, abs_tol, rel_tol)
        fit_j = fit_piecewise(sample_j, 1)

        _, out_j = sample_j.branch_arrays("single")
        lo = min(float(np.min(out_j)), z_node - 1.0) - 0.05
        hi = max(float(np.max(out_j)), z_node + 1.0) + 0.05
        grid_a = _grid(lo, hi, n_grid)
        sample_a = compute_m_a_plus(params, grid_a, abs_tol, rel_tol)
        fit_a = fit_piecewise(sample_a, 2)
        return cls(params, fit_j, fit_a, funnel_boundary_z(params))

    def return_composite(self, with_fold_stage: bool = True) -> CompositeMap:
        lam = self.params.lam
        stages = [self.m_j_fit, self.m_a_fit]
        if with_fold_stage:
            stages.append(FoldRegionStage(self.params))
        return CompositeMap(stages, (2.0 * lam + 4.0, 2.0 * lam + 6.0))


def _grid(lo: float, hi: float, n: int) -> np.ndarray:
    n = max(n, int(math.ceil((hi - lo) / 0.02)) + 1)
    return np.linspace(lo, hi, n)


def funnel_margin(params: KoperParams, z: float,
                  model: Optional[GlobalMapModel] = None) -> FunnelEntry:
    """Margin of the return of z (on the fold line) past the funnel edge.

    Requires z <= 2*lam + 6.  Evaluated at the folded node z = 2*lam + 6
    this is the defining function of the relaxation onset.
    """
    if z > 2.0 * params.lam + 6.0 + 1e-12:
        raise OutOfDomain(f"z={z} above the folded node")
    if model is None:
        model = GlobalMapModel.build(params)
    composite = model.return_composite(with_fold_stage=False)
    z_section = composite.eval(z)
    return FunnelEntry(z, z_section, z_section - model.z_funnel)


def direct_return_z(params: KoperParams, z: float,
                    abs_tol: float = 1e-8, rel_tol: float = 1e-8) -> float:
    """Trajectory-based (m_a_plus o m_j)(z), bypassing the fits."""

    def rhs(t, s):
        return desingularized_slow_flow(s, params)

    prob = OdeProblem(2, rhs, 0.0, np.array([-2.0, z]),
                      abs_tol=abs_tol, rel_tol=rel_tol)
    state, _ = flow_to_section(prob, EventSpec(lambda s: s[0] + 1.0), 40.0)
    prob2 = OdeProblem(2, rhs, 0.0, np.array([2.0, state[1]]),
                       abs_tol=abs_tol, rel_tol=rel_tol)
    x_target = 1.0 + params.mu
    state2, _ = flow_to_section(prob2, EventSpec(lambda s: s[0] - x_target),
                                40.0)
    return float(state2[1])


@dataclass
class LambdaRResult:
    lambda_r: float
    lambda_r_direct: float
    margin_at_root: float
    n_probes: int
    fixed_point_onset: Optional[float] = None


def _root_on_margin(margin_fn, bracket, margin_tol, max_iter=200):
    lo, hi = bracket
    m_lo, m_hi = margin_fn(lo), margin_fn(hi)
    n = 2
    if m_lo == 0.0:
        return lo, 0.0, n
    if m_hi == 0.0:
        return hi, 0.0, n
    if (m_lo < 0.0) == (m_hi < 0.0):
        raise NoSignChange(
            f"margin has the same sign at both bracket ends "
            f"({m_lo:.3e}, {m_hi:.3e})")
    lam, m_lam = lo, m_lo
    for _ in range(max_iter):
        # secant candidate, clipped into the bracket; bisection fallback
        lam_sec = lo - m_lo * (hi - lo) / (m_hi - m_lo)
        lam = lam_sec if lo < lam_sec < hi else 0.5 * (lo + hi)
        m_lam = margin_fn(lam)
        n += 1
        if abs(m_lam) <= margin_tol:
            return lam, m_lam, n
        if (m_lam < 0.0) == (m_hi < 0.0):
            hi, m_hi = lam, m_lam
        else:
            lo, m_lo = lam, m_lam
        if hi - lo < 1e-13:
            break
    return lam, m_lam, n


def find_lambda_r(params: KoperParams, bracket=(-7.5, -6.0),
                  margin_tol: float = 1e-6, n_grid: int = 101,
                  abs_tol: float = 1e-8,
                  rel_tol: float = 1e-8) -> LambdaRResult:
    """Locate the lambda at which the folded node returns to the funnel edge.

    The margin lambda -> funnel_margin(lambda, 2*lambda+6) is driven to
    |margin| <= margin_tol by bisection with secant polish; the maps are
    re-fitted at every probe.  A direct trajectory-based root (no fits) is
    located the same way and reported for comparison.
    """
    count = [0]

    def margin_fitted(lam: float) -> float:
        count[0] += 1
        p = KoperParams(lam=lam, k=params.k, eps1=params.eps1,
                        eps2=params.eps2, mu=params.mu)
        model = GlobalMapModel.build(p, n_grid, abs_tol, rel_tol)
        return funnel_margin(p, 2.0 * lam + 6.0, model).margin

    def margin_direct(lam: float) -> float:
        p = KoperParams(lam=lam, k=params.k, eps1=params.eps1,
                        eps2=params.eps2, mu=params.mu)
        return direct_return_z(p, 2.0 * lam + 6.0, abs_tol, rel_tol) \
            - funnel_boundary_z(p)

    lam_r, m_at, _ = _root_on_margin(margin_fitted, bracket, margin_tol)
    lam_direct, _, _ = _root_on_margin(margin_direct, bracket, margin_tol)
    return LambdaRResult(lam_r, lam_direct, m_at, count[0])


def fixed_points(composite: CompositeMap,
                 n_scan: int = _SCAN_POINTS,
                 boundary_fraction: float = _BOUNDARY_FRACTION) -> list:
    """Fixed points of a composite map by sign-change scan plus bisection.

    The scan covers the open interior of the effective domain (endpoints
    are excluded by half a grid cell, so the folded node's trivial
    funnel return at the right edge is not reported).  Derivatives come
    from analytic differentiation of the stages; points within
    ``boundary_fraction`` of the domain width of an edge are flagged, and
    their stability multiplier is one-sided.
    """
    lo, hi = composite.effective_domain(n_scan)
    width = hi - lo
    if width <= 0.0:
        return []
    half = 0.5 * width / (n_scan - 1)
    zs = np.linspace(lo + half, hi - half, n_scan)

    def g(z):
        return composite.eval(z) - z

    gs = np.array([g(z) for z in zs])
    results = []
    for i in range(len(zs) - 1):
        ga, gb = gs[i], gs[i + 1]
        if ga == 0.0:
            z_star = zs[i]
        elif (ga < 0.0) != (gb < 0.0):
            a, b = zs[i], zs[i + 1]
            fa = ga
            for _ in range(80):
                mid = 0.5 * (a + b)
                fm = g(mid)
                if fm == 0.0 or (b - a) < 1e-13:
                    break
                if (fm < 0.0) == (fa < 0.0):
                    a, fa = mid, fm
                else:
                    b = mid
            z_star = 0.5 * (a + b)
        else:
            continue
        _, deriv = composite.eval_with_derivative(z_star)
        near_edge = bool(z_star - lo < boundary_fraction * width
                         or hi - z_star < boundary_fraction * width)
        results.append(FixedPointResult(float(z_star), float(deriv),
                                        bool(abs(deriv) < 1.0), near_edge))
    return results
