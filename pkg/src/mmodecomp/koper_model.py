"""Koper model geometry: vector fields, folded singularities, symmetry.

The model is the three-dimensional fast-slow system

    eps1 * dx/dt = y - x^3 + 3x
           dy/dt = k*x - 2*(y + lambda) + z
           dz/dt = eps2 * (lambda + y - z)

with critical manifold y = c(x) = x^3 - 3x and fold lines at x = +-1.  All
slow-flow computations eliminate y on the critical manifold and work in
(x, z) coordinates, where the desingularized slow subsystem is polynomial.
Orientation of the desingularized flow is reversed on the repelling sheet
(-1 < x < 1); callers must account for this.

All closed-form eigendata assumes k = -10; a numeric linearization
fallback covers other k.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DivisionByZeroEps, OutOfRangeLambda, UnsupportedK

__all__ = [
    "KoperParams",
    "Sheet",
    "CriticalManifoldPoint",
    "FoldedKind",
    "FoldedSingularityInfo",
    "manifold_y",
    "full_vector_field",
    "desingularized_slow_flow",
    "folded_singularity",
    "classify_folded_singularity",
    "strong_eigenvector_x",
    "funnel_boundary_z",
    "apply_symmetry",
    "LAMBDA_FSN_II",
    "LAMBDA_NODE_FOCUS",
]

# Folded-node window boundaries for k = -10.
LAMBDA_FSN_II = -8.0
LAMBDA_NODE_FOCUS = -23.0 / 6.0


@dataclass(frozen=True)
class KoperParams:
    """Model parameters; ``lam`` is the bifurcation parameter lambda.

    ``mu`` is the offset of the section {x = 1 + mu} used by the map
    pipeline (mu >= 0).  eps2 is fixed at 1 in every reproduction path.
    """

    lam: float
    k: float = -10.0
    eps1: float = 0.01
    eps2: float = 1.0
    mu: float = 0.1

    def __post_init__(self):
        if self.eps1 < 0.0:
            raise ValueError("eps1 must be >= 0")
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")


class Sheet(Enum):
    CA_MINUS = "Ca_minus"
    F_MINUS = "F_minus"
    CR = "Cr"
    F_PLUS = "F_plus"
    CA_PLUS = "Ca_plus"


def _sheet_for_x(x: float) -> Sheet:
    if x < -1.0:
        return Sheet.CA_MINUS
    if x == -1.0:
        return Sheet.F_MINUS
    if x < 1.0:
        return Sheet.CR
    if x == 1.0:
        return Sheet.F_PLUS
    return Sheet.CA_PLUS


@dataclass(frozen=True)
class CriticalManifoldPoint:
    """Point on the critical manifold; y is implied by y = c(x)."""

    x: float
    z: float
    sheet: Sheet

    @classmethod
    def from_xz(cls, x: float, z: float) -> "CriticalManifoldPoint":
        return cls(x, z, _sheet_for_x(x))

    @property
    def y(self) -> float:
        return manifold_y(self.x)

    def __post_init__(self):
        if self.sheet is not _sheet_for_x(self.x):
            raise ValueError(f"sheet {self.sheet} inconsistent with x={self.x}")


class FoldedKind(Enum):
    FOLDED_SADDLE = "FoldedSaddle"
    FSN_II = "FSN_II"
    FOLDED_NODE = "FoldedNode"
    DEGENERATE_NODE = "FoldedNodeFocusBoundary"
    FOLDED_FOCUS = "FoldedFocus"


@dataclass(frozen=True)
class FoldedSingularityInfo:
    """Folded singularity with eigendata of the desingularized linearization.

    Eigenvalues are stored as complex (imag = 0 in the real case).
    Eigenvector x-components are normalized to z-component 1; they are
    None for complex eigenvalues and +inf at the FSN II where the strong
    denominator vanishes.
    """

    location: CriticalManifoldPoint
    sigma_w: complex
    sigma_s: complex
    Sigma_w_x: Optional[float]
    Sigma_s_x: Optional[float]
    kind: FoldedKind


def manifold_y(x: float) -> float:
    """Critical manifold height c(x) = x^3 - 3x."""
    return x * x * x - 3.0 * x


def full_vector_field(state, params: KoperParams) -> np.ndarray:
    """Right-hand side of the full system in the slow time scaling."""
    if params.eps1 == 0.0:
        raise DivisionByZeroEps(
            "eps1 = 0: use the slow-subsystem operations instead")
    x, y, z = state
    return np.array((
        (y - x * x * x + 3.0 * x) / params.eps1,
        params.k * x - 2.0 * (y + params.lam) + z,
        params.eps2 * (params.lam + y - z),
    ))


def desingularized_slow_flow(state, params: KoperParams) -> np.ndarray:
    """Desingularized slow subsystem on the critical manifold, (x, z).

    Shares trajectories with the true slow flow; time is reversed on the
    repelling sheet where 3x^2 - 3 < 0.
    """
    x, z = state
    cx = manifold_y(x)
    return np.array((
        params.k * x - 2.0 * (cx + params.lam) + z,
        (3.0 * x * x - 3.0) * (params.lam + cx - z),
    ))


def classify_folded_singularity(lam: float) -> FoldedKind:
    """Classify p_+ for the k = -10 convention."""
    if lam < LAMBDA_FSN_II:
        return FoldedKind.FOLDED_SADDLE
    if lam == LAMBDA_FSN_II:
        return FoldedKind.FSN_II
    if lam < LAMBDA_NODE_FOCUS:
        return FoldedKind.FOLDED_NODE
    if lam == LAMBDA_NODE_FOCUS:
        return FoldedKind.DEGENERATE_NODE
    return FoldedKind.FOLDED_FOCUS


def folded_singularity(params: KoperParams, sign: str,
                       method: str = "auto") -> FoldedSingularityInfo:
    """Folded singularity p_+ or p_- with eigendata and classification.

    method 'closed_form' requires k = -10 (raises UnsupportedK otherwise);
    'numeric' always linearizes numerically; 'auto' picks closed forms at
    k = -10.  For p_- the closed forms are applied at -lambda, which the
    model symmetry maps onto the p_+ problem.
    """
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    lam, k = params.lam, params.k
    s = 1.0 if sign == "+" else -1.0
    x0 = s
    z0 = 2.0 * lam - s * (4.0 + k)
    location = CriticalManifoldPoint.from_xz(x0, z0)

    closed = k == -10.0
    if method == "closed_form" and not closed:
        raise UnsupportedK(f"closed-form eigendata requires k = -10, got {k}")
    if method == "auto":
        method = "closed_form" if closed else "numeric"

    if method == "closed_form":
        lam_eff = lam if sign == "+" else -lam
        radicand = -23.0 - 6.0 * lam_eff
        root = cmath.sqrt(radicand)
        sigma_w = -5.0 + root
        sigma_s = -5.0 - root
        if radicand >= 0.0:
            r = math.sqrt(radicand)
            Sigma_w_x = 1.0 / (5.0 + r)
            Sigma_s_x = 1.0 / (5.0 - r) if r != 5.0 else math.inf
        else:
            Sigma_w_x = Sigma_s_x = None
        kind = classify_folded_singularity(lam_eff)
    else:
        # numeric 2x2 linearization of the desingularized flow
        jac = np.array([
            [k - 2.0 * (3.0 * x0 * x0 - 3.0), 1.0],
            [6.0 * x0 * (lam + manifold_y(x0) - z0), -(3.0 * x0 * x0 - 3.0)],
        ])
        eigvals, eigvecs = np.linalg.eig(jac)
        order = np.argsort(eigvals.real)  # strong (most negative) last slot
        sigma_s_v, sigma_w_v = eigvals[order[0]], eigvals[order[1]]
        sigma_w, sigma_s = complex(sigma_w_v), complex(sigma_s_v)
        if abs(sigma_w.imag) < 1e-12 and abs(sigma_s.imag) < 1e-12:
            def x_comp(col):
                v = eigvecs[:, col].real
                return math.inf if v[1] == 0.0 else v[0] / v[1]
            Sigma_s_x = x_comp(order[0])
            Sigma_w_x = x_comp(order[1])
            sigma_w = complex(sigma_w.real)
            sigma_s = complex(sigma_s.real)
        else:
            Sigma_w_x = Sigma_s_x = None
        kind = _kind_from_eigvals(sigma_w, sigma_s)

    return FoldedSingularityInfo(location, sigma_w, sigma_s,
                                 Sigma_w_x, Sigma_s_x, kind)


def _kind_from_eigvals(sigma_w: complex, sigma_s: complex) -> FoldedKind:
    if abs(sigma_w.imag) > 0.0 or abs(sigma_s.imag) > 0.0:
        return FoldedKind.FOLDED_FOCUS
    w, s = sigma_w.real, sigma_s.real
    if w == 0.0 or s == 0.0:
        return FoldedKind.FSN_II
    if w * s < 0.0:
        return FoldedKind.FOLDED_SADDLE
    if w == s:
        return FoldedKind.DEGENERATE_NODE
    return FoldedKind.FOLDED_NODE


def strong_eigenvector_x(lam: float) -> float:
    """x-component of the strong eigenvector at p_+ (z-component 1), k=-10.

    Defined for lam in (-8, -23/6]; strictly decreasing from +inf to 1/5.
    """
    radicand = -23.0 - 6.0 * lam
    if radicand < 0.0:
        raise OutOfRangeLambda(f"radicand negative at lambda={lam}")
    r = math.sqrt(radicand)
    if r >= 5.0:
        raise OutOfRangeLambda(
            f"strong eigenvector undefined at lambda={lam} (<= FSN II)")
    return 1.0 / (5.0 - r)


def funnel_boundary_z(params: KoperParams) -> float:
    """z-coordinate of the funnel boundary on the section {x = 1 + mu}.

    This is where the strong-canard eigendirection through p_+ meets the
    section: z = 2*lam + 6 + mu*(5 - sqrt(-23 - 6*lam)).  Requires
    lam in [-8, -23/6].
    """
    lam = params.lam
    radicand = -23.0 - 6.0 * lam
    if radicand < 0.0:
        raise OutOfRangeLambda(f"radicand negative at lambda={lam}")
    if lam < LAMBDA_FSN_II:
        raise OutOfRangeLambda(f"lambda={lam} below the FSN II value -8")
    return 2.0 * lam + 6.0 + params.mu * (5.0 - math.sqrt(radicand))


def apply_symmetry(state, params: KoperParams):
    """Model symmetry: (x,y,z; lambda) -> (-x,-y,-z; -lambda), k fixed.

    The vector field is equivariant: flowing the image equals the image of
    the flow.
    """
    x, y, z = state
    return np.array((-x, -y, -z)), replace(params, lam=-params.lam)
