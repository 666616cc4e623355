"""Affine/quadratic (piecewise) models of sampled maps and their errors.

Single-branch samples get an ordinary least-squares polynomial; two-branch
samples get a constrained fit whose pieces share their value at the common
breakpoint (the extremal-z canard point carried with the sample).  The
constraint is enforced exactly by reparametrizing both pieces around the
breakpoint with a shared intercept, which eliminates the Lagrange
multiplier.  Error norms (L1, L2, sup) are computed on a uniform grid per
branch with a composite Simpson rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BranchMismatch,
    EmptyDomain,
    RankDeficient,
    TooFewPoints,
)
from .singular_maps import MapSample, STATUS_OK

__all__ = [
    "PolyPiece",
    "FitReport",
    "PiecewisePolyMap",
    "CoefficientFamily",
    "fit_polynomial",
    "fit_piecewise",
    "fit_coefficient_family",
    "error_norms",
    "simpson",
    "piecewise_map_to_json",
    "piecewise_map_from_json",
]

_CONTINUITY_TOL = 1e-9


@dataclass(frozen=True)
class PolyPiece:
    """Polynomial piece with coefficients in ascending powers of z."""

    degree: int
    coeffs: tuple
    domain: tuple

    def __post_init__(self):
        if len(self.coeffs) != self.degree + 1:
            raise ValueError("degree does not match coefficient count")
        if not self.domain[0] <= self.domain[1]:
            raise ValueError("empty domain")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "domain",
                           (float(self.domain[0]), float(self.domain[1])))

    def __call__(self, z):
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return acc

    def derivative(self, z):
        acc = 0.0
        for i in range(self.degree, 0, -1):
            acc = acc * z + i * self.coeffs[i]
        return acc

    def contains(self, z, pad: float = 0.0) -> bool:
        return self.domain[0] - pad <= z <= self.domain[1] + pad


@dataclass(frozen=True)
class FitReport:
    """Error norms of a fit against its sample (aggregated over branches)."""

    e_l1: float
    e_l2: float
    e_linf: float
    n_samples: int
    h: float

    def __post_init__(self):
        if min(self.e_l1, self.e_l2, self.e_linf) < 0.0:
            raise ValueError("error norms must be nonnegative")


@dataclass
class PiecewisePolyMap:
    """1- or 2-piece polynomial model of a sampled map.

    For two-piece maps the piece order is (upper, lower) and both domains
    begin at the shared breakpoint; evaluation then requires a branch
    label because the branches overlap in z.
    """

    map_id: str
    lam: float
    pieces: list
    continuity_residual: float = 0.0
    fit_report: Optional[FitReport] = None

    def __post_init__(self):
        if len(self.pieces) not in (1, 2):
            raise ValueError("need 1 or 2 pieces")
        if len(self.pieces) == 2:
            if abs(self.continuity_residual) > _CONTINUITY_TOL:
                raise ValueError(
                    f"continuity residual {self.continuity_residual} "
                    f"exceeds {_CONTINUITY_TOL}")

    @property
    def breakpoint(self) -> Optional[float]:
        if len(self.pieces) != 2:
            return None
        return self.pieces[0].domain[0]

    def piece_for_branch(self, branch: str) -> PolyPiece:
        if len(self.pieces) == 1:
            return self.pieces[0]
        if branch == "upper":
            return self.pieces[0]
        if branch == "lower":
            return self.pieces[1]
        raise BranchMismatch(f"branch {branch!r} not present in fit")

    def eval(self, z: float, branch: str = "single") -> float:
        return self.piece_for_branch(branch)(z)

    def derivative(self, z: float, branch: str = "single") -> float:
        return self.piece_for_branch(branch).derivative(z)


@dataclass
class CoefficientFamily:
    """One fitted coefficient (or domain bound) as a function of lambda.

    ``poly_fits`` maps degree (2, 3, 4) to (coeffs ascending, residuals),
    with residuals reported as the max-abs misfit over the lambda grid.
    No degree is singled out as preferred; all three are reported.
    """

    coefficient_id: str
    lambda_grid: np.ndarray
    values: np.ndarray
    poly_fits: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.lambda_grid) <= 0.0):
            raise ValueError("lambda grid must be strictly increasing")


def _vandermonde(z: np.ndarray, degree: int) -> np.ndarray:
    return np.vander(z, degree + 1, increasing=True)


def fit_polynomial(z, w, degree: int):
    """Ordinary least squares for w ~ poly(z) of the given degree.

    Solves the column-scaled normal equations; returns (coeffs ascending,
    per-sample residuals w - p(z)).
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    if degree < 1 or degree > 4:
        raise ValueError("degree must be in 1..4")
    if len(z) <= degree:
        raise TooFewPoints(f"need more than {degree} samples, got {len(z)}")
    v = _vandermonde(z, degree)
    col_scale = np.max(np.abs(v), axis=0)
    if np.any(col_scale == 0.0):
        raise RankDeficient("zero column in design matrix")
    vs = v / col_scale
    gram = vs.T @ vs
    rhs = vs.T @ w
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("normal equations singular "
                            "(collinear z values)") from exc
    if not np.all(np.isfinite(sol)) or np.linalg.cond(gram) > 1e14:
        raise RankDeficient("design matrix numerically rank deficient")
    coeffs = sol / col_scale
    return coeffs, w - v @ coeffs


def _shifted_design(z: np.ndarray, z_b: float, degree: int) -> np.ndarray:
    # columns: (z - z_b)^1 .. (z - z_b)^degree (intercept handled shared)
    dz = z - z_b
    return np.column_stack([dz**p for p in range(1, degree + 1)])


def _shifted_to_monomial(value_at_break: float, slope_coeffs, z_b: float):
    # p(z) = v + sum_k a_k (z - z_b)^k  ->  ascending monomial coefficients
    poly = np.polynomial.Polynomial([value_at_break, *slope_coeffs])
    shifted = poly(np.polynomial.Polynomial([-z_b, 1.0]))
    return tuple(float(c) for c in shifted.coef)


def fit_piecewise(sample: MapSample, degrees) -> PiecewisePolyMap:
    """Fit a sampled map with continuity enforced at the shared breakpoint.

    ``degrees`` is an int for single-branch samples or an (upper, lower)
    pair for two-branch samples.  The breakpoint is the common lower end
    of the two branch domains (geometry-supplied, not optimized).
    """
    branches = sample.branches()
    if branches == ["single"]:
        if not isinstance(degrees, int):
            degrees = degrees[0]
        z, w = sample.branch_arrays("single")
        coeffs, _ = fit_polynomial(z, w, degrees)
        piece = PolyPiece(degrees, tuple(coeffs), sample.domains["single"])
        fitted = PiecewisePolyMap(sample.map_id, sample.lam, [piece])
    elif set(branches) == {"upper", "lower"}:
        if isinstance(degrees, int) or len(degrees) != 2:
            raise BranchMismatch("two-branch sample needs (upper, lower) "
                                 "degrees")
        deg_u, deg_l = degrees
        zu, wu = sample.branch_arrays("upper")
        zl, wl = sample.branch_arrays("lower")
        if len(zu) <= deg_u or len(zl) <= deg_l:
            raise TooFewPoints("branch too short for requested degree")
        z_b = min(sample.domains["upper"][0], sample.domains["lower"][0])
        # shared-intercept design: [1 | upper shifted | 0] and
        # [1 | 0 | lower shifted] rows; continuity is exact by construction
        du = _shifted_design(zu, z_b, deg_u)
        dl = _shifted_design(zl, z_b, deg_l)
        n_u, n_l = du.shape[1], dl.shape[1]
        a = np.zeros((len(zu) + len(zl), 1 + n_u + n_l))
        a[:, 0] = 1.0
        a[:len(zu), 1:1 + n_u] = du
        a[len(zu):, 1 + n_u:] = dl
        w_all = np.concatenate([wu, wl])
        col_scale = np.max(np.abs(a), axis=0)
        if np.any(col_scale == 0.0):
            raise RankDeficient("zero column in piecewise design")
        a_s = a / col_scale
        gram = a_s.T @ a_s
        try:
            sol = np.linalg.solve(gram, a_s.T @ w_all)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("piecewise normal equations singular") from exc
        if np.linalg.cond(gram) > 1e14:
            raise RankDeficient("piecewise design numerically rank deficient")
        sol = sol / col_scale
        v = sol[0]
        cu = _shifted_to_monomial(v, sol[1:1 + n_u], z_b)
        cl = _shifted_to_monomial(v, sol[1 + n_u:], z_b)
        piece_u = PolyPiece(deg_u, cu, (z_b, sample.domains["upper"][1]))
        piece_l = PolyPiece(deg_l, cl, (z_b, sample.domains["lower"][1]))
        residual = piece_u(z_b) - piece_l(z_b)
        fitted = PiecewisePolyMap(sample.map_id, sample.lam,
                                  [piece_u, piece_l],
                                  continuity_residual=residual)
    else:
        raise BranchMismatch(f"unsupported branch structure {branches}")
    fitted.fit_report = error_norms(sample, fitted)
    return fitted


def simpson(values, h: float) -> float:
    """Composite Simpson rule on a uniform grid of spacing h.

    An odd final interval is handled by one trapezoid.  Composite
    convergence is fourth order on smooth integrands (each panel carries
    a fifth-order local error).
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 3:
        raise TooFewPoints("simpson needs at least 3 points")
    n_int = n - 1
    end = n if n_int % 2 == 0 else n - 1
    total = 0.0
    v = values[:end]
    total += (h / 3.0) * (v[0] + v[-1]
                          + 4.0 * np.sum(v[1:-1:2]) + 2.0 * np.sum(v[2:-2:2]))
    if end != n:
        total += 0.5 * h * (values[-2] + values[-1])
    return float(total)


def _branch_errors(z, misfit, n_resample=None):
    """(l1, l2, linf, h) with resampling to a uniform grid if needed."""
    order = np.argsort(z)
    z, misfit = z[order], misfit[order]
    span = z[-1] - z[0]
    d = np.diff(z)
    if span == 0.0 or len(z) < 3:
        return 0.0, 0.0, float(np.max(np.abs(misfit))), 0.0
    if np.max(d) - np.min(d) > 1e-9 * max(span, 1.0):
        n = len(z) if n_resample is None else n_resample
        zu = np.linspace(z[0], z[-1], n)
        misfit = np.interp(zu, z, misfit)
        z = zu
    h = (z[-1] - z[0]) / (len(z) - 1)
    l1 = simpson(np.abs(misfit), h)
    l2 = math.sqrt(max(simpson(misfit * misfit, h), 0.0))
    return l1, l2, float(np.max(np.abs(misfit))), h


def error_norms(numeric: MapSample, fitted: PiecewisePolyMap) -> FitReport:
    """L1/L2 via composite Simpson and sup-norm of (sample - fit).

    Two-branch maps aggregate per-branch norms: L1 adds, L2 adds in
    quadrature, sup takes the max.
    """
    l1 = 0.0
    l2_sq = 0.0
    linf = 0.0
    n_total = 0
    h_max = 0.0
    any_branch = False
    for br in numeric.branches():
        z, w = numeric.branch_arrays(br)
        if len(z) == 0:
            continue
        any_branch = True
        piece = fitted.piece_for_branch(br)
        misfit = w - np.array([piece(v) for v in z])
        b1, b2, binf, h = _branch_errors(z, misfit)
        l1 += b1
        l2_sq += b2 * b2
        linf = max(linf, binf)
        n_total += len(z)
        h_max = max(h_max, h)
    if not any_branch:
        raise EmptyDomain("no successful samples to compare against")
    return FitReport(l1, math.sqrt(l2_sq), linf, n_total, h_max)


def fit_coefficient_family(lambda_grid, fits: Sequence[PiecewisePolyMap],
                           degrees=(2, 3, 4)) -> list:
    """Fit lambda-dependence of every piece coefficient and domain bound.

    ``fits`` must share a map_id and branch structure and align with
    ``lambda_grid``.  Returns CoefficientFamily objects named like
    ``c_<map>_<piece>_<power>`` and ``z_<map>_<piece>_<min|max>``, each
    carrying polynomial fits of the requested degrees with max-abs
    residuals.
    """
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if len(lambda_grid) != len(fits):
        raise ValueError("lambda grid and fits disagree in length")
    if len(lambda_grid) < max(degrees) + 2:
        raise TooFewPoints(
            f"need >= {max(degrees) + 2} lambda points for degree "
            f"{max(degrees)} family fits, got {len(lambda_grid)}")
    map_id = fits[0].map_id
    n_pieces = len(fits[0].pieces)
    if any(f.map_id != map_id or len(f.pieces) != n_pieces for f in fits):
        raise BranchMismatch("fits mix map ids or branch structures")
    tag = map_id.removeprefix("m_")
    piece_names = (["single"] if n_pieces == 1 else ["upper", "lower"])
    families = []
    for pi, pname in enumerate(piece_names):
        deg = fits[0].pieces[pi].degree
        for power in range(deg + 1):
            values = [f.pieces[pi].coeffs[power] for f in fits]
            families.append(_family(f"c_{tag}_{pname}_{power}",
                                    lambda_grid, values, degrees))
        for bound, idx in (("min", 0), ("max", 1)):
            values = [f.pieces[pi].domain[idx] for f in fits]
            families.append(_family(f"z_{tag}_{pname}_{bound}",
                                    lambda_grid, values, degrees))
    return families


def _family(name, lambda_grid, values, degrees) -> CoefficientFamily:
    fam = CoefficientFamily(name, lambda_grid, np.array(values, dtype=float))
    for d in degrees:
        coeffs, resid = fit_polynomial(lambda_grid, fam.values, d)
        fam.poly_fits[d] = (tuple(float(c) for c in coeffs),
                            float(np.max(np.abs(resid))))
    return fam


# --- serialization -------------------------------------------------------


def piecewise_map_to_json(fit: PiecewisePolyMap) -> dict:
    out = {
        "map": fit.map_id,
        "lambda": fit.lam,
        "pieces": [
            {"degree": p.degree, "coeffs": list(p.coeffs),
             "domain": list(p.domain)}
            for p in fit.pieces
        ],
    }
    if fit.fit_report is not None:
        out["errors"] = {"l1": fit.fit_report.e_l1,
                         "l2": fit.fit_report.e_l2,
                         "linf": fit.fit_report.e_linf}
    return out


def piecewise_map_from_json(data: dict) -> PiecewisePolyMap:
    pieces = [PolyPiece(p["degree"], tuple(p["coeffs"]), tuple(p["domain"]))
              for p in data["pieces"]]
    residual = 0.0
    if len(pieces) == 2:
        z_b = pieces[0].domain[0]
        residual = pieces[0](z_b) - pieces[1](z_b)
    report = None
    if "errors" in data:
        report = FitReport(data["errors"]["l1"], data["errors"]["l2"],
                           data["errors"]["linf"], 0, 0.0)
    return PiecewisePolyMap(data["map"], data["lambda"], pieces,
                            continuity_residual=residual, fit_report=report)
