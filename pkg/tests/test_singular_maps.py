import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import _oracle_values as oracle
from mmodecomp.errors import NoLandingRoot, OutOfRangeLambda
from mmodecomp.koper_model import (
    KoperParams,
    desingularized_slow_flow,
    manifold_y,
    strong_eigenvector_x,
)
from mmodecomp.singular_maps import (
    CanardCurve,
    MapSample,
    STATUS_OK,
    compute_m_a_plus,
    compute_m_j,
    default_z_grid,
    jump_target,
    m_s_eval,
    map_sample_from_csv,
    map_sample_to_csv,
    strong_canard,
)


# --- fast fibers ----------------------------------------------------------


def test_jump_from_upper_fold_lands_on_minus_two():
    assert jump_target(1.0, "forward") == pytest.approx(-2.0, abs=1e-14)


def test_jump_from_lower_fold_lands_on_plus_two():
    assert jump_target(-1.0, "backward") == pytest.approx(2.0, abs=1e-14)


def test_jump_from_middle():
    assert jump_target(0.0, "forward") == pytest.approx(-math.sqrt(3.0))
    assert jump_target(0.0, "backward") == pytest.approx(math.sqrt(3.0))


def test_degenerate_jumps_raise():
    with pytest.raises(NoLandingRoot):
        jump_target(1.0, "backward")
    with pytest.raises(NoLandingRoot):
        jump_target(-1.0, "forward")


def test_drop_curve_identities():
    assert manifold_y(-2.0) == manifold_y(1.0) == -2.0
    assert manifold_y(2.0) == manifold_y(-1.0) == 2.0


@given(st.floats(min_value=-0.999, max_value=0.999))
def test_fast_fiber_conserves_manifold_height(x):
    for side in ("forward", "backward"):
        landing = jump_target(x, side)
        assert abs(manifold_y(landing) - manifold_y(x)) <= 1e-10
        assert landing <= -1.0 if side == "forward" else landing >= 1.0


# --- strong canard --------------------------------------------------------


def test_canard_seed_near_folded_node(canard7):
    assert abs(canard7.points[0, 1] - (-8.0)) <= 1e-4
    assert abs(canard7.points[0, 0] - 1.0) <= 1e-4


def test_canard_initial_direction_tangent_to_eigenvector(params7, canard7):
    velocity = desingularized_slow_flow(canard7.points[0], params7)
    velocity = velocity / np.linalg.norm(velocity)
    sx = strong_eigenvector_x(params7.lam)
    eig = np.array([sx, 1.0]) / math.hypot(sx, 1.0)
    cosang = min(1.0, abs(float(np.dot(velocity, eig))))
    assert math.acos(cosang) <= 1e-3


def test_canard_pinned_geometry(canard7):
    # endpoint, total arclength, extremal z against the fixed-step oracle
    assert canard7.end_fold == "F_minus"
    assert canard7.points[-1, 0] == pytest.approx(-1.0, abs=1e-9)
    assert canard7.points[-1, 1] == pytest.approx(oracle.CANARD_END_Z,
                                                  abs=1e-5)
    assert canard7.arclengths[-1] == pytest.approx(oracle.CANARD_ARCLENGTH,
                                                   abs=1e-5)
    assert canard7.knee_z == pytest.approx(oracle.CANARD_KNEE_Z, abs=1e-5)


def test_canard_points_pinned(canard7, params7):
    traj_by_s = {float(s): p for s, p in zip(canard7.arclengths,
                                             canard7.points)}
    for s, (x_ref, z_ref) in oracle.CANARD_POINTS.items():
        p = traj_by_s[s]
        assert p[0] == pytest.approx(x_ref, abs=1e-5)
        assert p[1] == pytest.approx(z_ref, abs=1e-5)


def test_canard_seed_sensitivity(params7, canard7):
    half = strong_canard(params7, seed_offset=5e-7)
    assert half.knee_z == pytest.approx(canard7.knee_z, abs=1e-5)
    assert half.points[-1, 1] == pytest.approx(canard7.points[-1, 1],
                                               abs=1e-5)


def test_canard_rejects_focus_lambda():
    with pytest.raises(OutOfRangeLambda):
        strong_canard(KoperParams(lam=-3.0))


# --- sampled maps ---------------------------------------------------------


def test_m_j_pinned_values(sample_m_j7):
    by_z = dict(zip(sample_m_j7.z_in, sample_m_j7.z_out))
    for z, ref in oracle.M_J.items():
        assert by_z[z] == pytest.approx(ref, abs=1e-6)


def test_m_a_plus_pinned_values(sample_m_a7):
    by_z = dict(zip(sample_m_a7.z_in, sample_m_a7.z_out))
    for z, ref in oracle.M_A_PLUS.items():
        assert by_z[z] == pytest.approx(ref, abs=1e-6)


def test_m_j_all_finite_on_standard_domain(sample_m_j7):
    assert all(s == STATUS_OK for s in sample_m_j7.status)
    assert np.all(np.isfinite(sample_m_j7.z_out))


def test_m_j_single_branch_increasing(sample_m_j7):
    zi, zo = sample_m_j7.branch_arrays("single")
    assert sample_m_j7.branches() == ["single"]
    assert np.all(np.diff(zo) > 0.0)


def test_m_a_plus_mu_zero_section_is_fold():
    # with mu = 0 the target section coincides with the fold line
    p = KoperParams(lam=-7.0, mu=0.0)
    sample = compute_m_a_plus(p, np.array([-8.5, -8.2]))
    assert all(s == STATUS_OK for s in sample.status)
    assert np.all(np.isfinite(sample.z_out))


def test_m_a_plus_monotone(sample_m_a7):
    _, zo = sample_m_a7.branch_arrays("single")
    diffs = np.diff(zo)
    assert np.all(diffs > 0.0) or np.all(diffs < 0.0)


def test_grid_spacing_invariant(sample_m_j7, sample_m_f7):
    sample_m_j7.validate_grid()
    sample_m_f7.validate_grid()


def test_default_grid_respects_spacing():
    grid = default_z_grid(-7.0, n=11)
    assert len(grid) >= 101
    assert np.max(np.diff(grid)) <= 0.02 + 1e-12


def test_m_f_branch_structure(sample_m_f7, params7):
    assert set(sample_m_f7.branches()) == {"upper", "lower"}
    # shared breakpoint and the folded-node upper bound
    assert sample_m_f7.domains["upper"][0] == sample_m_f7.domains["lower"][0]
    assert sample_m_f7.domains["upper"][1] == pytest.approx(
        2.0 * params7.lam + 6.0, abs=1e-12)


def test_m_b_branch_structure(sample_m_b7):
    assert set(sample_m_b7.branches()) == {"upper", "lower"}
    assert sample_m_b7.domains["upper"][0] == sample_m_b7.domains["lower"][0]
    # landings between the fold and the section are reported, not silently
    # dropped: the sweep has explicit non-ok samples near the folded node
    assert any(s != STATUS_OK for s in sample_m_b7.status)


def test_m_f_pinned_branch_outputs(sample_m_f7, canard7):
    for s, ref in oracle.M_F_AT_ARC.items():
        idx = int(round(s / 0.02))
        z_in = canard7.points[idx, 1]
        matches = [zo for zi, zo in zip(sample_m_f7.z_in, sample_m_f7.z_out)
                   if zi == z_in]
        assert matches and matches[0] == pytest.approx(ref, abs=1e-5)


def test_m_b_pinned_branch_outputs(sample_m_b7, canard7):
    for s, ref in oracle.M_B_AT_ARC.items():
        idx = int(round(s / 0.02))
        z_in = canard7.points[idx, 1]
        matches = [zo for zi, zo in zip(sample_m_b7.z_in, sample_m_b7.z_out)
                   if zi == z_in]
        assert matches and matches[0] == pytest.approx(ref, abs=1e-5)


def test_refinement_stability(params7):
    grid = np.linspace(-8.6, -7.4, 11)
    coarse = compute_m_j(params7, grid)
    fine = compute_m_j(params7, grid, abs_tol=5e-9, rel_tol=5e-9)
    assert np.max(np.abs(coarse.z_out - fine.z_out)) <= 1e-5


def test_out_of_reach_samples_reported_as_gaps(params7):
    # a tight horizon turns distant starts into explicit per-sample gaps
    sample = compute_m_j(params7, np.array([-60.0, -8.0]), t_max=0.1)
    assert sample.status[list(sample.z_in).index(-8.0)] == STATUS_OK
    assert sample.status[list(sample.z_in).index(-60.0)] != STATUS_OK
    assert sample.domains["single"] == (-8.0, -8.0)


def _mb_funnel_counts(lam):
    from mmodecomp.koper_model import funnel_boundary_z
    from mmodecomp.singular_maps import compute_m_b
    p = KoperParams(lam=lam)
    mb = compute_m_b(p, strong_canard(p))
    z_funnel = funnel_boundary_z(p)
    ok = [zo for zo, st in zip(mb.z_out, mb.status) if st == STATUS_OK]
    above = sum(1 for z in ok if z > z_funnel)
    return above, len(ok) - above


def test_backward_canard_split_near_fsn():
    # close to the lower end of the node window, backward-canard returns
    # always land partly inside and partly outside the funnel
    above, below = _mb_funnel_counts(-7.8)
    assert above > 0 and below > 0


def test_backward_canard_mostly_outside_near_onset():
    above, below = _mb_funnel_counts(-6.5)
    assert below > above


# --- fold-region map ------------------------------------------------------


def test_m_s_funnel_branch(params7):
    from mmodecomp.koper_model import funnel_boundary_z
    z_funnel = funnel_boundary_z(params7)
    assert m_s_eval(z_funnel, params7) == pytest.approx(-8.0)
    assert m_s_eval(z_funnel + 0.3, params7) == pytest.approx(-8.0)


def test_m_s_projection_branch():
    p = KoperParams(lam=-7.0, mu=0.1)
    expected = -8.5 - 0.1 * (5.0 - math.sqrt(19.0))
    assert m_s_eval(-8.5, p) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-8.5641, abs=1e-4)


def test_m_s_mu_zero_collapse():
    p = KoperParams(lam=-7.0, mu=0.0)
    assert m_s_eval(-8.7, p) == -8.7      # identity below the boundary
    assert m_s_eval(-7.9, p) == pytest.approx(-8.0)  # constant above


def test_m_s_lambda_guard():
    with pytest.raises(OutOfRangeLambda):
        m_s_eval(-8.0, KoperParams(lam=-3.0))
    with pytest.raises(OutOfRangeLambda):
        m_s_eval(-8.0, KoperParams(lam=-8.0))


@given(st.floats(min_value=-12.0, max_value=-4.0))
def test_m_s_never_exceeds_node(z):
    p = KoperParams(lam=-7.0, mu=0.1)
    assert m_s_eval(z, p) <= 2.0 * p.lam + 6.0 + 1e-12


# --- serialization --------------------------------------------------------


def _roundtrip(sample):
    buf = io.StringIO()
    map_sample_to_csv(sample, buf)
    buf.seek(0)
    return map_sample_from_csv(buf)


def test_csv_roundtrip_bit_exact(sample_m_f7, sample_m_j7):
    for sample in (sample_m_f7, sample_m_j7):
        back = _roundtrip(sample)
        assert back.map_id == sample.map_id
        assert back.lam == sample.lam
        assert np.array_equal(back.z_in, sample.z_in)
        assert np.array_equal(back.z_out, sample.z_out, equal_nan=True)
        assert back.branch == sample.branch
        assert back.status == sample.status
        assert back.domains == sample.domains


def test_csv_has_declared_header(sample_m_j7):
    buf = io.StringIO()
    map_sample_to_csv(sample_m_j7, buf)
    lines = [l for l in buf.getvalue().splitlines()
             if not l.startswith("#")]
    assert lines[0] == "map,lambda,branch,z_in,z_out,status"
