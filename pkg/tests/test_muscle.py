"""Muscle-tendon unit: exact curves, surrogates, geometry, torque map."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from musclegait.errors import (AttachmentError, DomainError, FitError,
                               InputError, MappingError)
from musclegait.muscle import (MUSCLE_ORDER, TORQUE_TABLE, JointPath,
                               MuscleAttachment, MuscleParams, MuscleState,
                               ce_force, default_fse_domain, default_fv_domain,
                               delta_l_mtu, fit_smooth_curves, force_length,
                               force_se, force_velocity, lever_arm, mtu_length,
                               muscle_joint_torque, se_force, torque_sum)


def params(**kw):
    base = dict(f_max=3000.0, l_opt=0.1, l_slack=0.25, w=0.56, c=0.05,
                K=5.0, n_ecc=1.5, v_max=12.0, eps_ref=0.04, rho=0.7)
    base.update(kw)
    return MuscleParams(**base)


# ---------------------------------------------------------------------------
# exact anchor values (independent oracles: the defining identities)
# ---------------------------------------------------------------------------

class TestCurveAnchors:
    def test_fl_peak_is_one(self):
        p = params()
        assert abs(force_length(p, p.l_opt) - 1.0) <= 1e-12

    def test_fl_width_points_equal_c(self):
        p = params()
        for sgn in (+1.0, -1.0):
            got = force_length(p, p.l_opt * (1.0 + sgn * p.w))
            assert abs(got - p.c) <= 1e-12

    def test_fv_isometric_is_one(self):
        p = params()
        assert abs(force_velocity(p, 0.0) - 1.0) <= 1e-12

    def test_fv_negative_branch_by_hand(self):
        p = params()
        vm = p.v_max_abs
        v = -0.05 * vm
        assert abs(force_velocity(p, v)
                   - (vm - v) / (vm + p.K * v)) <= 1e-12

    def test_fv_positive_branch_by_hand(self):
        p = params()
        vm, n = p.v_max_abs, p.n_ecc
        v = 0.02 * vm
        exp = n + (n - 1.0) * (vm + v) / (7.56 * p.K * v - vm)
        assert abs(force_velocity(p, v) - exp) <= 1e-12

    def test_fv_branches_continuous_at_zero(self):
        p = params()
        eps = 1e-9
        assert abs(force_velocity(p, -eps) - force_velocity(p, eps)) < 1e-7

    def test_fv_far_enhancement_approaches_n_ecc(self):
        # past its pole the positive branch settles near the eccentric
        # enhancement factor: n + (n-1)/(7.56 K) in the limit
        p = params()
        limit = p.n_ecc + (p.n_ecc - 1.0) / (7.56 * p.K)
        assert abs(force_velocity(p, 1e9) - limit) < 1e-6

    def test_fse_slack_is_zero(self):
        p = params()
        assert force_se(p, p.l_slack) == 0.0
        assert force_se(p, 0.5 * p.l_slack) == 0.0

    def test_fse_reference_strain_is_one(self):
        p = params()
        got = force_se(p, p.l_slack * (1.0 + p.eps_ref))
        assert abs(got - 1.0) <= 1e-12

    def test_fse_quadratic_by_hand(self):
        p = params()
        l_se = p.l_slack * (1.0 + 0.5 * p.eps_ref)
        assert abs(force_se(p, l_se) - 0.25) <= 1e-12


param_draws = st.builds(
    params,
    f_max=st.floats(100.0, 10000.0),
    l_opt=st.floats(0.02, 0.5),
    l_slack=st.floats(0.05, 0.6),
    w=st.floats(0.2, 0.95),
    c=st.floats(0.01, 0.5),
    K=st.floats(1.0, 10.0),
    n_ecc=st.floats(1.05, 2.5),
    v_max=st.floats(2.0, 20.0),
    eps_ref=st.floats(0.01, 0.1),
    rho=st.floats(0.3, 1.0),
)


class TestCurveProperties:
    @settings(max_examples=300, deadline=None)
    @given(param_draws)
    def test_anchor_identities_hold_for_any_params(self, p):
        assert abs(force_length(p, p.l_opt) - 1.0) <= 1e-12
        assert abs(force_length(p, p.l_opt * (1 + p.w)) - p.c) <= 1e-12
        assert abs(force_length(p, p.l_opt * (1 - p.w)) - p.c) <= 1e-12
        assert abs(force_velocity(p, 0.0) - 1.0) <= 1e-12
        assert force_se(p, p.l_slack) == 0.0
        assert abs(force_se(p, p.l_slack * (1 + p.eps_ref)) - 1.0) <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(param_draws, st.floats(0.01, 3.0))
    def test_fl_bounded_and_symmetric(self, p, frac):
        l_ce = frac * p.l_opt
        f = force_length(p, l_ce)
        assert 0.0 <= f <= 1.0   # exp underflows to 0 far from l_opt
        mirror = 2 * p.l_opt - l_ce
        if mirror > 0:
            assert abs(f - force_length(p, mirror)) <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(param_draws, st.floats(0.0, 0.98))
    def test_fv_monotone_decreasing_in_band(self, p, frac):
        # within the pole-free band the curve falls monotonically
        lo, hi = default_fv_domain(p)
        v1 = lo + frac * (hi - lo)
        v2 = lo + (frac + 0.01) * (hi - lo)
        assert force_velocity(p, v2) <= force_velocity(p, v1) + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(param_draws, st.floats(1.0, 3.0))
    def test_fse_monotone_above_slack(self, p, strain_mult):
        l1 = p.l_slack * (1.0 + strain_mult * p.eps_ref)
        l2 = l1 + 1e-4
        assert force_se(p, l2) > force_se(p, l1)


# ---------------------------------------------------------------------------
# input validation
# ---------------------------------------------------------------------------

class TestValidation:
    def test_bad_params_rejected(self):
        with pytest.raises(InputError):
            params(f_max=-1.0)
        with pytest.raises(InputError):
            params(c=1.5)
        with pytest.raises(InputError):
            params(n_ecc=1.0)
        with pytest.raises(InputError):
            params(rho=0.0)

    def test_bad_state_rejected(self):
        with pytest.raises(InputError):
            MuscleState(l_ce=-0.1, v_ce=0.0, s=0.5)
        with pytest.raises(InputError):
            MuscleState(l_ce=0.1, v_ce=0.0, s=1.5)

    def test_negative_lengths_rejected(self):
        p = params()
        with pytest.raises(InputError):
            force_length(p, 0.0)
        with pytest.raises(InputError):
            force_se(p, -0.01)


# ---------------------------------------------------------------------------
# geometry: MTU length and lever arms
# ---------------------------------------------------------------------------

def one_joint(lever="constant", sign=1, r0=0.08, theta_ref=0.1,
              theta_max=0.2, joint="hip_l"):
    return MuscleAttachment("test", (JointPath(
        joint=joint, r0=r0, theta_ref=theta_ref, theta_max=theta_max,
        lever=lever, sign=sign),))


class TestGeometry:
    def test_reference_angle_gives_rest_length(self):
        p = params()
        att = one_joint()
        assert abs(mtu_length(p, att, {"hip_l": 0.1})
                   - (p.l_opt + p.l_slack)) <= 1e-15

    def test_constant_lever_length_change(self):
        # d(l_mtu)/d(theta) = -sign * rho * r0 for the constant lever
        p = params()
        att = one_joint(sign=1)
        dth = 0.3
        got = mtu_length(p, att, {"hip_l": 0.1 + dth})
        assert abs(got - (p.l_opt + p.l_slack - p.rho * 0.08 * dth)) <= 1e-15

    def test_cosine_lever_consistent_with_length_derivative(self):
        # energetic consistency: dl_mtu/dtheta = -sign * rho * r(theta)
        p = params()
        att = one_joint(lever="cosine", sign=-1, joint="ankle_l")
        th, h = 0.37, 1e-7
        fd = (mtu_length(p, att, {"ankle_l": th + h})
              - mtu_length(p, att, {"ankle_l": th - h})) / (2 * h)
        r = lever_arm(att, "ankle_l", th)
        assert abs(fd - (-(-1) * p.rho * r)) < 1e-7

    def test_sign_flips_length_direction(self):
        p = params()
        up = delta_l_mtu(p, one_joint(sign=1), "hip_l", 0.5)
        dn = delta_l_mtu(p, one_joint(sign=-1), "hip_l", 0.5)
        assert abs(up + dn) <= 1e-15 and up != 0.0

    def test_biarticular_sums_both_joints(self):
        p = params()
        paths = (JointPath("hip_l", 0.08, 0.1, 0.0, "constant", 1),
                 JointPath("knee_l", 0.05, -0.2, 0.3, "cosine", -1))
        att = MuscleAttachment("biart", paths)
        q = {"hip_l": 0.4, "knee_l": -0.6}
        total = mtu_length(p, att, q)
        exp = (p.l_opt + p.l_slack
               - delta_l_mtu(p, att, "hip_l", q["hip_l"])
               - delta_l_mtu(p, att, "knee_l", q["knee_l"]))
        assert abs(total - exp) <= 1e-15

    def test_missing_joint_angle_raises(self):
        p = params()
        with pytest.raises(InputError):
            mtu_length(p, one_joint(), {})

    def test_unspanned_joint_raises(self):
        with pytest.raises(AttachmentError):
            one_joint().path("knee_r")


# ---------------------------------------------------------------------------
# element forces and torque map
# ---------------------------------------------------------------------------

class TestForcesAndTorques:
    def test_ce_force_product_form(self):
        p = params()
        st_ = MuscleState(l_ce=0.95 * p.l_opt, v_ce=-0.2, s=0.6)
        exp = 0.6 * p.f_max * force_length(p, st_.l_ce) \
            * force_velocity(p, st_.v_ce)
        assert abs(ce_force(p, st_) - exp) <= 1e-12

    def test_se_force_scales_fmax(self):
        p = params()
        l_se = p.l_slack * (1.0 + p.eps_ref)
        assert abs(se_force(p, l_se) - p.f_max) <= 1e-9

    def test_torque_magnitude_nonnegative_input(self):
        with pytest.raises(InputError):
            muscle_joint_torque(one_joint(), "hip_l", 0.0, -1.0)

    def test_torque_table_covers_ten_muscles(self):
        assert len(MUSCLE_ORDER) == 10
        named = {m for rows in TORQUE_TABLE.values() for m, _ in rows}
        # every muscle appears in at least one joint sum
        assert named == set(MUSCLE_ORDER)

    def test_torque_sum_signs(self):
        # unit contribution per pair isolates the sign pattern
        contrib = {(m, j): 1.0 for j, rows in TORQUE_TABLE.items()
                   for m, _ in rows}
        out = torque_sum(contrib)
        assert out["hip_l"] == 3.0        # ham + glu + hfl
        assert out["knee_l"] == 1.0       # ham + gas - vas
        assert out["ankle_l"] == 1.0      # gas + sol - ta
        assert out["hip_r"] == 1.0        # ham + glu - hfl

    def test_torque_sum_missing_pair_raises(self):
        with pytest.raises(MappingError):
            torque_sum({})


# ---------------------------------------------------------------------------
# smooth surrogates
# ---------------------------------------------------------------------------

class TestSmoothFits:
    def test_fit_meets_two_percent_everywhere(self):
        p = params()
        fv, fse = fit_smooth_curves(p)
        assert fv.max_rel_error <= 0.02
        assert fse.max_rel_error <= 0.02
        for fit, fn in ((fv, lambda v: force_velocity(p, v)),
                        (fse, lambda l: force_se(p, l))):
            lo, hi = fit.fit_domain
            xs = np.linspace(lo, hi, 5003)
            err = max(abs(fit(x) - fn(x)) / max(abs(fn(x)), 1.0) for x in xs)
            assert err <= 0.02

    def test_unachievable_tolerance_reports_achieved(self):
        with pytest.raises(FitError) as ei:
            fit_smooth_curves(params(), tol=0.0)
        assert ei.value.achieved > 0.0

    def test_fit_is_deterministic(self):
        a = fit_smooth_curves(params())
        b = fit_smooth_curves(params())
        assert a[0].coef == b[0].coef and a[1].coef == b[1].coef

    def test_strict_eval_raises_outside_domain(self):
        fv, fse = fit_smooth_curves(params())
        lo, hi = fv.fit_domain
        with pytest.raises(DomainError):
            fv(hi + 0.1)
        with pytest.raises(DomainError):
            fse(fse.fit_domain[0] - 0.1)

    def test_extended_eval_is_c1_at_domain_edges(self):
        fv, fse = fit_smooth_curves(params())
        for fit in (fv, fse):
            lo, hi = fit.fit_domain
            for edge in (lo, hi):
                h = 1e-9 * max(1.0, abs(edge))
                inner = fit.eval_extended(edge - h)
                outer = fit.eval_extended(edge + h)
                assert abs(inner - outer) < 1e-6
                di = fit.deriv_extended(edge - h)
                do = fit.deriv_extended(edge + h)
                assert abs(di - do) < 1e-4 * max(1.0, abs(di))

    def test_extension_never_reopens_force(self):
        # beyond the fit band f_v keeps falling and f_se keeps rising,
        # so extreme rates/strains cannot generate spurious force
        p = params()
        fv, fse = fit_smooth_curves(p)
        lo, hi = fv.fit_domain
        assert fv.eval_extended(hi + 1.0) < fv.eval_extended(hi)
        assert fv.eval_extended(lo - 1.0) > fv.eval_extended(lo)
        fl, fh = fse.fit_domain
        assert fse.eval_extended(fh + 0.1) > fse.eval_extended(fh)

    def test_default_domains_avoid_poles(self):
        p = params()
        lo, hi = default_fv_domain(p)
        assert lo > -p.v_max_abs / p.K
        assert hi < p.v_max_abs / (7.56 * p.K)
        sl, sh = default_fse_domain(p)
        assert sl < p.l_slack < sh
