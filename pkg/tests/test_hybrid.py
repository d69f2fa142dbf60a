"""Domain graph, Bezier outputs, phase, guards, invariance residuals."""
import numpy as np
import pytest

from musclegait.errors import ConfigError, InputError
from musclegait.hybrid import (BezierCurve, OutputSet, bezier_deriv,
                               bezier_eval, build_gamma,
                               default_domain_config, domain_phase,
                               guard_eval, invariance_residual, outputs_eval,
                               tau)
from musclegait.model import NQ, Q_INDEX


class TestCycleStructure:
    def test_vertex_order_and_count(self, gamma):
        ids = [v.vertex_id for v in gamma.vertices]
        assert ids == ["ds2_r", "ds3_r", "ss2_r", "ss1_r",
                       "ds2_l", "ds3_l", "ss2_l", "ss1_l"]

    def test_contact_counts_per_kind(self, gamma):
        expect = {"ds2": 2, "ds3": 3, "ss2": 2, "ss1": 1}
        for v in gamma.vertices:
            assert len(v.contacts) == expect[v.vertex_id[:3]]

    def test_edges_close_a_single_cycle(self, gamma):
        vid = "ds2_r"
        for _ in range(8):
            vid = gamma.edge_from(vid).target
        assert vid == "ds2_r"

    def test_guard_and_reset_kinds(self, gamma):
        kinds = {e.source[:3]: (e.guard_kind, e.reset) for e in gamma.edges}
        assert kinds["ds2"] == ("touchdown", "impact")
        assert kinds["ds3"] == ("liftoff", "smooth")
        assert kinds["ss2"] == ("liftoff", "smooth")
        assert kinds["ss1"] == ("touchdown", "impact")

    def test_invariance_labels(self, gamma):
        for e in gamma.edges:
            if e.edge_id in (3, 7):
                assert e.invariance == "Z->PZ"
            elif e.edge_id in (4, 8):
                assert e.invariance == "PZ->Z"
            else:
                assert e.invariance == "Z->Z"

    def test_only_toe_pivot_lacks_velocity_output(self, gamma):
        for v in gamma.vertices:
            assert v.rd1 == (not v.vertex_id.startswith("ss1"))

    def test_bad_configs_rejected(self):
        cfg = default_domain_config()
        cfg["vertices"][0]["contacts"] = ["heel_r"]
        with pytest.raises(ConfigError):
            build_gamma(cfg)
        cfg = default_domain_config()
        cfg["edges"][2]["target"] = "ds2_r"   # breaks the single cycle
        with pytest.raises(ConfigError):
            build_gamma(cfg)
        cfg = default_domain_config()
        del cfg["vertices"][0]["stance"]
        with pytest.raises(ConfigError):
            build_gamma(cfg)

    def test_double_support_needs_both_feet(self):
        cfg = default_domain_config()
        cfg["vertices"][0]["contacts"] = ["heel_r", "toe_r"]
        with pytest.raises(ConfigError):
            build_gamma(cfg)


class TestBezier:
    def test_endpoint_interpolation(self):
        c = BezierCurve((0.3, 0.9, -0.2, 0.4, 1.1, 0.7))
        assert abs(c(0.0) - 0.3) <= 1e-15
        assert abs(c(1.0) - 0.7) <= 1e-15

    def test_constant_curve(self):
        c = BezierCurve((0.5,) * 6)
        for s in np.linspace(0, 1, 7):
            assert abs(c(s) - 0.5) <= 1e-15
            assert abs(c.deriv(s)) <= 1e-15

    def test_derivative_matches_finite_differences(self, rng):
        coef = tuple(rng.uniform(-1, 1, 6))
        s, h = 0.37, 1e-7
        fd = (bezier_eval(coef, s + h) - bezier_eval(coef, s - h)) / (2 * h)
        assert abs(fd - bezier_deriv(coef, s)) < 1e-7
        fd2 = (bezier_deriv(coef, s + h) - bezier_deriv(coef, s - h)) / (2 * h)
        assert abs(fd2 - bezier_deriv(coef, s, order=2)) < 1e-6

    def test_convex_hull_property(self, rng):
        coef = tuple(rng.uniform(-2, 2, 6))
        for s in np.linspace(0, 1, 21):
            v = bezier_eval(coef, s)
            assert min(coef) - 1e-12 <= v <= max(coef) + 1e-12


def mkout(vid="ss2_r", v_hip=0.9, delta_plus=0.0, duration=0.3, joints=()):
    return OutputSet(vertex_id=vid, v_hip=v_hip, delta_plus=delta_plus,
                     duration=duration,
                     alpha={j: BezierCurve((0.1, 0.2, 0.3, 0.2, 0.1, 0.0))
                            for j in joints})


class TestPhase:
    def test_tau_zero_at_entry(self):
        out = mkout(delta_plus=0.12)
        assert tau(0.12, out) == 0.0

    def test_phase_normalization(self):
        out = mkout(v_hip=0.9, duration=0.3, delta_plus=0.0)
        # hip advanced v_hip * duration -> phase 1
        assert abs(domain_phase(0.27, out) - 1.0) <= 1e-12
        assert abs(domain_phase(0.135, out) - 0.5) <= 1e-12

    def test_phase_clamping(self):
        out = mkout()
        assert domain_phase(-1.0, out) == 0.0
        assert domain_phase(10.0, out) == 1.0
        assert domain_phase(10.0, out, clamp=False) > 1.0

    def test_invalid_outputs_rejected(self):
        with pytest.raises(ConfigError):
            mkout(v_hip=-1.0)
        with pytest.raises(ConfigError):
            mkout(duration=0.0)


class TestOutputsEval:
    def test_y2_is_tracking_error(self, model, gamma):
        d = gamma.vertex("ss2_r")
        out = mkout(joints=d.y2_joints)
        q = model.standing_pose("r")
        dq = np.zeros(NQ)
        y1, y2, dy2 = outputs_eval(model, d, out, q, dq)
        s = domain_phase(model.delta_p_hip(q, "r"), out)
        for i, j in enumerate(d.y2_joints):
            assert abs(y2[i] - (q[Q_INDEX[j]] - out.alpha[j](s))) <= 1e-12

    def test_y1_is_speed_error(self, model, gamma):
        d = gamma.vertex("ss2_r")
        out = mkout(joints=d.y2_joints)
        q = model.standing_pose("r")
        dq = np.zeros(NQ)
        y1, *_ = outputs_eval(model, d, out, q, dq)
        assert abs(y1 - (0.0 - out.v_hip)) <= 1e-12

    def test_no_y1_for_toe_pivot(self, model, gamma):
        d = gamma.vertex("ss1_r")
        out = mkout(vid="ss1_r", joints=d.y2_joints)
        y1, *_ = outputs_eval(model, d, out, model.standing_pose("r"),
                              np.zeros(NQ))
        assert y1 is None


class TestGuards:
    def test_touchdown_guard_is_point_height(self, model, gamma):
        e = gamma.edge(8)   # ss1_l -> ds2_r, watches heel_r
        assert e.guard_kind == "touchdown"
        q = model.standing_pose("r")
        q[1] += 0.05
        g = guard_eval(model, e, q)
        assert abs(g - model.point_positions(q)[e.guard_point][1]) <= 1e-12

    def test_liftoff_guard_reads_wrench(self, model, gamma):
        e = gamma.edge_from("ss2_r")   # liftoff of heel_r
        assert e.guard_kind == "liftoff"
        g = guard_eval(model, e, model.standing_pose("r"),
                       wrench={e.guard_point: (1.0, 123.0)})
        assert g == 123.0

    def test_liftoff_guard_requires_wrench(self, model, gamma):
        e = gamma.edge_from("ss2_r")
        with pytest.raises(InputError):
            guard_eval(model, e, model.standing_pose("r"))


class TestInvarianceResidual:
    def _outputs_from_state(self, model, gamma, q, dq):
        """Output sets that the post-impact state satisfies exactly."""
        outs = {}
        for d in gamma.vertices:
            delta = model.delta_p_hip(q, d.stance)
            curves = {}
            dq_post = model.impact_map(q, dq, d.contacts)
            for j in d.y2_joints:
                # constant curve pinned to the actual joint angle makes
                # y2 = 0; dy2 = dq_j stays nonzero unless dq_post is zero
                curves[j] = BezierCurve((q[Q_INDEX[j]],) * 6)
            vh = model.delta_p_hip_dot(q, dq_post, d.stance)
            outs[d.vertex_id] = OutputSet(
                vertex_id=d.vertex_id, v_hip=vh if vh > 0 else 0.9,
                delta_plus=delta, duration=0.3, alpha=curves)
        return outs

    def test_zero_velocity_post_impact_satisfies_pinned_outputs(
            self, model, gamma):
        # heel strike from rest: post-impact dq stays zero, so constant
        # desired outputs pinned at q give zero y2/dy2 residuals
        e = gamma.edge(8)   # ss1_l -> ds2_r impact
        q = model.standing_pose("r")
        dq = np.zeros(NQ)
        outs = self._outputs_from_state(model, gamma, q, dq)
        r = invariance_residual(model, gamma, e, q, dq, outs)
        # y1 row (speed regulation) is included for PZ->Z; it cannot be
        # zero at rest, so exclude it
        tgt = gamma.vertex(e.target)
        n_y2 = len(tgt.y2_joints)
        assert np.max(np.abs(r[:2 * n_y2])) < 1e-10

    def test_touchdown_requires_point_on_ground(self, model, gamma):
        e = gamma.edge(8)
        q = model.standing_pose("r")
        q[1] += 0.2   # heel well above ground
        outs = self._outputs_from_state(model, gamma, q, np.zeros(NQ))
        with pytest.raises(InputError):
            invariance_residual(model, gamma, e, q, np.zeros(NQ), outs)

    def test_landing_edges_drop_velocity_row(self, model, gamma):
        q = model.standing_pose("r")
        outs = self._outputs_from_state(model, gamma, q, np.zeros(NQ))
        for eid, expect_extra in ((3, 0), (4, 1)):
            e = gamma.edge(eid)
            tgt = gamma.vertex(e.target)
            r = invariance_residual(model, gamma, e, q, np.zeros(NQ), outs)
            assert len(r) == 2 * len(tgt.y2_joints) + expect_extra
