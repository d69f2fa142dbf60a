"""Rigid-body dynamics: energy, mass matrix, contacts, impact map."""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from musclegait.errors import InputError
from musclegait.model import (CONTACT_POINTS, NQ, NU, Q_INDEX, contact_rows,
                              default_model_params)


def random_q(rng, n=1):
    q = rng.uniform(-0.8, 0.8, size=(n, NQ))
    q[:, 0] = rng.uniform(-1.0, 1.0, n)
    q[:, 1] = rng.uniform(0.6, 1.1, n)
    return q


class TestStructure:
    def test_total_mass(self, model):
        assert abs(model.params.total_mass - 65.3) < 1e-9

    def test_standing_pose_feet_on_ground(self, model):
        for st in ("l", "r"):
            q = model.standing_pose(st)
            pts = model.point_positions(q)
            for p in ("heel_" + st, "toe_" + st):
                assert abs(pts[p][1]) < 1e-12

    def test_contact_row_plan(self):
        # a flat foot is one heel position pair plus an orientation row
        assert contact_rows(["heel_r", "toe_r"]) == [
            ("pos", "heel_r"), ("ori", "foot_r")]
        assert contact_rows(["heel_r"]) == [("pos", "heel_r")]
        assert contact_rows(["heel_r", "toe_r", "toe_l"]) == [
            ("pos", "heel_r"), ("ori", "foot_r"), ("pos", "toe_l")]

    def test_contact_rows_rejects_garbage(self):
        with pytest.raises(InputError):
            contact_rows([])
        with pytest.raises(InputError):
            contact_rows(["elbow"])


class TestMassMatrix:
    def test_symmetric_positive_definite(self, model, rng):
        for q in random_q(rng, 100):
            D = model.mass_matrix(q)
            assert np.allclose(D, D.T, atol=1e-9)
            assert np.linalg.eigvalsh(D).min() > 0.0

    def test_translation_block_is_total_mass(self, model, rng):
        # px, pz are inertial translations: D[0,0] = D[1,1] = total mass
        for q in random_q(rng, 10):
            D = model.mass_matrix(q)
            assert abs(D[0, 0] - model.params.total_mass) < 1e-9
            assert abs(D[1, 1] - model.params.total_mass) < 1e-9


class TestEnergy:
    def test_free_fall_conserves_energy(self, model, rng):
        q0 = model.standing_pose()
        q0[1] = 1.5
        dq0 = rng.uniform(-0.5, 0.5, NQ)

        def rhs(t, s):
            q, dq = s[:NQ], s[NQ:]
            D = model.mass_matrix(q)
            H = model.coriolis_gravity(q, dq)
            return np.concatenate([dq, np.linalg.solve(D, -H)])

        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([q0, dq0]),
                        rtol=1e-10, atol=1e-12, dense_output=False)
        e0 = model.energy(q0, dq0)
        e1 = model.energy(sol.y[:NQ, -1], sol.y[NQ:, -1])
        assert abs(e1 - e0) / max(abs(e0), 1.0) < 1e-6

    def test_bias_is_even_in_velocity(self, model, rng):
        # the velocity-dependent part is quadratic: h(q, dq) = h(q, -dq)
        for q in random_q(rng, 5):
            dq = rng.uniform(-1, 1, NQ)
            hp = model.coriolis_gravity(q, dq)
            hm = model.coriolis_gravity(q, -dq)
            assert np.allclose(hp, hm, atol=1e-8)

    def test_bias_at_rest_is_gravity_gradient(self, model, rng):
        # at dq = 0 only gravity remains; it must be the gradient of the
        # potential energy (checked by central differences)
        q = random_q(rng)[0]
        h0 = model.coriolis_gravity(q, np.zeros(NQ))
        eps = 1e-6
        for k in range(NQ):
            e = np.zeros(NQ)
            e[k] = eps
            # energy at zero velocity is pure potential
            fd = (model.energy(q + e, np.zeros(NQ))
                  - model.energy(q - e, np.zeros(NQ))) / (2 * eps)
            assert abs(fd - h0[k]) < 1e-5 * max(1.0, abs(h0[k]))


class TestConstrainedDynamics:
    def test_contact_acceleration_zeroed(self, model, rng):
        q = model.standing_pose("r")
        dq = np.zeros(NQ)
        u = rng.uniform(-20, 20, NU)
        contacts = ["heel_r", "toe_r"]
        ddq, lam = model.constrained_dynamics(q, dq, contacts, u)
        _, cjac, jdotdq = model.contact_fns(contacts)
        resid = np.asarray(cjac(q)) @ ddq
        assert np.max(np.abs(resid)) < 1e-8

    def test_total_normal_matches_vertical_newton(self, model):
        # the pz coordinate is an inertial translation, so the total
        # vertical contact force must equal m(g + z_com_ddot); the
        # vertical EOM row gives m*z_com_ddot as (D ddq)[1] at rest
        q = model.standing_pose("r")
        ddq, lam = model.constrained_dynamics(
            q, np.zeros(NQ), ["heel_r", "toe_r"], np.zeros(NU))
        w = model.point_wrenches(q, ["heel_r", "toe_r"], lam)
        total_n = w["heel_r"][1] + w["toe_r"][1]
        mg = model.params.total_mass * model.params.g
        expected = (model.mass_matrix(q) @ ddq)[1] + mg
        assert abs(total_n - expected) < 1e-6 * mg

    def test_wrench_decomposition_sums_to_row_forces(self, model, rng):
        q = model.standing_pose("l")
        lam = rng.uniform(-50, 200, 3)
        w = model.point_wrenches(q, ["heel_l", "toe_l"], lam)
        assert abs(w["heel_l"][1] + w["toe_l"][1] - lam[1]) < 1e-12
        assert abs(w["heel_l"][0] - lam[0]) < 1e-12


class TestImpactMap:
    def test_projection_property(self, model, rng):
        # applying the impact map twice equals applying it once
        for q in random_q(rng, 50):
            dq = rng.uniform(-2, 2, NQ)
            contacts = ["heel_r"]
            dq1 = model.impact_map(q, dq, contacts)
            dq2 = model.impact_map(q, dq1, contacts)
            assert np.max(np.abs(dq2 - dq1)) < 1e-9

    def test_post_impact_contact_velocity_zero(self, model, rng):
        for q in random_q(rng, 50):
            dq = rng.uniform(-2, 2, NQ)
            contacts = ["heel_l", "toe_l"]
            dq_post = model.impact_map(q, dq, contacts)
            _, cjac, _ = model.contact_fns(contacts)
            assert np.max(np.abs(np.asarray(cjac(q)) @ dq_post)) < 1e-9

    def test_kinetic_energy_never_increases(self, model, rng):
        for q in random_q(rng, 100):
            dq = rng.uniform(-2, 2, NQ)
            dq_post = model.impact_map(q, dq, ["heel_r"])
            D = model.mass_matrix(q)
            ke_pre = 0.5 * dq @ D @ dq
            ke_post = 0.5 * dq_post @ D @ dq_post
            assert ke_post <= ke_pre + 1e-9

    def test_momentum_conserved_orthogonal_to_impulse(self, model, rng):
        # D (dq+ - dq-) lies in the row space of J^T
        q = random_q(rng)[0]
        dq = rng.uniform(-2, 2, NQ)
        contacts = ["heel_r"]
        dq_post = model.impact_map(q, dq, contacts)
        D = model.mass_matrix(q)
        J = model.contact_jacobian(q, contacts)
        dp = D @ (dq_post - dq)
        # residual after projecting onto span(J^T) must vanish
        coef, *_ = np.linalg.lstsq(J.T, dp, rcond=None)
        assert np.max(np.abs(J.T @ coef - dp)) < 1e-8


class TestTaskKinematics:
    def test_delta_p_hip_zero_upright(self, model):
        q = model.standing_pose("r")
        assert abs(model.delta_p_hip(q, "r")) < 1e-12

    def test_delta_p_hip_dot_is_time_derivative(self, model, rng):
        q = random_q(rng)[0]
        dq = rng.uniform(-1, 1, NQ)
        h = 1e-7
        fd = (model.delta_p_hip(q + h * dq, "l")
              - model.delta_p_hip(q - h * dq, "l")) / (2 * h)
        assert abs(fd - model.delta_p_hip_dot(q, dq, "l")) < 1e-7

    def test_point_velocity_consistent_with_fd(self, model, rng):
        q = random_q(rng)[0]
        dq = rng.uniform(-1, 1, NQ)
        h = 1e-7
        kin = model.kinematics(q, dq)
        pp = model.point_positions(q + h * dq)
        pm = model.point_positions(q - h * dq)
        for name in CONTACT_POINTS:
            fd = (pp[name] - pm[name]) / (2 * h)
            assert np.max(np.abs(fd - kin[name + "_vel"])) < 1e-6
