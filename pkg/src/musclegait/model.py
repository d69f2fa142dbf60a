"""Planar 7-link floating-base human-prosthesis rigid-body model.

Coordinates (n = 9):

    q = (p_x, p_z, th_torso, hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r)

``p`` is the pelvis (hip) point, torso angle is absolute (0 = upright,
positive = forward lean).  Joint angle conventions match the muscle
module: hip positive = extension, knee positive = flexion, ankle
positive = plantarflexion.  The left leg is the canonical intact
(7-muscle) leg; the right shank/foot carry the prosthesis parameters.

All dynamics quantities are produced by automatic differentiation of the
closed-form Lagrangian, so every derivative used by the optimization is
exact.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import InputError, RankDeficiencyError

jax.config.update("jax_enable_x64", True)

__all__ = [
    "LinkParams",
    "FootParams",
    "ModelParams",
    "PlanarBiped",
    "Q_NAMES",
    "JOINT_NAMES",
    "ACTUATED",
    "CONTACT_POINTS",
    "contact_rows",
    "default_model_params",
]

Q_NAMES = ("px", "pz", "torso",
           "hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r")
JOINT_NAMES = Q_NAMES[3:]
ACTUATED = JOINT_NAMES            # all six joints carry an actuator
CONTACT_POINTS = ("heel_l", "toe_l", "heel_r", "toe_r")

NQ = 9
NU = 6

Q_INDEX = {name: i for i, name in enumerate(Q_NAMES)}


@dataclass(frozen=True)
class LinkParams:
    mass: float     # [kg]
    length: float   # proximal-to-distal joint distance [m]
    com: float      # COM distance from proximal joint [m]
    inertia: float  # rotational inertia about COM [kg m^2]

    def __post_init__(self):
        if min(self.mass, self.length, self.inertia) <= 0:
            raise InputError("link mass, length, inertia must be positive")


@dataclass(frozen=True)
class FootParams:
    mass: float
    inertia: float
    l_heel: float    # heel distance behind the ankle [m]
    l_toe: float     # toe distance ahead of the ankle [m]
    h_ankle: float   # ankle height above the sole [m]
    com_x: float     # COM offset in the foot frame, forward positive
    com_z: float     # COM offset below the ankle (positive down)

    def __post_init__(self):
        if min(self.mass, self.inertia, self.l_heel, self.l_toe,
               self.h_ankle) <= 0:
            raise InputError("foot parameters must be positive")


@dataclass(frozen=True)
class ModelParams:
    """Asymmetric link table: right shank/foot belong to the prosthesis."""

    torso: LinkParams
    thigh_l: LinkParams
    shank_l: LinkParams
    foot_l: FootParams
    thigh_r: LinkParams
    shank_r: LinkParams
    foot_r: FootParams
    g: float = 9.81
    mu: float = 0.6

    def leg(self, side: str):
        if side == "l":
            return self.thigh_l, self.shank_l, self.foot_l
        if side == "r":
            return self.thigh_r, self.shank_r, self.foot_r
        raise InputError(f"unknown side {side!r}")

    @property
    def total_mass(self) -> float:
        return (self.torso.mass + self.thigh_l.mass + self.shank_l.mass
                + self.foot_l.mass + self.thigh_r.mass + self.shank_r.mass
                + self.foot_r.mass)


def default_model_params() -> ModelParams:
    """Plausible anthropomorphic defaults (~62 kg subject + 2.8 kg device)."""
    return ModelParams(
        torso=LinkParams(mass=42.0, length=0.60, com=0.28, inertia=2.3),
        thigh_l=LinkParams(mass=7.5, length=0.42, com=0.18, inertia=0.13),
        shank_l=LinkParams(mass=3.5, length=0.43, com=0.19, inertia=0.055),
        foot_l=FootParams(mass=1.0, inertia=0.007, l_heel=0.06, l_toe=0.16,
                          h_ankle=0.07, com_x=0.04, com_z=0.04),
        thigh_r=LinkParams(mass=7.5, length=0.42, com=0.18, inertia=0.13),
        # prosthetic shank/foot: lighter shank, knee sits lower is expressed
        # through a slightly shorter shank + taller foot ankle block
        shank_r=LinkParams(mass=2.4, length=0.40, com=0.22, inertia=0.045),
        foot_r=FootParams(mass=1.4, inertia=0.009, l_heel=0.05, l_toe=0.15,
                          h_ankle=0.10, com_x=0.03, com_z=0.05),
        g=9.81,
        mu=0.6,
    )


def contact_rows(contacts: Sequence[str]) -> list[tuple[str, str]]:
    """Constraint-row plan for an ordered contact set.

    A foot with both heel and toe active is a flat foot: one position
    pair at the heel plus one orientation row (adding the toe's own
    position rows would be rank deficient on a rigid foot).
    """
    if not contacts:
        raise InputError("contact set must be nonempty")
    for p in contacts:
        if p not in CONTACT_POINTS:
            raise InputError(f"unknown contact point {p!r}")
    rows: list[tuple[str, str]] = []
    done = set()
    for p in contacts:
        if p in done:
            continue
        side = p[-1]
        mate = ("toe_" + side) if p.startswith("heel") else ("heel_" + side)
        if mate in contacts:
            rows.append(("pos", "heel_" + side))
            rows.append(("ori", "foot_" + side))
            done.update({p, mate})
        else:
            rows.append(("pos", p))
            done.add(p)
    return rows


def _n_rows(contacts: Sequence[str]) -> int:
    return sum(2 if kind == "pos" else 1 for kind, _ in contact_rows(contacts))


class PlanarBiped:
    """Dynamics, contacts, impacts and task kinematics for fixed parameters.

    All public evaluation methods accept and return numpy arrays; the
    underlying jax callables are exposed for the optimizer via the
    ``fn_*`` attributes and are pure and jit-compiled.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self._build()

    # -- kinematic chain ---------------------------------------------------

    def _fk_all(self, q):
        """Positions/angles of every body and contact point (jax)."""
        p = params = self.params
        px, pz, tt = q[0], q[1], q[2]
        hip = jnp.array([px, pz])

        def rot(a, v):
            c, s = jnp.cos(a), jnp.sin(a)
            return jnp.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])

        def down(a):
            return jnp.array([jnp.sin(a), -jnp.cos(a)])

        bodies = []   # (mass, inertia, com_xy, abs_angle)
        points = {}
        angles = {"torso": tt}

        torso_com = hip + p.torso.com * jnp.array([jnp.sin(tt), jnp.cos(tt)])
        bodies.append((p.torso.mass, p.torso.inertia, torso_com, tt))

        for side, joff in (("l", 3), ("r", 6)):
            thigh, shank, foot = params.leg(side)
            th_hip, th_knee, th_ank = q[joff], q[joff + 1], q[joff + 2]
            phi_th = tt - th_hip
            phi_sh = phi_th - th_knee
            phi_ft = phi_sh - th_ank
            knee = hip + thigh.length * down(phi_th)
            ankle = knee + shank.length * down(phi_sh)
            heel = ankle + rot(phi_ft, jnp.array([-foot.l_heel, -foot.h_ankle]))
            toe = ankle + rot(phi_ft, jnp.array([foot.l_toe, -foot.h_ankle]))
            foot_com = ankle + rot(phi_ft, jnp.array([foot.com_x, -foot.com_z]))
            bodies.append((thigh.mass, thigh.inertia,
                           hip + thigh.com * down(phi_th), phi_th))
            bodies.append((shank.mass, shank.inertia,
                           knee + shank.com * down(phi_sh), phi_sh))
            bodies.append((foot.mass, foot.inertia, foot_com, phi_ft))
            points["knee_" + side] = knee
            points["ankle_" + side] = ankle
            points["heel_" + side] = heel
            points["toe_" + side] = toe
            angles["thigh_" + side] = phi_th
            angles["shank_" + side] = phi_sh
            angles["foot_" + side] = phi_ft
        points["hip"] = hip
        points["torso_com"] = torso_com
        return bodies, points, angles

    def _com_state(self, q):
        bodies, _, _ = self._fk_all(q)
        pos = jnp.stack([b[2] for b in bodies])          # (7, 2)
        ang = jnp.stack([b[3] for b in bodies])          # (7,)
        return pos, ang

    # -- energies and EOM --------------------------------------------------

    def _kinetic(self, q, dq):
        (pos, ang), (vel, omg) = jax.jvp(self._com_state, (q,), (dq,))
        m = self._masses
        I = self._inertias
        return 0.5 * jnp.sum(m * jnp.sum(vel ** 2, axis=1)) \
            + 0.5 * jnp.sum(I * omg ** 2)

    def _potential(self, q):
        pos, _ = self._com_state(q)
        return self.params.g * jnp.sum(self._masses * pos[:, 1])

    def _lagrangian(self, q, dq):
        return self._kinetic(q, dq) - self._potential(q)

    def _eom_lhs(self, q, dq, ddq):
        """D(q) ddq + C(q,dq) dq + G(q), by differentiating the Lagrangian."""
        dL_ddq = jax.grad(self._lagrangian, argnums=1)
        _, dt_term = jax.jvp(lambda qq, dd: dL_ddq(qq, dd),
                             (q, dq), (dq, ddq))
        return dt_term - jax.grad(self._lagrangian, argnums=0)(q, dq)

    # -- contacts ----------------------------------------------------------

    def _row_values(self, q, rows):
        """Stack of constrained quantities (positions/angles) for rows."""
        _, points, angles = self._fk_all(q)
        vals = []
        for kind, name in rows:
            if kind == "pos":
                vals.append(points[name][0])
                vals.append(points[name][1])
            else:
                vals.append(angles[name])
        return jnp.stack(vals)

    def _build(self):
        p = self.params
        self._masses = jnp.array([
            p.torso.mass,
            p.thigh_l.mass, p.shank_l.mass, p.foot_l.mass,
            p.thigh_r.mass, p.shank_r.mass, p.foot_r.mass,
        ])
        self._inertias = jnp.array([
            p.torso.inertia,
            p.thigh_l.inertia, p.shank_l.inertia, p.foot_l.inertia,
            p.thigh_r.inertia, p.shank_r.inertia, p.foot_r.inertia,
        ])
        B = np.zeros((NQ, NU))
        B[3:, :] = np.eye(NU)
        self.B = B
        self._B = jnp.array(B)

        # jitted core callables (jax level, reusable by the optimizer)
        self.fn_mass_matrix = jax.jit(
            lambda q: jax.hessian(self._kinetic, argnums=1)(q, jnp.zeros(NQ)))
        self.fn_bias = jax.jit(
            lambda q, dq: self._eom_lhs(q, dq, jnp.zeros(NQ)))
        self.fn_eom_lhs = jax.jit(self._eom_lhs)
        self.fn_kinetic = jax.jit(self._kinetic)
        self.fn_potential = jax.jit(self._potential)
        self.fn_energy = jax.jit(
            lambda q, dq: self._kinetic(q, dq) + self._potential(q))
        self._fn_points = jax.jit(lambda q: self._fk_all(q)[1])
        self._fn_angles = jax.jit(lambda q: self._fk_all(q)[2])
        self._jac_cache: dict = {}

    def contact_fns(self, contacts: Sequence[str]):
        """(value, jacobian, jdot_dq) jax callables for a contact set."""
        key = tuple(contacts)
        if key not in self._jac_cache:
            rows = contact_rows(contacts)
            cval = lambda q: self._row_values(q, rows)
            cjac = jax.jacfwd(cval)

            def jdot_dq(q, dq):
                # d/dt (J(q) dq) holding dq: (dJ/dq dq) dq
                _, out = jax.jvp(lambda qq: cjac(qq) @ dq, (q,), (dq,))
                return out

            self._jac_cache[key] = (jax.jit(cval), jax.jit(cjac),
                                    jax.jit(jdot_dq), rows)
        return self._jac_cache[key][:3]

    # -- public numpy-facing API --------------------------------------------

    def mass_matrix(self, q) -> np.ndarray:
        return np.asarray(self.fn_mass_matrix(jnp.asarray(q)))

    def coriolis_gravity(self, q, dq) -> np.ndarray:
        return np.asarray(self.fn_bias(jnp.asarray(q), jnp.asarray(dq)))

    def energy(self, q, dq) -> float:
        return float(self.fn_energy(jnp.asarray(q), jnp.asarray(dq)))

    def point_positions(self, q) -> dict[str, np.ndarray]:
        pts = self._fn_points(jnp.asarray(q))
        return {k: np.asarray(v) for k, v in pts.items()}

    def link_angles(self, q) -> dict[str, float]:
        ang = self._fn_angles(jnp.asarray(q))
        return {k: float(v) for k, v in ang.items()}

    def contact_jacobian(self, q, contacts) -> np.ndarray:
        _, cjac, _ = self.contact_fns(contacts)
        return np.asarray(cjac(jnp.asarray(q)))

    def constrained_dynamics(self, q, dq, contacts, u,
                             jax_mode: bool = False):
        """Accelerations and contact multipliers under holonomic contacts.

        Solves  D ddq + H = B u + J^T lam  together with
        J ddq + (dJ/dt) dq = 0.  Returns ``(ddq, lam)``.
        """
        q = jnp.asarray(q)
        dq = jnp.asarray(dq)
        u = jnp.asarray(u)
        cval, cjac, jdotdq = self.contact_fns(contacts)
        D = self.fn_mass_matrix(q)
        H = self.fn_bias(q, dq)
        J = cjac(q)
        m = J.shape[0]
        KKT = jnp.block([[D, -J.T], [J, jnp.zeros((m, m))]])
        rhs = jnp.concatenate([self._B @ u - H, -jdotdq(q, dq)])
        sol = jnp.linalg.solve(KKT, rhs)
        if jax_mode:
            return sol[:NQ], sol[NQ:]
        ddq = np.asarray(sol[:NQ])
        lam = np.asarray(sol[NQ:])
        if not np.all(np.isfinite(ddq)) or not np.all(np.isfinite(lam)):
            raise RankDeficiencyError("singular contact-constrained system")
        resid = np.asarray(J @ sol[:NQ] + jdotdq(q, dq))
        if np.linalg.norm(resid) > 1e-6 * max(1.0, float(jnp.linalg.norm(rhs))):
            raise RankDeficiencyError("contact constraint solve inaccurate")
        return ddq, lam

    def impact_map(self, q, dq_pre, new_contacts, jax_mode: bool = False):
        """Plastic impact: project dq onto the new contact's motion space."""
        q = jnp.asarray(q)
        dq_pre = jnp.asarray(dq_pre)
        _, cjac, _ = self.contact_fns(new_contacts)
        D = self.fn_mass_matrix(q)
        J = cjac(q)
        DiJt = jnp.linalg.solve(D, J.T)
        A = J @ DiJt
        dq_post = dq_pre - DiJt @ jnp.linalg.solve(A, J @ dq_pre)
        if jax_mode:
            return dq_post
        out = np.asarray(dq_post)
        if not np.all(np.isfinite(out)):
            raise RankDeficiencyError("degenerate impact: J D^-1 J^T singular")
        return out

    # -- contact wrench bookkeeping -----------------------------------------

    def point_wrenches(self, q, contacts, lam) -> dict[str, tuple[float, float]]:
        """Per-point (tangential, normal) forces from row multipliers.

        Flat-foot rows (heel force + orientation couple) are converted to
        equivalent heel/toe vertical forces; the tangential force is
        reported at the heel.
        """
        rows = contact_rows(contacts)
        pts = self.point_positions(q)
        out: dict[str, tuple[float, float]] = {}
        i = 0
        k = 0
        while k < len(rows):
            kind, name = rows[k]
            if kind == "pos" and k + 1 < len(rows) and rows[k + 1][0] == "ori":
                side = name[-1]
                foot = self.params.leg(side)[2]
                d = foot.l_heel + foot.l_toe
                fx, fz, m = float(lam[i]), float(lam[i + 1]), float(lam[i + 2])
                n_toe = m / d
                out["heel_" + side] = (fx, fz - n_toe)
                out["toe_" + side] = (0.0, n_toe)
                i += 3
                k += 2
            else:
                fx, fz = float(lam[i]), float(lam[i + 1])
                out[name] = (fx, fz)
                i += 2
                k += 1
        return out

    # -- task kinematics ------------------------------------------------------

    def delta_p_hip(self, q, stance: str, jax_mode: bool = False):
        """Linearized forward hip position over the stance leg.

        Sum of segment projections with sin(angle) ~ angle:
        ``-(L_thigh * phi_thigh + L_shank * phi_shank)`` of the stance
        side, which increases monotonically as the hip passes over the
        stance foot.
        """
        thigh, shank, _ = self.params.leg(stance)
        tt = q[2]
        joff = 3 if stance == "l" else 6
        phi_th = tt - q[joff]
        phi_sh = phi_th - q[joff + 1]
        val = -(thigh.length * phi_th + shank.length * phi_sh)
        return val if jax_mode else float(val)

    def delta_p_hip_dot(self, q, dq, stance: str, jax_mode: bool = False):
        thigh, shank, _ = self.params.leg(stance)
        joff = 3 if stance == "l" else 6
        dphi_th = dq[2] - dq[joff]
        dphi_sh = dphi_th - dq[joff + 1]
        val = -(thigh.length * dphi_th + shank.length * dphi_sh)
        return val if jax_mode else float(val)

    def kinematics(self, q, dq) -> dict:
        """Task quantities: hip pose/velocity, contact-point states."""
        q = jnp.asarray(q)
        dq = jnp.asarray(dq)
        pts, vels = jax.jvp(self._fn_points, (q,), (dq,))
        out = {
            "hip_pos": np.asarray(pts["hip"]),
            "hip_vel": np.asarray(vels["hip"]),
            "delta_p_hip_l": self.delta_p_hip(q, "l"),
            "delta_p_hip_r": self.delta_p_hip(q, "r"),
        }
        for name in CONTACT_POINTS:
            out[name + "_pos"] = np.asarray(pts[name])
            out[name + "_vel"] = np.asarray(vels[name])
        return out

    def standing_pose(self, stance: str = "r") -> np.ndarray:
        """Upright zero-joint-angle configuration with stance sole on the ground."""
        _, shank, foot = self.params.leg(stance)
        thigh = self.params.leg(stance)[0]
        q = np.zeros(NQ)
        q[1] = thigh.length + shank.length + foot.h_ankle
        return q
