"""Direct-collocation transcription of the gait-generation problem.

Decision variables: per collocation point q, dq, ddq, u, contact
forces, and (when enabled) per-muscle (l_ce, v_ce, s, F); per domain a
duration and Bezier coefficients for every position-level output; per
impact edge an impulse; globally the hip-speed parameter, the positive
actuator work, and the transport-cost value itself.  The cost is made
linear by an aggregation row tying the cost variable to work/distance.

Row-tag conventions (used by the audit tooling):
  C1  rigid-body dynamics            C1c contact accelerations
  C2  output rows at domain entry (impact/transition invariance)
  VC  output rows elsewhere          Y1  velocity-output rows
  DEF collocation defects            ANC domain-entry contact anchors
  GRD guard equalities               RST reset/continuity rows
  C5/C6 muscle force rows, C8 fiber-length dynamics (incl. continuity
  across edges), C9..C12 joint-torque maps; FR friction cones, CLR
  clearance, PH phase monotonicity, W work aggregation, TUN tuned pack.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from .elements import Assembly, Family
from .errors import ConfigError
from .hybrid import DirectedCycle, DomainSpec, bezier_eval
from .model import NQ, NU, JOINT_NAMES, Q_INDEX, PlanarBiped, contact_rows
from .muscle import (MUSCLE_ORDER, TORQUE_TABLE, MuscleAttachment,
                     MuscleParams, fit_smooth_curves)
from .solver import IpProblem

__all__ = ["VariantConfig", "GaitNlp", "transcribe", "initial_guess",
           "GaitSolution", "FIT_DEGREE", "SOFTPLUS_BETA"]

INF = 1e20
FIT_DEGREE = 9          # smooth-surrogate polynomial degree
SOFTPLUS_BETA = 50.0    # sharpness of the positive-power smoothing
MIN_DISTANCE = 0.15     # minimum forward progress per cycle [m]


@dataclass(frozen=True)
class VariantConfig:
    name: str
    muscles_enabled: bool
    tuned: bool


def variant_from_config(opt: dict, name: str) -> VariantConfig:
    try:
        v = opt["variants"][name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}")
    return VariantConfig(name=name, muscles_enabled=bool(v["muscles_enabled"]),
                         tuned=bool(v["tuned"]))


# ---------------------------------------------------------------------------
# jax helpers shared by several families


def _poly_clamped(coef, lo, hi, x):
    """Polynomial on [lo, hi] with C1 linear continuation outside."""
    xc = jnp.clip(x, lo, hi)
    t = (2.0 * xc - lo - hi) / (hi - lo)
    val = jnp.polyval(coef[::-1], t)
    dcoef = coef[1:] * jnp.arange(1, coef.shape[0])
    slope = jnp.polyval(dcoef[::-1], t) * 2.0 / (hi - lo)
    return val + slope * (x - xc)


def _force_length(l_ce, l_opt, w, c):
    r = jnp.abs((l_ce - l_opt) / (l_opt * w))
    return jnp.exp(jnp.log(c) * r ** 3)


def _delta_l(flag, sgn, r0, th_ref, th_max, rho, th):
    lin = r0 * (th - th_ref)
    cos = r0 * (jnp.sin(th - th_max) - jnp.sin(th_ref - th_max))
    return sgn * rho * jnp.where(flag > 0.5, lin, cos)


def _lever(flag, r0, th_max, th):
    return jnp.where(flag > 0.5, r0, r0 * jnp.cos(th - th_max))


def _softplus(x):
    return jax.nn.softplus(SOFTPLUS_BETA * x) / SOFTPLUS_BETA


def _delta_of(lth, lsh, tt, th, tk):
    """Linearized forward hip position over the stance leg."""
    return -(lth * (tt - th) + lsh * (tt - th - tk))


# ---------------------------------------------------------------------------
# layout


class GaitLayout:
    """Flat decision-vector index map."""

    def __init__(self, gamma: DirectedCycle, model: PlanarBiped,
                 opt: dict, variant: VariantConfig):
        self.gamma = gamma
        self.variant = variant
        self.N = int(opt["nodes_per_domain"])
        if self.N < 3:
            raise ConfigError("nodes_per_domain must be >= 3")
        self.scheme = opt.get("collocation", "hermite-simpson")
        if self.scheme not in ("hermite-simpson", "trapezoid"):
            raise ConfigError(f"unknown collocation scheme {self.scheme!r}")
        self.P = 2 * self.N - 1 if self.scheme == "hermite-simpson" else self.N
        self.n_mus = len(MUSCLE_ORDER) if variant.muscles_enabled else 0

        self.domains = list(gamma.vertices)
        self.edges = list(gamma.edges)
        self.m_rows = {d.vertex_id: len(self._expand(contact_rows(d.contacts)))
                       for d in self.domains}

        self.idx: dict = {}
        self.names: list[str] = []
        self._n = 0
        for d in self.domains:
            v = d.vertex_id
            for p in range(self.P):
                self._block(("q", v, p), NQ)
                self._block(("dq", v, p), NQ)
                self._block(("ddq", v, p), NQ)
                self._block(("u", v, p), NU)
                self._block(("lam", v, p), self.m_rows[v])
                if self.n_mus:
                    # per muscle: l_ce, v_ce, s, F
                    self._block(("mus", v, p), 4 * self.n_mus)
            self._block(("T", v), 1)
            for j in d.y2_joints:
                self._block(("alpha", v, j), 6)
            for k in range(self.N - 1):
                self._block(("Wseg", v, k), 1)
        for e in self.edges:
            if e.reset == "impact":
                self._block(("imp", e.edge_id), self.m_rows[e.target])
        self._block(("vhip",), 1)
        self._block(("W",), 1)
        self._block(("cot",), 1)
        self.n = self._n

    @staticmethod
    def _expand(rows):
        out = []
        for kind, name in rows:
            if kind == "pos":
                out.append(("pos_x", name))
                out.append(("pos_z", name))
            else:
                out.append(("ori", name))
        return out

    def _block(self, key, size):
        self.idx[key] = np.arange(self._n, self._n + size)
        self.names.extend(f"{'/'.join(map(str, key))}[{i}]"
                          for i in range(size))
        self._n += size

    def __call__(self, *key) -> np.ndarray:
        return self.idx[key]

    def mus(self, v: str, p: int, m: int) -> np.ndarray:
        """Indices of (l_ce, v_ce, s, F) for muscle m at point p."""
        return self.idx[("mus", v, p)][4 * m: 4 * m + 4]

    def interval_points(self, k: int) -> tuple[int, ...]:
        if self.scheme == "hermite-simpson":
            return (2 * k, 2 * k + 1, 2 * k + 2)
        return (k, k + 1)

    def phase(self, p: int) -> float:
        return p / (self.P - 1)


@dataclass
class GaitSolution:
    """Exported gait: parameters plus the full decision vector."""

    schema: str
    variant: str
    status: str
    iterations: int
    objective: float
    kkt_error: float
    v_hip: float
    durations: dict[str, float]
    alpha: dict[str, dict[str, list[float]]]
    delta_plus: dict[str, float]
    delta_minus: dict[str, float]
    x: list[float]
    options: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# transcription


class GaitNlp:
    """Assembled problem plus metadata needed for export and audits."""

    def __init__(self, model, gamma, layout, assembly, lb, ub, opt, variant,
                 muscles, fits):
        self.model = model
        self.gamma = gamma
        self.layout = layout
        self.assembly = assembly
        self.lb = lb
        self.ub = ub
        self.opt = opt
        self.variant = variant
        self.muscles = muscles
        self.fits = fits

    @property
    def n(self):
        return self.layout.n

    @property
    def m(self):
        return self.assembly.m

    def row_tags(self):
        return self.assembly.row_tags()

    def row_names(self):
        return self.assembly.row_names()

    def ip_problem(self) -> IpProblem:
        lay = self.layout
        cl, cu = self.assembly.bounds()
        grad = np.zeros(lay.n)
        grad[lay("cot")[0]] = 1.0

        return IpProblem(
            n=lay.n, lb=self.lb, ub=self.ub, cl=cl, cu=cu,
            objective=lambda x: float(x[lay("cot")[0]]),
            gradient=lambda x: grad,
            constraints=self.assembly.constraints,
            jacobian=self.assembly.jacobian,
            hessian=lambda x, lam, of: self.assembly.hessian(x, lam).tocsc(),
        )


def _stance_leg_lengths(model: PlanarBiped, stance: str):
    p = model.params
    thigh, shank, _ = p.leg(stance)
    return thigh.length, shank.length


def _stance_angle_idx(stance: str):
    off = 3 if stance == "l" else 6
    return np.array([Q_INDEX["torso"], off, off + 1])


def transcribe(model: PlanarBiped, gamma: DirectedCycle, opt: dict,
               variant: VariantConfig,
               muscles: dict[str, tuple[MuscleParams, MuscleAttachment]]
               | None = None) -> GaitNlp:
    """Build the sparse NLP for one experiment variant."""
    if variant.muscles_enabled:
        if muscles is None:
            raise ConfigError("variant requires a muscle set")
        missing = [m for m in MUSCLE_ORDER if m not in muscles]
        if missing:
            raise ConfigError(f"muscle set missing {missing}")
    lay = GaitLayout(gamma, model, opt, variant)
    asm = Assembly(lay.n)
    P, N = lay.P, lay.N
    hs = lay.scheme == "hermite-simpson"
    domains = lay.domains
    mg = model.params.total_mass * model.params.g

    fits = {}
    if variant.muscles_enabled:
        for mid in MUSCLE_ORDER:
            params, _ = muscles[mid]
            fits[mid] = fit_smooth_curves(params, degree=FIT_DEGREE)

    # ---- dynamics + contact accelerations, one family per domain ----------
    for d in domains:
        v = d.vertex_id
        m_v = lay.m_rows[v]
        cval, cjac, jdot = model.contact_fns(d.contacts)

        def dyn(w, c, m_v=m_v, cjac=cjac, jdot=jdot):
            q, dq, ddq = w[:9], w[9:18], w[18:27]
            u, lam = w[27:33], w[33:33 + m_v]
            J = cjac(q)
            r1 = model._eom_lhs(q, dq, ddq) - model._B @ u - J.T @ lam
            r2 = J @ ddq + jdot(q, dq)
            return jnp.concatenate([r1, r2])

        vidx = np.array([np.concatenate([
            lay("q", v, p), lay("dq", v, p), lay("ddq", v, p),
            lay("u", v, p), lay("lam", v, p)]) for p in range(P)])
        asm.add(Family(f"dyn_{v}", "C1", dyn, vidx, np.zeros((P, 0)), 9 + m_v))

    # ---- collocation defects ----------------------------------------------
    if hs:
        def defect(w, c):
            qk, dqk, ak = w[0:9], w[9:18], w[18:27]
            qm, dqm, am = w[27:36], w[36:45], w[45:54]
            q1, dq1, a1 = w[54:63], w[63:72], w[72:81]
            h = w[81] / (N - 1)
            r = [qm - 0.5 * (qk + q1) - h / 8.0 * (dqk - dq1),
                 dqm - 0.5 * (dqk + dq1) - h / 8.0 * (ak - a1),
                 q1 - qk - h / 6.0 * (dqk + 4.0 * dqm + dq1),
                 dq1 - dqk - h / 6.0 * (ak + 4.0 * am + a1)]
            return jnp.concatenate(r)
        out_dim = 36
    else:
        def defect(w, c):
            qk, dqk, ak = w[0:9], w[9:18], w[18:27]
            q1, dq1, a1 = w[27:36], w[36:45], w[45:54]
            h = w[54] / (N - 1)
            return jnp.concatenate([
                q1 - qk - 0.5 * h * (dqk + dq1),
                dq1 - dqk - 0.5 * h * (ak + a1)])
        out_dim = 18

    vrows = []
    for d in domains:
        v = d.vertex_id
        for k in range(N - 1):
            pts = lay.interval_points(k)
            cols = []
            for p in pts:
                cols += [lay("q", v, p), lay("dq", v, p), lay("ddq", v, p)]
            cols.append(lay("T", v))
            vrows.append(np.concatenate(cols))
    vidx = np.array(vrows)
    asm.add(Family("defect", "DEF", defect, vidx,
                   np.zeros((len(vrows), 0)), out_dim))

    # ---- domain-entry anchors ---------------------------------------------
    impact_targets = {e.target for e in lay.edges if e.reset == "impact"}
    for d in domains:
        v = d.vertex_id
        rows = contact_rows(d.contacts)
        with_vel = v not in impact_targets
        m_v = lay.m_rows[v]
        cjac = model.contact_fns(d.contacts)[1]

        def anchor(w, c, rows=rows, with_vel=with_vel, cjac=cjac):
            q, dq = w[:9], w[9:18]
            _, pts, ang = model._fk_all(q)
            vals = [pts[n][1] if kind == "pos" else ang[n]
                    for kind, n in rows]
            r = jnp.stack(vals)
            if with_vel:
                r = jnp.concatenate([r, cjac(q) @ dq])
            return r

        vidx = np.concatenate([lay("q", v, 0), lay("dq", v, 0)])[None, :]
        nr = len(rows) + (m_v if with_vel else 0)
        asm.add(Family(f"anchor_{v}", "ANC", anchor, vidx,
                       np.zeros((1, 0)), nr))

    # ---- virtual-constraint outputs ----------------------------------------
    def y2_row(w, c):
        qj, alpha = w[0], w[1:7]
        return jnp.array([qj - bezier_eval(alpha, c[0])])

    def y2_ss1(w, c):
        qj, alpha = w[0], w[1:7]
        lth, lsh = c[0], c[1]
        dp = _delta_of(lth, lsh, w[7], w[8], w[9])
        d0 = _delta_of(lth, lsh, w[10], w[11], w[12])
        de = _delta_of(lth, lsh, w[13], w[14], w[15])
        s = (dp - d0) / (de - d0)
        return jnp.array([qj - bezier_eval(alpha, s)])

    def y1_row(w, c):
        dt, dh, dk, vh = w
        lth, lsh = c[0], c[1]
        return jnp.array([-(lth * (dt - dh) + lsh * (dt - dh - dk)) - vh])

    for d in domains:
        v = d.vertex_id
        ss1 = not d.rd1
        sidx = _stance_angle_idx(d.stance)
        lth, lsh = _stance_leg_lengths(model, d.stance)
        for tag, prange in (("C2", [0]), ("VC", range(1, P))):
            vr, cs = [], []
            for p in prange:
                for j in d.y2_joints:
                    qj = lay("q", v, p)[Q_INDEX[j]]
                    al = lay("alpha", v, j)
                    if ss1:
                        vr.append(np.concatenate([
                            [qj], al, lay("q", v, p)[sidx],
                            lay("q", v, 0)[sidx], lay("q", v, P - 1)[sidx]]))
                        cs.append([lth, lsh])
                    else:
                        vr.append(np.concatenate([[qj], al]))
                        cs.append([lay.phase(p)])
            asm.add(Family(f"y2_{v}_{tag}", tag, y2_ss1 if ss1 else y2_row,
                           np.array(vr), np.array(cs), 1))
        if d.rd1:
            vr = [np.concatenate([lay("dq", v, p)[sidx], lay("vhip")])
                  for p in range(P)]
            asm.add(Family(f"y1_{v}", "Y1", y1_row, np.array(vr),
                           np.tile([lth, lsh], (P, 1)), 1))
        else:
            # forward phase progress keeps the ss1 normalization sound
            def dprog(w, c):
                lth, lsh = c[0], c[1]
                return jnp.array([
                    _delta_of(lth, lsh, w[3], w[4], w[5])
                    - _delta_of(lth, lsh, w[0], w[1], w[2])])
            vr = np.concatenate([lay("q", v, 0)[sidx],
                                 lay("q", v, P - 1)[sidx]])[None, :]
            asm.add(Family(f"dprog_{v}", "PH", dprog, vr,
                           np.array([[lth, lsh]]), 1),
                    cl=0.02, cu=INF)

    # ---- guards -------------------------------------------------------------
    for e in lay.edges:
        v = e.source
        d = gamma.vertex(v)
        if e.guard_kind == "touchdown":
            pt = e.guard_point

            def td(w, c, pt=pt):
                q, dq = w[:9], w[9:18]
                zfun = lambda qq: model._fk_all(qq)[1][pt][1]
                z, zdot = jax.jvp(zfun, (q,), (dq,))
                return jnp.stack([z, zdot])

            vidx = np.concatenate([lay("q", v, P - 1),
                                   lay("dq", v, P - 1)])[None, :]
            asm.add(Family(f"guard_{e.edge_id}", "GRD", td, vidx,
                           np.zeros((1, 0)), 2),
                    cl=np.array([0.0, -INF]), cu=np.array([0.0, 0.0]))
        else:
            # liftoff: the leaving point's normal force reaches zero
            rows = lay._expand(contact_rows(d.contacts))
            lam_idx = lay("lam", v, P - 1)
            side = e.guard_point[-1]
            foot = model.params.leg(side)[2]
            dspan = foot.l_heel + foot.l_toe
            flat = ("ori", f"foot_{side}") in rows
            if flat:
                # flat-foot wrench (fx, fz, m) about the heel; heel lift
                # means the load has moved entirely to the toe
                i_fz = rows.index(("pos_z", f"heel_{side}"))
                i_m = rows.index(("ori", f"foot_{side}"))

                def lift(w, c):
                    return jnp.array([w[0] - w[1] / c[0]])

                vidx = np.array([[lam_idx[i_fz], lam_idx[i_m]]])
                asm.add(Family(f"guard_{e.edge_id}", "GRD", lift, vidx,
                               np.array([[dspan]]), 1))
            else:
                i_fz = rows.index(("pos_z", e.guard_point))

                def lift0(w, c):
                    return jnp.array([w[0]])

                asm.add(Family(f"guard_{e.edge_id}", "GRD", lift0,
                               np.array([[lam_idx[i_fz]]]),
                               np.zeros((1, 0)), 1))

    # ---- resets ---------------------------------------------------------------
    first_v = domains[0].vertex_id

    def smooth_reset(w, c):
        return w[18:36] - w[0:18]

    for e in lay.edges:
        vs, vt = e.source, e.target
        closure = vt == first_v
        if e.reset == "smooth":
            vidx = np.concatenate([
                lay("q", vs, P - 1), lay("dq", vs, P - 1),
                lay("q", vt, 0), lay("dq", vt, 0)])[None, :]
            asm.add(Family(f"reset_{e.edge_id}", "RST", smooth_reset, vidx,
                           np.zeros((1, 0)), 18))
        else:
            m_t = lay.m_rows[vt]
            cjac = model.contact_fns(gamma.vertex(vt).contacts)[1]

            def imp_reset(w, c, m_t=m_t, cjac=cjac, closure=closure):
                qe, dqe = w[0:9], w[9:18]
                q0, dq0 = w[18:27], w[27:36]
                Lam = w[36:36 + m_t]
                D = jax.hessian(model._kinetic, argnums=1)(q0, jnp.zeros(NQ))
                J = cjac(q0)
                qr = q0 - qe
                if closure:
                    qr = qr[1:]   # forward translation is not periodic
                return jnp.concatenate([
                    qr, D @ (dq0 - dqe) - J.T @ Lam, J @ dq0])

            vidx = np.concatenate([
                lay("q", vs, P - 1), lay("dq", vs, P - 1),
                lay("q", vt, 0), lay("dq", vt, 0),
                lay("imp", e.edge_id)])[None, :]
            nr = (8 if closure else 9) + 9 + m_t
            asm.add(Family(f"reset_{e.edge_id}", "RST", imp_reset, vidx,
                           np.zeros((1, 0)), nr))
        if lay.n_mus:
            def lce_cont(w, c):
                nm = w.shape[0] // 2
                return w[nm:] - w[:nm]
            vidx = np.concatenate(
                [lay.mus(vs, P - 1, m)[:1] for m in range(lay.n_mus)]
                + [lay.mus(vt, 0, m)[:1] for m in range(lay.n_mus)])[None, :]
            asm.add(Family(f"lce_{e.edge_id}", "C8", lce_cont, vidx,
                           np.zeros((1, 0)), lay.n_mus))

    # ---- muscle constraints -----------------------------------------------
    if lay.n_mus:
        _add_muscle_families(asm, lay, model, muscles, fits)

    # ---- contact cones and clearance ----------------------------------------
    mu = model.params.mu
    for d in domains:
        v = d.vertex_id
        rows = lay._expand(contact_rows(d.contacts))
        groups = _wrench_groups(rows, model)
        for gname, idxs, dspan in groups:
            flat = dspan > 0.0
            if flat:
                def cone(w, c):
                    fx, fz, m = w
                    nt = m / c[0]
                    return jnp.array([nt, fz - nt,
                                      c[1] * fz - fx, c[1] * fz + fx])
                nr = 4
                cs = [dspan, mu]
            else:
                def cone(w, c):
                    fx, fz = w
                    return jnp.array([fz, c[0] * fz - fx, c[0] * fz + fx])
                nr = 3
                cs = [mu]
            vidx = np.array([lay("lam", v, p)[idxs] for p in range(P)])
            cl = np.zeros(P * nr)
            if (opt_tuned := _tuned(opt, variant)) is not None:
                nf = float(opt_tuned.get("min_normal_force", 0.0))
                for p in range(1, P - 1):
                    cl[p * nr] = nf          # toe/point normal
                    if flat:
                        cl[p * nr + 1] = nf  # heel normal
            asm.add(Family(f"cone_{v}_{gname}", "FR", cone, vidx,
                           np.tile(cs, (P, 1)), nr), cl=cl, cu=INF)

        # free contact points stay above ground
        free = [p for p in ("heel_l", "toe_l", "heel_r", "toe_r")
                if p not in d.contacts]
        for pt in free:
            def height(w, c, pt=pt):
                return jnp.array([model._fk_all(w)[1][pt][1]])
            vidx = np.array([lay("q", v, p) for p in range(P)])
            cl = np.zeros(P)
            tuned = _tuned(opt, variant)
            if tuned is not None and d.vertex_id.startswith("ss") \
                    and pt.endswith(d.vertex_id[-1] == "r" and "l" or "r"):
                clr = float(tuned.get("swing_clearance", 0.0))
                for p in range(P // 3, 2 * P // 3 + 1):
                    cl[p] = clr
            asm.add(Family(f"clr_{v}_{pt}", "CLR", height, vidx,
                           np.zeros((P, 0)), 1), cl=cl, cu=INF)

    # ---- work, distance, cost ------------------------------------------------
    jdq = np.array([Q_INDEX[j] for j in JOINT_NAMES])
    if hs:
        def work_seg(w, c):
            T, Wv = w[0], w[1]
            g = []
            for i in range(3):
                u = w[2 + 12 * i: 8 + 12 * i]
                dth = w[8 + 12 * i: 14 + 12 * i]
                g.append(jnp.sum(_softplus(u * dth)))
            h = T / (N - 1)
            return jnp.array([Wv - h / 6.0 * (g[0] + 4.0 * g[1] + g[2])])
    else:
        def work_seg(w, c):
            T, Wv = w[0], w[1]
            g = []
            for i in range(2):
                u = w[2 + 12 * i: 8 + 12 * i]
                dth = w[8 + 12 * i: 14 + 12 * i]
                g.append(jnp.sum(_softplus(u * dth)))
            h = T / (N - 1)
            return jnp.array([Wv - 0.5 * h * (g[0] + g[1])])

    vr = []
    for d in domains:
        v = d.vertex_id
        for k in range(N - 1):
            cols = [lay("T", v), lay("Wseg", v, k)]
            for p in lay.interval_points(k):
                cols += [lay("u", v, p), lay("dq", v, p)[jdq]]
            vr.append(np.concatenate(cols))
    asm.add(Family("work_seg", "W", work_seg, np.array(vr),
                   np.zeros((len(vr), 0)), 1))

    def work_sum(w, c):
        return jnp.array([w[0] - jnp.sum(w[1:])])
    vidx = np.concatenate(
        [lay("W")] + [lay("Wseg", d.vertex_id, k)
                      for d in domains for k in range(N - 1)])[None, :]
    asm.add(Family("work_sum", "W", work_sum, vidx, np.zeros((1, 0)), 1))

    px0 = lay("q", first_v, 0)[0]
    pxe = lay("q", domains[-1].vertex_id, P - 1)[0]

    def cot_row(w, c):
        cot, pe, p0, W = w
        return jnp.array([cot * c[0] * (pe - p0) - W])
    vidx = np.array([[lay("cot")[0], pxe, px0, lay("W")[0]]])
    asm.add(Family("cot", "W", cot_row, vidx, np.array([[mg]]), 1))

    def dist_row(w, c):
        return jnp.array([w[0] - w[1]])
    asm.add(Family("distance", "PH", dist_row, np.array([[pxe, px0]]),
                   np.zeros((1, 0)), 1), cl=MIN_DISTANCE, cu=INF)

    # tuned step-length rows: forward progress of each half cycle
    tuned = _tuned(opt, variant)
    if tuned is not None and "step_length" in tuned:
        lo_s, hi_s = map(float, tuned["step_length"])
        half = domains[4].vertex_id
        pxm = lay("q", half, 0)[0]
        asm.add(Family("step_a", "TUN", dist_row, np.array([[pxm, px0]]),
                       np.zeros((1, 0)), 1), cl=lo_s, cu=hi_s)
        asm.add(Family("step_b", "TUN", dist_row, np.array([[pxe, pxm]]),
                       np.zeros((1, 0)), 1), cl=lo_s, cu=hi_s)

    lb, ub = _variable_bounds(lay, model, opt, variant, muscles)
    return GaitNlp(model, gamma, lay, asm, lb, ub, opt, variant,
                   muscles, fits)


def _tuned(opt: dict, variant: VariantConfig):
    return opt.get("tuned") if variant.tuned else None


def _wrench_groups(rows, model):
    """(name, lam-index array, flat-foot span or 0) per contact group."""
    groups = []
    used = set()
    for i, (kind, name) in enumerate(rows):
        if i in used:
            continue
        if kind == "pos_x":
            side = name[-1]
            ori = ("ori", f"foot_{side}")
            if ori in rows:
                j = rows.index(ori)
                foot = model.params.leg(side)[2]
                groups.append((f"flat_{side}", np.array([i, i + 1, j]),
                               foot.l_heel + foot.l_toe))
                used |= {i, i + 1, j}
            else:
                groups.append((name, np.array([i, i + 1]), 0.0))
                used |= {i, i + 1}
    return groups


def _cone_matrix(model, rows_exp) -> np.ndarray:
    """Linear map from contact-row multipliers to friction-cone values."""
    mu = model.params.mu
    n_lam = len(rows_exp)
    out = []
    for _, idxs, dspan in _wrench_groups(rows_exp, model):
        if dspan > 0.0:
            ix, iz, im = idxs
            for coefs in ([(im, 1.0 / dspan)],
                          [(iz, 1.0), (im, -1.0 / dspan)],
                          [(iz, mu), (ix, -1.0)],
                          [(iz, mu), (ix, 1.0)]):
                row = np.zeros(n_lam)
                for j, cval in coefs:
                    row[j] = cval
                out.append(row)
        else:
            ix, iz = idxs
            for coefs in ([(iz, 1.0)],
                          [(iz, mu), (ix, -1.0)],
                          [(iz, mu), (ix, 1.0)]):
                row = np.zeros(n_lam)
                for j, cval in coefs:
                    row[j] = cval
                out.append(row)
    return np.array(out)


def _seed_forces(model, q, dq, cjac, jdotdq, cone_mat, u_lo, u_hi):
    """Torque/acceleration/force seed for one collocation point.

    For fixed (q, dq) the contact-consistent (ddq, lam) are affine in
    the torque u, so a small linear program picks u minimizing the worst
    friction-cone violation (then, at that level, the torque effort);
    the returned triple satisfies the dynamics rows exactly.
    """
    from scipy.optimize import linprog

    h = model.coriolis_gravity(q, dq)
    J = np.asarray(cjac(jnp.asarray(q)))
    jd = np.asarray(jdotdq(jnp.asarray(q), jnp.asarray(dq)))
    m = J.shape[0]
    D = model.mass_matrix(q)
    KKT = np.block([[D, -J.T], [J, np.zeros((m, m))]])
    RHS = np.zeros((NQ + m, 1 + NU))
    RHS[:NQ, 0] = -h
    RHS[NQ:, 0] = -jd
    RHS[:NQ, 1:] = model.B
    sol = np.linalg.solve(KKT, RHS)
    ddq0, DdqU = sol[:NQ, 0], sol[:NQ, 1:]
    lam0, LamU = sol[NQ:, 0], sol[NQ:, 1:]

    def pack(u):
        return u, ddq0 + DdqU @ u, lam0 + LamU @ u

    nc = cone_mat.shape[0]
    c0 = cone_mat @ lam0
    Cu = cone_mat @ LamU
    bounds = [(u_lo[i], u_hi[i]) for i in range(NU)]
    # stage 1: minimize the worst cone violation t
    obj = np.zeros(NU + 1)
    obj[-1] = 1.0
    lp1 = linprog(obj, A_ub=np.hstack([-Cu, -np.ones((nc, 1))]),
                  b_ub=c0, bounds=bounds + [(0.0, None)], method="highs")
    if not lp1.success:
        return pack(np.zeros(NU))
    t = float(lp1.x[-1])
    # stage 2: at that violation level, minimize total torque |u|
    obj2 = np.concatenate([np.zeros(NU), np.ones(NU)])
    eye = np.eye(NU)
    A2 = np.vstack([np.hstack([-Cu, np.zeros((nc, NU))]),
                    np.hstack([eye, -eye]),
                    np.hstack([-eye, -eye])])
    b2 = np.concatenate([c0 + t + 1e-9, np.zeros(2 * NU)])
    lp2 = linprog(obj2, A_ub=A2, b_ub=b2,
                  bounds=bounds + [(0.0, None)] * NU, method="highs")
    return pack(lp2.x[:NU] if lp2.success else lp1.x[:NU])


def _variable_bounds(lay: GaitLayout, model, opt, variant, muscles):
    lb = np.full(lay.n, -INF)
    ub = np.full(lay.n, INF)
    b = opt["bounds"]
    tuned = _tuned(opt, variant)

    tq = b["torque"]
    u_box = np.array([tq["hip"], tq["knee"], tq["ankle"]] * 2)
    ang = b["joint_angle"]
    torso = tuned["torso_lean"] if tuned and "torso_lean" in tuned \
        else b["torso"]
    q_lo = np.array([-INF, 0.5, torso[0]]
                    + [ang["hip"][0], ang["knee"][0], ang["ankle"][0]] * 2)
    q_hi = np.array([INF, 1.2, torso[1]]
                    + [ang["hip"][1], ang["knee"][1], ang["ankle"][1]] * 2)
    rate = float(b["joint_rate"])
    dq_lo = np.array([-1.0, -2.0] + [-rate] * 7)
    dq_hi = np.array([3.0, 2.0] + [rate] * 7)
    vh = tuned["v_hip"] if tuned and "v_hip" in tuned else b["v_hip"]
    dur = b["domain_duration"]

    for d in lay.domains:
        v = d.vertex_id
        for p in range(lay.P):
            lb[lay("q", v, p)], ub[lay("q", v, p)] = q_lo, q_hi
            lb[lay("dq", v, p)], ub[lay("dq", v, p)] = dq_lo, dq_hi
            lb[lay("ddq", v, p)], ub[lay("ddq", v, p)] = -800.0, 800.0
            lb[lay("u", v, p)], ub[lay("u", v, p)] = -u_box, u_box
            if tuned and "stance_knee" in tuned:
                kst = Q_INDEX[("knee_l" if d.stance == "l" else "knee_r")]
                lo_k, hi_k = map(float, tuned["stance_knee"])
                lb[lay("q", v, p)[kst]] = lo_k
                ub[lay("q", v, p)[kst]] = hi_k
            if lay.n_mus:
                sb = b["activation"]
                lbox, vbox = b["l_ce"], b["v_ce"]
                fsc = b["force_scale"]
                for m, mid in enumerate(MUSCLE_ORDER):
                    prm = muscles[mid][0]
                    i = lay.mus(v, p, m)
                    lb[i[0]], ub[i[0]] = lbox[0] * prm.l_opt, lbox[1] * prm.l_opt
                    lb[i[1]], ub[i[1]] = vbox[0] * prm.l_opt, vbox[1] * prm.l_opt
                    lb[i[2]], ub[i[2]] = sb[0], sb[1]
                    lb[i[3]] = fsc[0] * prm.f_max * prm.n_ecc
                    ub[i[3]] = fsc[1] * prm.f_max * prm.n_ecc
        lb[lay("T", v)], ub[lay("T", v)] = dur[0], dur[1]
        lb[lay("W",)] = 0.0
        for k in range(lay.N - 1):
            lb[lay("Wseg", v, k)] = 0.0
    lb[lay("vhip")], ub[lay("vhip")] = vh[0], vh[1]
    # pin the cycle's starting forward position
    first = lay.domains[0].vertex_id
    lb[lay("q", first, 0)[0]] = 0.0
    ub[lay("q", first, 0)[0]] = 0.0
    lb[lay("cot")] = 0.0
    return lb, ub


def _add_muscle_families(asm: Assembly, lay: GaitLayout, model,
                         muscles, fits):
    """C5/C6 force rows, C8 fiber defects, C9-C12 torque maps."""
    P, N = lay.P, lay.N
    nm = lay.n_mus
    ncoef = FIT_DEGREE + 1

    # constants per muscle
    c5_const, c6_const = [], []
    joint_of = {}
    for m, mid in enumerate(MUSCLE_ORDER):
        prm, att = muscles[mid]
        fv, fse = fits[mid]
        c5_const.append(np.concatenate([
            [prm.f_max, prm.l_opt, prm.w, prm.c],
            fv.coef, fv.fit_domain]))
        paths = list(att.joints) + [None] * (2 - len(att.joints))
        pj = []
        for jp in paths:
            if jp is None:
                pj += [0.0, 1.0, 0.0, 0.0, 0.0]
            else:
                pj += [1.0 if jp.lever == "constant" else 0.0,
                       float(jp.sign), jp.r0, jp.theta_ref, jp.theta_max]
        c6_const.append(np.concatenate([
            [prm.f_max, prm.l_opt, prm.l_slack, prm.rho],
            pj, fse.coef, fse.fit_domain]))
        joint_of[mid] = [jp.joint for jp in att.joints]
    c5_const = np.array(c5_const)
    c6_const = np.array(c6_const)

    def c5(w, c):
        l_ce, v_ce, s, F = w
        fmax, lopt, wdt, cc = c[0], c[1], c[2], c[3]
        coef = c[4:4 + ncoef]
        lo, hi = c[4 + ncoef], c[5 + ncoef]
        fl = _force_length(l_ce, lopt, wdt, cc)
        fv = _poly_clamped(coef, lo, hi, v_ce)
        return jnp.array([F - s * fmax * fl * fv])

    def c6(w, c):
        F, l_ce, th1, th2 = w
        fmax, lopt, lslack, rho = c[0], c[1], c[2], c[3]
        p1, p2 = c[4:9], c[9:14]
        coef = c[14:14 + ncoef]
        lo, hi = c[14 + ncoef], c[15 + ncoef]
        dl = _delta_l(p1[0], p1[1], p1[2], p1[3], p1[4], rho, th1) \
            + _delta_l(p2[0], p2[1], p2[2], p2[3], p2[4], rho, th2)
        l_mtu = lopt + lslack - dl
        fse = _poly_clamped(coef, lo, hi, l_mtu - l_ce)
        return jnp.array([F - fmax * fse])

    vr5, cs5, vr6, cs6 = [], [], [], []
    for d in lay.domains:
        v = d.vertex_id
        for p in range(P):
            for m, mid in enumerate(MUSCLE_ORDER):
                i = lay.mus(v, p, m)
                vr5.append(i)
                cs5.append(c5_const[m])
                js = joint_of[mid]
                th1 = lay("q", v, p)[Q_INDEX[js[0]]]
                th2 = lay("q", v, p)[Q_INDEX[js[1]]] if len(js) > 1 else th1
                vr6.append([i[3], i[0], th1, th2])
                cs6.append(c6_const[m])
    asm.add(Family("muscle_force", "C5", c5, np.array(vr5), np.array(cs5), 1))
    asm.add(Family("tendon_force", "C6", c6, np.array(vr6), np.array(cs6), 1))

    # fiber-length defects
    if lay.scheme == "hermite-simpson":
        def c8(w, c):
            lk, vk, lm, vm, l1, v1, T = w
            h = T / (N - 1)
            return jnp.array([
                lm - 0.5 * (lk + l1) - h / 8.0 * (vk - v1),
                l1 - lk - h / 6.0 * (vk + 4.0 * vm + v1)])
        nr8 = 2
    else:
        def c8(w, c):
            lk, vk, l1, v1, T = w
            h = T / (N - 1)
            return jnp.array([l1 - lk - 0.5 * h * (vk + v1)])
        nr8 = 1
    vr8 = []
    for d in lay.domains:
        v = d.vertex_id
        for k in range(N - 1):
            pts = lay.interval_points(k)
            for m in range(nm):
                cols = []
                for p in pts:
                    cols += [lay.mus(v, p, m)[0], lay.mus(v, p, m)[1]]
                cols.append(lay("T", v)[0])
                vr8.append(np.array(cols))
    asm.add(Family("fiber_defect", "C8", c8, np.array(vr8),
                   np.zeros((len(vr8), 0)), nr8))

    # joint torque maps C9-C12
    tags = {"hip_l": "C9", "knee_l": "C10", "ankle_l": "C11", "hip_r": "C12"}

    def tmap(w, c):
        u, th = w[0], w[1]
        tot = 0.0
        for i in range(3):
            sgn, flag, r0, thmax = c[4 * i: 4 * i + 4]
            tot = tot + sgn * _lever(flag, r0, thmax, th) * w[2 + i]
        return jnp.array([u - tot])

    jlist = {j: i for i, j in enumerate(JOINT_NAMES)}
    for joint, tag in tags.items():
        consts = []
        for mid, sgn in TORQUE_TABLE[joint]:
            jp = muscles[mid][1].path(joint)
            consts.append([float(sgn),
                           1.0 if jp.lever == "constant" else 0.0,
                           jp.r0, jp.theta_max])
        consts = np.array(consts).ravel()
        vr, cs = [], []
        for d in lay.domains:
            v = d.vertex_id
            for p in range(P):
                cols = [lay("u", v, p)[jlist[joint]],
                        lay("q", v, p)[Q_INDEX[joint]]]
                for mid, _ in TORQUE_TABLE[joint]:
                    m = MUSCLE_ORDER.index(mid)
                    cols.append(lay.mus(v, p, m)[3])
                vr.append(np.array(cols))
                cs.append(consts)
        asm.add(Family(f"tmap_{joint}", tag, tmap, np.array(vr),
                       np.array(cs), 1))


# ---------------------------------------------------------------------------
# initial guess
# ---------------------------------------------------------------------------


def _solve_pose(model: PlanarBiped, conds, targets, q0):
    """Small weighted least-squares IK for one boundary pose.

    ``conds`` are hard residuals (weight 100): ("z", point), ("ori",
    side), ("x", point, value).  ``targets`` are soft residuals
    (weight 1): ("hip", x, z), ("torso", a), ("joint", name, a),
    ("point", name, x, z).
    """
    from scipy.optimize import least_squares

    def res(q):
        pts = model.point_positions(q)
        ang = model.link_angles(q)
        r = []
        for cnd in conds:
            if cnd[0] == "z":
                r.append(100.0 * pts[cnd[1]][1])
            elif cnd[0] == "ori":
                r.append(100.0 * ang["foot_" + cnd[1]])
            else:
                r.append(100.0 * (pts[cnd[1]][0] - cnd[2]))
        for t in targets:
            if t[0] == "hip":
                r.append(q[0] - t[1])
                r.append(q[1] - t[2])
            elif t[0] == "torso":
                r.append(q[2] - t[1])
            elif t[0] == "joint":
                r.append(0.5 * (q[Q_INDEX[t[1]]] - t[2]))
            elif t[0] == "pose":
                r.extend(0.5 * (q - t[1]))
            else:
                r.append(pts[t[1]][0] - t[2])
                r.append(pts[t[1]][1] - t[3])
        return np.array(r)

    sol = least_squares(res, q0, xtol=1e-12, ftol=1e-12)
    return sol.x


def _boundary_poses(model: PlanarBiped, gamma: DirectedCycle,
                    step: float, hip_h: float, lean: float):
    """Poses at the 8 domain entries plus the cycle-closing pose."""
    domains = list(gamma.vertices)
    # forward hip progress fraction within each step, per domain kind
    frac = {"ds2": 0.10, "ds3": 0.25, "ss2": 0.55, "ss1": 0.10}
    hip_x = [0.0]
    for d in domains:
        hip_x.append(hip_x[-1] + frac[d.vertex_id[:3]] * step)
    lead = 0.45 * step   # heel lands this far ahead of the hip

    # globally consistent footfall placements: right heel strikes at
    # x = lead to open the cycle, left heel strikes one step later;
    # each point keeps its placement until that foot swings again
    heel_r = lead
    heel_l = hip_x[4] + lead
    place = {"heel_r": heel_r, "toe_r": heel_r + _foot_span(model, "r"),
             "heel_l": heel_l - 2.0 * step,
             "toe_l": heel_l - 2.0 * step + _foot_span(model, "l")}

    poses = []
    q0 = model.standing_pose(stance="r")
    for i, d in enumerate(domains):
        st = d.stance
        sw = "l" if st == "r" else "r"
        if i == 4:   # left heel strike: left foot lands at its new spot
            place["heel_l"] = heel_l
            place["toe_l"] = heel_l + _foot_span(model, "l")
        # the entry pose of domain i is also the exit pose of domain i-1,
        # so every contact of either neighbour must sit on the ground at
        # its pinned forward position
        prev = domains[i - 1]
        shared = list(dict.fromkeys(list(d.contacts) + list(prev.contacts)))
        conds = [cc for pt in shared
                 for cc in (("z", pt), ("x", pt, place[pt]))]
        kind = d.vertex_id[:3]
        if kind in ("ds3", "ss2") or prev.vertex_id[:3] in ("ds3", "ss2"):
            flat_side = st if kind in ("ds3", "ss2") else prev.stance
            conds.append(("ori", flat_side))
        targets = [("hip", hip_x[i], hip_h), ("torso", lean),
                   ("joint", f"knee_{st}", 0.15)]
        if kind == "ds2":
            targets.append(("joint", f"knee_{sw}", 0.25))
        elif kind == "ds3":
            targets.append(("joint", f"knee_{sw}", 0.45))
        elif kind == "ss2":
            targets.append(("point", f"toe_{sw}",
                            hip_x[i] - 0.1 * step, 0.06))
            targets.append(("joint", f"knee_{sw}", 0.55))
        else:
            targets.append(("point", f"heel_{sw}",
                            hip_x[i] + 0.30 * step, 0.05))
            targets.append(("joint", f"knee_{sw}", 0.30))
            targets.append(("joint", f"ankle_{st}", 0.35))
        poses.append(_solve_pose(model, conds, targets, q0))
        q0 = poses[-1].copy()
    # closing pose: cycle start shifted forward by both steps
    q_end = poses[0].copy()
    q_end[0] += hip_x[8]
    poses.append(q_end)
    return poses, hip_x


def _foot_span(model, side):
    foot = model.params.leg(side)[2]
    return foot.l_heel + foot.l_toe


def _bezier_lsq(s: np.ndarray, y: np.ndarray, degree: int = 5) -> np.ndarray:
    """Least-squares Bezier coefficients through samples (s, y)."""
    import math as _math
    B = np.stack([_math.comb(degree, j) * s ** j * (1 - s) ** (degree - j)
                  for j in range(degree + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    return coef


def initial_guess(nlp: GaitNlp, step: float = 0.42, hip_h: float = 0.87,
                  lean: float = 0.08) -> np.ndarray:
    """Kinematic walking seed: IK boundary poses, linear interpolation,
    quasi-static forces, smooth-consistent muscle states."""
    lay = nlp.layout
    model = nlp.model
    P, N = lay.P, lay.N
    poses, hip_x = _boundary_poses(model, nlp.gamma, step, hip_h, lean)

    frac = {"ds2": 0.14, "ds3": 0.20, "ss2": 0.46, "ss1": 0.20}
    step_time = step / 0.9     # aim near 0.9 m/s forward speed
    x0 = 0.5 * (np.asarray(nlp.lb).clip(-1.0, 1.0)
                + np.asarray(nlp.ub).clip(-1.0, 1.0))

    v_hip = step / step_time
    x0[lay("vhip")] = v_hip
    total_W = 0.0
    for i, d in enumerate(lay.domains):
        v = d.vertex_id
        qa, qb = poses[i], poses[i + 1]
        T = frac[v[:3]] * step_time
        x0[lay("T", v)] = T
        dq = (qb - qa) / T
        cval, cjac, jdotdq = model.contact_fns(d.contacts)
        rows_exp = GaitLayout._expand(contact_rows(d.contacts))
        cone_mat = _cone_matrix(model, rows_exp)
        # straight q-interpolation lets pinned contact points drift within
        # the domain; re-project each interior sample onto the contact
        # manifold (z = 0, x held at the entry-pose location)
        pts_a = model.point_positions(qa)
        pts_b = model.point_positions(qb)
        flat_sides = {c[-1] for c in d.contacts
                      if ("heel_" + c[-1]) in d.contacts
                      and ("toe_" + c[-1]) in d.contacts}
        samples = np.zeros((P, NQ))
        for p in range(P):
            s = p / (P - 1)
            qi = qa + s * (qb - qa)
            # the endpoint poses may disagree slightly on where an
            # unanchored contact point sits; ramp the x target between
            # them so the projected samples stay smooth
            conds = [cc for c in d.contacts for cc in (
                ("z", c),
                ("x", c, float((1 - s) * pts_a[c][0] + s * pts_b[c][0])))]
            conds += [("ori", s_) for s_ in flat_sides]
            q = _solve_pose(model, conds, [("pose", qi)], qi)
            samples[p] = q
            x0[lay("q", v, p)] = q
        # velocities from the projected samples (second-order differences)
        hgrid = T / (P - 1)
        dqs = np.gradient(samples, hgrid, axis=0)
        for p in range(P):
            q, dq = samples[p], dqs[p]
            x0[lay("dq", v, p)] = dq
            # accelerations and contact forces are affine in the torque;
            # choose u to minimize the worst friction-cone violation so
            # the seed is as contact-consistent as the pose allows
            u, ddq_c, lam_c = _seed_forces(
                model, q, dq, cjac, jdotdq, cone_mat,
                nlp.lb[lay("u", v, p)], nlp.ub[lay("u", v, p)])
            x0[lay("u", v, p)] = u
            x0[lay("ddq", v, p)] = np.clip(ddq_c, nlp.lb[lay("ddq", v, p)],
                                           nlp.ub[lay("ddq", v, p)])
            x0[lay("lam", v, p)] = lam_c
            if lay.n_mus:
                _seed_muscles(nlp, x0, v, p, q, dq)
        # Bezier fits to the sampled outputs
        sgrid = np.linspace(0.0, 1.0, P)
        for j in d.y2_joints:
            x0[lay("alpha", v, j)] = _bezier_lsq(sgrid,
                                                 samples[:, Q_INDEX[j]])
        # positive-work quadrature along the seed
        jdq = np.array([Q_INDEX[j] for j in JOINT_NAMES])
        hseg = T / (N - 1)
        for k in range(N - 1):
            g = []
            for p in lay.interval_points(k):
                up = x0[lay("u", v, p)]
                dp = x0[lay("dq", v, p)][jdq]
                g.append(np.sum(np.logaddexp(0.0, SOFTPLUS_BETA * up * dp)
                                / SOFTPLUS_BETA))
            w = hseg / 6.0 * (g[0] + 4 * g[1] + g[2]) if len(g) == 3 \
                else 0.5 * hseg * (g[0] + g[1])
            x0[lay("Wseg", v, k)] = w
            total_W += w
    x0[lay("W")] = total_W
    dist = max(hip_x[8], MIN_DISTANCE)
    mg = model.params.total_mass * model.params.g
    x0[lay("cot")] = total_W / (mg * dist)
    for e in lay.edges:
        if e.reset == "impact":
            x0[lay("imp", e.edge_id)] = 0.0
    return np.clip(x0, nlp.lb, nlp.ub)


def _seed_muscles(nlp: GaitNlp, x0, v, p, q, dq):
    """Slack-tendon muscle seed consistent with the C6 rows."""
    from .muscle import mtu_length
    lay = nlp.layout
    qmap = {j: q[Q_INDEX[j]] for j in JOINT_NAMES}
    for m, mid in enumerate(MUSCLE_ORDER):
        prm, att = nlp.muscles[mid]
        fv, fse = nlp.fits[mid]
        lm = mtu_length(prm, att, qmap)
        i = lay.mus(v, p, m)
        l_ce = np.clip(lm - prm.l_slack * (1.0 + 0.2 * prm.eps_ref),
                       nlp.lb[i[0]], nlp.ub[i[0]])
        F = prm.f_max * fse.eval_extended(lm - l_ce)
        F = np.clip(F, nlp.lb[i[3]], nlp.ub[i[3]])
        x0[i[0]] = l_ce
        x0[i[1]] = 0.0
        x0[i[2]] = 0.3
        x0[i[3]] = F


# ---------------------------------------------------------------------------
# solve + export
# ---------------------------------------------------------------------------


def solve_gait(nlp: GaitNlp, x0: np.ndarray | None = None,
               verbose: bool = False) -> GaitSolution:
    """Solve the assembled problem and package the result."""
    from .fileio import SCHEMAS
    from .solver import IpOptions, solve_ip

    scfg = nlp.opt["solver"]
    opts = IpOptions(tol=float(scfg.get("tol", 1e-6)),
                     max_iter=int(scfg.get("max_iter", 600)),
                     max_seconds=float(scfg.get("max_seconds", 1800.0)),
                     mu_init=float(scfg.get("mu_init", 0.1)),
                     verbose=verbose)
    if x0 is None:
        x0 = initial_guess(nlp)
    res = solve_ip(nlp.ip_problem(), x0, opts)
    return package_solution(nlp, res.x, res.status, res.iterations,
                            res.kkt_error)


def package_solution(nlp: GaitNlp, x: np.ndarray, status: str,
                     iterations: int, kkt_error: float) -> GaitSolution:
    from .fileio import SCHEMAS
    lay = nlp.layout
    model = nlp.model
    P = lay.P
    durations, alpha, dplus, dminus = {}, {}, {}, {}
    for d in lay.domains:
        v = d.vertex_id
        durations[v] = float(x[lay("T", v)][0])
        alpha[v] = {j: [float(c) for c in x[lay("alpha", v, j)]]
                    for j in d.y2_joints}
        q0 = x[lay("q", v, 0)]
        qe = x[lay("q", v, P - 1)]
        dplus[v] = float(model.delta_p_hip(q0, stance=d.stance))
        dminus[v] = float(model.delta_p_hip(qe, stance=d.stance))
    return GaitSolution(
        schema=SCHEMAS["solution"], variant=nlp.variant.name,
        status=status, iterations=iterations,
        objective=float(x[lay("cot")[0]]), kkt_error=float(kkt_error),
        v_hip=float(x[lay("vhip")][0]), durations=durations, alpha=alpha,
        delta_plus=dplus, delta_minus=dminus,
        x=[float(v) for v in x],
        options={"nodes_per_domain": lay.N, "scheme": lay.scheme,
                 "variant": {"muscles_enabled": nlp.variant.muscles_enabled,
                             "tuned": nlp.variant.tuned}})


def solution_outputs(gamma: DirectedCycle, sol: GaitSolution):
    """Per-domain output parameterizations for simulation/control."""
    from .hybrid import BezierCurve, OutputSet
    out = {}
    for d in gamma.vertices:
        v = d.vertex_id
        if d.rd1:
            dur = sol.durations[v]
        else:
            # phase-normalizing pseudo-duration for the velocity-free domain
            dur = (sol.delta_minus[v] - sol.delta_plus[v]) / sol.v_hip
        out[v] = OutputSet(
            vertex_id=v, v_hip=sol.v_hip, delta_plus=sol.delta_plus[v],
            duration=dur,
            alpha={j: BezierCurve(tuple(sol.alpha[v][j]))
                   for j in d.y2_joints})
    return out


def cost_mcot(model: PlanarBiped, lay: GaitLayout, x,
              beta: float = SOFTPLUS_BETA) -> float:
    """Mechanical cost of transport of a packed trajectory.

    Independent post-hoc quadrature of the smoothed positive joint power
    integral, normalized by weight times distance travelled; matches the
    objective value of a feasible solution.
    """
    from .errors import ConfigError
    x = np.asarray(x, float)
    if x[lay("vhip")][0] <= 0.0:
        raise ConfigError("forward hip speed must be positive")
    jdq = np.array([Q_INDEX[j] for j in JOINT_NAMES])
    work = 0.0
    for d in lay.domains:
        v = d.vertex_id
        T = float(x[lay("T", v)][0])
        hseg = T / (lay.N - 1)
        for k in range(lay.N - 1):
            g = []
            for p in lay.interval_points(k):
                up = x[lay("u", v, p)]
                dp = x[lay("dq", v, p)][jdq]
                g.append(np.sum(np.logaddexp(0.0, beta * up * dp) / beta))
            work += hseg / 6.0 * (g[0] + 4 * g[1] + g[2]) if len(g) == 3 \
                else 0.5 * hseg * (g[0] + g[1])
    first = lay.domains[0].vertex_id
    last = lay.domains[-1].vertex_id
    dist = x[lay("q", last, lay.P - 1)][0] - x[lay("q", first, 0)][0]
    if dist <= 0.0:
        raise ConfigError("trajectory must progress forward")
    mg = model.params.total_mass * model.params.g
    return float(work / (mg * dist))


def jacobian_check(problem, x, n_dirs: int = 5, h: float = 1e-6,
                   seed: int = 0, row_tags=None) -> dict:
    """Compare analytic derivatives against central finite differences.

    Probes random unit directions (a directional derivative touches every
    constraint row at once) and reports the maximum relative error of the
    constraint Jacobian and objective gradient, optionally split per row
    tag.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, float)
    J = problem.jacobian(x)
    g = np.asarray(problem.gradient(x))
    worst = 0.0
    grad_worst = 0.0
    per_tag: dict[str, float] = {}
    for _ in range(n_dirs):
        v = rng.standard_normal(x.size)
        v /= np.linalg.norm(v)
        fd = (problem.constraints(x + h * v)
              - problem.constraints(x - h * v)) / (2.0 * h)
        an = J @ v
        err = np.abs(fd - an) / np.maximum(1.0, np.abs(an))
        worst = max(worst, float(err.max(initial=0.0)))
        if row_tags is not None:
            for t, e in zip(row_tags, err):
                per_tag[t] = max(per_tag.get(t, 0.0), float(e))
        gfd = (problem.objective(x + h * v)
               - problem.objective(x - h * v)) / (2.0 * h)
        gan = float(g @ v)
        grad_worst = max(grad_worst,
                         abs(gfd - gan) / max(1.0, abs(gan)))
    return {"max_rel_error": max(worst, grad_worst),
            "jac_rel_error": worst, "grad_rel_error": grad_worst,
            "per_tag": per_tag}


def solution_from_dict(d: dict) -> GaitSolution:
    from .errors import SchemaError
    from .fileio import SCHEMAS
    if d.get("schema") != SCHEMAS["solution"]:
        raise SchemaError(f"not a gait solution file: {d.get('schema')!r}")
    return GaitSolution(**d)


def layout_for_solution(model: PlanarBiped, gamma: DirectedCycle,
                        opt: dict, sol: GaitSolution) -> GaitLayout:
    """Rebuild the decision layout an exported solution was packed with."""
    o = dict(opt)
    o["nodes_per_domain"] = sol.options["nodes_per_domain"]
    o["collocation"] = sol.options["scheme"]
    vflags = sol.options["variant"]
    var = VariantConfig(sol.variant, bool(vflags["muscles_enabled"]),
                        bool(vflags["tuned"]))
    return GaitLayout(gamma, model, o, var)


def solution_state(lay: GaitLayout, sol: GaitSolution,
                   vertex: str | None = None) -> np.ndarray:
    """(q, dq) at a domain entry, default the cycle start."""
    v = vertex or lay.domains[0].vertex_id
    x = np.asarray(sol.x)
    return np.concatenate([x[lay("q", v, 0)], x[lay("dq", v, 0)]])


def trajectory_table(lay: GaitLayout, sol: GaitSolution):
    """(header, rows) accumulated over all domains, for CSV export."""
    x = np.asarray(sol.x)
    header = (["domain_index", "t"] + [f"q_{n}" for n in range(NQ)]
              + [f"dq_{n}" for n in range(NQ)] + [f"u_{n}" for n in range(NU)])
    rows = []
    t0 = 0.0
    for di, d in enumerate(lay.domains):
        v = d.vertex_id
        T = sol.durations[v]
        for p in range(lay.P):
            t = t0 + T * p / (lay.P - 1)
            rows.append(np.concatenate([
                [di, t], x[lay("q", v, p)], x[lay("dq", v, p)],
                x[lay("u", v, p)]]))
        t0 += T
    return header, np.array(rows)
