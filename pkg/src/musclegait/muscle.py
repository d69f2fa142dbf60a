"""Hill-type muscle-tendon units and their joint-torque mapping.

Each muscle-tendon unit (MTU) is a contractile element (CE) in series with
an elastic element (SE).  The module provides the joint-angle-to-length
geometry, the force-length / force-velocity / series-elastic curves (both
the piecewise originals and smooth least-squares surrogates suitable for
gradient-based optimization), element forces, lever arms, and the signed
sum of muscle torques at each human-side joint.

Sign conventions used throughout the toolkit:
  hip angle    positive = extension (thigh behind torso)
  knee angle   positive = flexion
  ankle angle  positive = plantarflexion
  v_ce = d(l_ce)/dt, lengthening positive.

With these conventions every extensor/plantarflexor attachment carries
sign +1 and the antagonists carry the signs of the torque-sum table
(`TORQUE_TABLE`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AttachmentError, DomainError, FitError, InputError, MappingError

__all__ = [
    "MuscleParams",
    "JointPath",
    "MuscleAttachment",
    "MuscleState",
    "SmoothCurveFit",
    "MUSCLE_ORDER",
    "TORQUE_TABLE",
    "TORQUE_JOINTS",
    "delta_l_mtu",
    "mtu_length",
    "force_length",
    "force_velocity",
    "force_se",
    "fit_smooth_curves",
    "ce_force",
    "se_force",
    "lever_arm",
    "muscle_joint_torque",
    "torque_sum",
    "default_fv_domain",
    "default_fse_domain",
]


@dataclass(frozen=True)
class MuscleParams:
    """Constants of a single MTU.

    Lengths in metres, forces in newtons.  ``v_max`` is expressed in
    optimal fiber lengths per second and converted internally where an
    absolute velocity is needed.
    """

    f_max: float       # maximum isometric force [N]
    l_opt: float       # CE length at reference angle [m]
    l_slack: float     # SE length at reference angle [m]
    w: float           # force-length width (fraction of l_opt)
    c: float           # force-length value at |l_ce - l_opt| = l_opt*w
    K: float           # force-velocity curvature
    n_ecc: float       # eccentric force enhancement (>1)
    v_max: float       # maximum contraction velocity [l_opt/s]
    eps_ref: float     # SE strain at which f_se = 1
    rho: float         # pennation/limit factor, 0 < rho <= 1

    def __post_init__(self):
        if self.f_max <= 0 or self.l_opt <= 0 or self.l_slack <= 0:
            raise InputError("f_max, l_opt, l_slack must be positive")
        if not 0.0 < self.c < 1.0:
            raise InputError("c must lie in (0, 1)")
        if self.n_ecc <= 1.0:
            raise InputError("n_ecc must exceed 1")
        if self.v_max <= 0 or self.eps_ref <= 0 or self.w <= 0:
            raise InputError("v_max, eps_ref, w must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise InputError("rho must lie in (0, 1]")

    @property
    def v_max_abs(self) -> float:
        """Maximum contraction velocity in m/s."""
        return self.v_max * self.l_opt


@dataclass(frozen=True)
class JointPath:
    """Geometry of an MTU's path over one spanned joint."""

    joint: str          # joint identifier, e.g. "hip_l"
    r0: float           # constant lever contribution [m]
    theta_ref: float    # reference angle (MTU at rest lengths) [rad]
    theta_max: float    # angle of maximum lever contribution [rad]
    lever: str          # "constant" (hip) or "cosine"
    sign: int           # +1 extensor-side, -1 flexor-side

    def __post_init__(self):
        if self.r0 <= 0:
            raise InputError(f"r0 must be positive for joint {self.joint!r}")
        if self.lever not in ("constant", "cosine"):
            raise InputError(f"unknown lever kind {self.lever!r}")
        if self.sign not in (-1, 1):
            raise InputError("sign must be +1 or -1")


@dataclass(frozen=True)
class MuscleAttachment:
    """Joint-spanning geometry of one MTU (one or two joints)."""

    muscle_id: str
    joints: tuple[JointPath, ...]

    def __post_init__(self):
        if not 1 <= len(self.joints) <= 2:
            raise InputError("an MTU spans one or two joints")

    def path(self, joint: str) -> JointPath:
        for jp in self.joints:
            if jp.joint == joint:
                return jp
        raise AttachmentError(
            f"muscle {self.muscle_id!r} does not span joint {joint!r}"
        )

    @property
    def spanned_joints(self) -> tuple[str, ...]:
        return tuple(jp.joint for jp in self.joints)


@dataclass
class MuscleState:
    """Instantaneous CE state. Activation is instantaneous (no dynamics)."""

    l_ce: float   # CE length [m]
    v_ce: float   # CE velocity, lengthening positive [m/s]
    s: float      # activation in [0, 1]

    def __post_init__(self):
        if self.l_ce <= 0:
            raise InputError("l_ce must be positive")
        if not 0.0 <= self.s <= 1.0:
            raise InputError("activation must lie in [0, 1]")


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def delta_l_mtu(params: MuscleParams, attachment: MuscleAttachment,
                joint: str, theta: float) -> float:
    """Change of MTU length due to one spanned joint leaving its reference.

    The attachment's flexor/extensor sign multiplies the geometric term so
    that a muscle shortens when the joint moves in the direction it pulls;
    this keeps the length map energetically consistent with the lever-arm
    torque.  At ``theta == theta_ref`` the change is zero.
    """
    jp = attachment.path(joint)
    if jp.lever == "constant":
        geo = jp.r0 * (theta - jp.theta_ref)
    else:
        geo = jp.r0 * (math.sin(theta - jp.theta_max)
                       - math.sin(jp.theta_ref - jp.theta_max))
    return jp.sign * params.rho * geo


def mtu_length(params: MuscleParams, attachment: MuscleAttachment,
               q: Mapping[str, float]) -> float:
    """Total MTU path length at joint angles ``q``.

    ``q`` maps joint identifiers to angles and must cover every spanned
    joint.  Biarticular MTUs use a separate reference angle per joint.
    """
    total = params.l_opt + params.l_slack
    for jp in attachment.joints:
        if jp.joint not in q:
            raise InputError(f"missing joint angle for {jp.joint!r}")
        total -= delta_l_mtu(params, attachment, jp.joint, q[jp.joint])
    return total


def lever_arm(attachment: MuscleAttachment, joint: str, theta: float) -> float:
    """MTU lever arm at a spanned joint: r0 for hip, r0*cos(theta-theta_max) else."""
    jp = attachment.path(joint)
    if jp.lever == "constant":
        return jp.r0
    return jp.r0 * math.cos(theta - jp.theta_max)


# ---------------------------------------------------------------------------
# force curves (piecewise originals)
# ---------------------------------------------------------------------------

def force_length(params: MuscleParams, l_ce: float) -> float:
    """Bell-shaped active force-length factor, 1 at l_opt, c at l_opt(1 +/- w)."""
    if l_ce <= 0:
        raise InputError("l_ce must be positive")
    x = abs((l_ce - params.l_opt) / (params.l_opt * params.w))
    return math.exp(math.log(params.c) * x ** 3)


def _fv_piecewise(params: MuscleParams, v_ce: float) -> float:
    vm = params.v_max_abs
    if v_ce < 0.0:
        return (vm - v_ce) / (vm + params.K * v_ce)
    n = params.n_ecc
    return n + (n - 1.0) * (vm + v_ce) / (7.56 * params.K * v_ce - vm)


def force_velocity(params: MuscleParams, v_ce: float, mode: str = "piecewise",
                   fit: "SmoothCurveFit | None" = None) -> float:
    """Force-velocity factor of the CE.

    Both branches equal 1 at ``v_ce == 0``.  ``mode="smooth"`` evaluates
    the least-squares surrogate and requires a fit for curve ``"f_v"``;
    queries outside its domain raise :class:`DomainError`.
    """
    if mode == "piecewise":
        return _fv_piecewise(params, v_ce)
    if mode == "smooth":
        if fit is None or fit.curve_id != "f_v":
            raise InputError("smooth mode requires a SmoothCurveFit for f_v")
        return fit(v_ce)
    raise InputError(f"unknown mode {mode!r}")


def _fse_piecewise(params: MuscleParams, l_se: float) -> float:
    if l_se < params.l_slack:
        return 0.0
    return ((l_se - params.l_slack) / (params.l_slack * params.eps_ref)) ** 2


def force_se(params: MuscleParams, l_se: float, mode: str = "piecewise",
             fit: "SmoothCurveFit | None" = None) -> float:
    """Series-elastic force factor: zero for a slack tendon, 1 at strain eps_ref."""
    if l_se < 0:
        raise InputError("l_se must be nonnegative")
    if mode == "piecewise":
        return _fse_piecewise(params, l_se)
    if mode == "smooth":
        if fit is None or fit.curve_id != "f_se":
            raise InputError("smooth mode requires a SmoothCurveFit for f_se")
        return fit(l_se)
    raise InputError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# element forces
# ---------------------------------------------------------------------------

def ce_force(params: MuscleParams, state: MuscleState,
             fv_fit: "SmoothCurveFit | None" = None) -> float:
    """Contractile-element force s * F_max * f_l * f_v."""
    fv = (force_velocity(params, state.v_ce) if fv_fit is None
          else fv_fit(state.v_ce))
    return state.s * params.f_max * force_length(params, state.l_ce) * fv


def se_force(params: MuscleParams, l_se: float,
             fse_fit: "SmoothCurveFit | None" = None) -> float:
    """Series-elastic force F_max * f_se."""
    fse = _fse_piecewise(params, l_se) if fse_fit is None else fse_fit(l_se)
    return params.f_max * fse


def muscle_joint_torque(attachment: MuscleAttachment, joint: str,
                        theta: float, f_m: float) -> float:
    """Unsigned torque magnitude r(theta) * F_m at one spanned joint.

    The flexor/extensor sign is applied downstream by :func:`torque_sum`.
    """
    if f_m < 0:
        raise InputError("f_m must be nonnegative")
    return lever_arm(attachment, joint, theta) * f_m


# ---------------------------------------------------------------------------
# torque-sum mapping
# ---------------------------------------------------------------------------

#: canonical muscle order; the intact (7-muscle) leg is the left leg
MUSCLE_ORDER = (
    "ham_l", "glu_l", "hfl_l", "gas_l", "vas_l", "sol_l", "ta_l",
    "ham_r", "glu_r", "hfl_r",
)

#: joints receiving a muscle torque sum, in output order
TORQUE_JOINTS = ("hip_l", "knee_l", "ankle_l", "hip_r")

#: signed contributions per joint: (muscle_id, sign)
TORQUE_TABLE: dict[str, tuple[tuple[str, int], ...]] = {
    "hip_l": (("ham_l", +1), ("glu_l", +1), ("hfl_l", +1)),
    "knee_l": (("ham_l", +1), ("gas_l", +1), ("vas_l", -1)),
    "ankle_l": (("gas_l", +1), ("sol_l", +1), ("ta_l", -1)),
    "hip_r": (("ham_r", +1), ("glu_r", +1), ("hfl_r", -1)),
}


def torque_sum(contributions: Mapping[tuple[str, str], float]) -> dict[str, float]:
    """Signed per-joint sums of individual muscle torques.

    ``contributions`` maps (muscle_id, joint) to the unsigned torque
    magnitude of that pair.  Every pair named by ``TORQUE_TABLE`` must be
    present; anything extra is ignored.
    """
    out = {}
    for joint in TORQUE_JOINTS:
        total = 0.0
        for muscle_id, sign in TORQUE_TABLE[joint]:
            key = (muscle_id, joint)
            if key not in contributions:
                raise MappingError(f"missing torque contribution for {key}")
            total += sign * contributions[key]
        out[joint] = total
    return out


# ---------------------------------------------------------------------------
# smooth surrogates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothCurveFit:
    """Polynomial least-squares surrogate of a piecewise force curve.

    Coefficients are a power series in the scaled variable
    ``t = (2*x - lo - hi) / (hi - lo)`` so evaluation stays well
    conditioned.  Immutable after construction.
    """

    curve_id: str                 # "f_se" or "f_v"
    coef: tuple[float, ...]       # power-series coefficients in t
    fit_domain: tuple[float, float]
    max_rel_error: float

    def _scale(self, x: float, strict: bool) -> float:
        lo, hi = self.fit_domain
        if strict and (x < lo - 1e-12 or x > hi + 1e-12):
            raise DomainError(
                f"{self.curve_id} query {x} outside fit domain [{lo}, {hi}]"
            )
        return (2.0 * x - lo - hi) / (hi - lo)

    def _horner(self, t: float) -> float:
        acc = 0.0
        for ck in reversed(self.coef):
            acc = acc * t + ck
        return acc

    def _horner_deriv(self, t: float) -> float:
        acc = 0.0
        for k in range(len(self.coef) - 1, 0, -1):
            acc = acc * t + k * self.coef[k]
        lo, hi = self.fit_domain
        return acc * 2.0 / (hi - lo)

    def __call__(self, x: float) -> float:
        return self._horner(self._scale(x, strict=True))

    def deriv(self, x: float) -> float:
        """First derivative with respect to the unscaled variable."""
        return self._horner_deriv(self._scale(x, strict=True))

    def eval_extended(self, x: float) -> float:
        """Globally smooth evaluation: polynomial inside the fit domain,
        C1 linear continuation beyond it (used by the optimizer, whose
        iterates may leave the physiological band)."""
        lo, hi = self.fit_domain
        if x < lo:
            return self._horner(-1.0) + self._horner_deriv(-1.0) * (x - lo)
        if x > hi:
            return self._horner(1.0) + self._horner_deriv(1.0) * (x - hi)
        return self._horner(self._scale(x, strict=False))

    def deriv_extended(self, x: float) -> float:
        lo, hi = self.fit_domain
        if x < lo:
            return self._horner_deriv(-1.0)
        if x > hi:
            return self._horner_deriv(1.0)
        return self._horner_deriv(self._scale(x, strict=False))


def default_fv_domain(params: MuscleParams) -> tuple[float, float]:
    """Pole-free force-velocity fit interval [m/s].

    The printed rational branches have poles at ``-v_max/K`` and
    ``+v_max/(7.56 K)``; the fit covers a symmetric-margin band inside
    them, which also bounds the physiological CE-velocity range used by
    the optimization.
    """
    vm = params.v_max_abs
    return (-0.6 * vm / params.K, 0.6 * vm / (7.56 * params.K))


def default_fse_domain(params: MuscleParams) -> tuple[float, float]:
    """Series-elastic fit interval: slightly slack through 2x reference strain."""
    return (params.l_slack * (1.0 - 0.05),
            params.l_slack * (1.0 + 2.0 * params.eps_ref))


def _fit_poly(x: np.ndarray, y: np.ndarray, degree: int,
              lo: float, hi: float) -> tuple[float, ...]:
    t = (2.0 * x - lo - hi) / (hi - lo)
    # Vandermonde least squares in the scaled variable
    V = np.vander(t, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return tuple(coef)

def fit_smooth_curves(params: MuscleParams,
                      fv_domain: tuple[float, float] | None = None,
                      fse_domain: tuple[float, float] | None = None,
                      tol: float = 0.02,
                      degree: int = 9,
                      grid: int = 2001) -> tuple[SmoothCurveFit, SmoothCurveFit]:
    """Fit smooth surrogates for f_v and f_se by dense least squares.

    Returns ``(fv_fit, fse_fit)``.  The recorded ``max_rel_error`` is the
    maximum of ``|fit - exact| / max(|exact|, 1)`` on a grid twice as
    dense as the fit grid; exceeding ``tol`` raises :class:`FitError`
    carrying the achieved error.
    """
    fv_domain = fv_domain or default_fv_domain(params)
    fse_domain = fse_domain or default_fse_domain(params)

    fits = []
    for curve_id, (lo, hi), fn in (
        ("f_v", fv_domain, lambda v: _fv_piecewise(params, v)),
        ("f_se", fse_domain, lambda l: _fse_piecewise(params, l)),
    ):
        x = np.linspace(lo, hi, grid)
        y = np.array([fn(v) for v in x])
        coef = _fit_poly(x, y, degree, lo, hi)
        fit = SmoothCurveFit(curve_id, coef, (lo, hi), 0.0)
        xc = np.linspace(lo, hi, 2 * grid + 1)
        err = max(abs(fit(v) - fn(v)) / max(abs(fn(v)), 1.0) for v in xc)
        if err > tol:
            raise FitError(
                f"{curve_id} fit reached {err:.3e} > tol {tol:.3e} "
                f"(degree {degree})", achieved=err)
        # Endpoint slopes drive the linear continuation used outside the
        # fit domain; they must preserve monotonicity or the continuation
        # would reopen force at extreme rates/strains.
        dlo, dhi = fit.deriv(lo), fit.deriv(hi)
        if curve_id == "f_v" and (dlo >= 0.0 or dhi >= 0.0):
            raise FitError(
                f"f_v fit endpoint slopes ({dlo:.3e}, {dhi:.3e}) are not "
                "both negative; adjust degree or domain", achieved=err)
        if curve_id == "f_se" and dhi <= 0.0:
            raise FitError(
                f"f_se fit right endpoint slope {dhi:.3e} is not positive; "
                "adjust degree or domain", achieved=err)
        fits.append(SmoothCurveFit(curve_id, coef, (lo, hi), float(err)))
    return fits[0], fits[1]
