"""Eight-domain hybrid walking model and its virtual constraints.

The gait cycle is a directed cycle over the vertices

    ds2_r -> ds3_r -> ss2_r -> ss1_r -> ds2_l -> ds3_l -> ss2_l -> ss1_l

named by stance side and contact-point count: heel strike (ds2, two
points on different feet), foot flat (ds3, three points), single support
on a flat foot (ss2) and toe pivot (ss1).  Touchdown guards watch the
height of the landing point and trigger a plastic impact; liftoff guards
watch the vanishing normal force and keep the state continuous.

Desired outputs are Bezier polynomials in a per-domain normalized phase

    s = (delta_p_hip(q) - delta_plus) / (v_hip * duration)

where ``delta_plus`` is the forward-hip value at domain entry, so s runs
0 -> 1 over the domain when the hip advances at the regulated speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .model import PlanarBiped, Q_INDEX, contact_rows

__all__ = [
    "DomainSpec",
    "EdgeSpec",
    "DirectedCycle",
    "BezierCurve",
    "OutputSet",
    "build_gamma",
    "default_domain_config",
    "bezier_eval",
    "bezier_deriv",
    "tau",
    "domain_phase",
    "outputs_eval",
    "invariance_residual",
    "guard_eval",
]

_Y2_TEMPLATES = {
    "ds2": ("hip_st", "knee_st", "ankle_st", "hip_sw", "knee_sw"),
    "ds3": ("hip_st", "knee_st", "hip_sw", "knee_sw"),
    "ss2": ("hip_st", "knee_st", "hip_sw", "knee_sw", "ankle_sw"),
    "ss1": ("hip_st", "knee_st", "ankle_st", "hip_sw", "knee_sw", "ankle_sw"),
}

_CONTACTS = {
    ("ds2", "r"): ("heel_r", "toe_l"),
    ("ds3", "r"): ("heel_r", "toe_r", "toe_l"),
    ("ss2", "r"): ("heel_r", "toe_r"),
    ("ss1", "r"): ("toe_r",),
    ("ds2", "l"): ("heel_l", "toe_r"),
    ("ds3", "l"): ("heel_l", "toe_l", "toe_r"),
    ("ss2", "l"): ("heel_l", "toe_l"),
    ("ss1", "l"): ("toe_l",),
}


def _resolve_joint(template: str, stance: str) -> str:
    """Map a st/sw output template name to a model joint name."""
    base, role = template.rsplit("_", 1)
    if role == "st":
        return f"{base}_{stance}"
    if role == "sw":
        return f"{base}_{'l' if stance == 'r' else 'r'}"
    raise ConfigError(f"bad output template {template!r}")


@dataclass(frozen=True)
class DomainSpec:
    vertex_id: str                      # e.g. "ss2_r"
    stance: str                         # "l" or "r"
    contacts: tuple[str, ...]
    y2_joints: tuple[str, ...]          # resolved model joint names
    rd1: bool                           # has the velocity-regulating output
    actuated: tuple[bool, ...] = (True,) * 6

    @property
    def n_outputs(self) -> int:
        return len(self.y2_joints) + (1 if self.rd1 else 0)


@dataclass(frozen=True)
class EdgeSpec:
    edge_id: int                        # 1..8
    source: str
    target: str
    guard_kind: str                     # "touchdown" or "liftoff"
    guard_point: str                    # contact point watched by the guard
    reset: str                          # "impact" or "smooth"
    invariance: str                     # "Z->PZ", "PZ->Z", "Z->Z"


@dataclass(frozen=True)
class DirectedCycle:
    vertices: tuple[DomainSpec, ...]
    edges: tuple[EdgeSpec, ...]
    bezier_degree: int = 5

    def vertex(self, vertex_id: str) -> DomainSpec:
        for v in self.vertices:
            if v.vertex_id == vertex_id:
                return v
        raise ConfigError(f"unknown vertex {vertex_id!r}")

    def edge_from(self, vertex_id: str) -> EdgeSpec:
        for e in self.edges:
            if e.source == vertex_id:
                return e
        raise ConfigError(f"no outgoing edge from {vertex_id!r}")

    def edge(self, edge_id: int) -> EdgeSpec:
        for e in self.edges:
            if e.edge_id == edge_id:
                return e
        raise ConfigError(f"unknown edge {edge_id}")


def default_domain_config() -> dict:
    """Built-in configuration mirroring ``defaults/domains.yaml``."""
    order = [("ds2", "r"), ("ds3", "r"), ("ss2", "r"), ("ss1", "r"),
             ("ds2", "l"), ("ds3", "l"), ("ss2", "l"), ("ss1", "l")]
    vertices = []
    for kind, stance in order:
        vertices.append({
            "id": f"{kind}_{stance}",
            "stance": stance,
            "contacts": list(_CONTACTS[(kind, stance)]),
            "outputs": list(_Y2_TEMPLATES[kind]),
            "rd1": kind != "ss1",
        })
    guard_cfg = {
        "ds2": ("touchdown", "toe_st", "impact"),
        "ds3": ("liftoff", "toe_sw", "smooth"),
        "ss2": ("liftoff", "heel_st", "smooth"),
        "ss1": ("touchdown", "heel_sw", "impact"),
    }
    edges = []
    for i, (kind, stance) in enumerate(order):
        gk, gp, reset = guard_cfg[kind]
        target = order[(i + 1) % 8]
        eid = i + 1
        invariance = ("Z->PZ" if eid in (3, 7)
                      else "PZ->Z" if eid in (4, 8) else "Z->Z")
        edges.append({
            "id": eid,
            "source": f"{kind}_{stance}",
            "target": f"{target[0]}_{target[1]}",
            "guard": {"kind": gk, "point": _resolve_joint(gp, stance)},
            "reset": reset,
            "invariance": invariance,
        })
    return {"schema": "musclegait/domains/v1",
            "bezier_degree": 5,
            "vertices": vertices,
            "edges": edges}


_EXPECT_POINTS = {"ds2": 2, "ds3": 3, "ss2": 2, "ss1": 1}


def build_gamma(config: dict | None = None) -> DirectedCycle:
    """Construct and validate the walking domain graph."""
    config = config or default_domain_config()
    try:
        vspecs = []
        for v in config["vertices"]:
            stance = v["stance"]
            y2 = tuple(_resolve_joint(t, stance) for t in v["outputs"])
            vspecs.append(DomainSpec(
                vertex_id=v["id"], stance=stance,
                contacts=tuple(v["contacts"]), y2_joints=y2,
                rd1=bool(v["rd1"]),
                actuated=tuple(v.get("actuated", [True] * 6))))
        especs = tuple(EdgeSpec(
            edge_id=int(e["id"]), source=e["source"], target=e["target"],
            guard_kind=e["guard"]["kind"], guard_point=e["guard"]["point"],
            reset=e["reset"], invariance=e["invariance"])
            for e in config["edges"])
    except KeyError as exc:
        raise ConfigError(f"domain config missing key {exc}") from exc

    gamma = DirectedCycle(tuple(vspecs), especs,
                          int(config.get("bezier_degree", 5)))

    # single simple directed cycle
    if len(gamma.vertices) != len(gamma.edges):
        raise ConfigError("vertex and edge counts differ")
    seen = set()
    vid = gamma.vertices[0].vertex_id
    for _ in range(len(gamma.edges)):
        e = gamma.edge_from(vid)
        if e.source in seen:
            raise ConfigError("domain graph is not a single cycle")
        seen.add(e.source)
        vid = e.target
    if vid != gamma.vertices[0].vertex_id or len(seen) != len(gamma.vertices):
        raise ConfigError("domain graph is not a single cycle")

    for v in gamma.vertices:
        kind = v.vertex_id.split("_")[0]
        if kind in _EXPECT_POINTS and len(v.contacts) != _EXPECT_POINTS[kind]:
            raise ConfigError(
                f"{v.vertex_id} must have {_EXPECT_POINTS[kind]} contact points")
        contact_rows(v.contacts)  # validates point names
        if kind.startswith("ds"):
            sides = {p[-1] for p in v.contacts}
            if sides != {"l", "r"}:
                raise ConfigError(f"{v.vertex_id}: double support needs both feet")
    return gamma


# ---------------------------------------------------------------------------
# Bezier desired outputs
# ---------------------------------------------------------------------------

def bezier_eval(coef, s):
    """Bernstein-basis evaluation; works for numpy or jax scalars."""
    M = len(coef) - 1
    acc = 0.0
    for k in range(M + 1):
        acc = acc + math.comb(M, k) * coef[k] * s ** k * (1.0 - s) ** (M - k)
    return acc


def _bezier_diff_coef(coef):
    M = len(coef) - 1
    return [M * (coef[k + 1] - coef[k]) for k in range(M)]


def bezier_deriv(coef, s, order: int = 1):
    """Exact derivative of a Bezier curve with respect to its phase."""
    c = list(coef)
    for _ in range(order):
        if len(c) == 1:
            return 0.0 * s
        c = _bezier_diff_coef(c)
    return bezier_eval(c, s)


@dataclass(frozen=True)
class BezierCurve:
    coef: tuple[float, ...]

    @property
    def degree(self) -> int:
        return len(self.coef) - 1

    def __call__(self, s):
        return bezier_eval(self.coef, s)

    def deriv(self, s, order: int = 1):
        return bezier_deriv(self.coef, s, order)


@dataclass(frozen=True)
class OutputSet:
    """Desired-output data of one domain."""

    vertex_id: str
    v_hip: float                       # regulated forward hip speed [m/s]
    delta_plus: float                  # delta_p_hip at domain entry [m]
    duration: float                    # nominal domain duration [s]
    alpha: Mapping[str, BezierCurve]   # joint name -> desired curve

    def __post_init__(self):
        if self.v_hip <= 0:
            raise ConfigError("v_hip must be positive")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")


def tau(delta_p_hip: float, outputs: OutputSet) -> float:
    """Time-like phase (delta - delta_plus) / v_hip, zero at domain entry."""
    if outputs.v_hip <= 0:
        raise ConfigError("v_hip must be positive")
    return (delta_p_hip - outputs.delta_plus) / outputs.v_hip


def domain_phase(delta_p_hip: float, outputs: OutputSet,
                 clamp: bool = True) -> float:
    """Normalized Bezier argument tau / duration, optionally clamped to [0,1]."""
    s = tau(delta_p_hip, outputs) / outputs.duration
    if clamp:
        s = min(max(s, 0.0), 1.0)
    return s


def outputs_eval(model: PlanarBiped, domain: DomainSpec, outputs: OutputSet,
                 q, dq, clamp: bool = True):
    """Virtual-constraint values (y1, y2, dy2) at a state.

    ``y1`` is ``None`` for domains without the velocity output.  Outside
    the nominal phase interval the desired outputs hold their clamped
    endpoint value, so their phase derivative is zero there.
    """
    delta = model.delta_p_hip(q, domain.stance)
    ddelta = model.delta_p_hip_dot(q, dq, domain.stance)
    s_raw = tau(delta, outputs) / outputs.duration
    inside = 0.0 <= s_raw <= 1.0
    s = min(max(s_raw, 0.0), 1.0) if clamp else s_raw
    sdot = ddelta / (outputs.v_hip * outputs.duration)
    if clamp and not inside:
        sdot = 0.0
    y2 = np.empty(len(domain.y2_joints))
    dy2 = np.empty(len(domain.y2_joints))
    for i, joint in enumerate(domain.y2_joints):
        curve = outputs.alpha[joint]
        y2[i] = q[Q_INDEX[joint]] - curve(s)
        dy2[i] = dq[Q_INDEX[joint]] - curve.deriv(s) * sdot
    y1 = (ddelta - outputs.v_hip) if domain.rd1 else None
    return y1, y2, dy2


def invariance_residual(model: PlanarBiped, gamma: DirectedCycle,
                        edge: EdgeSpec, q, dq,
                        outputs_by_vertex: Mapping[str, OutputSet],
                        guard_tol: float = 1e-6) -> np.ndarray:
    """Impact-invariance residual of one edge at a pre-transition state.

    Applies the edge's reset and evaluates the target domain's outputs on
    the post-reset state: (y2, dy2) always, plus y1 when the target
    surface is the full zero-dynamics surface (every case except the
    e in {3,7} landings, whose target surface is the partial one).
    """
    target = gamma.vertex(edge.target)
    if edge.guard_kind == "touchdown":
        h = model.point_positions(q)[edge.guard_point][1]
        if abs(h) > max(guard_tol, 1e-6):
            raise InputError(
                f"edge {edge.edge_id}: guard point height {h:.2e} != 0")
    if edge.reset == "impact":
        dq_post = model.impact_map(q, dq, target.contacts)
    else:
        dq_post = np.asarray(dq, dtype=float)
    out = outputs_by_vertex[edge.target]
    y1, y2, dy2 = outputs_eval(model, target, out, q, dq_post, clamp=False)
    parts = [y2, dy2]
    if edge.invariance != "Z->PZ" and target.rd1:
        parts.append(np.array([y1]))
    return np.concatenate(parts)


def guard_eval(model: PlanarBiped, edge: EdgeSpec, q, dq=None,
               wrench: Mapping[str, tuple[float, float]] | None = None) -> float:
    """Signed guard value; the transition fires on a +/- zero crossing.

    Touchdown guards return the watched point's height.  Liftoff guards
    return that point's normal contact force, which requires the caller
    to pass the per-point wrench of the source domain.
    """
    if edge.guard_kind == "touchdown":
        return float(model.point_positions(q)[edge.guard_point][1])
    if wrench is None:
        raise InputError("liftoff guard needs the contact wrench")
    return float(wrench[edge.guard_point][1])
