"""Scenario descriptions (model, cost, start, warm start, schedule) as data.

Builders construct the shipped scenarios in code; the same configs live as
YAML files next to this module and round-trip through :func:`load_config` /
:func:`save_config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from ..contact import DISC, HALF_PLANE, ContactPair, PressureFieldGeom, total_contact_forces
from ..ilqr import CostSpec, SolverOptions
from ..multibody import (
    PLANAR,
    JointSpec,
    LinkSpec,
    ModelError,
    MultibodyModel,
    bias_forces,
    forward_kinematics,
    gravity_compensation,
    site_kinematics,
)

POSITION = "position"
VELOCITY = "velocity"
WARM_STARTS = ("zeros", "gravity_compensation", "hold_position", "file")
V_DES_RANGE = (0.0, 2.0)


class ConfigError(ValueError):
    """Invalid scenario description (syntax, unknown key or bad reference)."""


@dataclass(frozen=True)
class WeightBlock:
    """Diagonal weights shared by a group of state entries.

    ``part`` selects positions or velocities of the listed coordinates.
    """

    name: str
    coordinates: tuple
    part: str
    running: float
    terminal: float


@dataclass(frozen=True)
class CostConfig:
    blocks: tuple
    control_weight: float = 0.01


@dataclass(frozen=True)
class NominalConfig:
    """Nominal state recipe.

    Positions default to the initial state and velocities to zero.
    ``targets`` / ``velocities`` override single coordinates. When
    ``advance_coordinate`` is set, that coordinate's nominal position moves
    at ``advance_speed`` (m/s) and its nominal velocity equals that speed.
    """

    targets: dict = field(default_factory=dict)
    velocities: dict = field(default_factory=dict)
    advance_coordinate: str | None = None
    advance_speed: float = 0.0


@dataclass(frozen=True)
class InitialState:
    q: dict
    v: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WarmStart:
    kind: str = "zeros"
    path: str | None = None  # CSV of inputs for kind == "file", relative to the config file


@dataclass(frozen=True)
class RecedingHorizon:
    window: int
    shift: int
    resolves: int


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    model: MultibodyModel
    initial_state: InitialState
    cost: CostConfig
    nominal: NominalConfig
    warm_start: WarmStart
    horizon: int
    solver: SolverOptions = SolverOptions()
    receding: RecedingHorizon | None = None
    description: str = ""

    # -- derived quantities -------------------------------------------------
    def x0(self) -> np.ndarray:
        names = self.model.coord_names
        q = [float(self.initial_state.q.get(n, 0.0)) for n in names]
        v = [float(self.initial_state.v.get(n, 0.0)) for n in names]
        return np.array(q + v)

    def cost_spec(self) -> CostSpec:
        names = self.model.coord_names
        n = len(names)
        Q = np.zeros(2 * n)
        Qf = np.zeros(2 * n)
        for b in self.cost.blocks:
            for c in b.coordinates:
                i = names.index(c) + (n if b.part == VELOCITY else 0)
                Q[i] = b.running
                Qf[i] = b.terminal
        x = self.x0()
        nom = np.concatenate([x[:n], np.zeros(n)])
        rate = np.zeros(2 * n)
        for c, val in self.nominal.targets.items():
            nom[names.index(c)] = val
        for c, val in self.nominal.velocities.items():
            nom[n + names.index(c)] = val
        if self.nominal.advance_coordinate is not None:
            i = names.index(self.nominal.advance_coordinate)
            rate[i] = self.nominal.advance_speed * self.model.timestep
            nom[n + i] = self.nominal.advance_speed
        R = np.full(self.model.n_u, float(self.cost.control_weight))
        return CostSpec(Q, R, Qf, nom, rate)

    @property
    def steps(self) -> int:
        """Length of one optimization window."""
        return self.receding.window if self.receding is not None else self.horizon

    def initial_inputs(self, base_dir: str | Path | None = None) -> np.ndarray:
        """Warm-start input sequence for the first window."""
        model, N = self.model, self.steps
        q0 = self.x0()[: model.n_q]
        kind = self.warm_start.kind
        if kind == "zeros":
            return np.zeros((N, model.n_u))
        if kind == "gravity_compensation":
            return np.tile(gravity_compensation(model, q0), (N, 1))
        if kind == "hold_position":
            return np.tile(hold_torques(model, q0), (N, 1))
        path = Path(self.warm_start.path)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except OSError as err:
            raise ConfigError(f"warm-start file {str(path)!r}: {err}") from err
        if data.shape[1] != model.n_u:
            raise ConfigError(f"warm-start file {str(path)!r}: expected {model.n_u} columns, got {data.shape[1]}")
        if data.shape[0] < N:
            data = np.concatenate([data, np.repeat(data[-1:], N - data.shape[0], axis=0)])
        return data[:N].copy()

    def with_overrides(self, v_des=None, horizon=None, max_iterations=None, resolves=None) -> "ScenarioConfig":
        cfg = self
        if v_des is not None:
            if cfg.nominal.advance_coordinate is None:
                raise ConfigError(f"scenario {cfg.name!r} has no advancing target; --v-des does not apply")
            cfg = replace(cfg, nominal=replace(cfg.nominal, advance_speed=float(v_des)))
        if horizon is not None:
            if cfg.receding is not None:
                cfg = replace(cfg, receding=replace(cfg.receding, window=int(horizon)))
            else:
                cfg = replace(cfg, horizon=int(horizon))
        if max_iterations is not None:
            try:
                cfg = replace(cfg, solver=replace(cfg.solver, max_iterations=int(max_iterations)))
            except ValueError as err:
                raise ConfigError(f"solver: {err}") from None
        if resolves is not None:
            if cfg.receding is None:
                raise ConfigError(f"scenario {cfg.name!r} is not a receding-horizon scenario; --resolves does not apply")
            cfg = replace(cfg, receding=replace(cfg.receding, resolves=int(resolves)))
        validate_config(cfg)
        return cfg


def hold_torques(model: MultibodyModel, q) -> np.ndarray:
    """Least-squares actuator torques that keep posture ``q`` at rest, with the
    contact forces it produces at zero velocity."""
    v = np.zeros(model.n_v)
    _, gen = total_contact_forces(model, q, v)
    needed = bias_forces(model, q, v) - np.asarray(gen, dtype=float)
    S = model.actuation_matrix()
    return np.linalg.lstsq(S.T, needed, rcond=None)[0]


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Semantic checks beyond what the model constructor enforces."""
    names = cfg.model.coord_names
    seen = {}
    for b in cfg.cost.blocks:
        if b.part not in (POSITION, VELOCITY):
            raise ConfigError(f"cost block {b.name!r}: part must be 'position' or 'velocity', not {b.part!r}")
        if b.running < 0 or b.terminal < 0:
            raise ConfigError(f"cost block {b.name!r}: weights must be nonnegative")
        for c in b.coordinates:
            if c not in names:
                raise ConfigError(f"cost block {b.name!r}: unknown coordinate {c!r}")
            key = (c, b.part)
            if key in seen:
                raise ConfigError(f"cost block {b.name!r}: {b.part} of {c!r} already weighted by block {seen[key]!r}")
            seen[key] = b.name
    missing = [f"{c}.{p}" for p in (POSITION, VELOCITY) for c in names if (c, p) not in seen]
    if missing:
        raise ConfigError(f"cost blocks leave state entries unweighted: {missing}")
    if not cfg.cost.control_weight > 0:
        raise ConfigError("cost.control_weight must be positive")
    for section, mapping in (("initial_state.q", cfg.initial_state.q), ("initial_state.v", cfg.initial_state.v),
                             ("nominal.targets", cfg.nominal.targets), ("nominal.velocities", cfg.nominal.velocities)):
        for c, val in mapping.items():
            if c not in names:
                raise ConfigError(f"{section}: unknown coordinate {c!r}")
            if not math.isfinite(val):
                raise ConfigError(f"{section}: value for {c!r} must be finite")
    adv = cfg.nominal.advance_coordinate
    if adv is not None:
        if adv not in names:
            raise ConfigError(f"nominal.advance_coordinate: unknown coordinate {adv!r}")
        lo, hi = V_DES_RANGE
        if not lo <= cfg.nominal.advance_speed <= hi:
            raise ConfigError(f"nominal.advance_speed (v_des) must lie in [{lo}, {hi}], got {cfg.nominal.advance_speed}")
    if cfg.warm_start.kind not in WARM_STARTS:
        raise ConfigError(f"warm_start.kind must be one of {WARM_STARTS}, got {cfg.warm_start.kind!r}")
    if cfg.warm_start.kind == "file" and not cfg.warm_start.path:
        raise ConfigError("warm_start.path is required for kind 'file'")
    if cfg.horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if cfg.receding is not None:
        r = cfg.receding
        if r.window < 1 or r.resolves < 1 or not 0 < r.shift <= r.window:
            raise ConfigError("receding: need window >= 1, resolves >= 1 and 0 < shift <= window")
    return cfg


# -- builders ------------------------------------------------------------------


def _equilibrium_depth(pair: ContactPair, load: float) -> float:
    from ..contact import elastic_force

    return brentq(lambda d: elastic_force(pair, d) - load, 1e-12, pair.a.radius, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def _two_link_ik(base, target, l1, l2, elbow_sign):
    dx, dy = target[0] - base[0], target[1] - base[1]
    c2 = (dx * dx + dy * dy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise ModelError("arm cannot reach the requested contact point")
    q2 = elbow_sign * math.acos(c2)
    q1 = math.atan2(dy, dx) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return q1, q2


def build_ball_push(
    variant: str = "forward",
    *,
    link_lengths=(0.4, 0.4, 0.25),
    link_masses=(1.2, 0.9, 0.5),
    discs_per_link: int = 2,
    disc_radius: float = 0.045,
    base=(-0.45, 0.45),
    contact_angle: float = 2.7,
    wrist_angle: float = -0.6,
    gap: float = 0.01,
    approach_speed: float = 1.0,
) -> ScenarioConfig:
    """Planar 3-link arm pushing a free ball on compliant ground.

    The arm starts ``gap`` metres from the ball, its last disc moving toward
    the ball centre at ``approach_speed`` with the wrist link orientation
    ``wrist_angle`` held fixed. ``variant`` is ``"forward"`` (ball +0.2 m in
    x) or ``"lift"`` (ball +0.2 m in y, horizontal position unweighted).
    """
    if variant not in ("forward", "lift"):
        raise ConfigError(f"unknown ball-push variant {variant!r}")
    R, ball_mass = 0.1, 0.258
    names = ("shoulder", "elbow", "wrist")
    links, geoms = [], []
    for i, (length, mass) in enumerate(zip(link_lengths, link_masses)):
        link = f"link{i + 1}"
        sites = tuple((f"{link}_disc{k}", (length * (k + 1) / discs_per_link, 0.0)) for k in range(discs_per_link))
        links.append(LinkSpec(link, mass, mass * length * length / 12.0, (length / 2.0, 0.0), sites))
        for site, _ in sites:
            geoms.append(PressureFieldGeom(site, DISC, math.inf, 0.0, 0.5, 0.4, site=site, radius=disc_radius))
    links.append(LinkSpec("ball", ball_mass, 2.0 / 3.0 * ball_mass * R * R, (0.0, 0.0), (("ball_center", (0.0, 0.0)),)))
    ball = PressureFieldGeom("ball", DISC, 5e6, 5.0, 0.3, 0.2, site="ball_center", radius=R)
    ground = PressureFieldGeom("ground", HALF_PLANE, 5e6, 0.0, 0.3, 0.2)
    geoms += [ball, ground]
    joints = [JointSpec(names[0], "revolute", "world", "link1", origin=tuple(base))]
    for i in (1, 2):
        joints.append(JointSpec(names[i], "revolute", f"link{i}", f"link{i + 1}", origin=(link_lengths[i - 1], 0.0)))
    joints.append(JointSpec("ball", PLANAR, "world", "ball", actuated=False))
    pairs = tuple((g.name, "ball") for g in geoms[:-2]) + (("ball", "ground"),)
    model = MultibodyModel(links, joints, geoms, timestep=0.01, contact_pairs_spec=pairs)

    g = -model.gravity[1]
    yb = R - _equilibrium_depth(ContactPair(ball, ground), ball_mass * g)
    # last disc centre just outside the ball, wrist link at a fixed heading
    reach = R + disc_radius + gap
    tip = (reach * math.cos(contact_angle), yb + reach * math.sin(contact_angle))
    l1, l2, l3 = link_lengths
    wrist_pos = (tip[0] - l3 * math.cos(wrist_angle), tip[1] - l3 * math.sin(wrist_angle))
    q1, q2 = _two_link_ik(base, wrist_pos, l1, l2, -1.0)
    q3 = wrist_angle - q1 - q2
    # joint rates moving the wrist link without rotating it
    vx = -approach_speed * math.cos(contact_angle)
    vy = -approach_speed * math.sin(contact_angle)
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    j11, j12, j21, j22 = -l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12
    det = j11 * j22 - j12 * j21
    dq1 = (j22 * vx - j12 * vy) / det
    dq2 = (-j21 * vx + j11 * vy) / det
    initial = InitialState(
        q={"shoulder": q1, "elbow": q2, "wrist": q3, "ball_x": 0.0, "ball_y": yb, "ball_theta": 0.0},
        v={"shoulder": dq1, "elbow": dq2, "wrist": -dq1 - dq2},
    )

    forward = variant == "forward"
    blocks = (
        WeightBlock("joint_angles", names, POSITION, 0.0, 0.0),
        WeightBlock("ball_orientation", ("ball_theta",), POSITION, 0.0, 0.0),
        WeightBlock("ball_horizontal", ("ball_x",), POSITION, 100.0 if forward else 0.0, 100.0 if forward else 0.0),
        WeightBlock("ball_vertical", ("ball_y",), POSITION, 100.0, 100.0),
        WeightBlock("joint_velocities", names, VELOCITY, 0.1, 0.1),
        WeightBlock("ball_angular_velocity", ("ball_theta",), VELOCITY, 0.0, 1.0),
        WeightBlock("ball_linear_velocity", ("ball_x", "ball_y"), VELOCITY, 0.0, 1.0),
    )
    targets = {"ball_x": 0.2, "ball_y": yb} if forward else {"ball_x": 0.0, "ball_y": yb + 0.2}
    cfg = ScenarioConfig(
        name=f"ball_push_{variant}",
        model=model,
        initial_state=initial,
        cost=CostConfig(blocks, 0.01),
        nominal=NominalConfig(targets=targets),
        warm_start=WarmStart("gravity_compensation"),
        horizon=50,
        solver=SolverOptions(max_iterations=100),
        description=(
            "Planar 3-link arm (rigid collision discs along each link) and a free ball on compliant ground. "
            "Joint angles and ball orientation are unweighted; ball position dominates. "
            "The arm starts just short of the ball and moving toward it."
        ),
    )
    return validate_config(cfg)


def build_walker(
    v_des: float = 0.5,
    *,
    body_mass: float = 6.0,
    body_size=(0.4, 0.1),
    thigh=(0.2, 1.0),
    shank=(0.2, 0.5),
    hip_offset: float = 0.0,
    hip_angle: float = 0.2,
    knee_angle: float = 0.15,
    foot_radius: float = 0.02,
    body_radius: float = 0.1,
    initial_speed: float = 0.0,
) -> ScenarioConfig:
    """Planar two-legged walker: a floating body with a right and a left leg
    (hip and knee each), mirror images of one another.

    ``thigh``/``shank`` are (length, mass). The right hip sits at
    ``-hip_offset`` and is turned by ``-hip_angle``; the left leg mirrors it.
    ``initial_speed`` starts the body moving forward with both feet planted.
    """
    lo, hi = V_DES_RANGE
    if not lo <= v_des <= hi:
        raise ConfigError(f"v_des must lie in [{lo}, {hi}], got {v_des}")
    (thigh_len, thigh_mass), (shank_len, shank_mass) = thigh, shank
    length, height = body_size
    links = [
        LinkSpec(
            "body", body_mass, body_mass * (length**2 + height**2) / 12.0, (0.0, 0.0), (("body_center", (0.0, 0.0)),)
        )
    ]
    ground = PressureFieldGeom("ground", HALF_PLANE, 5e6, 0.0, 0.6, 0.5)
    geoms = [PressureFieldGeom("body", DISC, 1e4, 0.0, 0.6, 0.5, site="body_center", radius=body_radius), ground]
    joints = [JointSpec("base", PLANAR, "world", "body", actuated=False)]
    q_stand = {}
    for leg, side in (("right", -1.0), ("left", 1.0)):
        links.append(
            LinkSpec(f"{leg}_thigh", thigh_mass, thigh_mass * thigh_len**2 / 12.0, (thigh_len / 2.0, 0.0))
        )
        links.append(
            LinkSpec(
                f"{leg}_shank",
                shank_mass,
                shank_mass * shank_len**2 / 12.0,
                (shank_len / 2.0, 0.0),
                ((f"{leg}_foot", (shank_len, 0.0)),),
            )
        )
        geoms.append(
            PressureFieldGeom(f"{leg}_foot", DISC, math.inf, 0.0, 0.6, 0.5, site=f"{leg}_foot", radius=foot_radius)
        )
        joints.append(
            JointSpec(
                f"{leg}_hip", "revolute", "body", f"{leg}_thigh", origin=(side * hip_offset, 0.0), angle=-math.pi / 2
            )
        )
        joints.append(JointSpec(f"{leg}_knee", "revolute", f"{leg}_thigh", f"{leg}_shank", origin=(thigh_len, 0.0)))
        q_stand[f"{leg}_hip"] = side * hip_angle
        q_stand[f"{leg}_knee"] = -side * knee_angle
    pairs = (("body", "ground"), ("right_foot", "ground"), ("left_foot", "ground"))
    model = MultibodyModel(links, joints, geoms, timestep=0.005, contact_pairs_spec=pairs)

    # mirror symmetry splits the weight evenly between the feet
    total = body_mass + 2.0 * (thigh_mass + shank_mass)
    depth = _equilibrium_depth(ContactPair(geoms[2], ground), 0.5 * total * -model.gravity[1])
    q = np.zeros(model.n_q)
    for name, value in q_stand.items():
        q[model.coord_index(name)] = value
    foot_y = forward_kinematics(model, q).site_position("right_foot")[1]
    base_y = foot_radius - depth - foot_y
    q[1] = base_y
    initial_v = {}
    if initial_speed:
        # joint rates that keep both feet fixed while the body translates
        v = np.zeros(model.n_v)
        v[0] = initial_speed
        for leg in ("right", "left"):
            cols = [model.coord_index(f"{leg}_hip"), model.coord_index(f"{leg}_knee")]
            _, _, J = site_kinematics(model, q, np.zeros(model.n_v), f"{leg}_foot")
            v[cols] = np.linalg.solve(J[:, cols], -J[:, :3] @ v[:3])
        initial_v = {name: float(v[i]) for i, name in enumerate(model.coord_names) if v[i] != 0.0}
    initial = InitialState(q={"base_x": 0.0, "base_y": float(base_y), "base_theta": 0.0, **q_stand}, v=initial_v)

    joints_q = tuple(q_stand)
    blocks = (
        WeightBlock("base_orientation", ("base_theta",), POSITION, 2.0, 10.0),
        WeightBlock("base_position", ("base_x", "base_y"), POSITION, 1.0, 5.0),
        WeightBlock("joint_angles", joints_q, POSITION, 0.0, 0.1),
        WeightBlock("base_angular_velocity", ("base_theta",), VELOCITY, 0.01, 1.0),
        WeightBlock("base_linear_velocity", ("base_x", "base_y"), VELOCITY, 0.01, 1.0),
        WeightBlock("joint_velocities", joints_q, VELOCITY, 0.01, 0.01),
    )
    cfg = ScenarioConfig(
        name="walker",
        model=model,
        initial_state=initial,
        cost=CostConfig(blocks, 0.01),
        nominal=NominalConfig(advance_coordinate="base_x", advance_speed=float(v_des)),
        warm_start=WarmStart("hold_position"),
        horizon=40,
        solver=SolverOptions(max_iterations=100),
        receding=RecedingHorizon(window=40, shift=4, resolves=100),
        description=(
            "Planar walker: floating body (x, y, pitch) with mirrored right and left legs, hip and knee each. "
            "Weight blocks regroup the quadruped ones for the plane: the 3D orientation block becomes "
            "the single pitch angle (an interpretation, not an equivalence), base position covers x and height."
        ),
    )
    return validate_config(cfg)


BUILTIN = {
    "ball_push_forward": lambda: build_ball_push("forward"),
    "ball_push_lift": lambda: build_ball_push("lift"),
    "walker": lambda: build_walker(0.5),
}


def shipped_path(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    return Path(str(resources.files(__package__).joinpath(f"{name}.yaml")))


from .io import dump_config, load_config, parse_config, save_config  # noqa: E402

__all__ = [
    "BUILTIN",
    "ConfigError",
    "CostConfig",
    "InitialState",
    "NominalConfig",
    "RecedingHorizon",
    "ScenarioConfig",
    "WarmStart",
    "WeightBlock",
    "build_ball_push",
    "build_walker",
    "dump_config",
    "hold_torques",
    "load_config",
    "parse_config",
    "save_config",
    "shipped_path",
    "validate_config",
]
