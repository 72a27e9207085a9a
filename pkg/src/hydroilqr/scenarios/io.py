"""YAML reading and writing of :class:`ScenarioConfig`.

The grammar is a strict subset of YAML, documented in ``docs/config_format.md``.
Every mapping has a fixed key set; unknown keys are rejected with their line
and column.
"""

from __future__ import annotations

import math
from dataclasses import fields
from pathlib import Path

import yaml

from ..contact import PressureFieldGeom
from ..ilqr import SolverOptions
from ..multibody import JointSpec, LinkSpec, ModelError, MultibodyModel
from . import (
    ConfigError,
    CostConfig,
    InitialState,
    NominalConfig,
    RecedingHorizon,
    ScenarioConfig,
    WarmStart,
    WeightBlock,
    validate_config,
)

HEADER = "# hydroilqr scenario file (format: docs/config_format.md)\n"


# -- writing -------------------------------------------------------------------


def _vec(v):
    return [float(x) for x in v]


def _link(link: LinkSpec) -> dict:
    return {
        "name": link.name,
        "mass": link.mass,
        "inertia": link.inertia,
        "com_offset": _vec(link.com_offset),
        "collision_sites": [{"name": n, "offset": _vec(o)} for n, o in link.collision_sites],
    }


def _joint(j: JointSpec) -> dict:
    return {
        "name": j.name,
        "kind": j.kind,
        "parent": j.parent,
        "child": j.child,
        "origin": _vec(j.origin),
        "angle": j.angle,
        "axis": _vec(j.axis),
        "actuated": j.actuated,
        "effort_limit": j.effort_limit,
    }


def _geometry(g: PressureFieldGeom) -> dict:
    return {f.name: (_vec(getattr(g, f.name)) if f.name == "normal" else getattr(g, f.name)) for f in fields(g)}


def to_dict(cfg: ScenarioConfig) -> dict:
    m = cfg.model
    return {
        "name": cfg.name,
        "description": cfg.description,
        "model": {
            "timestep": m.timestep,
            "gravity": _vec(m.gravity),
            "friction_smoothing": m.friction_smoothing,
            "stiffness_smoothing": m.stiffness_smoothing,
            "links": [_link(x) for x in m.links],
            "joints": [_joint(x) for x in m.joints],
            "geometries": [_geometry(x) for x in m.geometries],
            "contact_pairs": None if m.contact_pairs_spec is None else [list(p) for p in m.contact_pairs_spec],
        },
        "initial_state": {"q": dict(cfg.initial_state.q), "v": dict(cfg.initial_state.v)},
        "cost": {
            "control_weight": cfg.cost.control_weight,
            "blocks": [
                {"name": b.name, "coordinates": list(b.coordinates), "part": b.part,
                 "running": b.running, "terminal": b.terminal}
                for b in cfg.cost.blocks
            ],
        },
        "nominal": {
            "targets": dict(cfg.nominal.targets),
            "velocities": dict(cfg.nominal.velocities),
            "advance_coordinate": cfg.nominal.advance_coordinate,
            "advance_speed": cfg.nominal.advance_speed,
        },
        "warm_start": {"kind": cfg.warm_start.kind, "path": cfg.warm_start.path},
        "horizon": cfg.horizon,
        "solver": {f.name: (list(getattr(cfg.solver, f.name)) if f.name == "linesearch" else getattr(cfg.solver, f.name))
                   for f in fields(cfg.solver)},
        "receding": None if cfg.receding is None else {
            "window": cfg.receding.window, "shift": cfg.receding.shift, "resolves": cfg.receding.resolves},
    }


def dump_config(cfg: ScenarioConfig) -> str:
    body = yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None, width=120, allow_unicode=True)
    return HEADER + body


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


# -- reading -------------------------------------------------------------------


def _marks(node, path=(), out=None):
    """Map every key/item path to its (line, column), 1-based."""
    out = {} if out is None else out
    out.setdefault(path, (node.start_mark.line + 1, node.start_mark.column + 1))
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (k.value,)
            out[key] = (k.start_mark.line + 1, k.start_mark.column + 1)
            _marks(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _marks(item, path + (i,), out)
    return out


class _Reader:
    def __init__(self, source: str, marks: dict):
        self.source = source
        self.marks = marks

    def where(self, path) -> str:
        dotted = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else str(p)) for i, p in enumerate(path))
        line = self.marks.get(tuple(path))
        loc = f"{self.source}:{line[0]}:{line[1]}" if line else self.source
        return f"{loc}: {dotted or '<document>'}"

    def fail(self, path, msg):
        raise ConfigError(f"{self.where(path)}: {msg}")

    def mapping(self, data, path, required, optional=()):
        if not isinstance(data, dict):
            self.fail(path, f"expected a mapping, got {type(data).__name__}")
        allowed = set(required) | set(optional)
        for key in data:
            if key not in allowed:
                self.fail(tuple(path) + (key,), f"unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
        for key in required:
            if key not in data:
                self.fail(path, f"missing required key {key!r}")
        return data

    def number(self, data, path, integer=False):
        if isinstance(data, bool) or not isinstance(data, int | float):
            self.fail(path, f"expected a number, got {data!r}")
        if integer:
            if not isinstance(data, int):
                self.fail(path, f"expected an integer, got {data!r}")
            return data
        return float(data)

    def optional_number(self, data, path):
        return None if data is None else self.number(data, path)

    def string(self, data, path, optional=False):
        if data is None and optional:
            return None
        if not isinstance(data, str):
            self.fail(path, f"expected a string, got {data!r}")
        return data

    def boolean(self, data, path):
        if not isinstance(data, bool):
            self.fail(path, f"expected true or false, got {data!r}")
        return data

    def vec2(self, data, path):
        if not isinstance(data, list) or len(data) != 2:
            self.fail(path, f"expected a list of two numbers, got {data!r}")
        return tuple(self.number(x, tuple(path) + (i,)) for i, x in enumerate(data))

    def seq(self, data, path):
        if not isinstance(data, list):
            self.fail(path, f"expected a list, got {type(data).__name__}")
        return [(x, tuple(path) + (i,)) for i, x in enumerate(data)]

    def coords(self, data, path):
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping of coordinate names to numbers")
        return {self.string(k, path): self.number(v, tuple(path) + (k,)) for k, v in data.items()}


def _read_model(r: _Reader, d, p):
    r.mapping(d, p, ["timestep", "links", "joints", "geometries"],
              ["gravity", "friction_smoothing", "stiffness_smoothing", "contact_pairs"])
    links = []
    for ld, lp in r.seq(d["links"], p + ("links",)):
        r.mapping(ld, lp, ["name", "mass", "inertia"], ["com_offset", "collision_sites"])
        sites = []
        for sd, sp in r.seq(ld.get("collision_sites", []) or [], lp + ("collision_sites",)):
            r.mapping(sd, sp, ["name", "offset"])
            sites.append((r.string(sd["name"], sp + ("name",)), r.vec2(sd["offset"], sp + ("offset",))))
        try:
            links.append(LinkSpec(
                r.string(ld["name"], lp + ("name",)),
                r.number(ld["mass"], lp + ("mass",)),
                r.number(ld["inertia"], lp + ("inertia",)),
                r.vec2(ld.get("com_offset", [0.0, 0.0]), lp + ("com_offset",)),
                tuple(sites),
            ))
        except ModelError as err:
            r.fail(lp, str(err))
    joints = []
    for jd, jp in r.seq(d["joints"], p + ("joints",)):
        r.mapping(jd, jp, ["name", "kind", "parent", "child"], ["origin", "angle", "axis", "actuated", "effort_limit"])
        joints.append(JointSpec(
            r.string(jd["name"], jp + ("name",)),
            r.string(jd["kind"], jp + ("kind",)),
            r.string(jd["parent"], jp + ("parent",)),
            r.string(jd["child"], jp + ("child",)),
            r.vec2(jd.get("origin", [0.0, 0.0]), jp + ("origin",)),
            r.number(jd.get("angle", 0.0), jp + ("angle",)),
            r.vec2(jd.get("axis", [1.0, 0.0]), jp + ("axis",)),
            r.boolean(jd.get("actuated", True), jp + ("actuated",)),
            r.optional_number(jd.get("effort_limit"), jp + ("effort_limit",)),
        ))
    geoms = []
    geom_fields = [f.name for f in fields(PressureFieldGeom)]
    for gd, gp in r.seq(d["geometries"], p + ("geometries",)):
        r.mapping(gd, gp, ["name", "kind", "modulus"], [f for f in geom_fields if f not in ("name", "kind", "modulus")])
        kw = {}
        for key, val in gd.items():
            kp = gp + (key,)
            if key in ("name", "kind"):
                kw[key] = r.string(val, kp)
            elif key == "site":
                kw[key] = r.string(val, kp, optional=True)
            elif key == "normal":
                kw[key] = r.vec2(val, kp)
            else:
                kw[key] = r.number(val, kp)
        try:
            geoms.append(PressureFieldGeom(**kw))
        except ValueError as err:
            r.fail(gp, str(err))
    pairs = d.get("contact_pairs")
    if pairs is not None:
        checked = []
        for pd, pp in r.seq(pairs, p + ("contact_pairs",)):
            if not isinstance(pd, list) or len(pd) != 2:
                r.fail(pp, "contact pair must be a list of two geometry names")
            checked.append((r.string(pd[0], pp + (0,)), r.string(pd[1], pp + (1,))))
        pairs = tuple(checked)
    kwargs = {}
    for key in ("friction_smoothing", "stiffness_smoothing"):
        if key in d:
            kwargs[key] = r.number(d[key], p + (key,))
    try:
        return MultibodyModel(
            tuple(links),
            tuple(joints),
            tuple(geoms),
            gravity=r.vec2(d.get("gravity", [0.0, -9.81]), p + ("gravity",)),
            timestep=r.number(d["timestep"], p + ("timestep",)),
            contact_pairs_spec=pairs,
            **kwargs,
        )
    except (ModelError, ValueError) as err:
        r.fail(p, str(err))


def _read(r: _Reader, d) -> ScenarioConfig:
    r.mapping(d, (), ["name", "model", "initial_state", "cost", "nominal", "warm_start", "horizon"],
              ["description", "solver", "receding"])
    model = _read_model(r, d["model"], ("model",))

    ip = ("initial_state",)
    r.mapping(d["initial_state"], ip, ["q"], ["v"])
    initial = InitialState(r.coords(d["initial_state"]["q"], ip + ("q",)),
                           r.coords(d["initial_state"].get("v"), ip + ("v",)))

    cp = ("cost",)
    r.mapping(d["cost"], cp, ["blocks"], ["control_weight"])
    blocks = []
    for bd, bp in r.seq(d["cost"]["blocks"], cp + ("blocks",)):
        r.mapping(bd, bp, ["name", "coordinates", "part", "running", "terminal"])
        blocks.append(WeightBlock(
            r.string(bd["name"], bp + ("name",)),
            tuple(r.string(c, cpath) for c, cpath in r.seq(bd["coordinates"], bp + ("coordinates",))),
            r.string(bd["part"], bp + ("part",)),
            r.number(bd["running"], bp + ("running",)),
            r.number(bd["terminal"], bp + ("terminal",)),
        ))
    cost = CostConfig(tuple(blocks), r.number(d["cost"].get("control_weight", 0.01), cp + ("control_weight",)))

    npth = ("nominal",)
    nd = r.mapping(d["nominal"] or {}, npth, [], ["targets", "velocities", "advance_coordinate", "advance_speed"])
    nominal = NominalConfig(
        r.coords(nd.get("targets"), npth + ("targets",)),
        r.coords(nd.get("velocities"), npth + ("velocities",)),
        r.string(nd.get("advance_coordinate"), npth + ("advance_coordinate",), optional=True),
        r.number(nd.get("advance_speed", 0.0), npth + ("advance_speed",)),
    )

    wp = ("warm_start",)
    wd = r.mapping(d["warm_start"], wp, ["kind"], ["path"])
    warm = WarmStart(r.string(wd["kind"], wp + ("kind",)), r.string(wd.get("path"), wp + ("path",), optional=True))

    solver = SolverOptions()
    if d.get("solver") is not None:
        sp = ("solver",)
        names = [f.name for f in fields(SolverOptions)]
        r.mapping(d["solver"], sp, [], names)
        kw = {}
        for key, val in d["solver"].items():
            kp = sp + (key,)
            if key == "linesearch":
                kw[key] = tuple(r.number(x, xp) for x, xp in r.seq(val, kp))
            elif key == "max_iterations":
                kw[key] = r.number(val, kp, integer=True)
            elif key == "simple_decrease":
                kw[key] = r.boolean(val, kp)
            else:
                kw[key] = r.number(val, kp)
        try:
            solver = SolverOptions(**kw)
        except ValueError as err:
            r.fail(sp, str(err))

    receding = None
    if d.get("receding") is not None:
        rp = ("receding",)
        rd = r.mapping(d["receding"], rp, ["window", "shift", "resolves"])
        receding = RecedingHorizon(*(r.number(rd[k], rp + (k,), integer=True) for k in ("window", "shift", "resolves")))

    cfg = ScenarioConfig(
        name=r.string(d["name"], ("name",)),
        model=model,
        initial_state=initial,
        cost=cost,
        nominal=nominal,
        warm_start=warm,
        horizon=r.number(d["horizon"], ("horizon",), integer=True),
        solver=solver,
        receding=receding,
        description=r.string(d.get("description", ""), ("description",)),
    )
    try:
        return validate_config(cfg)
    except ConfigError as err:
        raise ConfigError(f"{r.source}: {err}") from None


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse scenario YAML text."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as err:
        mark = err.problem_mark or err.context_mark
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: parse error: {err.problem or err.context}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"{source}: parse error: {err}") from None
    if node is None:
        raise ConfigError(f"{source}: empty scenario file")
    return _read(_Reader(source, _marks(node)), data)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from None
    return parse_config(text, str(path))
