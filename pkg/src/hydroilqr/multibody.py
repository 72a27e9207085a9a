"""Planar rigid-body trees in manipulator form and their discrete step.

Spatial quantities are planar (angular, x, y) triples expressed in world
coordinates at the world origin, which keeps the composite-rigid-body and
Newton-Euler recursions free of frame transforms. All routines accept
positions and velocities as sequences of floats or :class:`~hydroilqr.dual.Dual`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dual as dm
from .contact import DISC, ContactPair, PressureFieldGeom, active_contacts

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
PLANAR = "planar"
WORLD = "world"


class ModelError(ValueError):
    pass


class IntegrationDiverged(FloatingPointError):
    """Raised when a step produces non-finite values."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    inertia: float  # about the COM, kg m^2
    com_offset: tuple[float, float] = (0.0, 0.0)
    collision_sites: tuple = ()  # (site_name, (x, y)) in the link frame

    def __post_init__(self):
        if not self.mass > 0:
            raise ModelError(f"link {self.name!r}: mass must be positive")
        if not self.inertia > 0:
            raise ModelError(f"link {self.name!r}: inertia must be positive")


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    parent: str  # link name or "world"
    child: str
    origin: tuple[float, float] = (0.0, 0.0)  # placement in the parent frame
    angle: float = 0.0
    axis: tuple[float, float] = (1.0, 0.0)  # prismatic only
    actuated: bool = True
    effort_limit: float | None = None

    @property
    def n_coords(self) -> int:
        return 3 if self.kind == PLANAR else 1


@dataclass(frozen=True)
class _Dof:
    kind: str  # REVOLUTE or PRISMATIC
    parent_frame: int
    angle: float
    cos: float
    sin: float
    rx: float
    ry: float
    ax: float
    ay: float


@dataclass(frozen=True)
class MultibodyModel:
    """Immutable planar multibody description.

    Joints are expanded into single-coordinate dofs (a planar joint becomes
    slide-x, slide-y, hinge). Frame 0 is the world and dof ``i`` moves frame
    ``i + 1``.
    """

    links: tuple
    joints: tuple
    geometries: tuple = ()
    gravity: tuple[float, float] = (0.0, -9.81)
    timestep: float = 0.01
    contact_pairs_spec: tuple | None = None  # (name_a, name_b); None = every eligible pair
    friction_smoothing: float = 1e-3
    stiffness_smoothing: float = 1e-3

    # derived
    dofs: tuple = field(init=False, repr=False, compare=False)
    frame_body: tuple = field(init=False, repr=False, compare=False)
    frame_children: tuple = field(init=False, repr=False, compare=False)
    dof_chain: tuple = field(init=False, repr=False, compare=False)
    link_frame: dict = field(init=False, repr=False, compare=False)
    sites: dict = field(init=False, repr=False, compare=False)
    actuated: tuple = field(init=False, repr=False, compare=False)
    coord_names: tuple = field(init=False, repr=False, compare=False)
    contact_pairs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "geometries", tuple(self.geometries))
        if not self.timestep > 0:
            raise ModelError("timestep must be positive")
        names = [link.name for link in self.links]
        if len(set(names)) != len(names):
            raise ModelError("link names must be unique")
        links = {link.name: link for link in self.links}

        children = {}
        for j in self.joints:
            if j.kind not in (REVOLUTE, PRISMATIC, PLANAR):
                raise ModelError(f"joint {j.name!r}: unknown kind {j.kind!r}")
            if j.child not in links:
                raise ModelError(f"joint {j.name!r}: unknown child link {j.child!r}")
            if j.parent != WORLD and j.parent not in links:
                raise ModelError(f"joint {j.name!r}: unknown parent link {j.parent!r}")
            if j.child in children:
                raise ModelError(f"link {j.child!r} has more than one parent joint")
            children[j.child] = j
        if set(children) != set(links):
            missing = sorted(set(links) - set(children))
            raise ModelError(f"links without a parent joint: {missing}")

        # order joints parent-first, keeping declaration order where possible
        ordered, placed = [], {WORLD}
        pending = list(self.joints)
        while pending:
            progress = False
            for j in list(pending):
                if j.parent in placed:
                    ordered.append(j)
                    placed.add(j.child)
                    pending.remove(j)
                    progress = True
            if not progress:
                raise ModelError("joint graph is not a tree rooted at world")

        dofs, frame_body, coord_names, actuated = [], [None], [], []
        link_frame = {WORLD: 0}
        for j in ordered:
            parent = link_frame[j.parent]
            if j.kind == PLANAR:
                parts = [
                    (PRISMATIC, j.angle, j.origin, (1.0, 0.0), "x"),
                    (PRISMATIC, 0.0, (0.0, 0.0), (0.0, 1.0), "y"),
                    (REVOLUTE, 0.0, (0.0, 0.0), (1.0, 0.0), "theta"),
                ]
            else:
                ax, ay = j.axis
                norm = math.hypot(ax, ay)
                parts = [(j.kind, j.angle, j.origin, (ax / norm, ay / norm), None)]
            for kind, angle, (rx, ry), (ax, ay), suffix in parts:
                dofs.append(_Dof(kind, parent, angle, math.cos(angle), math.sin(angle), rx, ry, ax, ay))
                frame_body.append(None)
                coord_names.append(f"{j.name}_{suffix}" if suffix else j.name)
                actuated.append(j.actuated)
                parent = len(dofs)
            link = links[j.child]
            frame_body[parent] = (link.mass, link.inertia, link.com_offset[0], link.com_offset[1])
            link_frame[j.child] = parent

        frame_children = [[] for _ in range(len(dofs) + 1)]
        for i, d in enumerate(dofs):
            frame_children[d.parent_frame].append(i + 1)
        chains = []
        for i in range(len(dofs)):
            chain, f = [], i + 1
            while f != 0:
                chain.append(f - 1)
                f = dofs[f - 1].parent_frame
            chains.append(tuple(chain))

        sites = {}
        for link in self.links:
            for site_name, (ox, oy) in link.collision_sites:
                if site_name in sites:
                    raise ModelError(f"duplicate collision site {site_name!r}")
                sites[site_name] = (link_frame[link.name], float(ox), float(oy))

        geoms = {}
        for g in self.geometries:
            if g.name in geoms:
                raise ModelError(f"duplicate geometry {g.name!r}")
            if g.site is not None and g.site not in sites:
                raise ModelError(f"geometry {g.name!r}: unknown site {g.site!r}")
            if g.kind == DISC and g.site is None:
                raise ModelError(f"geometry {g.name!r}: discs must ride on a collision site")
            geoms[g.name] = g
        if self.contact_pairs_spec is None:
            pairs = []
            for i, ga in enumerate(self.geometries):
                for gb in self.geometries[i + 1 :]:
                    if ga.rigid and gb.rigid:
                        continue
                    if ga.kind != DISC and gb.kind != DISC:
                        continue
                    fa = sites[ga.site][0] if ga.site else 0
                    fb = sites[gb.site][0] if gb.site else 0
                    if fa == fb:
                        continue
                    pairs.append(ContactPair(ga, gb))
        else:
            pairs = []
            for na, nb in self.contact_pairs_spec:
                for n in (na, nb):
                    if n not in geoms:
                        raise ModelError(f"contact pair references unknown geometry {n!r}")
                pairs.append(ContactPair(geoms[na], geoms[nb]))

        object.__setattr__(self, "dofs", tuple(dofs))
        object.__setattr__(self, "frame_body", tuple(frame_body))
        object.__setattr__(self, "frame_children", tuple(tuple(c) for c in frame_children))
        object.__setattr__(self, "dof_chain", tuple(chains))
        object.__setattr__(self, "link_frame", link_frame)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "actuated", tuple(i for i, a in enumerate(actuated) if a))
        object.__setattr__(self, "coord_names", tuple(coord_names))
        object.__setattr__(self, "contact_pairs", tuple(pairs))

    @property
    def n_q(self) -> int:
        return len(self.dofs)

    @property
    def n_v(self) -> int:
        return len(self.dofs)

    @property
    def n_x(self) -> int:
        return 2 * len(self.dofs)

    @property
    def n_u(self) -> int:
        return len(self.actuated)

    def actuation_matrix(self) -> np.ndarray:
        """Selection matrix S (m x n_v) with ``tau_generalized = S^T u``."""
        S = np.zeros((self.n_u, self.n_v))
        for row, col in enumerate(self.actuated):
            S[row, col] = 1.0
        return S

    def site_frame(self, site):
        if site is None:
            return 0
        try:
            return self.sites[site][0]
        except KeyError:
            raise KeyError(f"unknown collision site {site!r}") from None

    def coord_index(self, name: str) -> int:
        return self.coord_names.index(name)

    def geometry(self, name: str) -> PressureFieldGeom:
        for g in self.geometries:
            if g.name == name:
                return g
        raise KeyError(f"unknown geometry {name!r}")

    def with_timestep(self, timestep: float) -> "MultibodyModel":
        return MultibodyModel(
            self.links,
            self.joints,
            self.geometries,
            self.gravity,
            timestep,
            self.contact_pairs_spec,
            self.friction_smoothing,
            self.stiffness_smoothing,
        )


@dataclass
class GeneralizedState:
    q: np.ndarray
    v: np.ndarray

    @classmethod
    def from_vector(cls, x) -> "GeneralizedState":
        x = np.asarray(x, dtype=float)
        n = x.shape[0] // 2
        return cls(x[:n].copy(), x[n:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])


class Kinematics:
    """World poses of every frame plus the world-frame motion subspaces."""

    __slots__ = ("model", "c", "s", "ox", "oy", "S")

    def __init__(self, model, c, s, ox, oy, S):
        self.model = model
        self.c, self.s, self.ox, self.oy, self.S = c, s, ox, oy, S

    def point(self, frame, lx, ly):
        c, s = self.c[frame], self.s[frame]
        return (self.ox[frame] + c * lx - s * ly, self.oy[frame] + s * lx + c * ly)

    def site_position(self, site):
        frame, lx, ly = self.model.sites[site]
        return self.point(frame, lx, ly)


def forward_kinematics(model: MultibodyModel, q) -> Kinematics:
    c, s, ox, oy = [1.0], [0.0], [0.0], [0.0]
    S = []
    for i, d in enumerate(model.dofs):
        p = d.parent_frame
        pc, ps = c[p], s[p]
        jx = ox[p] + pc * d.rx - ps * d.ry if (d.rx or d.ry) else ox[p]
        jy = oy[p] + ps * d.rx + pc * d.ry if (d.rx or d.ry) else oy[p]
        if d.angle:
            jc = pc * d.cos - ps * d.sin
            js = ps * d.cos + pc * d.sin
        else:
            jc, js = pc, ps
        qi = q[i]
        if d.kind == REVOLUTE:
            cq, sq = dm.cos(qi), dm.sin(qi)
            c.append(jc * cq - js * sq)
            s.append(js * cq + jc * sq)
            ox.append(jx)
            oy.append(jy)
            S.append((1.0, jy, -jx))
        else:
            ax = jc * d.ax - js * d.ay
            ay = js * d.ax + jc * d.ay
            c.append(jc)
            s.append(js)
            ox.append(jx + ax * qi)
            oy.append(jy + ay * qi)
            S.append((0.0, ax, ay))
    return Kinematics(model, c, s, ox, oy, S)


def _body_inertias(model, kin):
    """Per-frame world inertia (m, hx, hy, Io) at the origin, None if massless."""
    out = [None] * (model.n_v + 1)
    for f, body in enumerate(model.frame_body):
        if body is None:
            continue
        m, inertia, lx, ly = body
        cx, cy = kin.point(f, lx, ly)
        out[f] = (m, m * cx, m * cy, inertia + m * (cx * cx + cy * cy))
    return out


def _apply_inertia(I, w, vx, vy):
    m, hx, hy, Io = I
    return (Io * w - hy * vx + hx * vy, m * vx - hy * w, m * vy + hx * w)


def _composite_inertias(model, body):
    comp = list(body)
    for f in range(model.n_v, 0, -1):
        for ch in model.frame_children[f]:
            a, b = comp[f], comp[ch]
            if b is None:
                continue
            comp[f] = b if a is None else (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])
    return comp


def _mass_matrix(model, kin, body):
    n = model.n_v
    comp = _composite_inertias(model, body)
    M = [[0.0] * n for _ in range(n)]
    for i in range(n):
        Ic = comp[i + 1]
        if Ic is None:
            continue
        Si = kin.S[i]
        F = _apply_inertia(Ic, *Si)
        for j in model.dof_chain[i]:
            Sj = kin.S[j]
            val = F[0] * Sj[0] + F[1] * Sj[1] + F[2] * Sj[2] if Sj[0] != 0.0 else F[1] * Sj[1] + F[2] * Sj[2]
            M[i][j] = val
            M[j][i] = val
    return M


def _bias(model, kin, body, v):
    n = model.n_v
    gx, gy = model.gravity
    V = [(0.0, 0.0, 0.0)] * (n + 1)
    A = [(0.0, -gx, -gy)] + [None] * n
    for i, d in enumerate(model.dofs):
        p = d.parent_frame
        w0, x0, y0 = V[p]
        S = kin.S[i]
        vi = v[i]
        sw, sx, sy = S[0] * vi, S[1] * vi, S[2] * vi
        w, x, y = w0 + sw, x0 + sx, y0 + sy
        V[i + 1] = (w, x, y)
        # crm(V) (S v): the velocity-product acceleration
        a0, a1, a2 = A[p]
        A[i + 1] = (a0, a1 + y * sw - w * sy, a2 - x * sw + w * sx)
    F = [(0.0, 0.0, 0.0)] * (n + 1)
    for f in range(1, n + 1):
        I = body[f]
        if I is None:
            continue
        w, x, y = V[f]
        ia = _apply_inertia(I, *A[f])
        h = _apply_inertia(I, w, x, y)
        # crf(V) h
        F[f] = (ia[0] - y * h[1] + x * h[2], ia[1] - w * h[2], ia[2] + w * h[1])
    tau = [0.0] * n
    for f in range(n, 0, -1):
        fw, fx, fy = F[f]
        S = kin.S[f - 1]
        tau[f - 1] = S[0] * fw + S[1] * fx + S[2] * fy
        p = model.dofs[f - 1].parent_frame
        if p:
            pw, px, py = F[p]
            F[p] = (pw + fw, px + fx, py + fy)
    return tau


def mass_matrix(model: MultibodyModel, q) -> np.ndarray:
    """Joint-space mass matrix by composite-rigid-body accumulation."""
    kin = forward_kinematics(model, q)
    return _as_array(_mass_matrix(model, kin, _body_inertias(model, kin)))


def bias_forces(model: MultibodyModel, q, v) -> np.ndarray:
    """C(q, v) v + g(q) by Newton-Euler with zero joint acceleration."""
    kin = forward_kinematics(model, q)
    return _as_array(_bias(model, kin, _body_inertias(model, kin), v))


def gravity_forces(model: MultibodyModel, q) -> np.ndarray:
    return bias_forces(model, q, [0.0] * model.n_v)


def point_jacobian(model, kin, frame, point):
    """Columns {dof: (dx, dy)} of the linear-velocity Jacobian of a world point
    rigidly attached to ``frame``."""
    if frame == 0:
        return {}
    px, py = point
    cols = {}
    for j in model.dof_chain[frame - 1]:
        w, x, y = kin.S[j]
        if w == 0.0:
            cols[j] = (x, y)
        else:
            cols[j] = (x - w * py, y + w * px)
    return cols


def site_kinematics(model: MultibodyModel, q, v, site: str):
    """World position, velocity and 2 x n_v Jacobian of a collision site."""
    frame = model.site_frame(site)
    kin = forward_kinematics(model, q)
    pos = kin.site_position(site)
    cols = point_jacobian(model, kin, frame, pos)
    J = [[0.0] * model.n_v, [0.0] * model.n_v]
    for j, (jx, jy) in cols.items():
        J[0][j], J[1][j] = jx, jy
    vel = [sum((J[r][j] * v[j] for j in cols), 0.0) for r in range(2)]
    return _as_array(pos), _as_array(vel), _as_array(J)


def mechanical_energy(model: MultibodyModel, q, v) -> float:
    """Kinetic plus gravitational potential energy (contact energy excluded)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    kin = forward_kinematics(model, q)
    body = _body_inertias(model, kin)
    M = np.array(_mass_matrix(model, kin, body), dtype=float)
    gx, gy = model.gravity
    potential = 0.0
    for I in body:
        if I is not None:
            potential -= gx * I[1] + gy * I[2]
    return 0.5 * v @ M @ v + potential


def _as_array(values):
    if any(isinstance(x, dm.Dual) for x in _flatten(values)):
        return np.array(values, dtype=object)
    return np.array(values, dtype=float)


def _flatten(values):
    for x in values:
        if isinstance(x, list | tuple):
            yield from x
        else:
            yield x


def step_generic(model: MultibodyModel, q, v, u):
    """One semi-implicit Euler step on generic scalars; returns (q_next, v_next).

    Velocities update first, then positions advance with the new velocity.
    Contact forces are linearised about the current state and treated
    implicitly in the new velocity, which keeps stiff pressure-field contacts
    stable at 5-10 ms steps.
    """
    h = model.timestep
    n = model.n_v
    kin = forward_kinematics(model, q)
    body = _body_inertias(model, kin)
    A = _mass_matrix(model, kin, body)
    bias = _bias(model, kin, body, v)

    rhs = [0.0] * n
    for i in range(n):
        acc = 0.0
        for j in range(n):
            mij = A[i][j]
            if mij != 0.0:
                acc = acc + mij * v[j]
        rhs[i] = acc - h * bias[i]
    for row, col in enumerate(model.actuated):
        rhs[col] = rhs[col] + h * u[row]

    for t in active_contacts(model, kin, v):
        fn_hat = t.normal_force + t.damping * t.separation_speed
        cn = h * (t.damping + h * t.stiffness)
        ct = h * t.friction_damping
        jn, jt = t.jn, t.jt
        nz = [i for i in range(n) if jn[i] != 0.0 or jt[i] != 0.0]
        for i in nz:
            rhs[i] = rhs[i] + h * jn[i] * fn_hat
            cni, cti = cn * jn[i], ct * jt[i]
            row = A[i]
            for j in nz:
                row[j] = row[j] + cni * jn[j] + cti * jt[j]

    v_next = dm.solve(A, rhs)
    q_next = [q[i] + h * v_next[i] for i in range(n)]
    return q_next, v_next


def step(model: MultibodyModel, x: GeneralizedState, u) -> GeneralizedState:
    """Advance a float state by one timestep."""
    u = np.zeros(0) if u is None and model.n_u == 0 else u
    if u is None:
        u = np.zeros(model.n_u)
    try:
        q_next, v_next = step_generic(model, x.q.tolist(), x.v.tolist(), list(u))
    except (np.linalg.LinAlgError, ValueError, OverflowError, ZeroDivisionError) as err:
        raise IntegrationDiverged(f"step failed: {err}") from err
    q_next = np.array(q_next)
    v_next = np.array(v_next)
    if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(v_next))):
        raise IntegrationDiverged("step produced non-finite state")
    return GeneralizedState(q_next, v_next)


def gravity_compensation(model: MultibodyModel, q) -> np.ndarray:
    """Actuator inputs u = S g(q) that cancel gravity on actuated coordinates."""
    return model.actuation_matrix() @ gravity_forces(model, q)
