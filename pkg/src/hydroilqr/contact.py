"""Pressure-field contact between planar discs and half-planes.

Each geometry carries a linear pressure field: a disc of radius ``R`` has
pressure gradient ``E / R`` (zero on the rim, ``E`` at the centre) and a
half-plane of thickness ``L`` has gradient ``E / L`` below its surface. Where
two geometries overlap the fields balance along the contact normal, giving
pressure ``g_eff * t`` across the overlap of normal thickness ``t`` with the
series gradient ``g_eff = g_a g_b / (g_a + g_b)``. Integrating that pressure
across the equilibrium chord gives ``F = g_eff * overlap_area``, which is
smooth, zero at first touch and strictly increasing with depth.

Everything here is written against :mod:`hydroilqr.dual`, so it accepts
plain floats or dual numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import dual as dm
from .dual import Dual, value

DISC = "disc"
HALF_PLANE = "half_plane"


class UnsupportedPairError(ValueError):
    pass


@dataclass(frozen=True)
class PressureFieldGeom:
    """Collision geometry with hydroelastic parameters.

    ``site`` names the collision site the geometry rides on; ``None`` pins it
    to the world (half-planes must be world-fixed). ``modulus`` may be
    ``math.inf`` for a rigid body.
    """

    name: str
    kind: str
    modulus: float
    dissipation: float = 0.0
    mu_static: float = 0.5
    mu_dynamic: float = 0.5
    site: str | None = None
    radius: float = 0.0
    normal: tuple[float, float] = (0.0, 1.0)
    offset: float = 0.0
    thickness: float = 1.0

    def __post_init__(self):
        if self.kind not in (DISC, HALF_PLANE):
            raise ValueError(f"geometry {self.name!r}: unknown kind {self.kind!r}")
        if not self.modulus > 0:
            raise ValueError(f"geometry {self.name!r}: modulus must be positive")
        if self.dissipation < 0:
            raise ValueError(f"geometry {self.name!r}: dissipation must be >= 0")
        if not self.mu_static >= self.mu_dynamic >= 0:
            raise ValueError(f"geometry {self.name!r}: need mu_static >= mu_dynamic >= 0")
        if self.kind == DISC and not self.radius > 0:
            raise ValueError(f"geometry {self.name!r}: disc radius must be positive")
        if self.kind == HALF_PLANE:
            nx, ny = self.normal
            norm = math.hypot(nx, ny)
            if abs(norm - 1.0) > 1e-12:
                object.__setattr__(self, "normal", (nx / norm, ny / norm))
            if self.site is not None:
                raise ValueError(f"geometry {self.name!r}: half-planes are world-fixed")
            if not self.thickness > 0:
                raise ValueError(f"geometry {self.name!r}: thickness must be positive")

    @property
    def rigid(self) -> bool:
        return math.isinf(self.modulus)

    @property
    def pressure_gradient(self) -> float:
        """Pressure increase per metre of penetration (Pa/m)."""
        length = self.radius if self.kind == DISC else self.thickness
        return self.modulus / length


@dataclass(frozen=True)
class OverlapData:
    depth: object
    normal: tuple  # unit, pointing from geometry B into A
    point: tuple  # centroid of the equilibrium chord
    half_length: object


@dataclass(frozen=True)
class ContactWrench:
    force: tuple  # acting on geometry A, world frame
    point: tuple
    pair: tuple[str, str]
    normal_force: float = 0.0
    tangential_force: float = 0.0
    slip_speed: float = 0.0


def _combine_gradients(ga: float, gb: float) -> float:
    if math.isinf(ga):
        return gb
    if math.isinf(gb):
        return ga
    return ga * gb / (ga + gb)


def _combine_friction(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


@dataclass(frozen=True)
class ContactPair:
    """Two geometries that may touch, with their combined parameters.

    The pair is stored disc-first, so ``a`` is always a disc.
    """

    a: PressureFieldGeom
    b: PressureFieldGeom
    stiffness: float = field(init=False)  # series pressure gradient, Pa/m
    dissipation: float = field(init=False)
    mu_static: float = field(init=False)
    mu_dynamic: float = field(init=False)
    split: float = field(init=False)  # share of depth lying inside b

    def __post_init__(self):
        a, b = self.a, self.b
        if a.kind == HALF_PLANE and b.kind == DISC:
            a, b = b, a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        if a.kind != DISC:
            raise UnsupportedPairError(f"unsupported geometry pair {a.kind}-{b.kind} ({a.name}, {b.name})")
        if a.rigid and b.rigid:
            raise UnsupportedPairError(f"pair ({a.name}, {b.name}) is rigid on both sides")
        ga, gb = a.pressure_gradient, b.pressure_gradient
        object.__setattr__(self, "stiffness", _combine_gradients(ga, gb))
        object.__setattr__(self, "dissipation", a.dissipation + b.dissipation)
        object.__setattr__(self, "mu_static", _combine_friction(a.mu_static, b.mu_static))
        object.__setattr__(self, "mu_dynamic", _combine_friction(a.mu_dynamic, b.mu_dynamic))
        if math.isinf(ga):
            share = 1.0
        elif math.isinf(gb):
            share = 0.0
        else:
            share = ga / (ga + gb)
        object.__setattr__(self, "split", share)

    @property
    def names(self) -> tuple[str, str]:
        return (self.a.name, self.b.name)


# --- geometry -----------------------------------------------------------------


def _cap(radius: float, height: float):
    """Area and half-chord of the circular cap of given height (floats)."""
    h = min(max(height, 0.0), 2.0 * radius)
    half = math.sqrt(max(2.0 * radius * h - h * h, 0.0))
    theta = 4.0 * math.asin(min(math.sqrt(h / (2.0 * radius)), 1.0))  # subtended angle
    if theta < 1e-3:
        # theta - sin(theta) by series; the direct form cancels badly
        t3 = theta**3
        area = 0.5 * radius * radius * (t3 / 6.0 - t3 * theta * theta / 120.0)
    else:
        area = 0.5 * radius * radius * (theta - math.sin(theta))
    return area, half


def overlap_area(pair: ContactPair, depth):
    """Area of the overlap region (per unit thickness) for a depth ``depth``.

    The derivative with respect to depth is exactly the chord length, which
    the dual branch uses directly instead of differentiating the closed form.
    """
    d = value(depth)
    ra = pair.a.radius
    if pair.b.kind == HALF_PLANE:
        area, half = _cap(ra, d)
    else:
        rb = pair.b.radius
        dist = ra + rb - d
        x = (dist * dist + ra * ra - rb * rb) / (2.0 * dist)
        area_a, half = _cap(ra, ra - x)
        area_b, _ = _cap(rb, rb - (dist - x))
        area = area_a + area_b
    if isinstance(depth, Dual):
        return Dual(area, depth.der * (2.0 * half))
    return area


def detect_overlap(geom_a: PressureFieldGeom, pos_a, geom_b: PressureFieldGeom, pos_b):
    """Overlap between two geometries, or ``None`` when separated or touching.

    ``pos_*`` is the world position of a disc centre (ignored for
    half-planes, which are world-fixed).
    """
    if geom_a.kind == HALF_PLANE and geom_b.kind == DISC:
        found = detect_overlap(geom_b, pos_b, geom_a, pos_a)
        if found is None:
            return None
        nx, ny = found.normal
        return OverlapData(found.depth, (-nx, -ny), found.point, found.half_length)
    pair = ContactPair(geom_a, geom_b)
    return _overlap(pair, pos_a, pos_b)


def _overlap(pair: ContactPair, pos_a, pos_b):
    a, b = pair.a, pair.b
    cx, cy = pos_a
    ra = a.radius
    if b.kind == HALF_PLANE:
        nx, ny = b.normal
        dist = nx * cx + ny * cy - b.offset
        depth = ra - dist
        if not depth > 0.0:
            return None
        # surface point of b under the disc centre, then into b by its share
        into_b = depth * pair.split
        px = cx - nx * (dist + into_b)
        py = cy - ny * (dist + into_b)
        d = value(depth)
        half = math.sqrt(max(2.0 * ra * d - d * d, 0.0)) if d < ra else ra
        if isinstance(depth, Dual) and d < ra:
            half = dm.sqrt(2.0 * ra * depth - depth * depth)
        return OverlapData(depth, (nx, ny), (px, py), half)
    bx, by = pos_b
    rb = b.radius
    dx = cx - bx
    dy = cy - by
    dist = dm.sqrt(dx * dx + dy * dy)
    depth = ra + rb - dist
    if not depth > 0.0:
        return None
    if not value(dist) > 0.0:
        raise UnsupportedPairError(f"coincident disc centres for pair {pair.names}")
    nx = dx / dist
    ny = dy / dist
    reach = rb - depth * pair.split
    px = bx + nx * reach
    py = by + ny * reach
    x = (dist * dist + ra * ra - rb * rb) / (2.0 * dist)
    half = dm.sqrt(dm.maximum(ra * ra - x * x, 0.0))
    return OverlapData(depth, (nx, ny), (px, py), half)


# --- force laws -----------------------------------------------------------------


def elastic_force(pair: ContactPair, depth):
    """Pressure integrated over the equilibrium chord (N per metre of thickness)."""
    return pair.stiffness * overlap_area(pair, depth)


def normal_force_magnitude(pair: ContactPair, overlap: OverlapData, separation_speed):
    """Normal force ``F(depth) * max(0, 1 - d * separation_speed)``.

    ``separation_speed`` is positive when the bodies move apart, so
    dissipation stiffens the contact on approach and releases it on rebound
    without ever pulling.
    """
    scale = dm.maximum(1.0 - pair.dissipation * separation_speed, 0.0)
    return elastic_force(pair, overlap.depth) * scale


def friction_coefficient(pair: ContactPair, speed, smoothing: float):
    ratio = speed / smoothing
    return pair.mu_dynamic + (pair.mu_static - pair.mu_dynamic) * dm.exp(-(ratio * ratio))


def friction_force(pair: ContactPair, normal_force, tangential_speed, smoothing: float = 1e-3):
    """Regularized Coulomb friction along the tangent (odd in the slip speed)."""
    norm = dm.sqrt(tangential_speed * tangential_speed + smoothing * smoothing)
    mu = friction_coefficient(pair, tangential_speed, smoothing)
    return -mu * normal_force * tangential_speed / norm


@dataclass
class ContactTerm:
    """One active contact as seen by the integrator.

    ``jn``/``jt`` are the normal/tangent rows of the relative point Jacobian.
    ``damping`` and ``stiffness`` are the lagged coefficients the step uses to
    treat the normal force implicitly; ``friction_damping`` does the same for
    the tangential force (``f_t = -friction_damping * v_t`` exactly).
    """

    pair: ContactPair
    overlap: OverlapData
    jn: list
    jt: list
    separation_speed: object
    slip_speed: object
    elastic: object
    normal_force: object
    friction: object
    damping: object
    stiffness: object
    friction_damping: object


def contact_term(pair: ContactPair, overlap: OverlapData, jn, jt, v, smoothing: float, stiffness_smoothing: float):
    """Forces and implicit coefficients for one overlapping pair."""
    s = 0.0
    vt = 0.0
    for jni, jti, vi in zip(jn, jt, v):
        if jni != 0.0:
            s = s + jni * vi
        if jti != 0.0:
            vt = vt + jti * vi
    elastic = elastic_force(pair, overlap.depth)
    d = pair.dissipation
    scale = dm.maximum(1.0 - d * s, 0.0)
    fn = elastic * scale
    # secant damping: fn == elastic - damping * s at the current speed, and
    # stays continuous across the release point s = 1/d
    if d == 0.0:
        damping = 0.0
    elif value(s) * d <= 1.0:
        damping = elastic * d
    else:
        damping = elastic / s
    # chord-length stiffness, softened near first touch so it is C1 in depth
    half = overlap.half_length
    h2 = half * half
    stiffness = pair.stiffness * 2.0 * h2 / dm.sqrt(h2 + stiffness_smoothing * stiffness_smoothing) * scale
    norm = dm.sqrt(vt * vt + smoothing * smoothing)
    mu = friction_coefficient(pair, vt, smoothing)
    friction_damping = mu * fn / norm
    ft = -friction_damping * vt
    return ContactTerm(pair, overlap, jn, jt, s, vt, elastic, fn, ft, damping, stiffness, friction_damping)


def active_contacts(model, kin, v):
    """ContactTerms for every overlapping registered pair at kinematics ``kin``."""
    from .multibody import point_jacobian

    terms = []
    for pair in model.contact_pairs:
        a, b = pair.a, pair.b
        pos_a = kin.site_position(a.site)
        pos_b = kin.site_position(b.site) if b.kind == DISC else None
        overlap = _overlap(pair, pos_a, pos_b)
        if overlap is None:
            continue
        nx, ny = overlap.normal
        tx, ty = -ny, nx
        ja = point_jacobian(model, kin, model.site_frame(a.site), overlap.point)
        jb = point_jacobian(model, kin, model.site_frame(b.site), overlap.point) if b.site is not None else None
        n_v = model.n_v
        jn = [0.0] * n_v
        jt = [0.0] * n_v
        for i, (jx, jy) in ja.items():
            jn[i] = nx * jx + ny * jy
            jt[i] = tx * jx + ty * jy
        if jb is not None:
            for i, (jx, jy) in jb.items():
                jn[i] = jn[i] - (nx * jx + ny * jy)
                jt[i] = jt[i] - (tx * jx + ty * jy)
        terms.append(contact_term(pair, overlap, jn, jt, v, model.friction_smoothing, model.stiffness_smoothing))
    return terms


def total_contact_forces(model, q, v):
    """Contact wrenches at state (q, v) and their generalized force sum(J^T f)."""
    from .multibody import forward_kinematics

    kin = forward_kinematics(model, q)
    terms = active_contacts(model, kin, v)
    gen = [0.0] * model.n_v
    wrenches = []
    for t in terms:
        nx, ny = t.overlap.normal
        fn, ft = t.normal_force, t.friction
        fx = fn * nx - ft * ny
        fy = fn * ny + ft * nx
        for i in range(model.n_v):
            if t.jn[i] != 0.0 or t.jt[i] != 0.0:
                gen[i] = gen[i] + t.jn[i] * fn + t.jt[i] * ft
        wrenches.append(
            ContactWrench(
                force=(fx, fy),
                point=t.overlap.point,
                pair=t.pair.names,
                normal_force=fn,
                tangential_force=ft,
                slip_speed=t.slip_speed,
            )
        )
    return wrenches, gen
