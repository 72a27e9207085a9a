"""Small models and independent reference computations shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from hydroilqr import dual as dm
from hydroilqr.contact import PressureFieldGeom
from hydroilqr.multibody import JointSpec, LinkSpec, MultibodyModel, forward_kinematics


def pendulum(length=1.0, mass=1.0, timestep=1e-3, actuated=True):
    link = LinkSpec("rod", mass, mass * length**2 / 12.0, (length / 2.0, 0.0))
    joint = JointSpec("hinge", "revolute", "world", "rod", actuated=actuated)
    return MultibodyModel([link], [joint], timestep=timestep)


def double_pendulum(l1=0.7, l2=0.5, m1=1.3, m2=0.8, c1=0.3, c2=0.2, i1=0.05, i2=0.03, timestep=1e-3):
    links = [LinkSpec("upper", m1, i1, (c1, 0.0)), LinkSpec("lower", m2, i2, (c2, 0.0))]
    joints = [
        JointSpec("shoulder", "revolute", "world", "upper"),
        JointSpec("elbow", "revolute", "upper", "lower", origin=(l1, 0.0)),
    ]
    return MultibodyModel(links, joints, timestep=timestep)


def cart_pole_on_rail(timestep=1e-3):
    """Prismatic cart with a planar-free link hanging nowhere: exercises every
    joint kind in one tree."""
    links = [
        LinkSpec("cart", 2.0, 0.1, (0.0, 0.0)),
        LinkSpec("pole", 0.5, 0.02, (0.0, -0.3)),
        LinkSpec("puck", 0.3, 0.01, (0.05, 0.02)),
    ]
    joints = [
        JointSpec("rail", "prismatic", "world", "cart", axis=(math.cos(0.3), math.sin(0.3))),
        JointSpec("pivot", "revolute", "cart", "pole", origin=(0.1, 0.05), angle=0.4),
        JointSpec("free", "planar", "world", "puck", actuated=False),
    ]
    return MultibodyModel(links, joints, timestep=timestep)


def double_integrator(timestep=0.05):
    """Two prismatic axes with no gravity: the step is exactly linear."""
    links = [LinkSpec("a", 1.0, 0.1), LinkSpec("b", 2.0, 0.1)]
    joints = [
        JointSpec("px", "prismatic", "world", "a", axis=(1.0, 0.0)),
        JointSpec("py", "prismatic", "a", "b", axis=(0.0, 1.0)),
    ]
    return MultibodyModel(links, joints, gravity=(0.0, 0.0), timestep=timestep)


def disc_on_ground(radius=0.1, mass=0.258, modulus=5e6, dissipation=0.0, ground_modulus=math.inf,
                   mu=(0.3, 0.2), timestep=1e-3, free=True):
    link = LinkSpec("disc", mass, 0.5 * mass * radius**2, (0.0, 0.0), (("centre", (0.0, 0.0)),))
    kind = "planar" if free else "prismatic"
    joint = JointSpec("base", kind, "world", "disc", axis=(0.0, 1.0), actuated=False)
    geoms = [
        PressureFieldGeom("disc", "disc", modulus, dissipation, mu[0], mu[1], site="centre", radius=radius),
        PressureFieldGeom("ground", "half_plane", ground_modulus, 0.0, mu[0], mu[1]),
    ]
    return MultibodyModel([link], [joint], geoms, timestep=timestep)


# -- reference computations ------------------------------------------------------


def com_jacobians(model, q):
    """Per-link (mass, inertia, 2 x n COM Jacobian, 1 x n angular Jacobian) from
    forward kinematics alone (dual-number seeding), independent of the
    recursive algorithms."""
    n = model.n_v
    qd = dm.seed(np.asarray(q, dtype=float), 0, n)
    kin = forward_kinematics(model, qd)
    out = []
    for frame, body in enumerate(model.frame_body):
        if body is None:
            continue
        m, inertia, lx, ly = body
        px, py = kin.point(frame, lx, ly)
        theta = dm.atan2(kin.s[frame], kin.c[frame])
        Jv = np.vstack([_partials(px, n), _partials(py, n)])
        Jw = _partials(theta, n)
        out.append((m, inertia, Jv, Jw, (dm.value(px), dm.value(py))))
    return out


def _partials(x, n):
    return x.der.copy() if isinstance(x, dm.Dual) else np.zeros(n)


def energy_mass_matrix(model, q):
    """M from the kinetic energy T = 1/2 sum(m |J_v v|^2 + I (J_w v)^2)."""
    n = model.n_v
    M = np.zeros((n, n))
    for m, inertia, Jv, Jw, _ in com_jacobians(model, q):
        M += m * Jv.T @ Jv + inertia * np.outer(Jw, Jw)
    return M


def potential_gradient(model, q):
    gx, gy = model.gravity
    g = np.zeros(model.n_v)
    for m, _, Jv, _, _ in com_jacobians(model, q):
        g -= m * (gx * Jv[0] + gy * Jv[1])
    return g


def lagrangian_bias(model, q, v, h=1e-6):
    """C(q, v) v + g(q) from the Euler-Lagrange equations:
    Mdot v - 1/2 d(v'Mv)/dq + dV/dq, with central differences of the
    energy-based mass matrix."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(q)
    dM = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dM.append((energy_mass_matrix(model, q + e) - energy_mass_matrix(model, q - e)) / (2 * h))
    Mdot = sum(dM[k] * v[k] for k in range(n))
    grad_T = np.array([0.5 * v @ dM[k] @ v for k in range(n)])
    return Mdot @ v - grad_T + potential_gradient(model, q)
