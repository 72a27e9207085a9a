"""Step linearizations: exact partials from dual numbers, plus a
central-difference oracle used for auditing them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as dm
from .contact import active_contacts
from .multibody import (GeneralizedState, IntegrationDiverged, MultibodyModel, forward_kinematics, step,
                        step_generic)


@dataclass
class Linearization:
    A: np.ndarray  # d x_next / d x
    B: np.ndarray  # d x_next / d u
    x_next: GeneralizedState


def linearize_step(model: MultibodyModel, x: GeneralizedState, u) -> Linearization:
    """One dual-number pass through the step, seeded over all of (x, u)."""
    n, m = model.n_x, model.n_u
    nv = model.n_v
    size = n + m
    u = np.zeros(m) if u is None else np.asarray(u, dtype=float)
    q = dm.seed(x.q, 0, size)
    v = dm.seed(x.v, nv, size)
    uu = dm.seed(u, n, size)
    try:
        q_next, v_next = step_generic(model, q, v, uu)
    except (np.linalg.LinAlgError, ValueError, OverflowError, ZeroDivisionError) as err:
        raise IntegrationDiverged(f"step failed: {err}") from err
    vals, ders = dm.split(list(q_next) + list(v_next), size)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(ders))):
        raise IntegrationDiverged("linearization produced non-finite values")
    return Linearization(ders[:, :n].copy(), ders[:, n:].copy(), GeneralizedState.from_vector(vals))


def finite_difference_oracle(model: MultibodyModel, x: GeneralizedState, u, step_size: float = 1e-7) -> Linearization:
    """Central differences of the float step, one column at a time.

    ``step_size`` is relative: each coordinate is perturbed by
    ``step_size * max(1, |value|)``.
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    n, m = model.n_x, model.n_u
    u = np.zeros(m) if u is None else np.asarray(u, dtype=float)
    z0 = np.concatenate([x.to_vector(), u])

    def f(z):
        return step(model, GeneralizedState.from_vector(z[:n]), z[n:]).to_vector()

    jac = np.zeros((n, n + m))
    for j in range(n + m):
        dz = step_size * max(1.0, abs(z0[j]))
        zp = z0.copy()
        zm = z0.copy()
        zp[j] += dz
        zm[j] -= dz
        jac[:, j] = (f(zp) - f(zm)) / (2.0 * dz)
    return Linearization(jac[:, :n], jac[:, n:], step(model, x, u))


def jacobian_errors(ad: Linearization, fd: Linearization) -> np.ndarray:
    """Worst error per column of [A B], relative to the largest entry of [A B]."""
    J_ad = np.hstack([ad.A, ad.B])
    J_fd = np.hstack([fd.A, fd.B])
    scale = max(np.max(np.abs(J_ad)), 1e-300)
    return np.max(np.abs(J_ad - J_fd), axis=0) / scale


def near_dissipation_kink(model: MultibodyModel, x, band: float = 1e-4) -> bool:
    """True when some active contact sits within ``band`` of the clamp in ``max(0, 1 - d s)``.

    The normal force has a kink there, so central differences straddling it
    are not a valid oracle.
    """
    n = model.n_q
    x = np.asarray(x, dtype=float)
    kin = forward_kinematics(model, x[:n].tolist())
    for term in active_contacts(model, kin, x[n:].tolist()):
        d = term.pair.dissipation
        if d > 0 and abs(1.0 - d * float(term.separation_speed)) < band:
            return True
    return False


def near_contact_onset(model: MultibodyModel, x, depth: float = 1e-5) -> bool:
    """True when some active contact is shallower than ``depth``.

    The overlap area grows like depth**1.5, so its higher derivatives blow up
    at first touch and a finite-difference step of similar size is inaccurate.
    """
    n = model.n_q
    x = np.asarray(x, dtype=float)
    kin = forward_kinematics(model, x[:n].tolist())
    return any(float(t.overlap.depth) < depth for t in active_contacts(model, kin, x[n:].tolist()))


def near_nonsmooth_point(model: MultibodyModel, x) -> bool:
    """Where central differences are not a trustworthy oracle for the step Jacobian."""
    return near_dissipation_kink(model, x) or near_contact_onset(model, x)
