"""Iterative LQR over the multibody step, plus a receding-horizon driver.

The problem is

    min  sum_k (x_k - x_nom(k))' Q (x_k - x_nom(k)) + u_k' R u_k
         + (x_N - x_nom(N))' Qf (x_N - x_nom(N))
    s.t. x_{k+1} = step(x_k, u_k),  x_0 fixed

with diagonal weights. Dynamics enter only through first-order partials.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .diff import linearize_step
from .multibody import GeneralizedState, IntegrationDiverged, MultibodyModel, step

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
STALLED = "stalled"


class RolloutFailed(IntegrationDiverged):
    pass


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CostSpec:
    """Diagonal quadratic tracking cost.

    The nominal state at step ``k`` is ``x_nom + (k + offset) * x_nom_rate``,
    which covers both fixed targets and a base target advancing at constant
    speed.
    """

    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    x_nom: np.ndarray
    x_nom_rate: np.ndarray | None = None
    offset: int = 0

    def __post_init__(self):
        for name in ("Q", "R", "Qf", "x_nom"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        rate = np.zeros_like(self.x_nom) if self.x_nom_rate is None else np.asarray(self.x_nom_rate, dtype=float)
        object.__setattr__(self, "x_nom_rate", rate)
        n = self.x_nom.shape[0]
        if self.Q.shape != (n,) or self.Qf.shape != (n,) or rate.shape != (n,):
            raise ValueError("Q, Qf and the nominal rate must be diagonals matching the state size")
        if np.any(self.Q < 0) or np.any(self.Qf < 0):
            raise ValueError("state weights must be nonnegative")
        if np.any(self.R <= 0):
            raise ValueError("control weights must be strictly positive")

    def nominal(self, k: int) -> np.ndarray:
        return self.x_nom + (k + self.offset) * self.x_nom_rate

    def shifted(self, steps: int) -> "CostSpec":
        return replace(self, offset=self.offset + steps)

    def scaled(self, factor: float) -> "CostSpec":
        return replace(self, Q=self.Q * factor, R=self.R * factor, Qf=self.Qf * factor)


def stage_cost(cost: CostSpec, x, u, k: int) -> float:
    e = np.asarray(x) - cost.nominal(k)
    u = np.asarray(u)
    return float(e @ (cost.Q * e) + u @ (cost.R * u))


def terminal_cost(cost: CostSpec, x, k: int) -> float:
    e = np.asarray(x) - cost.nominal(k)
    return float(e @ (cost.Qf * e))


@dataclass
class Trajectory:
    states: np.ndarray  # (N+1, n)
    inputs: np.ndarray  # (N, m)
    K: np.ndarray  # (N, m, n)
    kappa: np.ndarray  # (N, m)
    cost: float
    stage_costs: np.ndarray  # (N+1,), last entry is the terminal cost

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]


def trajectory_cost(cost: CostSpec, states, inputs):
    N = len(inputs)
    stages = np.empty(N + 1)
    # a wild trial rollout may overflow; its cost is then inf and gets rejected
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            stages[k] = stage_cost(cost, states[k], inputs[k], k)
        stages[N] = terminal_cost(cost, states[N], N)
        return float(stages.sum()), stages


def _trajectory(model, states, inputs, cost):
    N = len(inputs)
    total, stages = trajectory_cost(cost, states, inputs)
    return Trajectory(
        np.asarray(states),
        np.asarray(inputs).reshape(N, model.n_u),
        np.zeros((N, model.n_u, model.n_x)),
        np.zeros((N, model.n_u)),
        total,
        stages,
    )


def rollout(model: MultibodyModel, x0, inputs, cost: CostSpec) -> Trajectory:
    """Open-loop simulation of ``inputs`` from ``x0``."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.n_u)
    states = np.empty((len(inputs) + 1, model.n_x))
    states[0] = x0
    x = GeneralizedState.from_vector(x0)
    for k, u in enumerate(inputs):
        try:
            x = step(model, x, u)
        except IntegrationDiverged as err:
            raise RolloutFailed(f"rollout diverged at step {k}: {err}", step_index=k) from err
        states[k + 1] = x.to_vector()
    return _trajectory(model, states, inputs, cost)


def linearize_trajectory(model: MultibodyModel, traj: Trajectory):
    """(A_k, B_k) for every step of a trajectory."""
    As, Bs = [], []
    for k in range(traj.horizon):
        lin = linearize_step(model, GeneralizedState.from_vector(traj.states[k]), traj.inputs[k])
        As.append(lin.A)
        Bs.append(lin.B)
    return As, Bs


@dataclass
class BackwardPassResult:
    K: np.ndarray
    kappa: np.ndarray
    d1: float  # sum kappa' Q_u
    d2: float  # sum kappa' Q_uu kappa
    min_vxx_eig: float = np.inf

    def expected_decrease(self, eps: float) -> float:
        return eps * self.d1 - 0.5 * eps * eps * self.d2


def backward_pass(As, Bs, traj: Trajectory, cost: CostSpec, rho: float, check_psd: bool = False):
    """Riccati-like sweep producing feedback gains and feedforward terms.

    Raises :class:`NotPositiveDefinite` if the regularized Q_uu is not PD.
    """
    N = traj.horizon
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    K = np.zeros((N, m, n))
    kappa = np.zeros((N, m))
    xN = traj.states[N]
    Vx = 2.0 * cost.Qf * (xN - cost.nominal(N))
    Vxx = np.diag(2.0 * cost.Qf)
    d1 = d2 = 0.0
    min_eig = np.inf
    lxx = np.diag(2.0 * cost.Q)
    luu = np.diag(2.0 * cost.R)
    reg = rho * np.eye(m)
    for k in range(N - 1, -1, -1):
        A, B = As[k], Bs[k]
        x, u = traj.states[k], traj.inputs[k]
        lx = 2.0 * cost.Q * (x - cost.nominal(k))
        lu = 2.0 * cost.R * u
        VxxA = Vxx @ A
        Qx = lx + A.T @ Vx
        Qu = lu + B.T @ Vx
        Qxx = lxx + A.T @ VxxA
        Qux = B.T @ VxxA
        Quu = luu + B.T @ Vxx @ B + reg
        try:
            factor = cho_factor(Quu)
        except np.linalg.LinAlgError as err:
            raise NotPositiveDefinite(f"Q_uu not positive definite at step {k}") from err
        Kk = cho_solve(factor, Qux)
        kk = cho_solve(factor, Qu)
        K[k] = Kk
        kappa[k] = kk
        d1 += float(kk @ Qu)
        d2 += float(kk @ Quu @ kk)
        Vx = Qx - Qux.T @ kk
        Vxx = Qxx - Qux.T @ Kk
        Vxx = 0.5 * (Vxx + Vxx.T)
        if check_psd:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(Vxx)[0] / max(1.0, np.abs(Vxx).max())))
    return BackwardPassResult(K, kappa, d1, d2, min_eig)


def forward_pass(model: MultibodyModel, traj: Trajectory, K, kappa, eps: float, cost: CostSpec):
    """Closed-loop rollout of ``u = u_bar - eps kappa - K (x - x_bar)``.

    Returns ``None`` if the simulation diverges.
    """
    N = traj.horizon
    states = np.empty_like(traj.states)
    inputs = np.empty_like(traj.inputs)
    states[0] = traj.states[0]
    x = GeneralizedState.from_vector(states[0])
    for k in range(N):
        u = traj.inputs[k] - eps * kappa[k] - K[k] @ (states[k] - traj.states[k])
        inputs[k] = u
        try:
            x = step(model, x, u)
        except IntegrationDiverged:
            return None
        states[k + 1] = x.to_vector()
    total, stages = trajectory_cost(cost, states, inputs)
    if not np.isfinite(total):
        return None
    return Trajectory(states, inputs, np.zeros_like(traj.K), np.zeros_like(traj.kappa), total, stages)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    tolerance: float = 1e-6  # relative cost decrease
    kappa_tolerance: float = 1e-6
    linesearch: tuple = tuple(0.5**i for i in range(11))
    rho_init: float = 1e-6
    rho_increase: float = 10.0
    rho_decrease: float = 2.0
    rho_max: float = 1e6
    armijo: float = 1e-4
    simple_decrease: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.linesearch or any(not 0 < e <= 1 for e in self.linesearch):
            raise ValueError("linesearch entries must lie in (0, 1]")
        for name in ("tolerance", "kappa_tolerance", "rho_init", "rho_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    kappa_norm: float
    eps: float
    rho: float
    time_s: float


@dataclass
class SolveStats:
    records: list = field(default_factory=list)
    status: str = MAX_ITERATIONS
    initial_cost: float = np.nan
    total_time_s: float = 0.0
    min_vxx_eig: float = np.inf

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def costs(self) -> list:
        return [r.cost for r in self.records]


def _policy(As, Bs, traj, cost, rho):
    """Gains around the final nominal; unregularized when Q_uu allows it."""
    for r in (0.0, rho):
        try:
            return backward_pass(As, Bs, traj, cost, r)
        except NotPositiveDefinite:
            continue
    return None


def solve(model: MultibodyModel, x0, initial_inputs, cost: CostSpec, options: SolverOptions = SolverOptions(),
          check_psd: bool = False):
    """Run iLQR from an initial input sequence; returns (Trajectory, SolveStats)."""
    t_start = time.perf_counter()
    traj = rollout(model, x0, initial_inputs, cost)
    stats = SolveStats(initial_cost=traj.cost)
    if options.max_iterations == 0:
        stats.status = MAX_ITERATIONS
        stats.total_time_s = time.perf_counter() - t_start
        return traj, stats

    rho = options.rho_init
    last_rel = np.inf
    As = Bs = None
    for it in range(options.max_iterations + 1):
        t_iter = time.perf_counter()
        As, Bs = linearize_trajectory(model, traj)
        bp = None
        while bp is None:
            try:
                bp = backward_pass(As, Bs, traj, cost, rho, check_psd)
            except NotPositiveDefinite:
                rho *= options.rho_increase
                if rho > options.rho_max:
                    break
        if bp is None:
            stats.status = STALLED
            break
        stats.min_vxx_eig = min(stats.min_vxx_eig, bp.min_vxx_eig)
        kappa_norm = float(np.max(np.abs(bp.kappa))) if bp.kappa.size else 0.0
        if kappa_norm < options.kappa_tolerance or last_rel < options.tolerance or bp.d1 <= 0.0:
            stats.status = CONVERGED
            break
        if it == options.max_iterations:
            stats.status = MAX_ITERATIONS
            break

        accepted = None
        while accepted is None:
            for eps in options.linesearch:
                cand = forward_pass(model, traj, bp.K, bp.kappa, eps, cost)
                if cand is None:
                    continue
                decrease = traj.cost - cand.cost
                expected = bp.expected_decrease(eps)
                ok = decrease > 0 and (options.simple_decrease or decrease >= options.armijo * expected)
                if ok:
                    accepted = (cand, eps)
                    break
            if accepted is not None:
                break
            rho *= options.rho_increase
            if rho > options.rho_max:
                break
            try:
                bp = backward_pass(As, Bs, traj, cost, rho)
            except NotPositiveDefinite:
                continue
        if accepted is None:
            stats.status = STALLED
            break
        cand, eps = accepted
        last_rel = (traj.cost - cand.cost) / max(abs(traj.cost), 1e-300)
        traj = cand
        rho = max(rho / options.rho_decrease, options.rho_init)
        stats.records.append(
            IterationRecord(len(stats.records) + 1, traj.cost, kappa_norm, eps, rho, time.perf_counter() - t_iter)
        )
        log.debug("iter %d cost %.6g eps %.3g rho %.1e", len(stats.records), traj.cost, eps, rho)

    # store the local feedback policy about the returned nominal
    if As is not None:
        if stats.status != CONVERGED:
            As, Bs = linearize_trajectory(model, traj)
        policy = _policy(As, Bs, traj, cost, rho)
        if policy is not None:
            traj.K, traj.kappa = policy.K, policy.kappa
    stats.total_time_s = time.perf_counter() - t_start
    return traj, stats


def receding_horizon_solve(model: MultibodyModel, x0, initial_inputs, cost: CostSpec, options: SolverOptions,
                           window: int, shift: int, resolves: int, progress=None):
    """Solve a sequence of shifted windows and stitch the committed prefixes.

    Each window commits its first ``shift`` inputs; the next window starts
    from the state reached and is warm-started with the rest of the previous
    solution, padded by repeating its last input.
    """
    if not 0 < shift <= window:
        raise ValueError("need 0 < shift <= window")
    if resolves < 1:
        raise ValueError("resolves must be >= 1")
    guess = np.asarray(initial_inputs, dtype=float).reshape(window, model.n_u)
    x = np.asarray(x0, dtype=float)
    states, inputs, gains, ffs, all_stats = [x.copy()], [], [], [], []
    for r in range(resolves):
        window_cost = cost.shifted(r * shift)
        traj, stats = solve(model, x, guess, window_cost, options)
        all_stats.append(stats)
        if progress is not None:
            progress(r, traj, stats)
        if resolves == 1:
            return traj, all_stats
        for k in range(shift):
            inputs.append(traj.inputs[k])
            states.append(traj.states[k + 1])
            gains.append(traj.K[k])
            ffs.append(traj.kappa[k])
        x = traj.states[shift]
        tail = traj.inputs[shift:]
        pad = np.repeat(traj.inputs[-1:], shift, axis=0)
        guess = np.concatenate([tail, pad], axis=0)
    states = np.array(states)
    inputs = np.array(inputs).reshape(-1, model.n_u)
    total, stages = trajectory_cost(cost, states, inputs)
    stitched = Trajectory(states, inputs, np.array(gains), np.array(ffs), total, stages)
    return stitched, all_stats


def playback(model: MultibodyModel, traj: Trajectory, x0, cost: CostSpec, feedback: bool = True) -> Trajectory:
    """Run the local policy ``u = u_bar - K (x - x_bar)`` from a (perturbed) start.

    With ``feedback=False`` the nominal inputs are replayed open loop.
    """
    N = traj.horizon
    states = np.empty_like(traj.states)
    inputs = np.empty_like(traj.inputs)
    states[0] = x0
    x = GeneralizedState.from_vector(x0)
    for k in range(N):
        u = traj.inputs[k].copy()
        if feedback:
            u -= traj.K[k] @ (states[k] - traj.states[k])
        inputs[k] = u
        try:
            x = step(model, x, u)
        except IntegrationDiverged as err:
            raise RolloutFailed(f"playback diverged at step {k}: {err}", step_index=k) from err
        states[k + 1] = x.to_vector()
    total, stages = trajectory_cost(cost, states, inputs)
    return Trajectory(states, inputs, traj.K.copy(), traj.kappa.copy(), total, stages)
