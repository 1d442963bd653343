"""Sampling-based MPC over physics rollouts, plus the stall monitor.

Each control cycle samples K perturbed control sequences around a nominal,
simulates them in batch, scores them (control effort each step; distance,
progress, rotation and contact-force terms at the horizon), and blends the
feasible ones with softmax weights.  The monitor watches commanded versus
actual motion and, after a persistent stall, names the obstacle most likely
responsible so the planner can re-classify it and replan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AllRolloutsInfeasible, UnknownObstacle
from .physics_world import DEFAULT_U_MAX, PhysicsModel, WorldState, batch_rollout_arrays

EPS_MASS = 1e-6          # nudge above the movability threshold when re-classifying
VIOLATION_TOL = 1e-6     # rollouts penetrating deeper than this are disregarded


@dataclass
class MppiConfig:
    K: int = 256
    T: int = 25
    dt: float = 0.08
    sigma: tuple = (0.3, 0.3, 0.5)
    beta: float = 0.5
    w_ctrl: tuple = (0.25, 0.25, 0.1)
    w_dist: float = 0.8
    w_prog: float = 2.5
    w_rot: float = 0.2
    w_force: float = 0.4
    alpha: float = 0.5
    eps_force: float = 1e-6
    u_max: tuple = DEFAULT_U_MAX

    def __post_init__(self):
        if self.K < 2 or self.T < 1 or self.beta <= 0.0 or self.alpha <= 0.0:
            raise ValueError("bad MPPI configuration")
        if min(self.w_ctrl) < 0 or min(self.w_dist, self.w_prog,
                                       self.w_rot, self.w_force) < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class RolloutCost:
    total: float
    ctrl: float
    dist: float
    prog: float
    rot: float
    force: float
    closest_waypoint_index_at_T: int
    feasible: bool = True


# ---------------------------------------------------------------------------
# cost terms (reference, scalar forms; evaluate_batch vectorizes the same math)


def sample_controls(nominal, config: MppiConfig, rng_seed) -> np.ndarray:
    """K control sequences: the unperturbed nominal plus K-1 Gaussian jitters.

    Including the nominal itself means sampling can never make the best
    available sequence worse than last cycle's plan.  Samples are clamped to
    the per-axis velocity limits.
    """
    nominal = np.asarray(nominal, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    sigma = np.asarray(config.sigma, dtype=np.float64)
    noise = rng.standard_normal((config.K - 1,) + nominal.shape) * sigma
    samples = np.concatenate([nominal[None], nominal[None] + noise], axis=0)
    u = np.asarray(config.u_max, dtype=np.float64)
    return np.clip(samples, -u, u)


def control_cost(xdot, v, config: MppiConfig) -> float:
    """Quadratic penalty on tracking error, normalized by the velocity limits."""
    e = np.abs(np.asarray(xdot, dtype=float) - np.asarray(v, dtype=float)) \
        / np.asarray(config.u_max, dtype=float)
    return float(np.dot(np.asarray(config.w_ctrl, dtype=float), e * e))


def distance_cost(x, waypoints, alpha: float) -> float:
    """Distance to the waypoint after the currently closest one, over alpha.

    Ties pick the lower index; when the closest waypoint is the last one the
    distance to it is used instead, so the cost vanishes exactly at the goal.
    """
    pts = np.asarray(waypoints, dtype=float)
    p = np.asarray(x, dtype=float)[:2]
    d = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
    i = int(np.argmin(d))
    target = i + 1 if i + 1 < len(pts) else i
    return float(d[target] / alpha)


def progress_cost(batch_closest_indices) -> np.ndarray:
    """Relative lag of each rollout's final waypoint index within the batch."""
    idx = np.asarray(batch_closest_indices, dtype=float)
    span = idx.max() - idx.min()
    if span == 0.0:
        return np.zeros(len(idx))
    return 1.0 - (idx - idx.min()) / span


def rotation_cost(theta: float, x, next_waypoint) -> float:
    """Heading misalignment toward the next waypoint, normalized to [0, 1]."""
    p = np.asarray(x, dtype=float)[:2]
    w = np.asarray(next_waypoint, dtype=float)
    dx, dy = w[0] - p[0], w[1] - p[1]
    if math.hypot(dx, dy) < 1e-12:
        return 0.0
    target = math.atan2(dy, dx)
    diff = (target - theta + math.pi) % (2.0 * math.pi) - math.pi
    if diff == -math.pi:
        diff = math.pi
    return abs(diff) / math.pi


def force_cost(per_rollout_force_sums, eps_force: float) -> np.ndarray:
    """Cumulative contact force per rollout, normalized by the batch maximum."""
    sums = np.asarray(per_rollout_force_sums, dtype=float)
    return sums / (sums.max() + eps_force)


# ---------------------------------------------------------------------------
# batch evaluation and the MPPI update


def evaluate_batch(world: WorldState, sequences, waypoints, config: MppiConfig,
                   scenario: PhysicsModel) -> list:
    """Simulate and score K control sequences; infeasible ones get +inf.

    Control cost accrues every step; distance, progress, rotation and force
    enter at the horizon, with progress and force normalized across the
    feasible part of the batch.
    """
    seqs = np.ascontiguousarray(np.asarray(sequences, dtype=np.float64))
    K, T, _ = seqs.shape
    pts = np.asarray(waypoints.points if hasattr(waypoints, "points") else waypoints,
                     dtype=np.float64)
    out = batch_rollout_arrays(world, seqs, config.dt, scenario)
    vels = out["vels"]
    forces = out["forces"]
    final = out["poses"][:, -1, :]
    feasible = out["violation"] <= VIOLATION_TOL

    err = np.abs(vels - seqs) / np.asarray(config.u_max, dtype=float)
    ctrl_all = np.einsum("ktj,j->kt", err * err, np.asarray(config.w_ctrl, dtype=float))
    ctrl_stage = ctrl_all[:, :-1].sum(axis=1)
    ctrl_term = ctrl_all[:, -1]

    d = np.hypot(final[:, None, 0] - pts[None, :, 0],
                 final[:, None, 1] - pts[None, :, 1])
    closest = d.argmin(axis=1)
    target = np.minimum(closest + 1, len(pts) - 1)
    dist_term = d[np.arange(K), target] / config.alpha

    to_wp = pts[target] - final[:, :2]
    gap = np.hypot(to_wp[:, 0], to_wp[:, 1])
    theta_target = np.arctan2(to_wp[:, 1], to_wp[:, 0])
    diff = (theta_target - final[:, 2] + math.pi) % (2.0 * math.pi) - math.pi
    diff = np.where(diff == -math.pi, math.pi, diff)
    rot_term = np.where(gap < 1e-12, 0.0, np.abs(diff) / math.pi)

    force_sums = forces.sum(axis=1)
    prog_term = np.zeros(K)
    force_term = np.zeros(K)
    if feasible.any():
        idx = closest[feasible].astype(float)
        span = idx.max() - idx.min()
        if span > 0.0:
            prog_term[feasible] = 1.0 - (idx - idx.min()) / span
        force_term[feasible] = force_sums[feasible] / (force_sums[feasible].max()
                                                       + config.eps_force)

    costs = []
    for k in range(K):
        c_ctrl = float(ctrl_stage[k] + ctrl_term[k])
        c_dist = config.w_dist * float(dist_term[k])
        c_prog = config.w_prog * float(prog_term[k])
        c_rot = config.w_rot * float(rot_term[k])
        c_force = config.w_force * float(force_term[k])
        total = c_ctrl + c_dist + c_prog + c_rot + c_force
        if not feasible[k]:
            total = math.inf
        costs.append(RolloutCost(total=total, ctrl=c_ctrl, dist=c_dist,
                                 prog=c_prog, rot=c_rot, force=c_force,
                                 closest_waypoint_index_at_T=int(closest[k]),
                                 feasible=bool(feasible[k])))
    if not any(c.feasible for c in costs):
        raise AllRolloutsInfeasible("every rollout violated the state constraints")
    return costs


def mppi_step(world: WorldState, nominal, waypoints, config: MppiConfig,
              scenario: PhysicsModel, rng_seed):
    """One control cycle: sample, evaluate, softmax-blend, emit first action.

    Returns (control for this cycle, warm-started nominal for the next one).
    """
    nominal = np.asarray(nominal, dtype=np.float64)
    samples = sample_controls(nominal, config, rng_seed)
    costs = evaluate_batch(world, samples, waypoints, config, scenario)
    totals = np.array([c.total for c in costs])
    feasible = np.isfinite(totals)
    ts = totals[feasible]
    w = np.exp(-(ts - ts.min()) / config.beta)
    w /= w.sum()
    blended = np.einsum("k,ktj->tj", w, samples[feasible])
    control = blended[0].copy()
    next_nominal = np.vstack([blended[1:], blended[-1:]])
    return control, next_nominal


# ---------------------------------------------------------------------------
# movability monitor


@dataclass
class ReplanSignal:
    obstacle_id: str | None
    time: float


@dataclass
class MonitorState:
    """Watchdog state for stalled / deviating / slipping motion.

    Conditions (on planar speeds, rad/s excluded):
      A: actual speed below eps while commanded speed exceeds it;
      B: velocity deviation larger than lambda_dev of the commanded speed;
      C: moving faster than mu_slip while net displacement over the last
         window_len seconds stays under disp_tol (wheel slip signature).
    Any condition keeps the timer running; all clear resets it.  Once the
    timer exceeds tau_replan a ReplanSignal fires and the state resets.
    """

    eps_vel: float = 0.1
    lambda_dev: float = 0.75
    mu_slip: float = 0.1
    tau_replan: float = 30.0
    window_len: float = 1.0
    disp_tol: float = 0.02
    timer_started: float | None = None
    window: list = field(default_factory=list)
    last_conditions: tuple = (False, False, False)

    def reset(self):
        self.timer_started = None
        self.window.clear()
        self.last_conditions = (False, False, False)


def monitor_update(mon: MonitorState, commanded, actual, position, now: float,
                   contact_report=None):
    """Advance the monitor one cycle; returns (monitor, ReplanSignal or None).

    The monitor is mutated in place and also returned.  When a signal fires,
    the culprit is the obstacle with the largest contact force in
    contact_report (None if no contact information is available).
    """
    cmd = np.asarray(commanded, dtype=float)
    act = np.asarray(actual, dtype=float)
    pos = np.asarray(position, dtype=float)[:2]
    cs = math.hypot(cmd[0], cmd[1])
    as_ = math.hypot(act[0], act[1])

    mon.window.append((float(now), float(pos[0]), float(pos[1])))
    while len(mon.window) >= 2 and mon.window[1][0] <= now - mon.window_len:
        mon.window.pop(0)

    cond_a = as_ < mon.eps_vel and cs > mon.eps_vel
    cond_b = cs > mon.eps_vel and \
        math.hypot(act[0] - cmd[0], act[1] - cmd[1]) > mon.lambda_dev * cs
    cond_c = False
    if as_ > mon.mu_slip and now - mon.window[0][0] >= mon.window_len - 1e-9:
        disp = math.hypot(pos[0] - mon.window[0][1], pos[1] - mon.window[0][2])
        cond_c = disp < mon.disp_tol
    mon.last_conditions = (cond_a, cond_b, cond_c)

    if cond_a or cond_b or cond_c:
        if mon.timer_started is None:
            mon.timer_started = float(now)
        elif now - mon.timer_started > mon.tau_replan:
            culprit = None
            if contact_report is not None and contact_report.contacts:
                culprit = max(contact_report.contacts, key=lambda c: c[1])[0]
            mon.reset()
            return mon, ReplanSignal(obstacle_id=culprit, time=float(now))
    else:
        mon.timer_started = None
    return mon, None


def update_movability(scenario, obstacle_id: str, max_mass: float = 30.0):
    """Re-classify an obstacle as non-movable by raising its believed mass.

    Returns a new scenario; the true mass is untouched.  Already
    non-movable obstacles pass through unchanged (idempotent).
    """
    found = False
    new_obstacles = []
    for o in scenario.obstacles:
        if o.id == obstacle_id:
            found = True
            if o.mass <= max_mass:
                o = o.with_mass(max_mass + EPS_MASS)
        new_obstacles.append(o)
    if not found:
        raise UnknownObstacle(f"no obstacle with id {obstacle_id!r}")
    return replace(scenario, obstacles=new_obstacles)
