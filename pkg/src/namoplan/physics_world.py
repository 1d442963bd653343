"""Quasi-static 2D pushing simulator.

A holonomic rectangular robot moves among massed convex obstacles.  Pushing
an obstacle costs the Coulomb ground-friction force mu_g * g * m; obstacles
whose friction force exceeds the robot's force limit block it instead
(normal motion cancelled, tangential slide allowed).  Obstacles never keep
momentum: everything is resolved positionally per substep, which makes the
whole simulation a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _physics_core as _core
from .geometry import Obstacle, Polygon, convex_hull

G = 9.81
DEFAULT_MU_G = 0.4
DEFAULT_STIFFNESS = 1.0e4
ROBOT_WIDTH = 0.517
ROBOT_LENGTH = 0.7
DEFAULT_U_MAX = (1.0, 1.0, 1.5)


def _default_footprint() -> Polygon:
    hw = ROBOT_WIDTH / 2.0
    hl = ROBOT_LENGTH / 2.0
    # heading points along body +x; the long side leads
    return Polygon([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])


def default_f_max(mu_g: float = DEFAULT_MU_G, max_mass: float = 30.0) -> float:
    """Force limit matching the movability threshold: mu_g * g * max_mass."""
    return mu_g * G * max_mass


@dataclass
class RobotModel:
    footprint: Polygon = field(default_factory=_default_footprint)
    u_max: tuple = DEFAULT_U_MAX
    f_max: float = None

    def __post_init__(self):
        if self.f_max is None:
            self.f_max = default_f_max()
        if self.f_max <= 0.0 or any(u <= 0.0 for u in self.u_max):
            raise ValueError("u_max and f_max must be positive")


class WorldState:
    """Value-type snapshot of the simulation: robot pose/velocity, obstacle poses."""

    __slots__ = ("robot_pose", "robot_vel", "obstacle_poses", "time")

    def __init__(self, robot_pose, obstacle_poses, robot_vel=(0.0, 0.0, 0.0),
                 time: float = 0.0):
        self.robot_pose = np.asarray(robot_pose, dtype=np.float64).copy()
        self.robot_vel = np.asarray(robot_vel, dtype=np.float64).copy()
        self.obstacle_poses = np.asarray(obstacle_poses, dtype=np.float64).reshape(-1, 3).copy()
        self.time = float(time)

    def clone(self) -> "WorldState":
        return WorldState(self.robot_pose, self.obstacle_poses, self.robot_vel, self.time)


@dataclass
class ContactReport:
    total_force: float
    contacts: list  # (obstacle id, force magnitude, contact point (2,))


class PhysicsModel:
    """Scenario data packed for the kernels: shapes, masses, limits, room.

    use_believed selects the planner's mass beliefs instead of ground truth,
    which is how the controller's internal rollouts can disagree with the
    world when beliefs are wrong.
    """

    def __init__(self, obstacles, room, robot: RobotModel = None,
                 mu_g: float = DEFAULT_MU_G, f_max: float = None,
                 stiffness: float = DEFAULT_STIFFNESS, use_believed: bool = False):
        self.obstacles = list(obstacles)
        self.room = (float(room[0]), float(room[1]))
        self.robot = robot or RobotModel()
        if f_max is not None:
            self.robot = RobotModel(footprint=self.robot.footprint,
                                    u_max=self.robot.u_max, f_max=float(f_max))
        self.mu_g = float(mu_g)
        self.stiffness = float(stiffness)
        self.use_believed = bool(use_believed)

        rv = self.robot.footprint.vertices
        self.rv = np.ascontiguousarray(rv)
        self.rbound = float(np.max(np.hypot(rv[:, 0], rv[:, 1])))

        verts, ptr, cents, rhos, radii, masses = [], [0], [], [], [], []
        for o in self.obstacles:
            shape = o.shape if o.shape.is_convex else convex_hull(o.shape.vertices)
            v = shape.vertices
            verts.append(v)
            ptr.append(ptr[-1] + len(v))
            c = shape.centroid
            cents.append(c)
            d = np.hypot(v[:, 0] - c[0], v[:, 1] - c[1])
            rhos.append(float(d.mean()))
            radii.append(float(d.max()))
            masses.append(float(o.mass if use_believed else o.mass_true))
        self.ov = np.ascontiguousarray(np.vstack(verts)) if verts else np.zeros((0, 2))
        self.optr = np.asarray(ptr, dtype=np.int64)
        self.oc = np.asarray(cents, dtype=np.float64).reshape(-1, 2)
        self.orho = np.asarray(rhos, dtype=np.float64)
        self.obr = np.asarray(radii, dtype=np.float64)
        self.masses = np.asarray(masses, dtype=np.float64)
        self.freq = self.mu_g * G * self.masses
        self.pushable = self.freq <= self.robot.f_max
        self.u_max_arr = np.asarray(self.robot.u_max, dtype=np.float64)
        self.ids = [o.id for o in self.obstacles]

    def initial_state(self, robot_pose) -> WorldState:
        poses = np.array([list(o.pose) for o in self.obstacles], dtype=np.float64)
        if len(self.obstacles) == 0:
            poses = np.zeros((0, 3))
        return WorldState(robot_pose, poses)


def _run(world: WorldState, controls: np.ndarray, dt: float, model: PhysicsModel,
         store_obs: bool):
    """Drive the rollout kernel for one control sequence; returns raw arrays."""
    T = controls.shape[0]
    n = len(model.obstacles)
    poses_out = np.empty((T, 3))
    vels_out = np.empty((T, 3))
    forces_out = np.empty(T)
    obs_forces = np.empty((T, max(n, 1)))
    cpts = np.empty((T, max(n, 1), 2))
    obs_traj = np.empty((T if store_obs else 1, max(n, 1), 3))
    viol = np.empty(1)
    _core._rollout_core(
        np.asarray(world.robot_pose, dtype=np.float64),
        np.asarray(world.obstacle_poses, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(controls, dtype=np.float64), float(dt),
        model.rv, model.ov, model.optr, model.oc, model.orho, model.obr,
        model.freq, model.pushable, model.robot.f_max, model.stiffness,
        model.u_max_arr, model.rbound, model.room[0], model.room[1],
        store_obs, poses_out, vels_out, forces_out, obs_forces, cpts,
        obs_traj, viol)
    return poses_out, vels_out, forces_out, obs_forces, cpts, obs_traj, viol[0]


def step(world: WorldState, control, dt: float, scenario: PhysicsModel):
    """Advance one control period; returns (new WorldState, ContactReport).

    The input world is not modified.  The control is clamped to the robot's
    per-axis velocity limits before use.
    """
    controls = np.asarray(control, dtype=np.float64).reshape(1, 3)
    poses, vels, forces, obs_forces, cpts, obs_traj, _ = _run(
        world, controls, dt, scenario, store_obs=True)
    new = WorldState(poses[0], obs_traj[0][:len(scenario.obstacles)],
                     robot_vel=vels[0], time=world.time + dt)
    contacts = []
    for p in range(len(scenario.obstacles)):
        f = obs_forces[0, p]
        if f > 0.0:
            contacts.append((scenario.ids[p], float(f), cpts[0, p].copy()))
    return new, ContactReport(total_force=float(forces[0]), contacts=contacts)


def rollout(world: WorldState, controls, dt: float, scenario: PhysicsModel):
    """T sequential steps on a private clone; returns (states, per-step forces)."""
    controls = np.asarray(controls, dtype=np.float64).reshape(-1, 3)
    poses, vels, forces, _, _, obs_traj, _ = _run(
        world, controls, dt, scenario, store_obs=True)
    n = len(scenario.obstacles)
    states = [WorldState(poses[t], obs_traj[t][:n], robot_vel=vels[t],
                         time=world.time + (t + 1) * dt)
              for t in range(controls.shape[0])]
    return states, [float(f) for f in forces]


def batch_rollout(world: WorldState, control_batch, dt: float, scenario: PhysicsModel):
    """K rollouts, elementwise identical to K independent rollout() calls."""
    batch = np.ascontiguousarray(np.asarray(control_batch, dtype=np.float64))
    if batch.ndim != 3:
        raise ValueError("control_batch must be (K, T, 3)")
    out = batch_rollout_arrays(world, batch, dt, scenario, store_obs=True)
    n = len(scenario.obstacles)
    results = []
    for k in range(batch.shape[0]):
        states = [WorldState(out["poses"][k, t], out["obs_traj"][k, t][:n],
                             robot_vel=out["vels"][k, t],
                             time=world.time + (t + 1) * dt)
                  for t in range(batch.shape[1])]
        results.append((states, [float(f) for f in out["forces"][k]]))
    return results


def batch_rollout_arrays(world: WorldState, batch: np.ndarray, dt: float,
                         scenario: PhysicsModel, store_obs: bool = False) -> dict:
    """Array-level batch rollout used by the controller (no WorldState wrapping)."""
    K, T, _ = batch.shape
    n = len(scenario.obstacles)
    poses_out = np.empty((K, T, 3))
    vels_out = np.empty((K, T, 3))
    forces_out = np.empty((K, T))
    obs_forces = np.empty((K, T, max(n, 1)))
    cpts = np.empty((K, T, max(n, 1), 2))
    obs_traj = np.empty((K, T if store_obs else 1, max(n, 1), 3))
    viol = np.empty((K, 1))
    _core._batch_core(
        np.asarray(world.robot_pose, dtype=np.float64),
        np.asarray(world.obstacle_poses, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(batch, dtype=np.float64), float(dt),
        scenario.rv, scenario.ov, scenario.optr, scenario.oc, scenario.orho,
        scenario.obr, scenario.freq, scenario.pushable, scenario.robot.f_max,
        scenario.stiffness, scenario.u_max_arr, scenario.rbound,
        scenario.room[0], scenario.room[1], store_obs, poses_out, vels_out,
        forces_out, obs_forces, cpts, obs_traj, viol)
    return {"poses": poses_out, "vels": vels_out, "forces": forces_out,
            "obs_forces": obs_forces, "cpts": cpts, "obs_traj": obs_traj,
            "violation": viol[:, 0]}
