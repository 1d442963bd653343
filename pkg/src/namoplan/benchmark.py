"""Scenario generation, closed-loop trials, and suite aggregation.

A scenario is a room with convex obstacles, a start near one end and a goal
near the other.  Trials plan with one of the four planners, then track the
waypoints with the sampling controller against the ground-truth physics
(true masses); the controller itself predicts with believed masses.  The
stall monitor can trigger belief updates and replans when the two disagree.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import svg_planner
from .baselines import BrrtParams, build_bvg, build_brrt, build_nvg
from .errors import (
    AllRolloutsInfeasible,
    GenerationFailed,
    GoalUnreachable,
    NoPathFound,
    StartOrGoalBlocked,
)
from .geometry import (
    Obstacle,
    Polygon,
    min_distance,
    point_to_polygon_distance,
)
from .mppi_controller import (
    EPS_MASS,
    MonitorState,
    MppiConfig,
    mppi_step,
    monitor_update,
    update_movability,
)
from .physics_world import PhysicsModel, default_f_max, step as physics_step
from .svg_planner import (
    DEFAULT_MAX_MASS,
    DEFAULT_RADIUS,
    DEFAULT_SPACING,
    Waypoints,
    astar,
    build_svg,
    interpolate_waypoints,
    room_walls,
)

SCENARIO_VERSION = 1
TRACE_VERSION = 1


@dataclass
class GenParams:
    room: tuple = (4.0, 8.0)
    movable_coverage: float = 0.20
    static_coverage: float = 0.05
    coverage_tol: float = 0.02
    mass_range: tuple = (4.0, 36.0)
    static_mass: float = 1000.0
    circumradius: tuple = (0.2, 0.6)
    mass_belief_error: float = 0.0
    heavy_mass: tuple = (60.0, 90.0)
    max_attempts: int = 10000
    min_gap: float = 0.05

    @classmethod
    def from_config(cls, cfg):
        g = cfg["generator"]
        return cls(room=tuple(g["room"]),
                   movable_coverage=float(g["movable_coverage"]),
                   static_coverage=float(g["static_coverage"]),
                   coverage_tol=float(g["coverage_tol"]),
                   mass_range=tuple(g["mass_range"]),
                   static_mass=float(g["static_mass"]),
                   circumradius=tuple(g["circumradius"]),
                   mass_belief_error=float(g["mass_belief_error"]),
                   heavy_mass=tuple(g["heavy_mass"]),
                   max_attempts=int(g["max_attempts"]))


@dataclass
class Scenario:
    seed: int
    room: tuple
    start: np.ndarray
    goal: np.ndarray
    obstacles: list
    version: int = SCENARIO_VERSION

    def to_dict(self) -> dict:
        obs = []
        for o in self.obstacles:
            obs.append({
                "id": o.id,
                "vertices": [[float(x), float(y)] for x, y in o.shape.vertices],
                "pose": [float(v) for v in o.pose],
                "mass_believed": float(o.mass),
                "mass_true": float(o.mass_true),
            })
        return {
            "version": self.version,
            "seed": int(self.seed),
            "room": [float(self.room[0]), float(self.room[1])],
            "start": [float(self.start[0]), float(self.start[1])],
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "obstacles": obs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        obstacles = [
            Obstacle(id=entry["id"],
                     shape=Polygon(entry["vertices"]),
                     pose=tuple(entry["pose"]),
                     mass=float(entry["mass_believed"]),
                     mass_true=float(entry["mass_true"]))
            for entry in data["obstacles"]
        ]
        return cls(seed=int(data["seed"]), room=tuple(data["room"]),
                   start=np.asarray(data["start"], dtype=float),
                   goal=np.asarray(data["goal"], dtype=float),
                   obstacles=obstacles,
                   version=int(data.get("version", SCENARIO_VERSION)))

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _regular_polygon(n: int, radius: float) -> Polygon:
    angles = np.arange(n) * (2.0 * math.pi / n)
    return Polygon(np.column_stack([radius * np.cos(angles),
                                    radius * np.sin(angles)]))


def _sample_shape(rng, circumradius) -> Polygon:
    lo, hi = circumradius
    for _ in range(100):
        if rng.random() < 0.6:
            hw = rng.uniform(0.15, 0.5)
            hh = rng.uniform(0.15, 0.5)
            if math.hypot(hw, hh) > hi:
                continue
            return Polygon([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])
        n = int(rng.integers(3, 7))
        return _regular_polygon(n, rng.uniform(lo, hi))
    return _regular_polygon(4, lo)


def generate_scenario(seed: int, params: GenParams = None) -> Scenario:
    """Randomized room layout with rejection sampling.

    Obstacles are placed without initial overlap, keep a small spawn gap
    from each other, and stay clear of the start and goal discs.  Coverage
    targets are met by adding obstacles until the area fraction enters the
    tolerance band.  Raises GenerationFailed if placement keeps failing.
    """
    params = params or GenParams()
    rng = np.random.default_rng(seed)
    w, l = params.room
    area = w * l
    attempts = 0

    start = np.array([rng.uniform(0.6, w - 0.6), rng.uniform(0.35, 0.5)])
    goal = np.array([rng.uniform(0.6, w - 0.6), rng.uniform(l - 0.5, l - 0.35)])

    placed = []           # (hull, Obstacle)
    obstacles = []

    def try_place(shape, mass_believed, mass_true, oid):
        nonlocal attempts
        for _ in range(50):
            attempts += 1
            if attempts > params.max_attempts:
                raise GenerationFailed(
                    f"seed {seed}: placement budget exhausted")
            cx = rng.uniform(0.02 + shape.bounding_radius(),
                             w - 0.02 - shape.bounding_radius())
            cy = rng.uniform(0.8, l - 0.8)
            theta = rng.uniform(-math.pi, math.pi)
            cand = Obstacle(id=oid, shape=shape, pose=(cx, cy, theta),
                            mass=mass_believed, mass_true=mass_true)
            hull = cand.world_hull
            verts = hull.vertices
            if (verts[:, 0].min() < 0.02 or verts[:, 0].max() > w - 0.02 or
                    verts[:, 1].min() < 0.02 or verts[:, 1].max() > l - 0.02):
                continue
            if point_to_polygon_distance(start, hull) < 0.35 + params.min_gap:
                continue
            if point_to_polygon_distance(goal, hull) < 0.35 + params.min_gap:
                continue
            ok = True
            for other_hull, _ in placed:
                if min_distance(hull, other_hull) < params.min_gap:
                    ok = False
                    break
            if ok:
                placed.append((hull, cand))
                obstacles.append(cand)
                return True
        return False

    def fill(target_frac, make_mass, prefix):
        nonlocal attempts
        lo = (target_frac - params.coverage_tol / 2.0) * area
        hi = (target_frac + params.coverage_tol / 2.0) * area
        total = 0.0
        idx = 0
        while total < lo:
            if attempts > params.max_attempts:
                raise GenerationFailed(
                    f"seed {seed}: placement budget exhausted")
            shape = _sample_shape(rng, params.circumradius)
            if total + shape.area > hi:
                attempts += 1
                continue
            mass = make_mass()
            if try_place(shape, mass, mass, f"{prefix}{idx}"):
                total += shape.area
                idx += 1

    fill(params.static_coverage, lambda: params.static_mass, "s")
    fill(params.movable_coverage,
         lambda: rng.uniform(*params.mass_range), "m")

    if params.mass_belief_error > 0.0:
        out = []
        for o in obstacles:
            if o.mass <= DEFAULT_MAX_MASS and rng.random() < params.mass_belief_error:
                o = dataclasses.replace(o, mass_true=rng.uniform(*params.heavy_mass))
            out.append(o)
        obstacles = out

    return Scenario(seed=seed, room=(w, l), start=start, goal=goal,
                    obstacles=obstacles)


@dataclass
class TrialResult:
    planner: str
    seed: int
    path_found: bool
    executed: bool
    plan_time: float          # wall-clock seconds
    exec_time: float          # simulated seconds
    force_ns: float           # integral of contact force, N*s
    force_kn_steps: float     # summed per-step force, kN * steps
    replans: int
    path_cost: float = 0.0
    cycles: int = 0


def _plan(planner, obstacles, start, goal, r, max_mass, spacing, *,
          room, strict, rng_seed, brrt_params):
    """Returns (Waypoints or None, wall seconds)."""
    t0 = time.perf_counter()
    walls = room_walls(*room)
    try:
        if planner == "brrt":
            pts = build_brrt(obstacles + walls, start, goal, r, max_mass,
                             rng_seed=rng_seed, params=brrt_params, room=room)
            wps = interpolate_waypoints([np.asarray(p) for p in pts], spacing)
        else:
            if planner == "svg":
                graph = build_svg(obstacles + walls, start, goal, r, max_mass,
                                  room=room, strict=strict)
            elif planner == "bvg":
                graph = build_bvg(obstacles + walls, start, goal, r,
                                  max_mass, room=room, strict=strict)
            elif planner == "nvg":
                graph = build_nvg(obstacles + walls, start, goal, r,
                                  room=room, strict=strict)
            else:
                raise ValueError(f"unknown planner {planner!r}")
            ids = astar(graph)
            if ids is None:
                return None, time.perf_counter() - t0
            wps = interpolate_waypoints(
                [graph.nodes[i].position for i in ids], spacing)
        return wps, time.perf_counter() - t0
    except (NoPathFound, StartOrGoalBlocked, GoalUnreachable):
        return None, time.perf_counter() - t0


class TraceWriter:
    def __init__(self, path):
        self._fh = open(path, "w") if path else None

    def write(self, record: dict):
        if self._fh:
            json.dump(record, self._fh, sort_keys=True)
            self._fh.write("\n")

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def run_trial(scenario: Scenario, planner: str, cfg: dict = None, *,
              replan_enabled: bool = True, trace_path: str = None,
              rng_seed: int = None) -> TrialResult:
    """Plan once, then run the closed loop until the goal or the time cap.

    The controller rolls out with believed masses while the world steps with
    true masses.  When the monitor fires, the culprit's believed mass is
    raised above the movability threshold and the active planner replans
    from the current pose (unless replanning is disabled).
    """
    from .config import load_config, monitor_from, mppi_config_from
    cfg = cfg or load_config()
    pl = cfg["planner"]
    r, max_mass = float(pl["r"]), float(pl["max_mass"])
    spacing = float(pl["spacing"])
    mcfg = mppi_config_from(cfg)
    mon = monitor_from(cfg)
    phys = cfg["physics"]
    f_max = phys["f_max"]
    if f_max is None:
        f_max = default_f_max(float(phys["mu_g"]), max_mass)
    sim_time = float(cfg["bench"]["sim_time"])
    goal_tol = float(cfg["bench"]["goal_tol"])
    brrt_params = BrrtParams(**cfg["brrt"])
    if rng_seed is None:
        rng_seed = scenario.seed

    room = scenario.room
    start, goal = scenario.start, scenario.goal
    believed = {o.id: o.mass for o in scenario.obstacles}
    current = list(scenario.obstacles)

    trace = TraceWriter(trace_path)
    wps, plan_time = _plan(planner, current, start, goal, r, max_mass,
                           spacing, room=room, strict=True,
                           rng_seed=rng_seed, brrt_params=brrt_params)
    trace.write({"type": "header", "version": TRACE_VERSION,
                 "planner": planner, "replanning": bool(replan_enabled),
                 "scenario": scenario.to_dict(),
                 "waypoints": None if wps is None else wps.points.tolist()})
    if wps is None:
        trace.write({"type": "result", "path_found": False,
                     "executed": False, "exec_time": 0.0,
                     "force_ns": 0.0, "force_kn_steps": 0.0, "replans": 0})
        trace.close()
        return TrialResult(planner, scenario.seed, False, False, plan_time,
                           0.0, 0.0, 0.0, 0)

    walls = room_walls(*room)
    truth = PhysicsModel(current + walls, room=room, mu_g=float(phys["mu_g"]),
                         f_max=float(f_max), stiffness=float(phys["stiffness"]),
                         use_believed=False)

    def make_belief_model():
        obs = [dataclasses.replace(o, mass=believed[o.id], _world=None)
               for o in current]
        return PhysicsModel(obs + walls, room=room, mu_g=float(phys["mu_g"]),
                            f_max=float(f_max),
                            stiffness=float(phys["stiffness"]),
                            use_believed=True)

    ctl_model = make_belief_model()

    heading = 0.0
    if len(wps.points) > 1:
        d = wps.points[1] - wps.points[0]
        heading = math.atan2(d[1], d[0])
    world = truth.initial_state(np.array([start[0], start[1], heading]))
    nominal = np.zeros((mcfg.T, 3))
    rng = np.random.default_rng(np.random.SeedSequence((rng_seed, 0xB0)))

    n_cycles = int(round(sim_time / mcfg.dt))
    force_ns = 0.0
    force_kn_steps = 0.0
    replans = 0
    executed = False
    sim_t = 0.0
    prev_obs = world.obstacle_poses.copy()

    c = 0
    while c < n_cycles:
        if math.hypot(world.robot_pose[0] - goal[0],
                      world.robot_pose[1] - goal[1]) <= goal_tol:
            executed = True
            break
        infeasible = False
        try:
            control, nominal = mppi_step(world, nominal, wps, mcfg,
                                         ctl_model, rng)
        except AllRolloutsInfeasible:
            control = np.zeros(3)
            nominal = np.zeros((mcfg.T, 3))
            infeasible = True
        world, report = physics_step(world, control, mcfg.dt, truth)
        sim_t += mcfg.dt
        force_ns += report.total_force * mcfg.dt
        force_kn_steps += report.total_force / 1000.0

        moved = {}
        for i, o in enumerate(truth.ids):
            if not np.array_equal(world.obstacle_poses[i], prev_obs[i]):
                moved[o] = [float(v) for v in world.obstacle_poses[i]]
        prev_obs = world.obstacle_poses.copy()

        mon, signal = monitor_update(
            mon, control, world.robot_vel,
            world.robot_pose[:2].copy(), sim_t, report)
        trace.write({
            "type": "step", "cycle": c, "t": round(sim_t, 9),
            "pose": [float(v) for v in world.robot_pose],
            "vel": [float(v) for v in world.robot_vel],
            "cmd": [float(v) for v in control],
            "force": float(report.total_force),
            "moved": moved,
            "monitor": list(mon.last_conditions),
            "infeasible": infeasible,
        })
        c += 1

        if signal is not None and replan_enabled:
            if signal.obstacle_id is not None and signal.obstacle_id in believed:
                believed[signal.obstacle_id] = max_mass + EPS_MASS
            current = [dataclasses.replace(
                o, pose=tuple(world.obstacle_poses[i]),
                mass=believed[o.id], _world=None)
                for i, o in enumerate(scenario.obstacles)]
            pose = world.robot_pose[:2].copy()
            new_wps, extra = _plan(planner, current, pose, goal, r, max_mass,
                                   spacing, room=room, strict=False,
                                   rng_seed=rng_seed + replans + 1,
                                   brrt_params=brrt_params)
            plan_time += extra
            replans += 1
            trace.write({"type": "replan", "cycle": c, "t": round(sim_t, 9),
                         "obstacle": signal.obstacle_id,
                         "found": new_wps is not None})
            if new_wps is None:
                break
            wps = new_wps
            ctl_model = make_belief_model()
            nominal = np.zeros((mcfg.T, 3))
            mon.reset()

    if not executed and math.hypot(world.robot_pose[0] - goal[0],
                                   world.robot_pose[1] - goal[1]) <= goal_tol:
        executed = True

    trace.write({"type": "result", "path_found": True, "executed": executed,
                 "exec_time": round(sim_t, 9),
                 "force_ns": force_ns, "force_kn_steps": force_kn_steps,
                 "replans": replans})
    trace.close()
    return TrialResult(planner, scenario.seed, True, executed, plan_time,
                       sim_t, force_ns, force_kn_steps, replans, cycles=c)


def _mean_se(values):
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(len(arr)))


def _csv_rows(fh, columns, rows):
    fh.write(",".join(columns) + "\n")
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            if isinstance(v, float):
                cells.append("nan" if math.isnan(v) else f"{v:.6g}")
            else:
                cells.append(str(v))
        fh.write(",".join(cells) + "\n")


@dataclass
class SuiteReport:
    """Aggregated suite results.

    report.csv carries only simulation-determined quantities so reruns with
    the same seeds yield byte-identical files; wall-clock planning times go
    to a separate timings.csv.
    """

    rows: list = field(default_factory=list)
    timing_rows: list = field(default_factory=list)

    COLUMNS = ("planner", "trials", "path_success_pct", "exec_success_pct",
               "exec_time_mean_s", "exec_time_se_s",
               "force_ns_mean", "force_ns_se",
               "force_kn_steps_mean", "force_kn_steps_se",
               "replans_total")
    TIMING_COLUMNS = ("planner", "plan_time_mean_s", "plan_time_se_s")

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            _csv_rows(fh, self.COLUMNS, self.rows)

    def to_timings_csv(self, path: str):
        with open(path, "w") as fh:
            _csv_rows(fh, self.TIMING_COLUMNS, self.timing_rows)


def summarize(trials) -> SuiteReport:
    """Aggregate per planner.  Time and force statistics are taken over the
    relevant successes only: plan time over found paths, execution time and
    force over completed runs."""
    report = SuiteReport()
    planners = []
    for t in trials:
        if t.planner not in planners:
            planners.append(t.planner)
    for p in planners:
        sub = [t for t in trials if t.planner == p]
        found = [t for t in sub if t.path_found]
        done = [t for t in sub if t.executed]
        pt_m, pt_se = _mean_se([t.plan_time for t in found])
        et_m, et_se = _mean_se([t.exec_time for t in done])
        fn_m, fn_se = _mean_se([t.force_ns for t in done])
        fk_m, fk_se = _mean_se([t.force_kn_steps for t in done])
        report.rows.append({
            "planner": p, "trials": len(sub),
            "path_success_pct": 100.0 * len(found) / len(sub) if sub else float("nan"),
            "exec_success_pct": 100.0 * len(done) / len(sub) if sub else float("nan"),
            "exec_time_mean_s": et_m, "exec_time_se_s": et_se,
            "force_ns_mean": fn_m, "force_ns_se": fn_se,
            "force_kn_steps_mean": fk_m, "force_kn_steps_se": fk_se,
            "replans_total": sum(t.replans for t in sub),
        })
        report.timing_rows.append({
            "planner": p, "plan_time_mean_s": pt_m, "plan_time_se_s": pt_se,
        })
    return report


def run_suite(seeds, planners, cfg: dict = None, out_dir: str = None, *,
              replan_enabled: bool = True, progress=None):
    """Cross product of seeds and planners.  Returns (trials, SuiteReport).

    When out_dir is given, writes traces/<seed>_<planner>.jsonl for each
    trial, report.csv, and the effective config as config.json.
    """
    from .config import load_config, save_config
    cfg = cfg or load_config()
    gen = GenParams.from_config(cfg)
    trace_dir = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        trace_dir = os.path.join(out_dir, "traces")
        os.makedirs(trace_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "config.json"))
    trials = []
    for seed in seeds:
        scenario = generate_scenario(seed, gen)
        for planner in planners:
            tp = None
            if trace_dir:
                tp = os.path.join(trace_dir, f"{seed}_{planner}.jsonl")
            result = run_trial(scenario, planner, cfg,
                               replan_enabled=replan_enabled, trace_path=tp)
            trials.append(result)
            if progress:
                progress(result)
    report = summarize(trials)
    if out_dir:
        report.to_csv(os.path.join(out_dir, "report.csv"))
        report.to_timings_csv(os.path.join(out_dir, "timings.csv"))
    return trials, report
