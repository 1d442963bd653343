"""Runtime configuration: defaults, JSON file loading, dotted overrides.

A config is a plain nested dict.  ``load_config`` starts from the defaults
below, deep-merges an optional JSON file on top (path argument, else the
NAMOPLAN_CONFIG environment variable), and returns the result.  Helper
constructors turn sub-sections into the typed objects the modules expect.
"""

from __future__ import annotations

import copy
import json
import os

from .mppi_controller import MonitorState, MppiConfig

ENV_CONFIG = "NAMOPLAN_CONFIG"

DEFAULTS = {
    "planner": {
        "r": 0.3,
        "max_mass": 30.0,
        "spacing": 0.5,
    },
    "mppi": {
        "K": 256,
        "T": 25,
        "dt": 0.08,
        "sigma": [0.3, 0.3, 0.5],
        "beta": 0.5,
        "alpha": 0.5,
        "eps_force": 1e-6,
        "u_max": [1.0, 1.0, 1.5],
        "weights": {
            "ctrl": [0.25, 0.25, 0.1],
            "dist": 0.8,
            "prog": 2.5,
            "rot": 0.2,
            "force": 0.4,
        },
    },
    "monitor": {
        "eps": 0.1,
        "lam": 0.75,
        "mu": 0.1,
        "tau": 30.0,
        "window": 1.0,
        "disp_tol": 0.02,
    },
    "physics": {
        "mu_g": 0.4,
        "f_max": None,
        "stiffness": 1.0e4,
    },
    "brrt": {
        "step": 0.3,
        "goal_bias": 0.1,
        "max_iters": 20000,
        "smooth": True,
    },
    "generator": {
        "room": [4.0, 8.0],
        "movable_coverage": 0.20,
        "static_coverage": 0.05,
        "coverage_tol": 0.02,
        "mass_range": [4.0, 36.0],
        "static_mass": 1000.0,
        "circumradius": [0.2, 0.6],
        "mass_belief_error": 0.0,
        "heavy_mass": [60.0, 90.0],
        "max_attempts": 10000,
    },
    "bench": {
        "sim_time": 300.0,
        "goal_tol": 0.2,
        "replanning": True,
    },
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str = None, overrides: dict = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path:
        with open(path) as fh:
            cfg = _deep_merge(cfg, json.load(fh))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: dict, overrides: dict) -> dict:
    """Apply {"mppi.K": 128, ...} style dotted-path overrides."""
    cfg = copy.deepcopy(cfg)
    for path, value in overrides.items():
        keys = path.split(".")
        node = cfg
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    return cfg


def save_config(cfg: dict, path: str):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


def mppi_config_from(cfg: dict) -> MppiConfig:
    m = cfg["mppi"]
    w = m["weights"]
    return MppiConfig(
        K=int(m["K"]), T=int(m["T"]), dt=float(m["dt"]),
        sigma=tuple(float(s) for s in m["sigma"]),
        beta=float(m["beta"]), alpha=float(m["alpha"]),
        eps_force=float(m["eps_force"]),
        u_max=tuple(float(u) for u in m["u_max"]),
        w_ctrl=tuple(float(x) for x in w["ctrl"]),
        w_dist=float(w["dist"]), w_prog=float(w["prog"]),
        w_rot=float(w["rot"]), w_force=float(w["force"]),
    )


def monitor_from(cfg: dict) -> MonitorState:
    m = cfg["monitor"]
    return MonitorState(
        eps_vel=float(m["eps"]), lambda_dev=float(m["lam"]),
        mu_slip=float(m["mu"]), tau_replan=float(m["tau"]),
        window_len=float(m["window"]), disp_tol=float(m["disp_tol"]),
    )
