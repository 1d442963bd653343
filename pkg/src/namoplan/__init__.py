"""Navigation among movable obstacles: planning, pushing control, benchmarking."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    baselines,
    benchmark,
    config,
    errors,
    geometry,
    mppi_controller,
    physics_world,
    svg_planner,
)
