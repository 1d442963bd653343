"""Exception types shared across the package."""


class NamoplanError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInput(NamoplanError):
    """Geometric input too degenerate to process (collinear points, non-simple polygon, ...)."""


class StartOrGoalBlocked(NamoplanError):
    """Start or goal lies inside the inflated footprint of a non-movable obstacle."""


class GoalUnreachable(NamoplanError):
    """No path to the goal exists in the current graph."""


class NoPathFound(NamoplanError):
    """Sampling-based planner exhausted its iteration budget without connecting the goal."""


class AllRolloutsInfeasible(NamoplanError):
    """Every sampled rollout violated the state constraints; no control can be blended."""


class UnknownObstacle(NamoplanError):
    """Obstacle id not present in the scenario."""


class GenerationFailed(NamoplanError):
    """Scenario generator exceeded its rejection-sampling budget."""
