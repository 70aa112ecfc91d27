from .grid import GridError, OccupancyGrid
from .astar import NoPathError, PathResult, astar_waypoints, grid_astar, path_length, plan_path
from .trajectory import (
    MotionPlan,
    PlanTimeError,
    gamma,
    gamma_derivatives,
    rigid_displacement,
    theta_trajectory,
)
from .safety import (
    InfeasibleSafetyError,
    PlanReport,
    SafetyBounds,
    TargetConfiguration,
    lambda_max_bound,
    lambda_min_bound,
    min_projection_gap,
    r_max_for,
    safety_bounds,
    shear_angles,
    shear_direction,
    validate_plan,
)
from .travel_time import TravelTimeError, TravelTimeResult, solve_travel_time
