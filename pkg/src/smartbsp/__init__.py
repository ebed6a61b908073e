"""Learned local path planning on a polar occupancy grid with B-spline paths."""
from .grid import (ContractError, OccupancyGrid, PolarCountGrid, SensorGeometry, cell_center,
                   locate_cell, polar_binning, threshold_grid)
from .spline import (ActionTable, ActionVector, CostBreakdown, CostWeights, SplinePath, build_spline,
                     curvature_cost, distance_cost, obstacle_cost, total_cost)
from .nets import PolicyPair, load_weights, save_weights
from .ppo import PpoHyper, TrainReport, evaluate_success, train_network
from .planner import PlanResult, PolicySet, plan_step
from .sim import RobotState, SimConfig, WorldScenario, make_scenario, run_episode

__version__ = "0.1.0"
