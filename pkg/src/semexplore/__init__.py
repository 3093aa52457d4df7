"""Active metric-semantic exploration on 2D grid worlds.

A simulated robot maps a labeled grid world with a multi-class occupancy
grid, keeps an SE(2) pose graph, and chooses frontier paths by combining
semantic mutual information with the D-optimality of the predicted graph.
"""

from .errors import (CollisionError, ConfigurationError, DomainError, OptimizationError,
                     WorldParseError)
from .semgrid import SemanticGrid, new_grid, integrate_scan, traverse_ray
from .infotheory import SensorConfig, path_mutual_information, ray_mutual_information
from .spectral import WeightedGraph, d_opt_laplacian, spanning_tree_count
from .posegraph import Pose2, PoseGraph, graph_d_opt, optimize
from .planner import astar, detect_frontiers
from .utility import select_action, shannon_renyi_utility
from .simworld import GroundTruthWorld, load_world

__version__ = "0.1.0"
