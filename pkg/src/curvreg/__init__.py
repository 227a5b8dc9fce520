"""Curvature-regularized graph embedding.

Subpackages: ``graph_core`` (graphs, paths, walks), ``geometry`` (distances,
turning angles, distortion), ``regularizers`` (curvature losses),
``embedders`` (MF, LE, SGNS), ``trainer`` (two-phase training),
``evaluation`` (node classification and link prediction) and ``cli``.
"""

from .errors import CapacityError, CurvregError, DegenerateError, GraphFormatError, TrainingError
from .geometry import distortion, geodesic_distance, turning_cosine
from .graph_core import Graph, PathSet, load_edge_list, load_labels
from .regularizers import RegularizerKind, build_state, omega_gradient, omega_loss
from .trainer import TrainConfig, two_phase_train

__version__ = "0.1.0"

__all__ = ["CapacityError", "CurvregError", "DegenerateError", "GraphFormatError", "TrainingError",
           "Graph", "PathSet", "load_edge_list", "load_labels", "distortion", "geodesic_distance",
           "turning_cosine", "RegularizerKind", "build_state", "omega_gradient", "omega_loss",
           "TrainConfig", "two_phase_train"]
