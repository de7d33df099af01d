"""Relational knowledge-distillation losses on constant-curvature manifolds,
with exact student gradients and a place-recognition evaluation harness."""

__version__ = "0.1.0"

from .losses import (
    DistillConfig,
    TotalLoss,
    huber,
    kd_c_loss,
    kd_s_loss,
    relation_matrix,
    scheme_loss,
    total_loss,
)
from .manifolds import (
    cosine_relation,
    conformal_factor,
    euclidean_distance,
    exp_map,
    exp_map_origin,
    hyperbolic_distance,
    mobius_add,
    project_to_ball,
)
from .numeric import SplitMix64, dot, finite_diff_grad, norm, seeded_rng
from .toy import SceneConfig, gen_scene, run_experiment
from .vpr import (
    RecallReport,
    TripletConfig,
    ar_at_one_percent,
    recall_at_k,
    recall_report,
    triplet_loss,
)

__all__ = [
    "DistillConfig",
    "RecallReport",
    "SceneConfig",
    "SplitMix64",
    "TotalLoss",
    "TripletConfig",
    "ar_at_one_percent",
    "conformal_factor",
    "cosine_relation",
    "dot",
    "euclidean_distance",
    "exp_map",
    "exp_map_origin",
    "finite_diff_grad",
    "gen_scene",
    "huber",
    "hyperbolic_distance",
    "kd_c_loss",
    "kd_s_loss",
    "mobius_add",
    "norm",
    "project_to_ball",
    "recall_at_k",
    "recall_report",
    "relation_matrix",
    "run_experiment",
    "scheme_loss",
    "seeded_rng",
    "total_loss",
    "triplet_loss",
    "__version__",
]
