"""Object-aware evaluation toolkit for visual attention maps.

Metric kernels (SIM, CC, KLD, NSS, AUC-Judd and the object-based osim),
ground-truth map synthesis from gaze fixations, a composite training loss
with verified analytic gradients, a desk-scale graph scene-context encoder,
dataset ingestion, and a deterministic batch-evaluation CLI.
"""

from .core import (
    RAW,
    UNIT_MAX,
    UNIT_SUM,
    BinaryFixationMap,
    EvalFrame,
    FixationSet,
    PanopticMap,
    SaliencyMap,
    SegmentInfo,
    normalize_unit_max,
    normalize_unit_sum,
    rasterize_fixations,
)
from .errors import (
    BoundsError,
    ConfigError,
    DegenerateInputError,
    EmptyDatasetError,
    EmptyFixationsError,
    FormatError,
    GraphError,
    ObjsalError,
    ShapeError,
    ZeroMassError,
)
from .gtgen import GtGenConfig, dva_to_pixels, render_ground_truth
from .graphcontext import (
    GraphEncoderParams,
    ModulationMlp,
    ObjectGraph,
    SceneContext,
    aggregate_scene,
    condition_modulate,
    embed_object,
    encode_scene,
    encoder_grad_check,
    fuse_with_features,
    gcn_layer,
    init_encoder_params,
    init_modulation_mlp,
)
from .loss import (
    LossBreakdown,
    LossWeights,
    combined_loss,
    fd_gradient,
    grad_combined_loss,
)
from .metrics import (
    MetricOptions,
    MetricReport,
    OsimResult,
    auc_judd,
    cc,
    evaluate_frame,
    kld,
    nss,
    osim,
    sim,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "RAW",
    "UNIT_MAX",
    "UNIT_SUM",
    "BinaryFixationMap",
    "EvalFrame",
    "FixationSet",
    "PanopticMap",
    "SaliencyMap",
    "SegmentInfo",
    "normalize_unit_max",
    "normalize_unit_sum",
    "rasterize_fixations",
    # errors
    "ObjsalError",
    "BoundsError",
    "ConfigError",
    "DegenerateInputError",
    "EmptyDatasetError",
    "EmptyFixationsError",
    "FormatError",
    "GraphError",
    "ShapeError",
    "ZeroMassError",
    # gtgen
    "GtGenConfig",
    "dva_to_pixels",
    "render_ground_truth",
    # graphcontext
    "GraphEncoderParams",
    "ModulationMlp",
    "ObjectGraph",
    "SceneContext",
    "aggregate_scene",
    "condition_modulate",
    "embed_object",
    "encode_scene",
    "encoder_grad_check",
    "fuse_with_features",
    "gcn_layer",
    "init_encoder_params",
    "init_modulation_mlp",
    # loss
    "LossBreakdown",
    "LossWeights",
    "combined_loss",
    "fd_gradient",
    "grad_combined_loss",
    # metrics
    "MetricOptions",
    "MetricReport",
    "OsimResult",
    "auc_judd",
    "cc",
    "evaluate_frame",
    "kld",
    "nss",
    "osim",
    "sim",
]
