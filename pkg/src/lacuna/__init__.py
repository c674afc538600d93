"""Lacunarity pooling for texture-aware feature extraction.

Windowed gliding-box and box-counting lacunarity operators over NCHW
feature maps, a multiscale pyramid variant with learnable scale mixing, a
frozen-backbone fusion classifier around them, and the training/measurement
harness used to compare pooling methods on synthetic gap textures.
"""

from .tensor import (
    GroupedMixWeights,
    PoolSpec,
    ShapeMismatchError,
    as_feature_map,
    elementwise_mul,
    gap,
    global_spec,
    mix_scales,
    pool_avg,
    pool_l2,
    pool_max,
    pool_min,
    pool_sum,
    upsample_bilinear,
)
from .lacunarity import (
    DbcStats,
    LacunarityConfig,
    PyramidDepthError,
    base_lacunarity,
    blur_binomial5,
    box_index,
    dbc_column_heights,
    dbc_lacunarity,
    dbc_scale_planes,
    gaussian_pyramid,
    multiscale_lacunarity,
    multiscale_scale_planes,
    tanh_scale,
    variance_ratio,
)
from .gradcheck import (
    BACKWARD,
    CHECKED_OPS,
    GradCheckReport,
    UnknownOpError,
    backward,
    finite_diff_check,
    param_count,
    run_gradient_suite,
)
from .model import (
    BASELINE_POOLS,
    FeatureFileError,
    FrozenBackbone,
    FusionModel,
    linear_classifier,
    read_feature_file,
    read_label_sidecar,
    softmax,
    softmax_cross_entropy,
    write_feature_file,
)
from .train import (
    Adam,
    DivergenceError,
    EmptySplitError,
    EvalReport,
    History,
    TrainConfig,
    TrainResult,
    evaluate,
    split_indices,
    train,
)
from .metrics import FdrReport, fisher_discriminant_ratio, summarize_log_fdr
from .textures import (
    GRADES,
    TextureGenerationError,
    TextureSample,
    generate_texture,
    global_lacunarity,
    heterogeneity_dataset,
    toy_dataset,
)
from .pgm import PgmError, read_pgm, write_pgm
from .experiment import (
    ExperimentConfig,
    ExperimentConfigError,
    ExperimentResult,
    MethodSummary,
    format_results,
    load_config,
    run_experiment,
    write_results,
)

__all__ = [
    "Adam",
    "BACKWARD",
    "BASELINE_POOLS",
    "CHECKED_OPS",
    "DbcStats",
    "DivergenceError",
    "EmptySplitError",
    "EvalReport",
    "ExperimentConfig",
    "ExperimentConfigError",
    "ExperimentResult",
    "FdrReport",
    "FeatureFileError",
    "FrozenBackbone",
    "FusionModel",
    "GRADES",
    "GradCheckReport",
    "GroupedMixWeights",
    "History",
    "LacunarityConfig",
    "MethodSummary",
    "PgmError",
    "PoolSpec",
    "PyramidDepthError",
    "ShapeMismatchError",
    "TextureGenerationError",
    "TextureSample",
    "TrainConfig",
    "TrainResult",
    "UnknownOpError",
    "as_feature_map",
    "backward",
    "base_lacunarity",
    "blur_binomial5",
    "box_index",
    "dbc_column_heights",
    "dbc_lacunarity",
    "dbc_scale_planes",
    "elementwise_mul",
    "evaluate",
    "finite_diff_check",
    "fisher_discriminant_ratio",
    "format_results",
    "gap",
    "gaussian_pyramid",
    "generate_texture",
    "global_lacunarity",
    "global_spec",
    "heterogeneity_dataset",
    "linear_classifier",
    "load_config",
    "mix_scales",
    "multiscale_lacunarity",
    "multiscale_scale_planes",
    "param_count",
    "pool_avg",
    "pool_l2",
    "pool_max",
    "pool_min",
    "pool_sum",
    "read_feature_file",
    "read_label_sidecar",
    "read_pgm",
    "run_experiment",
    "run_gradient_suite",
    "softmax",
    "softmax_cross_entropy",
    "split_indices",
    "summarize_log_fdr",
    "tanh_scale",
    "toy_dataset",
    "train",
    "upsample_bilinear",
    "variance_ratio",
    "write_feature_file",
    "write_pgm",
    "write_results",
]
