"""Spatially adaptive multilayer GAN inversion and editing.

The package inverts images into a style-based generator by choosing, per
image region, the shallowest latent space that reconstructs it well: easy
regions stay in the style space W+ where edits work best, hard regions get
masked feature offsets at deeper layers. Bundles of optimized variables can
then be edited with named style directions, gated by per-space applicability.
"""

from .classcond import (ClassBundle, ClassHandle, invert_class_conditional,
                        load_class_generator, predict_class, sample_image_cc,
                        synthesize_cc)
from .config import (LossWeights, OptimizationConfig, PredictorConfig,
                     load_config)
from .editing import (CAPABILITY_TABLE, ApplicabilityVerdict, EditDirection,
                      apply_edit, builtin_directions, check_applicability,
                      load_directions, render_comparison, save_direction,
                      save_directions)
from .encoders import (EncoderSet, build_encoders, encode_bundle,
                       load_encoders, save_encoders, train_encoders)
from .errors import (LoadError, NonFiniteLossError, RenderError, SamError,
                     ShapeError, UsageError)
from .generator import (FeatureTensor, GeneratorHandle, StyleStatistics,
                        estimate_style_statistics, load_generator, mean_style,
                        run_slice, sample_style, save_generator, synthesize)
from .inversion import (InversionResult, LatentBundle, form_image, invert,
                        invert_batch, load_bundle, reconstruction_loss,
                        save_bundle, total_objective_t, wplus_regularizer)
from .invertibility import (DEFAULT_TAU, LayerAssignment, MaskSet, build_masks,
                            refine_map, refine_maps, select_assignment)
from .metrics import (EvalReport, MethodCurve, benchmark_runtime,
                      encoder_method, evaluate, lpips_vgg, mse,
                      optimization_method, plot_benchmark, psnr,
                      write_benchmark_csv)
from .perceptual import perceptual_distance, perceptual_error_map
from .pipeline import SamResult, sam_invert
from .predictor import (ErrorPredictor, load_predictor, predict_error_maps,
                        save_predictor, train_predictor)
from .samb import read_samb, write_samb
from .segmentation import segment_image
from .spaces import EDITABILITY_ORDER, STYLEGAN_SPACES, LatentSpace
from .synthetic import patched_target, sample_image, target_suite

__version__ = "0.1.0"

__all__ = [
    "ApplicabilityVerdict", "CAPABILITY_TABLE", "ClassBundle", "ClassHandle",
    "DEFAULT_TAU", "EDITABILITY_ORDER", "EditDirection", "EncoderSet",
    "ErrorPredictor", "EvalReport", "FeatureTensor", "GeneratorHandle",
    "InversionResult", "LatentBundle", "LatentSpace", "LayerAssignment",
    "LoadError", "LossWeights", "MaskSet", "MethodCurve", "NonFiniteLossError",
    "OptimizationConfig", "PredictorConfig", "RenderError", "SamError",
    "SamResult", "ShapeError", "STYLEGAN_SPACES", "StyleStatistics",
    "UsageError", "apply_edit", "benchmark_runtime", "build_encoders",
    "build_masks", "builtin_directions", "check_applicability", "encode_bundle",
    "encoder_method", "estimate_style_statistics", "evaluate", "form_image",
    "invert", "invert_batch", "invert_class_conditional", "load_bundle",
    "load_class_generator", "load_config", "load_directions", "load_encoders",
    "load_generator", "load_predictor", "lpips_vgg", "mean_style", "mse",
    "optimization_method", "patched_target", "perceptual_distance",
    "perceptual_error_map", "plot_benchmark", "predict_class",
    "predict_error_maps", "psnr", "read_samb", "reconstruction_loss",
    "refine_map", "refine_maps", "render_comparison", "run_slice", "sam_invert",
    "sample_image", "sample_image_cc", "sample_style", "save_bundle",
    "save_direction", "save_directions", "save_encoders", "save_generator",
    "save_predictor", "segment_image", "select_assignment", "synthesize",
    "synthesize_cc", "target_suite", "total_objective_t", "train_encoders",
    "train_predictor", "wplus_regularizer", "write_benchmark_csv", "write_samb",
]
