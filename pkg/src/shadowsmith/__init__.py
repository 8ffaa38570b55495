"""Context-preserving instance-level augmentation for SAR ship imagery,
with reference deformable convolution / RoI pooling kernels."""

from .dataset import (
    Annotation,
    BoundingBox,
    Dataset,
    ImageRecord,
    crop_subimage,
    decode_mask,
    encode_rle,
    load_dataset,
    load_layout,
    write_annotations,
    write_dataset,
)
from .errors import ConfigError, DatasetError, MaskDecodeError, ShadowsmithError
from .pipeline import AugmentConfig, AugmentReport, Method, augment_dataset, augment_instance
from .rects import AugmentParams, Rect, place_rect, rect_dims, sample_params, sample_rect
from .context import context_pixels, match_histogram, sample_noise_patch
from .synth import SceneConfig, generate_dataset, generate_scene

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AugmentConfig",
    "AugmentParams",
    "AugmentReport",
    "BoundingBox",
    "ConfigError",
    "Dataset",
    "DatasetError",
    "ImageRecord",
    "MaskDecodeError",
    "Method",
    "Rect",
    "SceneConfig",
    "ShadowsmithError",
    "augment_dataset",
    "augment_instance",
    "context_pixels",
    "crop_subimage",
    "decode_mask",
    "encode_rle",
    "generate_dataset",
    "generate_scene",
    "load_dataset",
    "load_layout",
    "match_histogram",
    "place_rect",
    "rect_dims",
    "sample_noise_patch",
    "sample_params",
    "sample_rect",
    "write_annotations",
    "write_dataset",
]
