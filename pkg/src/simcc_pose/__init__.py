"""Coordinate-classification pose estimation in NumPy.

Keypoints are predicted as two 1-D distributions over sub-pixel bins by a
small conv backbone and a gated-attention head, trained on synthetic data
and run inside a top-down video pipeline.
"""

from .codec import BinSpec, bin_spec_from_input, decode_coordinates, encode_soft_label, sigma_for_bins
from .geometry import BBox, PoseResult, bbox_from_pose, crop_affine
from .model import ModelConfig, PoseModel, init_model
from .pipeline import PipelineConfig, PipelineState, process_frame
from .postprocess import OneEuroState, oks, oneeuro_step, pose_nms
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BBox", "BinSpec", "ModelConfig", "OneEuroState", "PipelineConfig", "PipelineState", "PoseModel",
    "PoseResult", "TrainConfig", "bbox_from_pose", "bin_spec_from_input", "crop_affine",
    "decode_coordinates", "encode_soft_label", "init_model", "oks", "oneeuro_step", "pose_nms",
    "process_frame", "sigma_for_bins", "train",
]
