"""IntFormer: pedestrian crossing anticipation from image crops, boxes, pose and ego speed."""

__version__ = "0.1.0"

from .dataset import (DatasetSplit, ObservationWindow, SignalSpec, TrackAnnotation,
                      compute_class_weight, extract_windows, generate_synthetic, load_annotations,
                      save_annotations, split_by_video)
from .metrics import accuracy, auc_roc, f1_score
from .model import IntFormer, IntFormerConfig
from .preprocess import FeatureBundle, FeatureMask, NormStats, PreprocessConfig, assemble_bundle
from .seq_encoder import SeqEncoderConfig
from .shift import LearnableShift, learnable_shift
from .training import TrainConfig, make_param_groups, train, weighted_bce
from .video_encoder import VideoEncoderConfig, count_parameters

__all__ = [
    "DatasetSplit", "ObservationWindow", "SignalSpec", "TrackAnnotation", "compute_class_weight",
    "extract_windows", "generate_synthetic", "load_annotations", "save_annotations", "split_by_video",
    "accuracy", "auc_roc", "f1_score", "IntFormer", "IntFormerConfig", "FeatureBundle", "FeatureMask",
    "NormStats", "PreprocessConfig", "assemble_bundle", "SeqEncoderConfig", "LearnableShift",
    "learnable_shift", "TrainConfig", "make_param_groups", "train", "weighted_bce",
    "VideoEncoderConfig", "count_parameters",
]
