"""Two-stage retinal vessel segmentation.

A valid-convolution U-net trained with per-batch random class weights yields a
vessel likelihood map. Two thresholds split it into easy and ambiguous pixels,
and a smaller patch network trained with a randomly weighted F-beta loss
labels the ambiguous ones.
"""
from .data import DatasetTag, FundusSample, load_dataset, preprocess
from .losses import ClassWeights, PixelPrediction, WeightSampler
from .nets import Checkpoint, UNetGeometry, build_mini_unet, build_unet, receptive_geometry
from .srs import Band, SRSConfig, SRSPartition, partition
from .stage1 import LikelihoodMap, TrainConfig, infer_likelihood, train_stage1
from .targeted import PatchGeometry, merge, predict_ambiguous, train_stage2

__version__ = "0.1.0"
