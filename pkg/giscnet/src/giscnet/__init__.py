"""Encoder-decoder dense-block network that reconstructs hyperspectral
cubes from a speckle camera's measurement image and its compressive
preprocessing, trained on the simulator's exported bundles."""

from .data import Bundle, BundleEntry, InputDenoiser, load_bundle
from .hsib import read_cube, write_cube
from .infer import infer, infer_bundle, load_checkpoint
from .loss import reconstruction_loss
from .model import GiscNet, build_network, count_params, quadrant_stack
from .spec import (
    VARIANT_PARAMS_M,
    VARIANTS,
    NetworkSpec,
    SpecError,
    TrainConfig,
    base_channels,
    channels_out,
    get_variant,
    stage_scale,
)
from .train import TrainResult, train

__version__ = "0.1.0"
