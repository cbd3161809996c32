"""Single-photon LiDAR simulation and depth reconstruction."""
from .core import (
    SPEED_OF_LIGHT, DepthImage, DetectorConfig, PhotonCube, Prediction, PulseModel, Scene,
    bin_depth_width, validate_cube,
)
from .kernels import BACKEND

__version__ = "0.1.0"
