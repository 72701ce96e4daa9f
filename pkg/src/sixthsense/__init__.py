"""Person detection and 2D pose estimation from planar LiDAR scans.

A small convolutional network reads a ring of 360 range bins (the fused
view of two onboard scanners, optionally stacked with odometry-aligned
history) and predicts per-ray person presence, distance, and body
orientation.  Training labels come from a camera person detector, so no
hand annotation is involved anywhere.

The package also ships the matching simulator, dataset tooling, metric
suite, and a command line front end (``sixthsense --help``).
"""

from .detection import Detection, nms
from .geometry import Point2D, Pose2D, compose, inverse, relative_pose, wrap_angle
from .history import HistoryConfig, ScanWindow, build_window
from .lidar import RawScan, SensorConfig, VirtualScan, fuse, synchronize
from .model import ModelConfig, ModelParams, forward, init_params, load_params, save_params
from .supervision import CameraConfig, LabelTensor, PersonObservation, make_labels
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CameraConfig",
    "Detection",
    "HistoryConfig",
    "LabelTensor",
    "ModelConfig",
    "ModelParams",
    "PersonObservation",
    "Point2D",
    "Pose2D",
    "RawScan",
    "ScanWindow",
    "SensorConfig",
    "TrainConfig",
    "VirtualScan",
    "build_window",
    "compose",
    "forward",
    "fuse",
    "init_params",
    "inverse",
    "load_params",
    "make_labels",
    "nms",
    "relative_pose",
    "save_params",
    "synchronize",
    "train",
    "wrap_angle",
    "__version__",
]
