"""Skid-steer kinematic models: twist prediction, calibration and odometry error evaluation."""

from skidsteer.calibration import CalibrationReport, LossConfig, OptimizerConfig, calibrate, loss
from skidsteer.dataset import (
    AngularSaturation,
    CommandLog,
    PoseLog,
    SimScenario,
    SyncedTrajectory,
    driving_profile,
    excitation_profile,
    simulate,
    synchronize,
)
from skidsteer.evaluation import evaluate, horizon_sweep, rotation_response, summarize
from skidsteer.geometry import Pose2D, Twist2D, between, compose, integrate, rollout
from skidsteer.models import (
    ChassisGeometry,
    ExtendedDDAsymmetric,
    ExtendedDDSymmetric,
    FullLinear,
    IdealDD,
    RocBased,
    WheelCommand,
    predict_twist,
)
from skidsteer.segmentation import HorizonConfig, Segment, segment

__version__ = "0.1.0"
