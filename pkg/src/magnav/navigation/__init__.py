"""Inertial navigation simulation and map-aided integration filter."""
from .ins import (
    GRAVITY,
    EARTH_RADIUS,
    SCHULER_PERIOD,
    ImuBias,
    ImuStream,
    InitialUncertainty,
    InsPropagator,
    SensorSpec,
    TruthTrajectory,
    generate_truth,
    ideal_imu,
    simulate_imu,
)
from .integrator import (
    AidingMeasurement,
    MfvWeighting,
    NavigationFilter,
    PredictedDensity,
    UkfParams,
    UpdateResult,
    apply_mfv_weighting,
    predict,
    ukf_update,
)

__all__ = [
    "AidingMeasurement",
    "EARTH_RADIUS",
    "GRAVITY",
    "ImuBias",
    "ImuStream",
    "InitialUncertainty",
    "InsPropagator",
    "MfvWeighting",
    "NavigationFilter",
    "PredictedDensity",
    "SCHULER_PERIOD",
    "SensorSpec",
    "TruthTrajectory",
    "UkfParams",
    "UpdateResult",
    "apply_mfv_weighting",
    "generate_truth",
    "ideal_imu",
    "predict",
    "simulate_imu",
    "ukf_update",
]
