"""Loosely coupled fusion of map-matching fixes into the INS estimate."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, unscented_transform

from ..errors import ConfigurationError
from ..mapping.geodesy import LocalFrame
from ..matching.quality import QualityRaster
from ..models import ACCEL_BIAS, ATT, GYRO_BIAS, NAV_STATE_DIM, POS, VEL, ImuSample, NavState, PositionFix
from ..utils import chi2_threshold, is_psd, psd_sqrt, symmetrize, wrap_attitude
from .ins import InsPropagator

LOGGER = logging.getLogger(__name__)


def position_selector() -> np.ndarray:
    # H picks north and east out of the 13-state vector
    selector = np.zeros((2, NAV_STATE_DIM))
    selector[0, 0] = selector[1, 1] = 1.0
    return selector


@dataclass(frozen=True, eq=False)
class AidingMeasurement:
    """Position fix y_k in local (north, east) metres with covariance R."""

    position: np.ndarray
    cov: np.ndarray
    time: float
    mfv_weight: Optional[float] = None

    def __post_init__(self) -> None:
        position = np.asarray(self.position, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not is_psd(cov):
            raise ValueError("aiding covariance must be symmetric positive semi-definite")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "cov", cov)

    @property
    def selector(self) -> np.ndarray:
        return position_selector()

    @classmethod
    def from_fix(cls, fix: PositionFix) -> "AidingMeasurement":
        return cls(position=fix.mean, cov=fix.cov, time=fix.time, mfv_weight=fix.mfv_weight)


@dataclass(frozen=True, eq=False)
class PredictedDensity:
    """N(X_k|k-1, Sigma_k|k-1) as handed over by the INS."""

    state: NavState
    frame: LocalFrame

    @property
    def mean(self) -> np.ndarray:
        return state_vector(self.state, self.frame)

    @property
    def cov(self) -> np.ndarray:
        return self.state.cov


def state_vector(state: NavState, frame: LocalFrame) -> np.ndarray:
    """Flattens a NavState into the 13-state layout with position in local metres."""
    vector = np.zeros(NAV_STATE_DIM)
    vector[POS] = frame.to_local(state.position)
    vector[VEL] = state.velocity[:2]
    vector[ATT] = state.attitude
    vector[ACCEL_BIAS] = state.accel_bias
    vector[GYRO_BIAS] = state.gyro_bias
    return vector


def from_state_vector(vector: np.ndarray, cov: np.ndarray, template: NavState, frame: LocalFrame) -> NavState:
    # Inverse of state_vector; height and vertical velocity come from the template
    return NavState(
        position=frame.from_local(vector[POS], height=template.position.height),
        velocity=np.array([vector[2], vector[3], template.velocity[2]]),
        attitude=np.array(wrap_attitude(*vector[ATT])),
        accel_bias=vector[ACCEL_BIAS],
        gyro_bias=vector[GYRO_BIAS],
        cov=cov,
        time=template.time,
    )


def predict(state: NavState, frame: LocalFrame) -> PredictedDensity:
    """The INS output is the predicted density; no further work is done here."""
    return PredictedDensity(state=state, frame=frame)


@dataclass(frozen=True)
class UkfParams:
    """Merwe scaled sigma-point settings and the innovation gate.

    ``kappa`` defaults to 3 - n. A fix whose normalised innovation squared
    exceeds the chi-square quantile of ``reject_probability`` is rejected.
    """

    alpha: float = 1.0
    beta: float = 2.0
    kappa: Optional[float] = None
    reject_probability: float = 0.999

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ConfigurationError("must be positive", key="alpha")
        if not 0.0 < self.reject_probability < 1.0:
            raise ConfigurationError("must lie in (0, 1)", key="reject_probability")

    @property
    def reject_threshold(self) -> float:
        return chi2_threshold(self.reject_probability, dof=2)

    def sigma_points(self, n: int) -> MerweScaledSigmaPoints:
        kappa = 3.0 - n if self.kappa is None else self.kappa
        return MerweScaledSigmaPoints(n, alpha=self.alpha, beta=self.beta, kappa=kappa, sqrt_method=psd_sqrt)


@dataclass(frozen=True, eq=False)
class UpdateResult:
    state: NavState
    accepted: bool
    nis: float


def ukf_update(pred: PredictedDensity, fix: AidingMeasurement, params: UkfParams = UkfParams()) -> UpdateResult:
    """Unscented update of the full state with a position fix.

    The observation picks the position states, so the result equals the
    linear Kalman update; velocity, attitude and biases move through their
    cross-covariance with position. A rejected fix returns the predicted
    state object unchanged.
    """
    if abs(fix.time - pred.state.time) > 1e-6:
        raise ConfigurationError(f"fix at t={fix.time} s does not match state at t={pred.state.time} s", key="time")
    mean, cov = pred.mean, pred.cov
    points = params.sigma_points(NAV_STATE_DIM)
    sigmas = points.sigma_points(mean, cov)
    observed = sigmas @ position_selector().T
    predicted_fix, innovation_cov = unscented_transform(observed, points.Wm, points.Wc, noise_cov=fix.cov)
    cross_cov = np.einsum("k,ki,kj->ij", points.Wc, sigmas - mean, observed - predicted_fix)
    innovation = fix.position - predicted_fix
    innovation_cov = symmetrize(innovation_cov)
    nis = float(innovation @ np.linalg.solve(innovation_cov, innovation))
    if nis > params.reject_threshold:
        LOGGER.warning("Rejected fix at t=%.1f s: NIS %.2f exceeds %.2f", fix.time, nis, params.reject_threshold)
        return UpdateResult(pred.state, False, nis)
    gain = np.linalg.solve(innovation_cov, cross_cov.T).T
    posterior_mean = mean + gain @ innovation
    posterior_cov = symmetrize(cov - gain @ innovation_cov @ gain.T)
    LOGGER.debug("Accepted fix at t=%.1f s: NIS %.2f, correction %.1f m", fix.time, nis, np.hypot(*(gain @ innovation)[:2]))
    return UpdateResult(from_state_vector(posterior_mean, posterior_cov, pred.state, pred.frame), True, nis)


@dataclass(frozen=True)
class MfvWeighting:
    """Inverse-MFV scaling of fix covariances.

    The scale is clamp(reference / mfv, w_min, w_max); without an explicit
    ``reference`` the raster maximum is used, so the most informative cell
    keeps its covariance and flatter cells are trusted less.
    """

    enabled: bool = False
    reference: Optional[float] = None
    w_min: float = 1.0
    w_max: float = 100.0

    def __post_init__(self) -> None:
        if not 0 < self.w_min <= self.w_max:
            raise ConfigurationError("need 0 < w_min <= w_max", key="mfv_weighting")
        if self.reference is not None and not self.reference > 0:
            raise ConfigurationError("must be positive", key="mfv_weighting.reference")


def apply_mfv_weighting(
    fix: AidingMeasurement, mfv_value: float, config: MfvWeighting, mfv_max: Optional[float] = None
) -> AidingMeasurement:
    """Scale the fix covariance by the clamped inverse MFV; the mean is untouched."""
    if mfv_value < 0:
        raise ValueError(f"MFV must be non-negative, got {mfv_value}")
    reference = config.reference if config.reference is not None else mfv_max
    if reference is None:
        raise ConfigurationError("no reference MFV given and no raster maximum known", key="mfv_weighting.reference")
    scale = config.w_max if mfv_value == 0 else float(np.clip(reference / mfv_value, config.w_min, config.w_max))
    return replace(fix, cov=fix.cov * scale, mfv_weight=scale)


class NavigationFilter:
    """Owns one run's navigation state stream: INS propagation plus fix updates."""

    def __init__(
        self,
        propagator: InsPropagator,
        state: NavState,
        ukf: UkfParams = UkfParams(),
        mfv_raster: Optional[QualityRaster] = None,
        weighting: MfvWeighting = MfvWeighting(),
    ):
        self.propagator = propagator
        self.state = state
        self.ukf = ukf
        self.mfv_raster = mfv_raster
        self.weighting = weighting
        self.accepted = 0
        self.rejected = 0
        self._mfv_max = mfv_raster.maximum() if mfv_raster is not None else None
        if weighting.enabled and mfv_raster is None and weighting.reference is None:
            LOGGER.warning("MFV weighting enabled without a raster; fixes will not be weighted")

    @property
    def frame(self) -> LocalFrame:
        return self.propagator.truth.frame

    def propagate(self, sample: ImuSample) -> NavState:
        self.state = self.propagator.ins_propagate(self.state, sample, self.propagator.spec.dt)
        return self.state

    def local_position(self) -> np.ndarray:
        return self.frame.to_local(self.state.position)

    def aid(self, fix: PositionFix) -> UpdateResult:
        """Fuse a fix taken at the current state time."""
        measurement = AidingMeasurement.from_fix(fix)
        if self.weighting.enabled and self.mfv_raster is not None:
            value = self.mfv_raster.at(measurement.position)
            if value is not None:
                measurement = apply_mfv_weighting(measurement, value, self.weighting, self._mfv_max)
        result = ukf_update(predict(self.state, self.frame), measurement, self.ukf)
        if result.accepted:
            self.accepted += 1
            self.state = result.state
        else:
            self.rejected += 1
        return result
