"""Truth trajectories, inertial sensor simulation and INS error propagation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from ..errors import ConfigurationError, PropagationError
from ..mapping.geodesy import LocalFrame
from ..models import (
    ACCEL_BIAS,
    ATT,
    GYRO_BIAS,
    NAV_STATE_DIM,
    POS,
    VEL,
    GeoPosition,
    ImuSample,
    NavState,
)
from ..utils import derive_rng, is_psd, symmetrize, wrap_attitude

LOGGER = logging.getLogger(__name__)

GRAVITY = 9.80665
EARTH_RADIUS = 6_371_000.0
EARTH_RATE = 7.292115e-5
RAD_PER_S_PER_DEG_PER_H = math.radians(1.0) / 3600.0
SCHULER_PERIOD = 2.0 * math.pi * math.sqrt(EARTH_RADIUS / GRAVITY)

# Error-state indices inside the 13-state layout
_NAV = slice(0, 7)
_N, _E, _VN, _VE = 0, 1, 2, 3


@dataclass(frozen=True)
class SensorSpec:
    """Inertial sensor error budget.

    Accelerometer terms are in m/s^2 and m/s^2/sqrt(Hz); gyroscope terms in
    deg/h and deg/h/sqrt(Hz). Horizontal values apply to body x and y,
    vertical values to body z.
    """

    accel_bias_horizontal: float = 0.0
    accel_bias_vertical: float = 0.0
    accel_noise_horizontal: float = 0.0
    accel_noise_vertical: float = 0.0
    gyro_bias_horizontal: float = 0.0
    gyro_bias_vertical: float = 0.0
    gyro_noise_horizontal: float = 0.0
    gyro_noise_vertical: float = 0.0
    rate: float = 1.0

    def __post_init__(self) -> None:
        for item in fields(self):
            value = getattr(self, item.name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"must be a non-negative number, got {value}", key=item.name)
        if not self.rate > 0:
            raise ConfigurationError(f"must be positive, got {self.rate}", key="rate")

    @classmethod
    def precision(cls, rate: float = 1.0) -> "SensorSpec":
        # Precision-grade navigation sensors
        return cls(
            accel_bias_horizontal=2e-6,
            accel_bias_vertical=2.5e-8,
            accel_noise_horizontal=8e-5,
            accel_noise_vertical=1.6e-6,
            gyro_bias_horizontal=2e-5,
            gyro_bias_vertical=1e-3,
            gyro_noise_horizontal=1e-3,
            gyro_noise_vertical=3e-2,
            rate=rate,
        )

    @classmethod
    def tactical(cls, rate: float = 1.0) -> "SensorSpec":
        # Drift large enough that unaided error reaches kilometres within an hour
        return cls(
            accel_bias_horizontal=5e-4,
            accel_bias_vertical=5e-4,
            accel_noise_horizontal=1e-4,
            accel_noise_vertical=1e-4,
            gyro_bias_horizontal=0.1,
            gyro_bias_vertical=0.1,
            gyro_noise_horizontal=0.01,
            gyro_noise_vertical=0.01,
            rate=rate,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "SensorSpec":
        """Builds a spec from a preset name plus field overrides."""
        data = dict(data)
        preset = data.pop("preset", None)
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown sensor fields {unknown}", key="sensor")
        if preset is None:
            return cls(**data)
        if preset not in SENSOR_PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}", key="sensor.preset")
        base = SENSOR_PRESETS[preset]()
        values = {item.name: getattr(base, item.name) for item in fields(cls)}
        values.update(data)
        return cls(**values)

    def to_dict(self) -> Dict[str, float]:
        return {item.name: getattr(self, item.name) for item in fields(self)}

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    @property
    def accel_bias(self) -> np.ndarray:
        h, v = self.accel_bias_horizontal, self.accel_bias_vertical
        return np.array([h, h, v])

    @property
    def gyro_bias(self) -> np.ndarray:
        # rad/s
        h, v = self.gyro_bias_horizontal, self.gyro_bias_vertical
        return np.array([h, h, v]) * RAD_PER_S_PER_DEG_PER_H

    @property
    def accel_noise_density(self) -> np.ndarray:
        h, v = self.accel_noise_horizontal, self.accel_noise_vertical
        return np.array([h, h, v])

    @property
    def gyro_noise_density(self) -> np.ndarray:
        # rad/s/sqrt(Hz)
        h, v = self.gyro_noise_horizontal, self.gyro_noise_vertical
        return np.array([h, h, v]) * RAD_PER_S_PER_DEG_PER_H

    @property
    def accel_noise_std(self) -> np.ndarray:
        # Per-sample standard deviation of the white noise
        return self.accel_noise_density * math.sqrt(self.rate)

    @property
    def gyro_noise_std(self) -> np.ndarray:
        return self.gyro_noise_density * math.sqrt(self.rate)


SENSOR_PRESETS = {"precision": SensorSpec.precision, "tactical": SensorSpec.tactical, "ideal": SensorSpec}


@dataclass(frozen=True, eq=False)
class ImuBias:
    """Constant accelerometer (m/s^2) and gyroscope (rad/s) biases of one run."""

    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float).reshape(3))

    @classmethod
    def zero(cls) -> "ImuBias":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def draw(cls, spec: SensorSpec, rng: np.random.Generator) -> "ImuBias":
        # Uniform in +/- the configured bias on every axis
        return cls(
            accel=rng.uniform(-1.0, 1.0, 3) * spec.accel_bias,
            gyro=rng.uniform(-1.0, 1.0, 3) * spec.gyro_bias,
        )


@dataclass(frozen=True, eq=False)
class TruthTrajectory:
    """Straight constant-speed path sampled at a fixed rate.

    ``positions`` are (north, east) metres in ``frame``; ``velocity`` is the
    constant north/east/down velocity. The body frame is level and points
    along the track.
    """

    times: np.ndarray
    positions: np.ndarray
    velocity: np.ndarray
    height: float
    frame: LocalFrame
    rate: float

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))

    @property
    def heading(self) -> float:
        return math.atan2(float(self.velocity[1]), float(self.velocity[0]))

    @property
    def attitude(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.heading])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def geo(self, index: int) -> GeoPosition:
        return self.frame.from_local(self.positions[index], height=self.height)

    def lat_lon(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.frame.from_local_arrays(self.positions[:, 0], self.positions[:, 1])

    def index_at(self, time: float) -> int:
        # Sample index of an exact sample time
        index = int(round((time - float(self.times[0])) * self.rate))
        if not 0 <= index < len(self) or abs(float(self.times[index]) - time) > 1e-6:
            raise PropagationError(f"t={time:.6f} s is not a sample time of the trajectory")
        return index

    def at(self, time: float) -> Tuple[GeoPosition, np.ndarray]:
        index = self.index_at(time)
        return self.geo(index), self.velocity.copy()

    def truncated(self, duration: float) -> "TruthTrajectory":
        """The leading part of the trajectory covering ``duration`` seconds."""
        keep = self.times - self.times[0] <= duration + 1e-9
        if np.count_nonzero(keep) < 2:
            raise ConfigurationError(f"duration {duration} s keeps fewer than two samples", key="duration")
        return TruthTrajectory(
            times=self.times[keep],
            positions=self.positions[keep],
            velocity=self.velocity,
            height=self.height,
            frame=self.frame,
            rate=self.rate,
        )


def generate_truth(
    start: GeoPosition,
    end: GeoPosition,
    speed: float,
    rate: float = 1.0,
    frame: Optional[LocalFrame] = None,
) -> TruthTrajectory:
    """Uniformly sampled straight path from ``start`` towards ``end`` in the local frame.

    The last sample is the final whole sample before the end point, so the
    duration is the path length over the speed rounded down to the sample
    interval.
    """
    if not speed > 0:
        raise ConfigurationError(f"must be positive, got {speed}", key="speed")
    if not rate > 0:
        raise ConfigurationError(f"must be positive, got {rate}", key="rate")
    frame = frame or LocalFrame.at(start.lat, start.lon)
    origin, target = frame.to_local(start), frame.to_local(end)
    delta = target - origin
    length = float(np.hypot(delta[0], delta[1]))
    if length == 0.0:
        raise ConfigurationError("start and end coincide; the path has zero length", key="end")
    direction = delta / length
    count = int(math.floor(length / speed * rate + 1e-9)) + 1
    times = np.arange(count) / rate
    positions = origin[None, :] + direction[None, :] * speed * times[:, None]
    LOGGER.debug("Truth path of %.1f km, %d samples over %.1f s", length / 1000.0, count, times[-1])
    return TruthTrajectory(
        times=times,
        positions=positions,
        velocity=np.array([direction[0] * speed, direction[1] * speed, 0.0]),
        height=start.height,
        frame=frame,
        rate=float(rate),
    )


def body_to_nav(heading: float) -> np.ndarray:
    # Rotation from the level body frame to north/east/down
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def ideal_imu(truth: TruthTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Error-free specific force and angular rate along the truth, shape (n, 3) each.

    Constant velocity over a spherical rotating earth: the specific force is
    the gravity reaction plus the Coriolis and transport terms, and the body
    rate is the earth rate plus the transport rate.
    """
    lat, _ = truth.lat_lon()
    lat = np.radians(lat)
    v_n, v_e, v_d = truth.velocity
    radius = EARTH_RADIUS + truth.height
    earth = EARTH_RATE * np.stack([np.cos(lat), np.zeros_like(lat), -np.sin(lat)], axis=1)
    transport = np.stack(
        [np.full_like(lat, v_e / radius), np.full_like(lat, -v_n / radius), -v_e * np.tan(lat) / radius], axis=1
    )
    velocity = np.broadcast_to(truth.velocity, earth.shape)
    force_nav = np.cross(2.0 * earth + transport, velocity)
    force_nav[:, 2] -= GRAVITY
    rate_nav = earth + transport
    nav_to_body = body_to_nav(truth.heading).T
    return force_nav @ nav_to_body.T, rate_nav @ nav_to_body.T


@dataclass(frozen=True, eq=False)
class ImuStream:
    """Simulated IMU output for one run with the bias it was drawn with."""

    times: np.ndarray
    specific_force: np.ndarray
    angular_rate: np.ndarray
    bias: ImuBias

    def __len__(self) -> int:
        return int(self.times.size)

    def __getitem__(self, index: int) -> ImuSample:
        return ImuSample(self.specific_force[index], self.angular_rate[index], float(self.times[index]))

    def __iter__(self) -> Iterator[ImuSample]:
        for index in range(len(self)):
            yield self[index]


def simulate_imu(
    truth: TruthTrajectory, spec: SensorSpec, seed: int, bias: Optional[ImuBias] = None
) -> ImuStream:
    """Ideal IMU output plus a constant bias and white noise of density * sqrt(rate)."""
    if abs(spec.rate - truth.rate) > 1e-9:
        raise ConfigurationError(f"sensor rate {spec.rate} Hz differs from truth rate {truth.rate} Hz", key="rate")
    bias = bias if bias is not None else ImuBias.draw(spec, derive_rng(seed, 0))
    noise_rng = derive_rng(seed, 1)
    force, rate = ideal_imu(truth)
    n = len(truth)
    force = force + bias.accel + noise_rng.standard_normal((n, 3)) * spec.accel_noise_std
    rate = rate + bias.gyro + noise_rng.standard_normal((n, 3)) * spec.gyro_noise_std
    return ImuStream(times=truth.times.copy(), specific_force=force, angular_rate=rate, bias=bias)


@dataclass(frozen=True)
class InitialUncertainty:
    """Initial navigation error standard deviations.

    A run draws its true initial error from these (all zero initialises at
    the truth); they also seed the initial covariance.
    """

    position_std_m: float = 0.0
    velocity_std_mps: float = 0.0
    attitude_std_rad: float = 0.0

    def __post_init__(self) -> None:
        for item in fields(self):
            if getattr(self, item.name) < 0:
                raise ConfigurationError("must be non-negative", key=item.name)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        # Error vector over the position, velocity and attitude states
        return np.concatenate(
            [
                rng.standard_normal(2) * self.position_std_m,
                rng.standard_normal(2) * self.velocity_std_mps,
                rng.standard_normal(3) * self.attitude_std_rad,
            ]
        )


def error_dynamics(heading: float, spec: SensorSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Continuous error model (A, Qc) over the 13 states.

    Built with tilt errors in the local-level frame, where gravity feeds tilt
    into velocity and velocity feeds back into tilt through 1/R (the Schuler
    loop), then mapped to roll/pitch/yaw errors through the heading.
    """
    a = np.zeros((NAV_STATE_DIM, NAV_STATE_DIM))
    tilt_n, tilt_e, tilt_d = 4, 5, 6
    a[_N, _VN] = a[_E, _VE] = 1.0
    a[_VN, tilt_e] = GRAVITY
    a[_VE, tilt_n] = -GRAVITY
    a[tilt_n, _VE] = 1.0 / EARTH_RADIUS
    a[tilt_e, _VN] = -1.0 / EARTH_RADIUS
    rotation = body_to_nav(heading)
    # Sensor errors: velocity gets -C db_a, tilt gets +C db_g
    a[_VN:_VE + 1, ACCEL_BIAS] = -rotation[:2, :]
    a[ATT, GYRO_BIAS] = rotation

    coupling = np.zeros((NAV_STATE_DIM, 6))
    coupling[:, :3] = -a[:, ACCEL_BIAS]
    coupling[:, 3:] = -a[:, GYRO_BIAS]
    density = np.concatenate([spec.accel_noise_density, spec.gyro_noise_density]) ** 2
    qc = coupling @ np.diag(density) @ coupling.T

    c, s = math.cos(heading), math.sin(heading)
    tilt_to_euler = -np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    similarity = np.eye(NAV_STATE_DIM)
    similarity[ATT, ATT] = tilt_to_euler
    inverse = np.linalg.inv(similarity)
    return similarity @ a @ inverse, symmetrize(similarity @ qc @ similarity.T)


def van_loan(a: np.ndarray, qc: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    # Exact discretisation of (A, Qc) over dt
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = -a
    block[:n, n:] = qc
    block[n:, n:] = a.T
    exponential = expm(block * dt)
    phi = exponential[n:, n:].T
    return phi, symmetrize(phi @ exponential[:n, n:])


class InsPropagator:
    """Truth-referenced INS for one run.

    The navigation estimate is carried as truth plus a linearised error that
    is driven by the difference between the IMU samples and the ideal IMU,
    so bias and noise of the simulated stream show up exactly as an INS
    would accumulate them.
    """

    def __init__(self, truth: TruthTrajectory, spec: SensorSpec, uncertainty: InitialUncertainty = InitialUncertainty()):
        self.truth = truth
        self.spec = spec
        self.uncertainty = uncertainty
        self._a, self._qc = error_dynamics(truth.heading, spec)
        self._ideal_force, self._ideal_rate = ideal_imu(truth)
        self._discrete: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def transition(self, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """(Phi, Qd) for a step of ``dt`` seconds, cached per step length."""
        key = round(dt, 9)
        if key not in self._discrete:
            self._discrete[key] = van_loan(self._a, self._qc, dt)
        return self._discrete[key]

    def initial_covariance(self) -> np.ndarray:
        variances = np.zeros(NAV_STATE_DIM)
        variances[POS] = self.uncertainty.position_std_m ** 2
        variances[VEL] = self.uncertainty.velocity_std_mps ** 2
        variances[ATT] = self.uncertainty.attitude_std_rad ** 2
        # A uniform draw in +/- b has variance b^2 / 3
        variances[ACCEL_BIAS] = self.spec.accel_bias ** 2 / 3.0
        variances[GYRO_BIAS] = self.spec.gyro_bias ** 2 / 3.0
        return np.diag(variances)

    def initial_state(self, rng: Optional[np.random.Generator] = None) -> NavState:
        """Estimate at the first truth sample, offset by a drawn initial error when ``rng`` is given."""
        error = self.uncertainty.draw(rng) if rng is not None else np.zeros(7)
        return self.compose(0, error, np.zeros(3), np.zeros(3), self.initial_covariance())

    def compose(
        self, index: int, nav_error: np.ndarray, accel_bias: np.ndarray, gyro_bias: np.ndarray, cov: np.ndarray
    ) -> NavState:
        # NavState at truth sample ``index`` carrying the given navigation error
        position = self.truth.positions[index] + nav_error[POS]
        velocity = self.truth.velocity + np.array([nav_error[_VN], nav_error[_VE], 0.0])
        attitude = wrap_attitude(*(self.truth.attitude + nav_error[ATT]))
        return NavState(
            position=self.truth.frame.from_local(position, height=self.truth.height),
            velocity=velocity,
            attitude=np.array(attitude),
            accel_bias=accel_bias,
            gyro_bias=gyro_bias,
            cov=cov,
            time=float(self.truth.times[index]),
        )

    def nav_error(self, state: NavState) -> np.ndarray:
        """Position, velocity and attitude error of ``state`` against the truth (7 values)."""
        index = self.truth.index_at(state.time)
        error = np.zeros(7)
        error[POS] = self.truth.frame.to_local(state.position) - self.truth.positions[index]
        error[VEL] = state.velocity[:2] - self.truth.velocity[:2]
        difference = state.attitude - self.truth.attitude
        error[ATT] = [math.remainder(angle, 2.0 * math.pi) for angle in difference]
        return error

    def horizontal_error(self, state: NavState) -> float:
        error = self.nav_error(state)
        return float(np.hypot(error[0], error[1]))

    def ins_propagate(self, state: NavState, imu: ImuSample, dt: float) -> NavState:
        """Advance the estimate by one IMU sample held over ``dt`` seconds."""
        if not dt > 0 or dt > self.spec.dt * (1.0 + 1e-6):
            raise PropagationError(f"step dt={dt} s must lie in (0, {self.spec.dt}] s")
        index = self.truth.index_at(state.time)
        target = self.truth.index_at(state.time + dt)
        phi, qd = self.transition(dt)
        residual_force = imu.specific_force - self._ideal_force[index] - state.accel_bias
        residual_rate = imu.angular_rate - self._ideal_rate[index] - state.gyro_bias
        error = (
            phi[_NAV, _NAV] @ self.nav_error(state)
            - phi[_NAV, ACCEL_BIAS] @ residual_force
            - phi[_NAV, GYRO_BIAS] @ residual_rate
        )
        cov = symmetrize(phi @ state.cov @ phi.T + qd)
        if not (np.all(np.isfinite(error)) and np.all(np.isfinite(cov))):
            raise PropagationError(f"navigation state became non-finite at t={state.time + dt:.1f} s")
        if not is_psd(cov):
            raise PropagationError(f"covariance lost positive semi-definiteness at t={state.time + dt:.1f} s")
        return self.compose(target, error, state.accel_bias, state.gyro_bias, cov)

    def run(self, state: NavState, stream: ImuStream, until: Optional[float] = None) -> List[NavState]:
        """Unaided propagation over the stream; returns the state at every sample."""
        states = [state]
        for sample in stream:
            if sample.time < state.time - 1e-9:
                continue
            if sample.time >= self.truth.times[-1] - 1e-9 or (until is not None and sample.time >= until - 1e-9):
                break
            state = self.ins_propagate(state, sample, self.spec.dt)
            states.append(state)
        return states
