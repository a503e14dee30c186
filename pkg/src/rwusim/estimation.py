"""Tilt estimation: gyro Euler rates, least-squares accelerometer tilt
with pivot-acceleration compensation, and complementary fusion.

The accelerometer path stacks the four body-frame readings, removes the
estimated pivot acceleration, and solves a linear least-squares problem
whose constant column is the gravity direction in the tilted frame and
whose remaining block is the angular-acceleration operator. Both tilt
angles follow from the recovered gravity direction with two-argument
arctangents. The gyro path maps averaged body rates through the rate
matrix evaluated at the previous fused estimate and integrates. The
fused estimate low-passes the accelerometer angles and high-passes the
gyro increments with a single mixing weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import RobotParams
from .sensors import EncoderReading, ImuConfig, ImuFrame, location_matrix


class CoplanarImuError(ValueError):
    """Raised when the IMU placement cannot support tilt recovery."""


@dataclass(frozen=True)
class LsWeights:
    """Right-inverse of the stacked sensor-location matrix, split.

    X1star weights recover the constant (gravity) column, X2star the
    angular-acceleration block. Both depend only on the IMU positions.
    """

    X1star: np.ndarray  # L
    X2star: np.ndarray  # L x 3


def precompute_ls_weights(positions: np.ndarray) -> LsWeights:
    P = location_matrix(positions)
    if np.linalg.matrix_rank(P, tol=1e-10) < 4:
        raise CoplanarImuError(
            "IMU positions are coplanar (location matrix rank "
            f"{np.linalg.matrix_rank(P, tol=1e-10)} < 4); "
            "tilt recovery needs four non-coplanar mounting points")
    X = P.T @ np.linalg.inv(P @ P.T)
    return LsWeights(X1star=X[:, 0].copy(), X2star=X[:, 1:4].copy())


def tilt_rotation(q1: float, q2: float) -> np.ndarray:
    """Rotation taking tilt-plane vectors into the frame (yaw-free)."""
    c1, s1 = math.cos(q1), math.sin(q1)
    c2, s2 = math.cos(q2), math.sin(q2)
    return np.array([[c2, s1 * s2, -c1 * s2],
                     [0.0, c1, s1],
                     [s2, -s1 * c2, c1 * c2]])


def gyro_euler_rates(
    gyro_body: np.ndarray,
    q1_prev: float,
    q2_prev: float,
    exact: bool = False,
) -> np.ndarray:
    """Euler angle rates from the averaged body-frame gyro readings.

    The default rate matrix keeps the published reduced form, which is
    exact in its roll row but drops a sin(q1) coupling from the pitch
    row and adds one to the yaw row; at small roll both forms agree.
    Set exact=True for the true inverse rate map (singular at 90 deg
    roll, like the dynamics chart).
    """
    w = np.mean(np.asarray(gyro_body, dtype=float), axis=0)
    c1, s1 = math.cos(q1_prev), math.sin(q1_prev)
    c2, s2 = math.cos(q2_prev), math.sin(q2_prev)
    if not exact:
        W = np.array([[c2, 0.0, s2],
                      [0.0, 1.0, 0.0],
                      [-c1 * s2, s1, c1 * c2]])
        return W @ w
    if abs(c1) < 1e-8:
        raise ValueError("exact rate map is singular at 90 deg roll")
    W = np.array([[c2, 0.0, s2],
                  [s1 * s2 / c1, 1.0, -s1 * c2 / c1],
                  [-s2 / c1, 0.0, c2 / c1]])
    return W @ w


def fusion_cutoff_hz(alpha: float, Ts: float) -> float:
    """Crossover frequency of the complementary filter.

    The accelerometer branch is a one-pole low-pass with discrete pole
    1 - alpha; matching that pole to continuous time gives the cutoff.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return -math.log(1.0 - alpha) / (2.0 * math.pi * Ts)


@dataclass
class WheelAccelFilter:
    """Low-passed drive-encoder rate, differenced once per tick.

    Output is zero until two samples have arrived (warming up) and for
    any constant input; after the low-pass settles on a ramp it tracks
    the ramp slope.
    """

    cutoff_hz: float = 10.0
    Ts: float = 0.01
    _y: float = 0.0
    _y_prev: float = 0.0
    _samples: int = 0

    @property
    def beta(self) -> float:
        return 1.0 - math.exp(-2.0 * math.pi * self.cutoff_hz * self.Ts)

    @property
    def warming_up(self) -> bool:
        return self._samples < 2

    def update(self, dq4E: float) -> float:
        if self._samples == 0:
            self._y = dq4E  # settle instantly on the first sample
        self._y_prev = self._y
        self._y += self.beta * (dq4E - self._y)
        self._samples += 1
        if self.warming_up:
            return 0.0
        return (self._y - self._y_prev) / self.Ts

    def reset(self) -> None:
        self._y = self._y_prev = 0.0
        self._samples = 0


def wheel_accel_filter(
    dq4E_history,
    cutoff_hz: float = 10.0,
    Ts: float = 0.01,
) -> float:
    """Fold a rate history through WheelAccelFilter, return the last output."""
    f = WheelAccelFilter(cutoff_hz=cutoff_hz, Ts=Ts)
    out = 0.0
    for v in dq4E_history:
        out = f.update(v)
    return out


def pivot_acceleration(
    q4_ddot_filtered: float,
    q1_prev: float,
    q2_prev: float,
    params: RobotParams,
) -> np.ndarray:
    """Dominant pivot-acceleration term: wheel spin-up along the track.

    Only the drive-wheel angular acceleration contributes appreciably;
    the yaw-coupled and wheel-offset terms are dropped here (see
    pivot_acceleration_full for the complete expression).
    """
    v = np.array([params.wheel_radius * q4_ddot_filtered, 0.0, 0.0])
    return tilt_rotation(q1_prev, q2_prev) @ v


def pivot_acceleration_full(
    q4_ddot_filtered: float,
    dq4: float,
    q1_prev: float,
    q2_prev: float,
    euler_rates: np.ndarray,
    euler_accels: np.ndarray,
    params: RobotParams,
) -> np.ndarray:
    """Complete pivot acceleration: contact-point and wheel-offset parts."""
    rw = params.wheel_radius
    dq1, _, dq3 = euler_rates
    ddq1, _, ddq3 = euler_accels
    c1, s1 = math.cos(q1_prev), math.sin(q1_prev)
    contact = np.array([rw * q4_ddot_filtered, rw * dq3 * dq4, 0.0])
    offset = np.array([
        2.0 * rw * c1 * dq1 * dq3 + rw * s1 * ddq3,
        rw * s1 * (dq1 * dq1 + dq3 * dq3) - rw * c1 * ddq1,
        -rw * c1 * dq1 * dq1 - rw * s1 * ddq1,
    ])
    return tilt_rotation(q1_prev, q2_prev) @ (contact + offset)


def accel_tilt(
    imu_frame: ImuFrame,
    pivot_accel: np.ndarray,
    weights: LsWeights,
    cfg: ImuConfig,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Tilt angles from one IMU frame, pivot compensation removed.

    Returns (q1A, q2A, g_hat, Omega_hat). The stacked least squares is
    solved by the precomputed right-inverse; the constant column enters
    the measurement model with a minus sign, so the gravity estimate is
    the negated first recovered column.
    """
    m_body = np.empty((4, 3))
    for i in range(4):
        m_body[i] = cfg.mount_rotations[i] @ imu_frame.accel_meas[i]
    m_body -= np.asarray(pivot_accel, dtype=float)
    M = m_body.T  # 3 x L, columns are compensated readings
    g_hat = -(M @ weights.X1star)
    Omega_hat = M @ weights.X2star
    g_norm = float(np.linalg.norm(g_hat))
    if g_norm < 0.1 * cfg.robot.g0:
        raise ValueError(
            f"recovered gravity norm {g_norm:.3f} is degenerate "
            "(free-fall-like input)")
    q1A = math.atan2(g_hat[1], math.hypot(g_hat[0], g_hat[2]))
    q2A = math.atan2(-g_hat[0], g_hat[2])
    return q1A, q2A, g_hat, Omega_hat


def calibrate_bias(
    static_frames,
    weights: LsWeights,
    cfg: ImuConfig,
    rate_threshold: float = 0.05,
) -> tuple[float, float]:
    """Mean accelerometer tilt over a static capture.

    Rejects the capture if the gyro channels move beyond the threshold;
    bias calibration on a moving robot would bake motion into the
    offsets.
    """
    frames = list(static_frames)
    if not frames:
        raise ValueError("need at least one calibration frame")
    rates = np.array([f.gyro_meas for f in frames])
    spread = np.max(np.abs(rates - np.mean(rates, axis=0)))
    if spread > rate_threshold:
        raise ValueError(
            f"robot not static during calibration (gyro spread {spread:.3f} "
            f"rad/s exceeds {rate_threshold})")
    zero = np.zeros(3)
    tilts = [accel_tilt(f, zero, weights, cfg)[:2] for f in frames]
    q1s, q2s = zip(*tilts)
    return float(np.mean(q1s)), float(np.mean(q2s))


@dataclass
class EstimatorState:
    """Everything the 100 Hz tilt estimator carries between ticks."""

    cfg: ImuConfig
    weights: LsWeights
    alpha: float = 0.02
    Ts: float = 0.01
    pivot_mode: str = "retained"  # retained | off | full
    wheel_lp_cutoff_hz: float = 10.0
    q1_bar: float = 0.0
    q2_bar: float = 0.0
    q1_hat: float = 0.0
    q2_hat: float = 0.0
    q1G: float = 0.0
    q2G: float = 0.0
    q3G: float = 0.0
    euler_rates_G: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q1A: float = 0.0
    q2A: float = 0.0
    pivot_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wheel_filter: WheelAccelFilter | None = None
    _rates_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        # alpha 1 is the degenerate accel-only setting, still well formed
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.pivot_mode not in ("retained", "off", "full"):
            raise ValueError(f"unknown pivot_mode {self.pivot_mode!r}")
        if self.wheel_filter is None:
            self.wheel_filter = WheelAccelFilter(
                cutoff_hz=self.wheel_lp_cutoff_hz, Ts=self.Ts)


def make_estimator(
    imu_cfg: ImuConfig,
    alpha: float = 0.02,
    Ts: float = 0.01,
    pivot_mode: str = "retained",
    wheel_lp_cutoff_hz: float = 10.0,
) -> EstimatorState:
    weights = precompute_ls_weights(imu_cfg.positions)
    return EstimatorState(cfg=imu_cfg, weights=weights, alpha=alpha, Ts=Ts,
                          pivot_mode=pivot_mode,
                          wheel_lp_cutoff_hz=wheel_lp_cutoff_hz)


def integrate_gyro(est: EstimatorState, rates: np.ndarray, Ts: float) -> None:
    """Accumulate the drifting gyro-only pose estimates."""
    est.q1G += Ts * rates[0]
    est.q2G += Ts * rates[1]
    est.q3G += Ts * rates[2]


# accel blending gates: reject frames whose recovered gravity norm is
# off by more than this fraction of g0 (the array is measuring motion,
# not gravity), and taper the pitch channel as gravity leaves the x-z
# plane (pitch from gravity is undefined when the frame lies at 90 deg
# roll, where atan2 sees only noise)
GRAVITY_NORM_BAND = 0.3
PITCH_INFO_FLOOR = 0.2


def accel_trust(g_hat: np.ndarray, g0: float) -> tuple[float, float]:
    """Per-channel accelerometer weights from one recovered gravity."""
    if abs(float(np.linalg.norm(g_hat)) - g0) > GRAVITY_NORM_BAND * g0:
        return 0.0, 0.0
    info = math.hypot(g_hat[0], g_hat[2]) / (PITCH_INFO_FLOOR * g0)
    return 1.0, min(1.0, info)


def complementary_fuse(
    est: EstimatorState,
    q1A: float,
    q2A: float,
    Ts: float,
    w1: float = 1.0,
    w2: float = 1.0,
) -> tuple[float, float]:
    """Blend accelerometer angles with gyro-advanced fused estimates.

    The gyro term is the previous fused estimate advanced by one gyro
    increment, not the free-running integral; the latter would leak
    gyro drift through the low-frequency channel. w1 and w2 derate the
    accelerometer weight per channel; at 0 a channel rides the gyro
    alone for that tick.
    """
    a1 = est.alpha * w1
    a2 = est.alpha * w2
    q1g = est.q1_hat + Ts * est.euler_rates_G[0]
    q2g = est.q2_hat + Ts * est.euler_rates_G[1]
    est.q1_hat = a1 * q1A + (1.0 - a1) * q1g
    est.q2_hat = a2 * q2A + (1.0 - a2) * q2g
    return est.q1_hat, est.q2_hat


def estimator_step(
    imu_frame: ImuFrame,
    encoders: EncoderReading,
    est: EstimatorState,
) -> EstimatorState:
    """One 100 Hz estimator tick: rates, integration, tilt, fusion."""
    gyro_body = np.empty((4, 3))
    for i in range(4):
        gyro_body[i] = est.cfg.mount_rotations[i] @ imu_frame.gyro_meas[i]
    rates = gyro_euler_rates(gyro_body, est.q1_hat, est.q2_hat)
    est.euler_rates_G = rates
    integrate_gyro(est, rates, est.Ts)

    q4dd = est.wheel_filter.update(encoders.dq4E)
    if est.pivot_mode == "off":
        pa = np.zeros(3)
    elif est.pivot_mode == "retained":
        pa = pivot_acceleration(q4dd, est.q1_hat, est.q2_hat, est.cfg.robot)
    else:
        accels = (rates - est._rates_prev) / est.Ts
        pa = pivot_acceleration_full(q4dd, encoders.dq4E, est.q1_hat,
                                     est.q2_hat, rates, accels,
                                     est.cfg.robot)
    est.pivot_accel = pa
    est._rates_prev = rates

    q1A, q2A, g_hat, _ = accel_tilt(imu_frame, pa, est.weights, est.cfg)
    est.q1A, est.q2A = q1A, q2A
    w1, w2 = accel_trust(g_hat, est.cfg.robot.g0)
    complementary_fuse(est, q1A, q2A, est.Ts, w1, w2)
    return est
