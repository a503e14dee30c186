"""Simulated IMU array and wheel encoders.

Four accelerometer/gyro units sit at chassis corners; each reports in
its own mounting frame. Accelerometers measure specific force relative
to free fall: at rest the vertical axis reads -g0 with the sign
convention used throughout (gravity resolved into the tilted frame
points along +z when upright). Encoders measure the wheel angles
relative to the frame, which for the quasi-absolute coordinates used
here means q4 - q2 and q5 - q1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics3d import FullState, body_kinematics, gravity_tilt_frame
from .params import RobotParams, default_params

DEG = math.pi / 180.0


class SensorConfigError(ValueError):
    """Raised for sensor configurations that cannot work."""


def _skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


@dataclass
class ImuConfig:
    """Placement, mounting, noise and range of the four IMUs.

    positions are measured from the rolling-wheel center in the frame's
    coordinates; mount_rotations map each sensor frame into the body
    frame. The four positions must be non-coplanar so that the stacked
    location matrix (ones row over positions) has rank 4; tilt recovery
    from the array is impossible otherwise.
    """

    positions: np.ndarray
    mount_rotations: np.ndarray
    accel_sigma: float = 0.02
    gyro_sigma: float = 0.002
    accel_range: float = 2.0 * 9.81
    gyro_range: float = 500.0 * DEG
    robot: RobotParams = field(default_factory=default_params)

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        self.mount_rotations = np.asarray(self.mount_rotations, dtype=float)
        if self.positions.shape != (4, 3):
            raise SensorConfigError(
                f"need four 3-vector positions, got shape {self.positions.shape}")
        if self.mount_rotations.shape != (4, 3, 3):
            raise SensorConfigError(
                f"need four mount rotations, got shape {self.mount_rotations.shape}")
        for R in self.mount_rotations:
            if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
                raise SensorConfigError("mount rotations must be orthonormal")
        if self.accel_sigma < 0.0 or self.gyro_sigma < 0.0:
            raise SensorConfigError("noise levels must be non-negative")
        if self.accel_range <= 0.0 or self.gyro_range <= 0.0:
            raise SensorConfigError("sensor ranges must be positive")
        P = location_matrix(self.positions)
        if np.linalg.matrix_rank(P, tol=1e-10) < 4:
            raise SensorConfigError(
                "IMU positions are coplanar; the location matrix has rank "
                f"{np.linalg.matrix_rank(P, tol=1e-10)} < 4")

    @classmethod
    def default(cls, params: RobotParams | None = None, **kw) -> "ImuConfig":
        """Four alternating chassis-cuboid corners (a tetrahedron)."""
        p = params if params is not None else default_params()
        b = p.chassis_half_width_b
        h = p.lever_L1
        zc = p.wheel_center_offset  # chassis center sits this far above W
        positions = np.array([
            [b, b, zc + h],
            [b, -b, zc - h],
            [-b, b, zc - h],
            [-b, -b, zc + h],
        ])
        mounts = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
        kw.setdefault("accel_range", 2.0 * p.g0)
        return cls(positions=positions, mount_rotations=mounts, robot=p, **kw)


def location_matrix(positions: np.ndarray) -> np.ndarray:
    """Ones row stacked over the transposed positions, 4 x L."""
    pos = np.asarray(positions, dtype=float)
    return np.vstack([np.ones(pos.shape[0]), pos.T])


@dataclass
class ImuFrame:
    """One synchronous sample of all four IMUs, in sensor frames."""

    accel_meas: np.ndarray  # 4 x 3, m/s^2
    gyro_meas: np.ndarray   # 4 x 3, rad/s


@dataclass
class EncoderReading:
    """Quantized wheel angles relative to the frame, with rates."""

    q4E: float
    q5E: float
    dq4E: float
    dq5E: float


def imu_specific_forces(
    acc_pivot_B: np.ndarray,
    omega_B: np.ndarray,
    omegadot_B: np.ndarray,
    q1: float,
    q2: float,
    cfg: ImuConfig,
) -> np.ndarray:
    """Noise-free body-frame accelerometer values at each IMU position.

    The sensors ride a rigid body whose pivot (the rolling-wheel center)
    accelerates by acc_pivot_B; each then sees the pivot acceleration
    plus the rotational terms at its offset, minus gravity resolved into
    the tilted frame. A body accelerating along that gravity vector with
    no rotation reads zero on every channel, as in free fall.
    """
    W = _skew(omegadot_B) + _skew(omega_B) @ _skew(omega_B)
    g_B = gravity_tilt_frame(q1, q2, cfg.robot.g0)
    out = np.empty((4, 3))
    for i, p in enumerate(cfg.positions):
        out[i] = np.asarray(acc_pivot_B, dtype=float) + W @ p - g_B
    return out


def simulate_imu_array(
    state: FullState,
    qdd: np.ndarray,
    cfg: ImuConfig,
    rng: np.random.Generator,
) -> ImuFrame:
    """Sample all four IMUs for one true state and acceleration.

    Readings are produced in each sensor's own frame, with per-axis
    Gaussian noise added there and hard clipping at the configured
    range. Pass sigma 0 in cfg for noiseless data; the rng is still
    consumed so seeded streams stay aligned across configs.
    """
    bk = body_kinematics(state, qdd, cfg.robot)
    m_body = imu_specific_forces(bk.acc_wheel_center_B, bk.omega_B,
                                 bk.omegadot_B, state.q[0], state.q[1], cfg)
    return imu_frame_from_specific_forces(m_body, bk.omega_B, cfg, rng)


def imu_frame_from_specific_forces(
    m_body: np.ndarray,
    omega_B: np.ndarray,
    cfg: ImuConfig,
    rng: np.random.Generator,
) -> ImuFrame:
    """Mount rotation, noise and clipping on precomputed specific forces.

    Lets callers with non-rolling contact kinematics (e.g. pivoting on
    a chassis corner) reuse the same noise and saturation path.
    """
    accel_noise = rng.normal(0.0, 1.0, (4, 3)) * cfg.accel_sigma
    gyro_noise = rng.normal(0.0, 1.0, (4, 3)) * cfg.gyro_sigma
    accel = np.empty((4, 3))
    gyro = np.empty((4, 3))
    for i in range(4):
        R = cfg.mount_rotations[i]
        accel[i] = R.T @ m_body[i] + accel_noise[i]
        gyro[i] = R.T @ np.asarray(omega_B, dtype=float) + gyro_noise[i]
    np.clip(accel, -cfg.accel_range, cfg.accel_range, out=accel)
    np.clip(gyro, -cfg.gyro_range, cfg.gyro_range, out=gyro)
    return ImuFrame(accel_meas=accel, gyro_meas=gyro)


@dataclass
class EncoderConfig:
    """Resolution and sampling of the two wheel encoders."""

    counts_per_rev: int = 4096
    sample_dt: float = 0.01

    def __post_init__(self) -> None:
        if self.counts_per_rev <= 0:
            raise SensorConfigError(
                f"counts_per_rev must be positive, got {self.counts_per_rev}")
        if not (self.sample_dt > 0.0 and math.isfinite(self.sample_dt)):
            raise SensorConfigError(
                f"sample_dt must be positive, got {self.sample_dt}")

    @property
    def quantum(self) -> float:
        return math.pi / self.counts_per_rev


def _quantize(angle: float, quantum: float) -> float:
    return round(angle / quantum) * quantum


def simulate_encoders(
    state: FullState,
    cfg: EncoderConfig,
    rng: np.random.Generator | None = None,
) -> EncoderReading:
    """Read both wheel encoders once.

    Angles quantize to the encoder grid. Rates are what differencing the
    quantized angle over one sample period would give, reconstructed
    statelessly by back-extrapolating the true relative angle; the
    resulting jitter never exceeds one quantum per sample. The rng
    argument is reserved for richer noise models and is not consumed.
    """
    dt = cfg.sample_dt
    qm = cfg.quantum
    rel4 = state.q[3] - state.q[1]
    rel5 = state.q[4] - state.q[0]
    rate4 = state.dq[3] - state.dq[1]
    rate5 = state.dq[4] - state.dq[0]
    q4E = _quantize(rel4, qm)
    q5E = _quantize(rel5, qm)
    dq4E = (q4E - _quantize(rel4 - rate4 * dt, qm)) / dt
    dq5E = (q5E - _quantize(rel5 - rate5 * dt, qm)) / dt
    return EncoderReading(q4E=q4E, q5E=q5E, dq4E=dq4E, dq5E=dq5E)
