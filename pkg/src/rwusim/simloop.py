"""Deterministic closed-loop scenario engine.

Fixed-step physics substeps interleave with a 100 Hz control tick:
sense, estimate, command, delay line, actuate, log. Self-erection
scenarios start in the planar corner-pivot model and switch to the
rolling-contact rigid-body model the moment the wheel rim reaches the
ground; the state carries over through the shared tilt coordinates and
no touchdown impact is resolved. A config plus its seed fully
determines every logged value.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from .control import (BalanceMachine, MachineConfig, ManeuverPhase,
                      RollupMachine, StandupMachine, paper_preset_gains,
                      synthesize_gains)
from .dynamics3d import (FullState, SingularConfigurationError, _omega_body,
                         _wheel_center_velocity, body_kinematics,
                         forward_dynamics, rk4_step,
                         rotation_body_to_inertial, total_energy)
from .estimation import (accel_tilt, accel_trust, estimator_step,
                         make_estimator)
from .params import RobotParams, default_params
from .sensors import (EncoderConfig, ImuConfig, imu_frame_from_specific_forces,
                      imu_specific_forces, simulate_encoders,
                      simulate_imu_array)
from .standup2d import (PivotGeometry, body_tilt_from_upright,
                        derive_pivot_geometry, planar_dynamics)

__all__ = [
    "ConfigError", "Disturbance", "ScenarioConfig", "LogRow", "SimLog",
    "MANEUVERS", "SCHEMA_VERSION", "apply_push", "run_scenario", "rk4_step",
    "expected_rows", "success_from_rows",
]

SCHEMA_VERSION = 1
MANEUVERS = ("balance", "standup", "rollup", "estimator-ablation")


class ConfigError(ValueError):
    """A scenario document failed validation."""


@dataclass(frozen=True)
class Disturbance:
    """External push: a constant force over a time window.

    The force is an inertial-frame vector applied at a body-fixed point
    given in chassis coordinates from the rolling-wheel center. Pushes
    act only while the robot is on its wheel; the corner-pivot stages
    of the self-erection scenarios ignore them.
    """

    t_start: float
    duration: float
    force: tuple[float, float, float]
    point: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not (isinstance(self.t_start, (int, float))
                and math.isfinite(self.t_start) and self.t_start >= 0.0):
            raise ConfigError(f"t_start must be >= 0, got {self.t_start!r}")
        if not (isinstance(self.duration, (int, float))
                and math.isfinite(self.duration) and self.duration > 0.0):
            raise ConfigError(f"duration must be positive, got {self.duration!r}")
        for name in ("force", "point"):
            v = tuple(getattr(self, name))
            if len(v) != 3 or not all(
                    isinstance(c, (int, float)) and math.isfinite(c) for c in v):
                raise ConfigError(f"{name} must be a finite 3-vector, got {v!r}")
            object.__setattr__(self, name, tuple(float(c) for c in v))

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.duration


def _coerce(doc: dict, cls, what: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{what} must be an object, got {type(doc).__name__}")
    names = {f.name for f in fields(cls)}
    for k in doc:
        if k not in names:
            raise ConfigError(f"unknown {what} key {k!r}")
    return cls(**doc)


@dataclass
class ScenarioConfig:
    """Everything one reproducible run needs besides the robot params.

    The initial state applies to the balance scenario only; the
    self-erection scenarios define their own rest pose lying on the
    ground, and the ablation scenario scripts its motion outright.
    """

    maneuver: str = "balance"
    duration: float = 5.0
    dt_physics: float = 1e-3
    control_period: float = 0.01
    delay_steps: int = 1
    initial_q: tuple[float, ...] = (0.0,) * 5
    initial_dq: tuple[float, ...] = (0.0,) * 5
    disturbances: tuple[Disturbance, ...] = ()
    seed: int = 0
    alpha: float = 0.02
    pivot_mode: str = "retained"
    wheel_lp_cutoff_hz: float = 10.0
    accel_sigma: float = 0.02
    gyro_sigma: float = 0.002
    encoder_counts: int = 4096
    gain_preset: str = "paper"
    mu: float = 0.8
    machine: MachineConfig = field(default_factory=MachineConfig)
    drive_pulse_accel: float = 5.0
    drive_pulse_period: float = 3.0

    def __post_init__(self) -> None:
        if self.maneuver not in MANEUVERS:
            raise ConfigError(
                f"maneuver must be one of {MANEUVERS}, got {self.maneuver!r}")
        for name in ("duration", "dt_physics", "control_period", "mu",
                     "drive_pulse_accel", "drive_pulse_period"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        ratio = self.control_period / self.dt_physics
        if abs(ratio - round(ratio)) > 1e-6 * ratio or round(ratio) < 1:
            raise ConfigError(
                "control_period must be an integer multiple of dt_physics, "
                f"got {self.control_period} / {self.dt_physics}")
        if not (isinstance(self.delay_steps, int) and self.delay_steps >= 0):
            raise ConfigError(
                f"delay_steps must be a non-negative integer, "
                f"got {self.delay_steps!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.gain_preset not in ("paper", "synthesized"):
            raise ConfigError(
                f"gain_preset must be 'paper' or 'synthesized', "
                f"got {self.gain_preset!r}")
        self.initial_q = tuple(float(v) for v in self.initial_q)
        self.initial_dq = tuple(float(v) for v in self.initial_dq)
        if len(self.initial_q) != 5 or len(self.initial_dq) != 5:
            raise ConfigError("initial_q and initial_dq must have 5 entries")
        self.disturbances = tuple(self.disturbances)
        for d in self.disturbances:
            if not isinstance(d, Disturbance):
                raise ConfigError(f"disturbances must be Disturbance, got {d!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError(
                f"config must be an object, got {type(doc).__name__}")
        doc = dict(doc)
        version = doc.pop("schema-version", None)
        if version is None:
            raise ConfigError("config is missing the required schema-version")
        if version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema-version {version!r}, "
                f"expected {SCHEMA_VERSION}")
        initial = doc.pop("initial", None)
        if initial is not None:
            if not isinstance(initial, dict):
                raise ConfigError("initial must be an object with q and dq")
            extra = set(initial) - {"q", "dq"}
            if extra:
                raise ConfigError(f"unknown initial key {sorted(extra)[0]!r}")
            doc["initial_q"] = tuple(initial.get("q", (0.0,) * 5))
            doc["initial_dq"] = tuple(initial.get("dq", (0.0,) * 5))
        dist = doc.pop("disturbances", ())
        doc["disturbances"] = tuple(
            _coerce(d, Disturbance, "disturbance") for d in dist)
        mach = doc.pop("machine", None)
        if mach is not None:
            doc["machine"] = _coerce(mach, MachineConfig, "machine")
        return _coerce(doc, cls, "config")

    def to_dict(self) -> dict:
        out = {"schema-version": SCHEMA_VERSION}
        for f in fields(self):
            if f.name in ("initial_q", "initial_dq", "disturbances", "machine"):
                continue
            out[f.name] = getattr(self, f.name)
        out["initial"] = {"q": list(self.initial_q),
                          "dq": list(self.initial_dq)}
        out["disturbances"] = [
            {"t_start": d.t_start, "duration": d.duration,
             "force": list(d.force), "point": list(d.point)}
            for d in self.disturbances]
        out["machine"] = {f.name: getattr(self.machine, f.name)
                          for f in fields(MachineConfig)}
        return out


@dataclass
class LogRow:
    """One control tick: ground truth, estimates, commands, bookkeeping."""

    t: float
    q: tuple[float, ...]
    dq: tuple[float, ...]
    x: float
    y: float
    energy: float
    q1A: float
    q2A: float
    q1G: float
    q2G: float
    q3G: float
    q1_hat: float
    q2_hat: float
    pivot_ax: float
    u1: float
    u2: float
    i1: float
    i2: float
    phase: str
    dist_flag: int


@dataclass
class SimLog:
    """A complete run: uniformly ticked rows plus the outcome."""

    rows: list[LogRow]
    success: bool
    failure: str | None
    config: ScenarioConfig


def expected_rows(cfg: ScenarioConfig) -> int:
    return max(1, round(cfg.duration / cfg.control_period))


def success_from_rows(rows: list[LogRow] | list, cfg: ScenarioConfig) -> bool:
    """Outcome rule shared by the engine and the log summarizer.

    A run succeeds when it was not truncated, did not end Fallen, and,
    for the self-erection maneuvers, finished in full balancing.
    """
    if len(rows) < expected_rows(cfg):
        return False
    last_phase = rows[-1].phase if isinstance(rows[-1], LogRow) else rows[-1]
    if last_phase == ManeuverPhase.Fallen.name:
        return False
    if cfg.maneuver in ("standup", "rollup"):
        return last_phase == ManeuverPhase.BalanceFull.name
    return True


def apply_push(
    state: FullState,
    force,
    point,
    dt: float | None = None,
    params: RobotParams | None = None,
) -> np.ndarray:
    """Generalized forces from a Cartesian force at a body-fixed point.

    The point is given in chassis coordinates from the rolling-wheel
    center, the force in the inertial frame. Columns of the point's
    velocity Jacobian come from unit generalized rates; its transpose
    maps the force. dt is accepted for call-site symmetry with the
    steppers and does not affect the result.
    """
    p = default_params() if params is None else params
    force = np.asarray(force, dtype=float)
    point = np.asarray(point, dtype=float)
    if force.shape != (3,) or point.shape != (3,):
        raise ValueError("force and point must be 3-vectors")
    R = rotation_body_to_inertial(state.q)
    arm = R @ point
    J = np.empty((3, 5))
    for k in range(5):
        dq = np.zeros(5)
        dq[k] = 1.0
        v_center = np.array(_wheel_center_velocity(
            state.q[0], state.q[2], dq, p))
        omega_I = R @ np.array(_omega_body(state.q[0], state.q[1], dq))
        J[:, k] = v_center + np.cross(omega_I, arm)
    return J.T @ force


@dataclass
class _PlanarStage:
    """Corner-pivot segment of a self-erection scenario."""

    geom: PivotGeometry
    theta: float
    dtheta: float = 0.0
    thetadd: float = 0.0
    wheel_angle: float = 0.0
    wheel_rate: float = 0.0
    held: bool = True   # resting on the ground until torque lifts it


def _make_machine(cfg: ScenarioConfig, gains, params: RobotParams):
    if cfg.maneuver == "balance":
        return BalanceMachine(cfg=cfg.machine, gains=gains, params=params)
    if cfg.maneuver == "standup":
        return StandupMachine(cfg=cfg.machine, gains=gains, params=params)
    if cfg.maneuver == "rollup":
        return RollupMachine(cfg=cfg.machine, gains=gains, params=params)
    return None


def _planar_truth(planar: _PlanarStage, maneuver: str) -> FullState:
    tilt = body_tilt_from_upright(planar.geom, planar.theta)
    if maneuver == "standup":
        q = [tilt, 0.0, 0.0, 0.0, planar.wheel_angle]
        dq = [planar.dtheta, 0.0, 0.0, 0.0, planar.wheel_rate]
    else:
        q = [0.0, tilt, 0.0, planar.wheel_angle, 0.0]
        dq = [0.0, planar.dtheta, 0.0, planar.wheel_rate, 0.0]
    return FullState(q, dq, np.zeros(2))


def _planar_frame(planar: _PlanarStage, imu_cfg: ImuConfig,
                  params: RobotParams, rng: np.random.Generator):
    """IMU sample while pivoting about a ground-fixed chassis corner."""
    geom = planar.geom
    # wheel center relative to the pivot, in chassis coordinates
    w_from_cog = np.array([0.0, 0.0, -params.wheel_center_offset])
    r = w_from_cog - np.asarray(geom.pivot_pos_body)
    tilt = body_tilt_from_upright(geom, planar.theta)
    if geom.plane == "roll":
        omega = np.array([planar.dtheta, 0.0, 0.0])
        omegad = np.array([planar.thetadd, 0.0, 0.0])
        q1, q2 = tilt, 0.0
    else:
        omega = np.array([0.0, planar.dtheta, 0.0])
        omegad = np.array([0.0, planar.thetadd, 0.0])
        q1, q2 = 0.0, tilt
    acc_w = np.cross(omegad, r) + np.cross(omega, np.cross(omega, r))
    m_body = imu_specific_forces(acc_w, omega, omegad, q1, q2, imu_cfg)
    return imu_frame_from_specific_forces(m_body, omega, imu_cfg, rng)


def _planar_energy(planar: _PlanarStage, params: RobotParams) -> float:
    g = planar.geom
    return (0.5 * g.I_total * planar.dtheta ** 2
            + 0.5 * params.I_wheel_spin * planar.wheel_rate ** 2
            + params.m_total * params.g0 * g.cog_distance
            * math.cos(planar.theta))


def _planar_substep(planar: _PlanarStage, Q_w: float, dt: float,
                    params: RobotParams) -> bool:
    """Advance one substep; True once the wheel rim reaches the ground.

    The corner contact is one sided: while the net angular acceleration
    presses the frame into the floor the tilt stays put and only the
    wheel spins; lifting torque releases it. Falling back onto the
    start pose re-engages the hold.
    """
    geom = planar.geom
    tdd, odd = planar_dynamics(planar.theta, planar.wheel_rate, Q_w,
                               geom, params)
    if planar.held and tdd >= 0.0:
        planar.dtheta = 0.0
        planar.thetadd = 0.0
        planar.wheel_angle += dt * planar.wheel_rate + 0.5 * dt * dt * odd
        planar.wheel_rate += dt * odd
        return False
    planar.held = False
    planar.theta += dt * planar.dtheta + 0.5 * dt * dt * tdd
    planar.dtheta += dt * tdd
    planar.thetadd = tdd
    planar.wheel_angle += dt * planar.wheel_rate + 0.5 * dt * dt * odd
    planar.wheel_rate += dt * odd
    if planar.theta >= geom.theta_start:
        planar.theta = geom.theta_start
        planar.dtheta = 0.0
        planar.thetadd = 0.0
        planar.held = True
        return False
    return planar.theta <= geom.theta_end


def _handoff_state(planar: _PlanarStage, maneuver: str) -> FullState:
    """Map the corner-pivot endpoint onto the rolling-contact model."""
    tilt = body_tilt_from_upright(planar.geom, planar.theta)
    if maneuver == "standup":
        q = [tilt, 0.0, 0.0, 0.0, planar.wheel_angle]
        dq = [planar.dtheta, 0.0, 0.0, 0.0, planar.wheel_rate]
    else:
        q = [0.0, tilt, 0.0, planar.wheel_angle, 0.0]
        dq = [0.0, planar.dtheta, 0.0, planar.wheel_rate, 0.0]
    return FullState(q, dq, np.zeros(2))


def run_scenario(cfg: ScenarioConfig,
                 params: RobotParams | None = None) -> SimLog:
    """Run one closed-loop scenario to completion or failure."""
    params = default_params() if params is None else params
    rng = np.random.default_rng(cfg.seed)
    imu_cfg = ImuConfig.default(params, accel_sigma=cfg.accel_sigma,
                                gyro_sigma=cfg.gyro_sigma)
    enc_cfg = EncoderConfig(counts_per_rev=cfg.encoder_counts,
                            sample_dt=cfg.control_period)
    if cfg.gain_preset == "paper":
        gains = paper_preset_gains(params)
    else:
        gains = synthesize_gains(params)
    est = make_estimator(imu_cfg, alpha=cfg.alpha, Ts=cfg.control_period,
                         pivot_mode=cfg.pivot_mode,
                         wheel_lp_cutoff_hz=cfg.wheel_lp_cutoff_hz)
    machine = _make_machine(cfg, gains, params)

    dt = cfg.dt_physics
    Tc = cfg.control_period
    n_sub = round(Tc / dt)
    n_ticks = expected_rows(cfg)

    planar: _PlanarStage | None = None
    state3d: FullState | None = None
    abl_q4 = abl_dq4 = abl_q4dd = 0.0
    if cfg.maneuver == "balance":
        state3d = FullState(cfg.initial_q, cfg.initial_dq, np.zeros(2))
    elif cfg.maneuver == "standup":
        geom = derive_pivot_geometry(params, "C1", plane="roll")
        planar = _PlanarStage(geom=geom, theta=geom.theta_start)
    elif cfg.maneuver == "rollup":
        geom = derive_pivot_geometry(params, "C1", plane="pitch")
        planar = _PlanarStage(geom=geom, theta=geom.theta_start)

    qdd_prev = np.zeros(5)
    line: deque | None = None
    if cfg.delay_steps > 0:
        line = deque((0.0, 0.0) for _ in range(cfg.delay_steps))

    def truth() -> FullState:
        if state3d is not None:
            return state3d
        if planar is not None:
            return _planar_truth(planar, cfg.maneuver)
        rw = params.wheel_radius
        return FullState([0.0, 0.0, 0.0, abl_q4, 0.0],
                         [0.0, 0.0, 0.0, abl_dq4, 0.0],
                         [rw * abl_q4, 0.0])

    def pushes(state: FullState, t: float) -> np.ndarray | None:
        extra = None
        for d in cfg.disturbances:
            if d.active(t):
                g = apply_push(state, d.force, d.point, params=params)
                extra = g if extra is None else extra + g
        return extra

    def pulse(t: float) -> float:
        ph = math.fmod(t, cfg.drive_pulse_period)
        half = 0.5 * cfg.drive_pulse_period
        return cfg.drive_pulse_accel if ph < half else -cfg.drive_pulse_accel

    rows: list[LogRow] = []
    success = True
    failure: str | None = None

    for k in range(n_ticks):
        t = k * Tc
        tr = truth()
        if planar is not None:
            frame = _planar_frame(planar, imu_cfg, params, rng)
        else:
            frame = simulate_imu_array(tr, qdd_prev, imu_cfg, rng)
        enc = simulate_encoders(tr, enc_cfg)
        if k == 0:
            # static boot: seed the filter at the accel tilt so the
            # fused estimate does not ramp in from zero; an
            # uninformative pitch channel seeds flat instead
            q1A0, q2A0, g_hat0, _ = accel_tilt(frame, np.zeros(3),
                                               est.weights, est.cfg)
            _, w2 = accel_trust(g_hat0, params.g0)
            est.q1_hat = est.q1G = q1A0
            est.q2_hat = est.q2G = q2A0 if w2 >= 1.0 else 0.0
        estimator_step(frame, enc, est)

        if machine is not None:
            phase, u1, u2 = machine.step(est, enc, t)
        else:
            phase, u1, u2 = ManeuverPhase.Idle, 0.0, 0.0

        if line is not None:
            line.append((u1, u2))
            ua1, ua2 = line.popleft()
        else:
            ua1, ua2 = u1, u2

        dist_now = any(d.t_start < t + Tc and t < d.t_start + d.duration
                       for d in cfg.disturbances)
        rows.append(LogRow(
            t=t, q=tuple(tr.q), dq=tuple(tr.dq),
            x=float(tr.contact_xy[0]), y=float(tr.contact_xy[1]),
            energy=(_planar_energy(planar, params) if planar is not None
                    else total_energy(tr, params)),
            q1A=est.q1A, q2A=est.q2A, q1G=est.q1G, q2G=est.q2G,
            q3G=est.q3G, q1_hat=est.q1_hat, q2_hat=est.q2_hat,
            pivot_ax=float(est.pivot_accel[0]),
            u1=u1, u2=u2, i1=u1 / params.K_T, i2=u2 / params.K_T,
            phase=phase.name, dist_flag=int(dist_now)))

        if phase is ManeuverPhase.Fallen:
            success = False
            failure = machine.diagnostic or "fell"
            break

        try:
            for j in range(n_sub):
                t_sub = t + j * dt
                if planar is not None:
                    Q_w = ua1 if cfg.maneuver == "standup" else ua2
                    if _planar_substep(planar, Q_w, dt, params):
                        state3d = _handoff_state(planar, cfg.maneuver)
                        planar = None
                elif state3d is not None:
                    extra = pushes(state3d, t_sub)
                    state3d = rk4_step(state3d, (ua1, ua2), params, dt,
                                       extra_force=extra)
                    if max(abs(state3d.q[0]), abs(state3d.q[1])) \
                            > 0.5 * math.pi:
                        # stop at the first substep past horizontal; the
                        # contact model is meaningless beyond and blows
                        # up if integrated further
                        break
                else:
                    a = pulse(t_sub)
                    abl_q4 += dt * abl_dq4 + 0.5 * dt * dt * a
                    abl_dq4 += dt * a
                    abl_q4dd = a
        except SingularConfigurationError as e:
            success = False
            failure = f"dynamics singularity: {e}"
            break

        if state3d is not None:
            tilt_worst = max(abs(state3d.q[0]), abs(state3d.q[1]))
            if tilt_worst > 0.5 * math.pi:
                # past horizontal: the contact model and the sensing
                # pipeline are out of their domain, so close the log
                # with a terminal row straight from the truth state
                tr = truth()
                rows.append(LogRow(
                    t=(k + 1) * Tc, q=tuple(tr.q), dq=tuple(tr.dq),
                    x=float(tr.contact_xy[0]), y=float(tr.contact_xy[1]),
                    energy=total_energy(tr, params),
                    q1A=est.q1A, q2A=est.q2A, q1G=est.q1G, q2G=est.q2G,
                    q3G=est.q3G, q1_hat=est.q1_hat, q2_hat=est.q2_hat,
                    pivot_ax=float(est.pivot_accel[0]),
                    u1=0.0, u2=0.0, i1=0.0, i2=0.0,
                    phase=ManeuverPhase.Fallen.name, dist_flag=0))
                success = False
                failure = "fell: tilt reached 90 deg"
                break
            t_last = t + (n_sub - 1) * dt
            extra = pushes(state3d, t_last)
            qdd_prev = forward_dynamics(state3d, (ua1, ua2), params,
                                        extra_force=extra)
            # the erection drive works through ground friction; losing
            # grip there loses the maneuver, brief balance-phase torque
            # transients merely scrub the wheel
            if cfg.maneuver == "rollup" and machine is not None \
                    and machine.phase in (ManeuverPhase.RollupContact,
                                          ManeuverPhase.RollupRotate):
                bk = body_kinematics(state3d, qdd_prev, params)
                a = bk.acc_com_I
                normal = params.m_total * (a[2] + params.g0)
                tangential = params.m_total * math.hypot(a[0], a[1])
                if normal <= 0.0 or tangential > cfg.mu * normal:
                    machine.notify_slip(t + Tc)
        elif planar is None:
            qdd_prev = np.array([0.0, 0.0, 0.0, abl_q4dd, 0.0])

    if success:
        success = success_from_rows(rows, cfg)
        if not success:
            failure = "maneuver did not reach full balance before the end"
    return SimLog(rows=rows, success=success, failure=failure, config=cfg)
