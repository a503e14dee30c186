"""Planar self-erection model: pivot pendulum plus momentum wheel.

Lying on its side, the robot erects in two rotations with static ground
contacts: first about a chassis corner (C1) until the rolling wheel
touches down, then about the touched rim point (C2) until upright. In
the plane normal to the spinning wheel's axis each step is a rigid
pendulum about the pivot with the wheel as a free momentum DOF:

    theta_ddot = (Q_g(theta) - Q_w) / I_total
    omega_dot  = Q_w / I_wheel_spin

theta is the angle of (COG - pivot) from the pivot's vertical, positive
toward the lying side, so gravity torque m*g*d*sin(theta) changes sign
at theta = 0 and a positive motor torque Q_w drives the frame upright
while spinning the wheel up. omega is the wheel's absolute rate; the
motor and its encoder see omega relative to the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from rwusim.params import RobotParams, torque_speed_envelope

TorqueProfile = float | Callable[[float, int], float]


class InfeasibleTorqueError(ValueError):
    """Torque profile demands more than the motor envelope provides."""

    def __init__(self, t: float, step: int, demanded: float, available: float):
        self.t, self.step = t, step
        super().__init__(
            f"torque profile infeasible at t={t:.4f}s (step {step}): "
            f"|{demanded:.3f}| Nm demanded, {available:.3f} Nm available")


@dataclass(frozen=True)
class PivotGeometry:
    """One stand-up step: pivot location, COG lever and sweep bounds."""

    pivot_id: str
    plane: str                              # "roll" or "pitch"
    pivot_pos_body: tuple[float, float, float]  # m, pivot in body coords from COG
    cog_distance: float                     # m, |COG - pivot|
    theta_start: float                      # rad, at rest before the step
    theta_end: float                        # rad, step completes here
    theta_gravity_assist: float             # rad, gravity torque changes sign
    I_total: float                          # kg m^2 about the pivot, wheel spin excluded

    @property
    def sweep(self) -> float:
        return self.theta_start - self.theta_end

    @property
    def assist_from_start(self) -> float:
        """Rotation from the step start after which gravity helps."""
        return self.theta_start - self.theta_gravity_assist


def _pendulum_inertia_about_cog(params: RobotParams) -> float:
    """Frame + locked wheel + spinning wheel's mass, about the COG.

    The spinning wheel's own spin inertia belongs to the omega DOF, so
    only its mass offset appears here. The locked wheel turns with the
    frame about an axis normal to its spin axis: transverse inertia.
    """
    c = params.wheel_center_offset
    return (params.body_inertia_diag[0]
            + params.I_wheel_transverse
            + 2.0 * params.m_wheel * c * c)


def derive_pivot_geometry(
    params: RobotParams,
    pivot_id: Literal["C1", "C2"],
    plane: Literal["roll", "pitch"] = "roll",
) -> PivotGeometry:
    """Pivot levers and sweep angles from the chassis/wheel trigonometry.

    With half height a, chassis half width b and chassis half height L1,
    the corner pivot C1 sits at (b, -L1) in the maneuver cross-section
    and the wheel-rim pivot C2 at (0, -a). Starting flat, the C1 rotation
    ends when the rolling wheel reaches the ground, atan(b/(a-L1)) after
    liftoff; the remaining rotation about C2 closes the quarter turn.
    """
    a = params.half_height_a
    b = params.chassis_half_width_b
    L1 = params.lever_L1
    i_cog = _pendulum_inertia_about_cog(params)
    sweep1 = math.atan2(b, a - L1)
    if pivot_id == "C1":
        d = math.hypot(b, L1)
        theta_start = math.atan2(L1, b)
        theta_end = theta_start - sweep1
        pos = (0.0, b, -L1) if plane == "roll" else (b, 0.0, -L1)
    elif pivot_id == "C2":
        d = a
        theta_start = 0.5 * math.pi - sweep1
        theta_end = 0.0
        pos = (0.0, 0.0, -a)
    else:
        raise ValueError(f"pivot_id must be 'C1' or 'C2', got {pivot_id!r}")
    return PivotGeometry(
        pivot_id=pivot_id,
        plane=plane,
        pivot_pos_body=pos,
        cog_distance=d,
        theta_start=theta_start,
        theta_end=theta_end,
        theta_gravity_assist=0.0,
        I_total=i_cog + params.m_total * d * d,
    )


def gravity_torque(theta: float, geom: PivotGeometry, params: RobotParams) -> float:
    return params.m_total * params.g0 * geom.cog_distance * math.sin(theta)


def planar_dynamics(
    theta: float,
    omega: float,
    Q_w: float,
    geom: PivotGeometry,
    params: RobotParams,
) -> tuple[float, float]:
    """Accelerations (theta_ddot, omega_dot) for one pivot step."""
    theta_ddot = (gravity_torque(theta, geom, params) - Q_w) / geom.I_total
    omega_dot = Q_w / params.I_wheel_spin
    return theta_ddot, omega_dot


def body_tilt_from_upright(geom: PivotGeometry, theta: float) -> float:
    """Frame tilt from the upright pose at pendulum angle theta.

    During the corner step the frame starts flat (tilt pi/2); during the
    rim step the pendulum angle is the tilt itself. Continuous across
    the step transition.
    """
    if geom.pivot_id == "C1":
        return 0.5 * math.pi - (geom.theta_start - theta)
    return theta


@dataclass(frozen=True)
class StandupTrace:
    """Result of a simulated two-step stand-up."""

    success: bool
    failure_reason: str | None
    step_sweeps: tuple[float, ...]     # rad actually rotated per step
    peak_omega: float                  # rad/s, max |omega| seen
    duration: float                    # s
    t: np.ndarray
    theta: np.ndarray                  # rad, pendulum angle of the active step
    dtheta: np.ndarray                 # rad/s
    tilt: np.ndarray                   # rad, frame tilt from upright
    omega: np.ndarray                  # rad/s wheel rate
    step: np.ndarray                   # int, 1 or 2
    geoms: tuple[PivotGeometry, ...]


def _check_envelope(Q_w: float, omega_rel: float, t: float, step: int,
                    params: RobotParams) -> None:
    if abs(Q_w) > params.tau_max * (1.0 + 1e-9):
        raise InfeasibleTorqueError(t, step, Q_w, params.tau_max)
    braking = Q_w * omega_rel < 0.0
    if not braking:
        avail = torque_speed_envelope(omega_rel, params)
        if abs(Q_w) > avail * (1.0 + 1e-9) + 1e-12:
            raise InfeasibleTorqueError(t, step, Q_w, avail)


def simulate_standup(
    params: RobotParams,
    torque_profile: TorqueProfile,
    omega0: float,
    *,
    dt: float = 1e-4,
    interstep: Literal["reset", "continue", "brake"] = "reset",
    max_step_time: float = 5.0,
    geometries: Sequence[PivotGeometry] | None = None,
) -> StandupTrace:
    """Integrate both stand-up steps with a fixed-step RK4 at dt.

    The torque profile (constant or callable of (t, step)) is checked
    against the motor envelope at every sample, never silently clipped.
    Between steps the wheel rate is reset to omega0 ("reset", matching
    the per-step initialization of the feasibility study), kept
    ("continue"), or re-spun at the brake-torque limit with the frame
    wedged, which adds real time to the clock ("brake").
    """
    if geometries is None:
        geometries = (derive_pivot_geometry(params, "C1"),
                      derive_pivot_geometry(params, "C2"))
    profile = (lambda t, s: float(torque_profile)) if not callable(torque_profile) \
        else torque_profile

    t = 0.0
    omega = float(omega0)
    peak_omega = abs(omega)
    ts, thetas, dthetas, tilts, omegas, steps = [], [], [], [], [], []
    sweeps: list[float] = []
    failure: str | None = None

    for step_idx, geom in enumerate(geometries, start=1):
        if step_idx > 1:
            if interstep == "reset":
                omega = float(omega0)
            elif interstep == "brake":
                dw = abs(float(omega0) - omega)
                tau_b = min(params.tau_max, params.brake_lever_L3
                            * params.m_total * params.g0)
                if tau_b <= 0.0:
                    raise ValueError(
                        "brake interstep needs a positive brake torque "
                        "(zero gravity or zero lever)")
                t += params.I_wheel_spin * dw / tau_b
                omega = float(omega0)
        theta = geom.theta_start
        dtheta = 0.0
        t_step0 = t
        theta_min = theta

        def f(th: float, dth: float, om: float, Qw: float) -> tuple[float, float, float]:
            tdd, od = planar_dynamics(th, om, Qw, geom, params)
            return dth, tdd, od

        while True:
            Qw = float(profile(t, step_idx))
            _check_envelope(Qw, omega - dtheta, t, step_idx, params)
            ts.append(t)
            thetas.append(theta)
            dthetas.append(dtheta)
            tilts.append(body_tilt_from_upright(geom, theta))
            omegas.append(omega)
            steps.append(step_idx)
            peak_omega = max(peak_omega, abs(omega))

            if theta <= geom.theta_end:
                sweeps.append(geom.theta_start - theta)
                break
            if dtheta >= 0.0 and t > t_step0:
                failure = f"stall in step {step_idx} at theta={theta:.4f} rad"
                break
            if t == t_step0:
                tdd0, _ = planar_dynamics(theta, omega, Qw, geom, params)
                if tdd0 >= 0.0:
                    failure = f"stall in step {step_idx} at liftoff"
                    break
            if t - t_step0 > max_step_time:
                failure = f"timeout in step {step_idx}"
                break

            k1 = f(theta, dtheta, omega, Qw)
            k2 = f(theta + 0.5 * dt * k1[0], dtheta + 0.5 * dt * k1[1],
                   omega + 0.5 * dt * k1[2], Qw)
            k3 = f(theta + 0.5 * dt * k2[0], dtheta + 0.5 * dt * k2[1],
                   omega + 0.5 * dt * k2[2], Qw)
            k4 = f(theta + dt * k3[0], dtheta + dt * k3[1],
                   omega + dt * k3[2], Qw)
            theta += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            dtheta += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            omega += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            theta_min = min(theta_min, theta)
            t += dt

        if failure is not None:
            sweeps.append(geom.theta_start - theta_min)
            break

    return StandupTrace(
        success=failure is None,
        failure_reason=failure,
        step_sweeps=tuple(sweeps),
        peak_omega=peak_omega,
        duration=t,
        t=np.asarray(ts),
        theta=np.asarray(thetas),
        dtheta=np.asarray(dthetas),
        tilt=np.asarray(tilts),
        omega=np.asarray(omegas),
        step=np.asarray(steps, dtype=int),
        geoms=tuple(geometries),
    )
