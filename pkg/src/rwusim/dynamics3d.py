"""Nonholonomic rigid-body dynamics of the rolling unicycle.

Generalized coordinates q = (q1..q5): frame roll, frame pitch, heading
(yaw), rolling-wheel angle and reaction-wheel angle. The frame attitude
is yaw about the vertical, then roll about the heading axis, then pitch
about the resulting lateral axis; the rolling wheel turns about the
lateral axis of the yaw-roll frame, the reaction wheel about the frame's
forward axis. Wheel angles are quasi-absolute: their rates are measured
about the current axle directions, so the motor encoders see the
differences (dq4 - dq2) and (dq5 - dq1).

The ground contact rolls without slipping, which ties the contact point
(x, y) to the drive motion: (xdot, ydot) = r_w*dq4*(cos q3, sin q3).
The contact coordinates are eliminated from the configuration; because
the rolling constraint is non-integrable, the reduced Euler-Lagrange
equations carry a gyroscopic correction coupling yaw and drive through
the lateral linear momentum (it does no work).

Kinetic energy is invariant under rotation about the vertical and blind
to the wheel angles, so the mass matrix depends on roll and pitch only.
The production path evaluates it and its two partial derivatives in
closed form; `_mass_entries` keeps the generic per-body Jacobian
assembly that the closed forms are certified against in the tests.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from rwusim.params import RobotParams

_CS_H = 1e-20  # complex-step size; first-order term only, no subtraction error

# generalized-force columns of the two motor torques: each torque acts
# positively on its wheel coordinate and reacts on the frame coordinate
# sharing the axle (roll for the reaction wheel, pitch for the rolling one)
INPUT_MATRIX = np.array([
    [-1.0, 0.0],
    [0.0, -1.0],
    [0.0, 0.0],
    [0.0, 1.0],
    [1.0, 0.0],
])


class SingularConfigurationError(RuntimeError):
    """Mass matrix numerically singular at the requested configuration."""


@dataclass
class FullState:
    """Configuration, rates and ground-contact position."""

    q: np.ndarray           # (5,) rad
    dq: np.ndarray          # (5,) rad/s
    contact_xy: np.ndarray  # (2,) m, contact point on the ground plane

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float).copy()
        self.dq = np.asarray(self.dq, dtype=float).copy()
        self.contact_xy = np.asarray(self.contact_xy, dtype=float).copy()
        if (self.q.shape != (5,) or self.dq.shape != (5,)
                or self.contact_xy.shape != (2,)):
            raise ValueError("FullState needs q(5), dq(5), contact_xy(2)")

    def copy(self) -> "FullState":
        return FullState(self.q, self.dq, self.contact_xy)

    @staticmethod
    def upright() -> "FullState":
        return FullState(np.zeros(5), np.zeros(5), np.zeros(2))


def _cos_sin(x):
    if isinstance(x, complex):
        return cmath.cos(x), cmath.sin(x)
    return math.cos(x), math.sin(x)


# ---------------------------------------------------------------------------
# reference route: per-body velocity Jacobians assembled numerically


def _kin(q1, q2, q3, params: RobotParams):
    """Velocity Jacobian columns of the three bodies, inertial frame.

    Returns (jv, axes) where jv[body][k] is the 3-vector velocity of the
    body COG per unit rate of coordinate k, bodies ordered (rolling
    wheel, frame, reaction wheel), and axes carries the unit vectors
    needed for angular terms. Complex-safe for complex-step use.
    """
    c1, s1 = _cos_sin(q1)
    c2, s2 = _cos_sin(q2)
    c3, s3 = _cos_sin(q3)
    rw = params.wheel_radius
    l = params.wheel_center_offset

    e1C = (c3, s3, 0.0)
    e2W = (-s3 * c1, c3 * c1, s1)
    e3W = (s3 * s1, -c3 * s1, c1)
    e1B = (c3 * c2 - s3 * s1 * s2, s3 * c2 + c3 * s1 * s2, -c1 * s2)
    e3B = (c3 * s2 + s3 * s1 * c2, s3 * s2 - c3 * s1 * c2, c1 * c2)
    de3W_1 = (s3 * c1, -c3 * c1, -s1)
    de3W_3 = (c3 * s1, s3 * s1, 0.0)
    de3B_1 = (s3 * c1 * c2, -c3 * c1 * c2, -s1 * c2)
    de3B_3 = (-s3 * s2 + c3 * s1 * c2, c3 * s2 + s3 * s1 * c2, 0.0)

    zero = (0.0, 0.0, 0.0)
    jv_w = [tuple(rw * v for v in de3W_1), zero,
            tuple(rw * v for v in de3W_3), tuple(rw * v for v in e1C), zero]
    arm = (de3B_1, e1B, de3B_3)

    def lift(col, k, scale):
        if k < 3:
            return tuple(col[i] + scale * arm[k][i] for i in range(3))
        return col

    jv_b = [lift(jv_w[k], k, l) for k in range(5)]
    jv_d = [lift(jv_w[k], k, 2.0 * l) for k in range(5)]

    axes = {"e1C": e1C, "e2W": e2W, "e3W": e3W, "e1B": e1B, "e3B": e3B,
            "c1": c1, "s1": s1, "c2": c2, "s2": s2, "c3": c3, "s3": s3}
    return (jv_w, jv_b, jv_d), axes


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _mass_entries(jv, axes, params: RobotParams):
    """5x5 mass matrix as nested lists from the Jacobian columns."""
    jv_w, jv_b, jv_d = jv
    e1C, e2W, e3W = axes["e1C"], axes["e2W"], axes["e3W"]
    e1B, e3B = axes["e1B"], axes["e3B"]
    e3I = (0.0, 0.0, 1.0)
    zero = (0.0, 0.0, 0.0)

    # angular Jacobian columns, inertial frame
    jw_frame = (e1C, e2W, e3I, zero, zero)
    jw_roll = (e1C, zero, e3I, e2W, zero)
    e1CmB = (e1C[0] - e1B[0], e1C[1] - e1B[1], e1C[2] - e1B[2])
    jw_react = (e1CmB, e2W, e3I, zero, e1B)

    # project each column on the frame where the body inertia is diagonal
    frame_axes = (e1B, e2W, e3B)
    wheel_axes = (e1C, e2W, e3W)
    If = params.body_inertia_diag
    It = params.I_wheel_transverse
    Is = params.I_wheel_spin
    rot = []
    for cols, ax, inertia in (
        (jw_roll, wheel_axes, (It, Is, It)),
        (jw_frame, frame_axes, If),
        (jw_react, frame_axes, (Is, It, It)),
    ):
        comp = [[_dot(ax[a], cols[k]) for a in range(3)] for k in range(5)]
        rot.append((comp, inertia))

    mw, mf = params.m_wheel, params.m_frame
    masses = ((mw, jv_w), (mf, jv_b), (mw, jv_d))
    M = [[0.0] * 5 for _ in range(5)]
    for i in range(5):
        for j in range(i, 5):
            acc = 0.0
            for m, cols in masses:
                acc = acc + m * _dot(cols[i], cols[j])
            for comp, inertia in rot:
                ci, cj = comp[i], comp[j]
                acc = acc + (inertia[0] * ci[0] * cj[0]
                             + inertia[1] * ci[1] * cj[1]
                             + inertia[2] * ci[2] * cj[2])
            M[i][j] = acc
            M[j][i] = acc
    return M


# ---------------------------------------------------------------------------
# production route: closed-form mass matrix and derivatives


def _mass_closed(c1, s1, c2, s2, params: RobotParams):
    """Mass matrix entries in closed form, nested 5x5 list."""
    rw = params.wheel_radius
    l = params.wheel_center_offset
    mt = params.m_total
    ka = l * l * (params.m_frame + 4.0 * params.m_wheel)
    If1, If2, If3 = params.body_inertia_diag
    It = params.I_wheel_transverse
    Is = params.I_wheel_spin
    lm = l * mt

    c2s2 = c2 * s2
    m11 = (mt * rw * rw + 2.0 * lm * rw * c2 + ka * c2 * c2
           + It + If1 * c2 * c2 + If3 * s2 * s2
           + Is * (c2 - 1.0) ** 2 + It * s2 * s2)
    g13 = (-lm * rw * s2 - ka * c2s2 + (If3 - If1) * c2s2
           - Is * (c2 - 1.0) * s2 + It * c2s2)
    m13 = c1 * g13
    m15 = Is * (c2 - 1.0)
    m22 = ka + If2 + It
    g23 = lm * rw * c2 + ka + If2 + It
    m23 = s1 * g23
    m24 = lm * rw * c2
    p33 = mt * rw * rw + 2.0 * lm * rw * c2 + ka * c2 * c2 + Is + If2 + It
    q33 = It + If1 * s2 * s2 + If3 * c2 * c2 + Is * s2 * s2 + It * c2 * c2
    m33 = s1 * s1 * p33 + c1 * c1 * q33 + ka * s2 * s2
    m34 = s1 * (mt * rw * rw + lm * rw * c2 + Is)
    m35 = -Is * c1 * s2
    m44 = mt * rw * rw + Is
    return [
        [m11, 0.0, m13, 0.0, m15],
        [0.0, m22, m23, m24, 0.0],
        [m13, m23, m33, m34, m35],
        [0.0, m24, m34, m44, 0.0],
        [m15, 0.0, m35, 0.0, Is],
    ]


def _mass_d1_closed(c1, s1, c2, s2, params: RobotParams):
    """d(mass matrix)/d(roll), closed form."""
    rw = params.wheel_radius
    l = params.wheel_center_offset
    mt = params.m_total
    ka = l * l * (params.m_frame + 4.0 * params.m_wheel)
    If1, If2, If3 = params.body_inertia_diag
    It = params.I_wheel_transverse
    Is = params.I_wheel_spin
    lm = l * mt

    c2s2 = c2 * s2
    g13 = (-lm * rw * s2 - ka * c2s2 + (If3 - If1) * c2s2
           - Is * (c2 - 1.0) * s2 + It * c2s2)
    d13 = -s1 * g13
    g23 = lm * rw * c2 + ka + If2 + It
    d23 = c1 * g23
    p33 = mt * rw * rw + 2.0 * lm * rw * c2 + ka * c2 * c2 + Is + If2 + It
    q33 = It + If1 * s2 * s2 + If3 * c2 * c2 + Is * s2 * s2 + It * c2 * c2
    d33 = 2.0 * s1 * c1 * (p33 - q33)
    d34 = c1 * (mt * rw * rw + lm * rw * c2 + Is)
    d35 = Is * s1 * s2
    return [
        [0.0, 0.0, d13, 0.0, 0.0],
        [0.0, 0.0, d23, 0.0, 0.0],
        [d13, d23, d33, d34, d35],
        [0.0, 0.0, d34, 0.0, 0.0],
        [0.0, 0.0, d35, 0.0, 0.0],
    ]


def _mass_d2_closed(c1, s1, c2, s2, params: RobotParams):
    """d(mass matrix)/d(pitch), closed form."""
    rw = params.wheel_radius
    l = params.wheel_center_offset
    mt = params.m_total
    ka = l * l * (params.m_frame + 4.0 * params.m_wheel)
    If1, If2, If3 = params.body_inertia_diag
    It = params.I_wheel_transverse
    Is = params.I_wheel_spin
    lm = l * mt

    c2s2 = c2 * s2
    cos2 = c2 * c2 - s2 * s2  # d(c2*s2)/dq2
    d11 = (-2.0 * lm * rw * s2 - 2.0 * ka * c2s2
           - 2.0 * If1 * c2s2 + 2.0 * If3 * c2s2
           - 2.0 * Is * (c2 - 1.0) * s2 + 2.0 * It * c2s2)
    dg13 = (-lm * rw * c2 - ka * cos2 + (If3 - If1) * cos2
            - Is * ((c2 - 1.0) * c2 - s2 * s2) + It * cos2)
    d13 = c1 * dg13
    d15 = -Is * s2
    d23 = s1 * (-lm * rw * s2)
    d24 = -lm * rw * s2
    dp33 = -2.0 * lm * rw * s2 - 2.0 * ka * c2s2
    dq33 = 2.0 * If1 * c2s2 - 2.0 * If3 * c2s2 + 2.0 * Is * c2s2 - 2.0 * It * c2s2
    d33 = s1 * s1 * dp33 + c1 * c1 * dq33 + 2.0 * ka * c2s2
    d34 = s1 * (-lm * rw * s2)
    d35 = -Is * c1 * c2
    return [
        [d11, 0.0, d13, 0.0, d15],
        [0.0, 0.0, d23, d24, 0.0],
        [d13, d23, d33, d34, d35],
        [0.0, d24, d34, 0.0, 0.0],
        [d15, 0.0, d35, 0.0, 0.0],
    ]


def mass_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    return np.array(_mass_closed(c1, s1, c2, s2, params))


def potential_energy(q, params: RobotParams) -> float:
    """Gravitational potential, zero at the upright rest pose."""
    c1 = math.cos(q[0])
    c2 = math.cos(q[1])
    rw = params.wheel_radius
    lw = params.wheel_center_offset * (params.m_frame + 2.0 * params.m_wheel)
    return params.g0 * (params.m_total * rw * (c1 - 1.0) + lw * (c1 * c2 - 1.0))


def gravity_gradient(q, params: RobotParams) -> np.ndarray:
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    rw = params.wheel_radius
    lw = params.wheel_center_offset * (params.m_frame + 2.0 * params.m_wheel)
    g = params.g0
    return np.array([
        -g * (params.m_total * rw * s1 + lw * s1 * c2),
        -g * lw * c1 * s2,
        0.0, 0.0, 0.0,
    ])


def _mass_derivatives(q, params: RobotParams):
    """dM/dq_k for k = 0..2; the yaw slot is exactly zero."""
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    return [
        _mass_d1_closed(c1, s1, c2, s2, params),
        _mass_d2_closed(c1, s1, c2, s2, params),
        [[0.0] * 5 for _ in range(5)],
    ]


def _lateral_momentum_closed(c1, s1, c2, s2, dq, params: RobotParams):
    """Linear momentum along the lateral contact axis, closed form."""
    l = params.wheel_center_offset
    mt = params.m_total
    return (-mt * c1 * (params.wheel_radius + l * c2) * dq[0]
            + l * mt * s2 * (s1 * dq[1] + dq[2]))


def _accel(q, dq, u1, u2, params: RobotParams, extra=None):
    """Generalized accelerations as a list of 5 floats (hot path)."""
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    M = _mass_closed(c1, s1, c2, s2, params)
    if abs(c1) < 0.05 or abs(c2) < 0.05:
        cond = float(np.linalg.cond(np.array(M)))
        if cond > 1e12:
            raise SingularConfigurationError(
                f"mass matrix condition number {cond:.2e} at roll={q[0]:.4f}, "
                f"pitch={q[1]:.4f} rad")

    d0, d1, d2, d3, d4 = dq[0], dq[1], dq[2], dq[3], dq[4]
    rw = params.wheel_radius
    lw = params.wheel_center_offset * (params.m_frame + 2.0 * params.m_wheel)
    g = params.g0
    h = [-g * (params.m_total * rw * s1 + lw * s1 * c2),
         -g * lw * c1 * s2, 0.0, 0.0, 0.0]

    # Mdot*dq - 0.5 * d(dq' M dq)/dq over the two coordinates M varies with
    for k, Dk in ((0, _mass_d1_closed(c1, s1, c2, s2, params)),
                  (1, _mass_d2_closed(c1, s1, c2, s2, params))):
        dqk = dq[k]
        quad = 0.0
        for i in range(5):
            row = Dk[i]
            ri = row[0] * d0 + row[1] * d1 + row[2] * d2 + row[3] * d3 + row[4] * d4
            h[i] += ri * dqk
            quad += dq[i] * ri
        h[k] -= 0.5 * quad

    # non-integrable rolling constraint: workless yaw/drive coupling
    p_lat = _lateral_momentum_closed(c1, s1, c2, s2, dq, params)
    h[2] += rw * d3 * p_lat
    h[3] -= rw * d2 * p_lat

    rhs = [-u1 - h[0], -u2 - h[1], -h[2], u2 - h[3], u1 - h[4]]
    if extra is not None:
        for i in range(5):
            rhs[i] += extra[i]
    return _solve_spd(M, rhs, q)


def _solve_spd(M, b, q):
    """Cholesky solve of the 5x5 system; M must be positive definite."""
    L = [[0.0] * 5 for _ in range(5)]
    for i in range(5):
        Mi = M[i]
        Li = L[i]
        for j in range(i):
            s = Mi[j]
            Lj = L[j]
            for k in range(j):
                s -= Li[k] * Lj[k]
            Li[j] = s / Lj[j]
        s = Mi[i]
        for k in range(i):
            s -= Li[k] * Li[k]
        if s <= 0.0:
            raise SingularConfigurationError(
                f"mass matrix lost positive definiteness at roll={q[0]:.4f}, "
                f"pitch={q[1]:.4f} rad")
        Li[i] = math.sqrt(s)
    y = [0.0] * 5
    for i in range(5):
        s = b[i]
        Li = L[i]
        for k in range(i):
            s -= Li[k] * y[k]
        y[i] = s / Li[i]
    x = [0.0] * 5
    for i in range(4, -1, -1):
        s = y[i]
        for k in range(i + 1, 5):
            s -= L[k][i] * x[k]
        x[i] = s / L[i][i]
    return x


def bias_forces(q: np.ndarray, dq: np.ndarray, params: RobotParams) -> np.ndarray:
    """Velocity and gravity terms h with M(q) qdd + h = Q_applied."""
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    d0, d1, d2, d3, d4 = dq[0], dq[1], dq[2], dq[3], dq[4]
    h = gravity_gradient(q, params)
    for k, Dk in ((0, _mass_d1_closed(c1, s1, c2, s2, params)),
                  (1, _mass_d2_closed(c1, s1, c2, s2, params))):
        dqk = dq[k]
        quad = 0.0
        for i in range(5):
            row = Dk[i]
            ri = row[0] * d0 + row[1] * d1 + row[2] * d2 + row[3] * d3 + row[4] * d4
            h[i] += ri * dqk
            quad += dq[i] * ri
        h[k] -= 0.5 * quad
    p_lat = _lateral_momentum_closed(c1, s1, c2, s2, dq, params)
    rw = params.wheel_radius
    h[2] += rw * d3 * p_lat
    h[3] -= rw * d2 * p_lat
    return h


def forward_dynamics(
    state: FullState,
    u: np.ndarray,
    params: RobotParams,
    extra_force: np.ndarray | None = None,
) -> np.ndarray:
    """Generalized accelerations qdd for motor torques u = (u1, u2)."""
    extra = None if extra_force is None else [float(v) for v in extra_force]
    return np.array(_accel(state.q, state.dq, float(u[0]), float(u[1]),
                           params, extra))


def contact_velocity(q: np.ndarray, dq: np.ndarray, params: RobotParams) -> np.ndarray:
    """Ground-contact velocity implied by the rolling constraint."""
    v = params.wheel_radius * dq[3]
    return np.array([v * math.cos(q[2]), v * math.sin(q[2])])


def constraint_residual(q, dq, xy_dot, params: RobotParams) -> np.ndarray:
    """Rolling-constraint violation of a candidate contact velocity."""
    return np.asarray(xy_dot, dtype=float) - contact_velocity(q, dq, params)


def rk4_step(
    state: FullState,
    u: np.ndarray,
    params: RobotParams,
    dt: float,
    extra_force: np.ndarray | None = None,
) -> FullState:
    """One fixed-step RK4 step; torque held constant across the step."""
    u1, u2 = float(u[0]), float(u[1])
    extra = None if extra_force is None else [float(v) for v in extra_force]
    rw = params.wheel_radius

    def f(y):
        q = y[0:5]
        dq = y[5:10]
        qdd = _accel(q, dq, u1, u2, params, extra)
        v = rw * dq[3]
        return list(dq) + qdd + [v * math.cos(q[2]), v * math.sin(q[2])]

    y0 = list(state.q) + list(state.dq) + list(state.contact_xy)
    k1 = f(y0)
    k2 = f([y0[i] + 0.5 * dt * k1[i] for i in range(12)])
    k3 = f([y0[i] + 0.5 * dt * k2[i] for i in range(12)])
    k4 = f([y0[i] + dt * k3[i] for i in range(12)])
    y1 = [y0[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
          for i in range(12)]
    return FullState(y1[0:5], y1[5:10], y1[10:12])


def total_energy(state: FullState, params: RobotParams) -> float:
    """Kinetic plus potential energy, 0 at upright rest."""
    M = mass_matrix(state.q, params)
    return 0.5 * float(state.dq @ M @ state.dq) + potential_energy(state.q, params)


def rotation_body_to_inertial(q: np.ndarray) -> np.ndarray:
    """R mapping frame coordinates to inertial ones (columns = frame axes)."""
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    c3, s3 = math.cos(q[2]), math.sin(q[2])
    e1B = (c3 * c2 - s3 * s1 * s2, s3 * c2 + c3 * s1 * s2, -c1 * s2)
    e2W = (-s3 * c1, c3 * c1, s1)
    e3B = (c3 * s2 + s3 * s1 * c2, s3 * s2 - c3 * s1 * c2, c1 * c2)
    return np.column_stack([e1B, e2W, e3B])


def rotation_body_from_inertial(q1: float, q2: float, q3: float) -> np.ndarray:
    """R mapping inertial coordinates into the frame (attitude inverse)."""
    return rotation_body_to_inertial(np.array([q1, q2, q3])).T


def gravity_tilt_frame(q1: float, q2: float, g0: float) -> np.ndarray:
    """Gravity direction resolved through pitch'*roll', scaled by g0.

    This is the vector the accelerometer array reconstructs; yaw drops
    out. Upright it points along +z with magnitude g0.
    """
    c1, s1 = math.cos(q1), math.sin(q1)
    c2, s2 = math.cos(q2), math.sin(q2)
    return g0 * np.array([-c1 * s2, s1, c1 * c2])


@dataclass
class BodyKin:
    """Frame-resolved kinematics the sensor models need."""

    R_IB: np.ndarray               # 3x3 body-to-inertial
    omega_B: np.ndarray            # rad/s, frame angular velocity, body frame
    omegadot_B: np.ndarray         # rad/s^2
    acc_wheel_center_B: np.ndarray  # m/s^2, rolling-wheel center, body frame
    acc_com_I: np.ndarray          # m/s^2, robot COM, inertial frame


def _omega_body(q1, q2, dq):
    c1, s1 = _cos_sin(q1)
    c2, s2 = _cos_sin(q2)
    return (c2 * dq[0] - c1 * s2 * dq[2],
            dq[1] + s1 * dq[2],
            s2 * dq[0] + c1 * c2 * dq[2])


def _wheel_center_velocity(q1, q3, dq, params):
    c1, s1 = _cos_sin(q1)
    c3, s3 = _cos_sin(q3)
    rw = params.wheel_radius
    vx = rw * (dq[0] * s3 * c1 + dq[2] * c3 * s1 + dq[3] * c3)
    vy = rw * (-dq[0] * c3 * c1 + dq[2] * s3 * s1 + dq[3] * s3)
    vz = rw * (-dq[0] * s1)
    return (vx, vy, vz)


def body_kinematics(state: FullState, qdd: np.ndarray, params: RobotParams) -> BodyKin:
    """True angular/linear kinematics for simulated inertial sensing."""
    q, dq = state.q, state.dq
    qdd = np.asarray(qdd, dtype=float)
    jv, axes = _kin(q[0], q[1], q[2], params)
    R = np.column_stack([axes["e1B"], axes["e2W"], axes["e3B"]]).astype(float)

    w = np.array(_omega_body(q[0], q[1], dq))
    # rate-map derivative via complex step over the two angles it uses
    wdot = np.zeros(3)
    for k, qv in ((0, q[0]), (1, q[1])):
        args = [q[0], q[1]]
        args[k] = complex(qv, _CS_H)
        wk = _omega_body(args[0], args[1], dq)
        wdot += np.array([c.imag for c in wk]) / _CS_H * dq[k]
    c1, s1 = math.cos(q[0]), math.sin(q[0])
    c2, s2 = math.cos(q[1]), math.sin(q[1])
    E = np.array([[c2, 0.0, -c1 * s2], [0.0, 1.0, s1], [s2, 0.0, c1 * c2]])
    wdot += E @ qdd[0:3]

    # rolling-wheel center acceleration: convective part by complex step
    a_w = np.zeros(3)
    for k, qv in ((0, q[0]), (2, q[2])):
        args = [q[0], q[2]]
        args[0 if k == 0 else 1] = complex(qv, _CS_H)
        vk = _wheel_center_velocity(args[0], args[1], dq, params)
        a_w += np.array([c.imag for c in vk]) / _CS_H * dq[k]
    jw = np.column_stack([jv[0][k] for k in range(5)]).astype(float)
    a_w += jw @ qdd

    # COM acceleration for contact-force bookkeeping
    mw, mf, mt = params.m_wheel, params.m_frame, params.m_total
    jcom = (mw * np.column_stack([jv[0][k] for k in range(5)]).astype(float)
            + mf * np.column_stack([jv[1][k] for k in range(5)]).astype(float)
            + mw * np.column_stack([jv[2][k] for k in range(5)]).astype(float)) / mt
    a_com = jcom @ qdd
    h = 1e-7  # central difference for the convective COM part (test-grade)
    for k in (0, 1, 2):
        qp, qm = q.copy(), q.copy()
        qp[k] += h
        qm[k] -= h
        jp, _ = _kin(qp[0], qp[1], qp[2], params)
        jm, _ = _kin(qm[0], qm[1], qm[2], params)
        for m, bp, bm in ((mw, jp[0], jm[0]), (mf, jp[1], jm[1]), (mw, jp[2], jm[2])):
            dJ = (np.column_stack([bp[i] for i in range(5)])
                  - np.column_stack([bm[i] for i in range(5)])) / (2.0 * h)
            a_com += (m / mt) * (dJ @ dq) * dq[k]

    return BodyKin(
        R_IB=R,
        omega_B=w,
        omegadot_B=wdot,
        acc_wheel_center_B=R.T @ a_w,
        acc_com_I=a_com,
    )


@dataclass
class LinearModel:
    """Decoupled small-signal blocks about the upright equilibrium.

    Block I is roll with the reaction wheel, states (q1, dq1, q5, dq5);
    block II is pitch with the drive wheel, states (q2, dq2, q4, dq4).
    Yaw is uncontrollable from the wheel torques and excluded.
    """

    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    B2: np.ndarray
    A_full: np.ndarray
    B_full: np.ndarray
    cross_block_max: float


BLOCK_I = (0, 5, 4, 9)   # q1, dq1, q5, dq5 in the (q, dq) stacking
BLOCK_II = (1, 6, 3, 8)  # q2, dq2, q4, dq4


def linearize_upright(params: RobotParams, fd_step: float = 1e-6) -> LinearModel:
    """Central-difference linearization at the upright equilibrium.

    Cross couplings between the two blocks vanish by symmetry; anything
    above 1e-8 is treated as a modelling error, below that it is zeroed.
    """

    def f(z, u):
        st = FullState(z[0:5], z[5:10], np.zeros(2))
        return np.concatenate([st.dq, forward_dynamics(st, u, params)])

    n = 10
    A = np.zeros((n, n))
    u0 = np.zeros(2)
    for j in range(n):
        zp, zm = np.zeros(n), np.zeros(n)
        zp[j] += fd_step
        zm[j] -= fd_step
        A[:, j] = (f(zp, u0) - f(zm, u0)) / (2.0 * fd_step)
    B = np.zeros((n, 2))
    for j in range(2):
        up, um = np.zeros(2), np.zeros(2)
        up[j] += fd_step
        um[j] -= fd_step
        B[:, j] = (f(np.zeros(n), up) - f(np.zeros(n), um)) / (2.0 * fd_step)

    keep = np.zeros((n, n), dtype=bool)
    for blk in (BLOCK_I, BLOCK_II):
        for i in blk:
            for j in blk:
                keep[i, j] = True
    yaw = (2, 7)
    for i in yaw:
        for j in yaw:
            keep[i, j] = True
    cross = float(np.max(np.abs(np.where(keep, 0.0, A))))
    bcross = max(float(np.max(np.abs(B[list(BLOCK_I), 1]))),
                 float(np.max(np.abs(B[list(BLOCK_II), 0]))))
    cross = max(cross, bcross)
    if cross > 1e-8:
        raise RuntimeError(f"unexpected cross-block coupling {cross:.2e} in linearization")

    A1 = A[np.ix_(BLOCK_I, BLOCK_I)]
    A2 = A[np.ix_(BLOCK_II, BLOCK_II)]
    B1 = B[list(BLOCK_I), 0]
    B2 = B[list(BLOCK_II), 1]
    A_clean = np.where(keep, A, 0.0)
    return LinearModel(A1=A1, B1=B1, A2=A2, B2=B2,
                       A_full=A_clean, B_full=B, cross_block_max=cross)
