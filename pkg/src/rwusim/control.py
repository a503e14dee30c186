"""Balance control and self-erection state machines.

LQR gains come from an in-package discrete Riccati solver on the
zero-order-hold discretization of the two decoupled linear blocks. The
balancing law feeds back fused tilt, gyro rate, and the wheel encoder
angle and rate of the matching block. Published gains ship as a named
preset; their signs are resolved at load time by checking which
feedback direction stabilizes the discrete closed loop, since the sign
conventions behind the published rows are not stated.

The stand-up machine pre-spins the reaction wheel, runs the two corner
pivots, and hands over to roll-only and then full balancing. The
roll-up machine spins the rolling wheel, brakes it before ground
contact, then drives the frame upright through the contact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import EstimatorState
from .params import RobotParams, torque_speed_envelope
from .sensors import EncoderReading

# nominal operating point of the drive: 1.3 Nm at 17.3 A
TORQUE_CONSTANT = 1.3 / 17.3  # Nm per A
CURRENT_LIMIT = 17.3          # A


class SynthesisError(RuntimeError):
    """LQR synthesis failed (non-convergence or unstabilizable pair)."""


def _expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the Taylor series."""
    M = np.asarray(M, dtype=float)
    nrm = np.linalg.norm(M, np.inf)
    s = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0.5 else 0
    A = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 40):
        term = term @ A / k
        E = E + term
        if np.linalg.norm(term, np.inf) < 1e-18:
            break
    for _ in range(s):
        E = E @ E
    return E


def zoh_discretize(A: np.ndarray, B: np.ndarray, Ts: float):
    """Exact zero-order-hold discretization via the augmented exponential."""
    if Ts <= 0.0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, m = A.shape[0], B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A * Ts
    M[:n, n:] = B * Ts
    E = _expm(M)
    return E[:n, :n], E[:n, n:]


def controllability_rank(A: np.ndarray, B: np.ndarray) -> int:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B if np.ndim(B) > 1 else np.asarray(B)[:, None])
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks), tol=1e-9))


def solve_dare(Ad, Bd, Q, R, tol: float = 1e-12, max_iter: int = 200):
    """Discrete-time Riccati solution by structured doubling.

    Returns (K, P) with u = K x stabilizing in the sense that
    Ad - Bd K has spectral radius below one. Doubling squares the
    convergence rate each sweep, so the iteration budget is generous.
    """
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.asarray(Bd, dtype=float)
    if Bd.ndim == 1:
        Bd = Bd[:, None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if np.any(np.linalg.eigvalsh(R) <= 0.0):
        raise SynthesisError("R must be positive definite")
    if np.any(np.linalg.eigvalsh(Q) < -1e-12):
        raise SynthesisError("Q must be positive semi-definite")
    n = Ad.shape[0]
    A = Ad.copy()
    G = Bd @ np.linalg.solve(R, Bd.T)
    H = Q.copy()
    for _ in range(max_iter):
        # unstabilizable pairs blow the iterates up toward inf / nan;
        # silence the transient arithmetic and raise the diagnostic
        with np.errstate(invalid="ignore", over="ignore"):
            W = np.eye(n) + G @ H
            try:
                Winv_A = np.linalg.solve(W, A)
                Winv_G = np.linalg.solve(W, G)
            except np.linalg.LinAlgError as exc:
                raise SynthesisError(
                    f"doubling iteration broke down: {exc}") from exc
            A_next = A @ Winv_A
            G_next = G + A @ Winv_G @ A.T
            H_next = H + Winv_A.T @ (H @ A)
        if not np.all(np.isfinite(H_next)):
            raise SynthesisError(
                "Riccati doubling diverged; controllability rank "
                f"{controllability_rank(Ad, Bd)} of {n}")
        dH = np.max(np.abs(H_next - H))
        A, G, H = A_next, G_next, H_next
        if dH <= tol * max(1.0, np.max(np.abs(H_next))):
            break
    else:
        raise SynthesisError(
            "Riccati doubling did not converge; controllability rank "
            f"{controllability_rank(Ad, Bd)} of {n}")
    P = 0.5 * (H + H.T)
    K = np.linalg.solve(R + Bd.T @ P @ Bd, Bd.T @ P @ Ad)
    rho = np.max(np.abs(np.linalg.eigvals(Ad - Bd @ K)))
    if rho >= 1.0:
        raise SynthesisError(
            f"closed loop not stable (spectral radius {rho:.6f}); "
            f"controllability rank {controllability_rank(Ad, Bd)} of {n}")
    return K, P


def dare_residual(Ad, Bd, Q, R, P) -> float:
    """Magnitude of the defining fixed-point equation at P."""
    Ad = np.atleast_2d(np.asarray(Ad, dtype=float))
    Bd = np.asarray(Bd, dtype=float)
    if Bd.ndim == 1:
        Bd = Bd[:, None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    S = R + Bd.T @ P @ Bd
    X = Ad.T @ P @ Ad - Ad.T @ P @ Bd @ np.linalg.solve(S, Bd.T @ P @ Ad) + Q
    return float(np.max(np.abs(X - P)))


@dataclass(frozen=True)
class LqrGains:
    """Feedback rows for the two decoupled blocks, signs resolved.

    u1 = K1 . (tilt error, tilt rate, wheel angle error, wheel rate) on
    the roll/reaction-wheel block, u2 likewise on the pitch/drive
    block.
    """

    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", np.asarray(self.K1, dtype=float))
        object.__setattr__(self, "K2", np.asarray(self.K2, dtype=float))
        if self.K1.shape != (4,) or self.K2.shape != (4,):
            raise ValueError("gain rows must be 4-vectors")


# gain rows as published; signs resolved against the linear model
PAPER_K1 = (4.5, 0.25, 0.0003, 0.0018)
PAPER_K2 = (1.6, 0.14, 0.04, 0.0344)

# synthesis weights whose gains land in the neighborhood of the
# published rows (the originals are not published)
DEFAULT_Q1 = (90.0, 1.0, 1e-5, 1e-4)
DEFAULT_Q2 = (60.0, 1.0, 1e-2, 1e-3)
DEFAULT_R1 = 1.0
DEFAULT_R2 = 1.0


def _resolve_sign(Ad: np.ndarray, Bd: np.ndarray, K: np.ndarray) -> float:
    """Pick the feedback direction that stabilizes u = s K x."""
    col = np.reshape(Bd, (Ad.shape[0], 1))
    for s in (1.0, -1.0):
        rho = np.max(np.abs(np.linalg.eigvals(Ad + col @ (s * K)[None, :])))
        if rho < 1.0:
            return s
    raise SynthesisError(
        "neither feedback direction stabilizes the block with this gain row")


def paper_preset_gains(params: RobotParams) -> LqrGains:
    """The published gain rows, sign-resolved on the linear blocks."""
    from .dynamics3d import linearize_upright
    lm = linearize_upright(params)
    Ts = params.Ts_control
    Ad1, Bd1 = zoh_discretize(lm.A1, lm.B1, Ts)
    Ad2, Bd2 = zoh_discretize(lm.A2, lm.B2, Ts)
    s1 = _resolve_sign(Ad1, Bd1, np.array(PAPER_K1))
    s2 = _resolve_sign(Ad2, Bd2, np.array(PAPER_K2))
    return LqrGains(K1=s1 * np.array(PAPER_K1), K2=s2 * np.array(PAPER_K2))


def synthesize_gains(
    params: RobotParams,
    Q1=DEFAULT_Q1,
    Q2=DEFAULT_Q2,
    R1: float = DEFAULT_R1,
    R2: float = DEFAULT_R2,
) -> LqrGains:
    """LQR rows for both blocks from diagonal weights."""
    from .dynamics3d import linearize_upright
    lm = linearize_upright(params)
    Ts = params.Ts_control
    Ad1, Bd1 = zoh_discretize(lm.A1, lm.B1, Ts)
    Ad2, Bd2 = zoh_discretize(lm.A2, lm.B2, Ts)
    K1, _ = solve_dare(Ad1, Bd1, np.diag(Q1), [[R1]])
    K2, _ = solve_dare(Ad2, Bd2, np.diag(Q2), [[R2]])
    # solve_dare stabilizes u = K x on Ad - Bd K; the balance law adds
    # the torque with a plus sign, so fold the minus in here
    return LqrGains(K1=-K1[0], K2=-K2[0])


@dataclass
class BalanceRefs:
    """Slowly leaking wheel-angle references against windup.

    The wheel angle channels would otherwise integrate every little
    asymmetry into an ever-growing feedback term during long runs.
    """

    q4_ref: float = 0.0
    q5_ref: float = 0.0
    leak: float = 0.999

    def update(self, enc: EncoderReading) -> None:
        self.q4_ref += (1.0 - self.leak) * (enc.q4E - self.q4_ref)
        self.q5_ref += (1.0 - self.leak) * (enc.q5E - self.q5_ref)


def _wrap_angle(err: float) -> float:
    """Fold a wheel angle error into (-pi, pi]."""
    return math.remainder(err, math.tau)


def balance_law(
    est: EstimatorState,
    enc: EncoderReading,
    gains: LqrGains,
    refs: BalanceRefs,
    roll_only: bool = False,
) -> tuple[float, float]:
    """Wheel torques from the fused estimates and encoder channels.

    Wheel angle errors are wrapped to half a turn: a wheel that coasted
    whole revolutions after a maneuver or a shove pulls back toward the
    nearest rest multiple instead of fighting its own travel, so the
    angle term stays bounded while the rate term kills the motion.
    """
    x1 = (est.q1_hat - est.q1_bar, est.euler_rates_G[0],
          _wrap_angle(enc.q5E - refs.q5_ref), enc.dq5E)
    x2 = (est.q2_hat - est.q2_bar, est.euler_rates_G[1],
          _wrap_angle(enc.q4E - refs.q4_ref), enc.dq4E)
    u1 = float(np.dot(gains.K1, x1))
    u2 = 0.0 if roll_only else float(np.dot(gains.K2, x2))
    refs.update(enc)
    return u1, u2


def saturate_command(
    u: float,
    wheel_rate: float,
    params: RobotParams,
) -> tuple[float, float]:
    """Clip a torque command to the actuator and return (torque, current).

    Accelerating torque obeys the speed-dependent envelope; braking
    torque is back-EMF assisted and only sees the nominal bound. The
    current is the torque over the motor constant, clipped at the
    driver limit.
    """
    accelerating = u * wheel_rate >= 0.0
    limit = torque_speed_envelope(wheel_rate, params) if accelerating \
        else params.tau_max
    u_c = max(-limit, min(limit, u))
    i = max(-CURRENT_LIMIT, min(CURRENT_LIMIT, u_c / TORQUE_CONSTANT))
    return u_c, i


class ManeuverPhase(enum.Enum):
    Idle = "Idle"
    StandupSpin = "StandupSpin"
    StandupStep1 = "StandupStep1"
    StandupStep2 = "StandupStep2"
    RollupContact = "RollupContact"
    RollupRotate = "RollupRotate"
    BalanceRollOnly = "BalanceRollOnly"
    BalanceFull = "BalanceFull"
    Fallen = "Fallen"


@dataclass
class MachineConfig:
    """Thresholds and targets for the self-erection machines."""

    spin_target: float = -60.0        # rad/s reaction-wheel pre-spin
    standup_torque: float = 1.2       # Nm during the pivot steps
    erect_rate_limit: float = 3.5     # rad/s tilt-rate ceiling while erecting
    erect_rate_floor: float = 1.0     # rad/s ceiling at the upright approach
    erect_taper_deg: float = 25.0     # tilt below which the ceiling tapers
    step_switch_deg: float = 30.0     # tilt at the corner-to-rim handover
    upright_deg: float = 4.0          # tilt where balancing takes over
    roll_ok_deg: float = 5.0          # |tilt| gate for full balancing
    hold_s: float = 0.1               # time inside the gate before Full
    rollup_spin_target: float = -57.0  # rad/s drive-wheel pre-spin
    rollup_torque: float = 0.3        # Nm for the ground-reaction drive
    rollup_kp: float = 0.8
    rollup_kd: float = 0.16
    fall_deg: float = 120.0
    timeout_s: float = 4.0            # per phase


@dataclass
class ManeuverMachine:
    """Shared machinery: phase bookkeeping, timeouts, balance handoff."""

    cfg: MachineConfig
    gains: LqrGains
    params: RobotParams
    refs: BalanceRefs = field(default_factory=BalanceRefs)
    phase: ManeuverPhase = ManeuverPhase.Idle
    phase_entry_t: float = 0.0
    diagnostic: str = ""
    _hold_since: float | None = None
    _braking: bool = False

    def _enter(self, phase: ManeuverPhase, t: float) -> None:
        self.phase = phase
        self.phase_entry_t = t
        self._hold_since = None
        self._braking = False

    def _erect_torque(self, tilt: float, tilt_rate: float) -> float:
        """Rate-governed pivot torque: push, but never free-fall.

        Gravity assists past the pivot midpoint, so constant torque
        would slam the frame through upright far faster than the
        balance law can catch. Bang-bang on the descent rate with a
        hysteresis band holds the sweep near the ceiling, and the
        ceiling tapers with the remaining tilt so the handover to
        balancing happens at a catchable speed.
        """
        cfg = self.cfg
        taper = abs(tilt) / math.radians(cfg.erect_taper_deg)
        lim = max(cfg.erect_rate_floor,
                  min(cfg.erect_rate_limit, cfg.erect_rate_limit * taper))
        if self._braking:
            if tilt_rate >= -0.8 * lim:
                self._braking = False
        elif tilt_rate <= -lim:
            self._braking = True
        return -self.cfg.standup_torque if self._braking \
            else self.cfg.standup_torque

    def _fall(self, t: float, why: str) -> None:
        self.diagnostic = why
        self._enter(ManeuverPhase.Fallen, t)

    def _timed_out(self, t: float) -> bool:
        return (t - self.phase_entry_t) > self.cfg.timeout_s

    def reset(self) -> None:
        self.phase = ManeuverPhase.Idle
        self.phase_entry_t = 0.0
        self.diagnostic = ""
        self._hold_since = None
        self._braking = False
        self.refs = BalanceRefs(leak=self.refs.leak)

    def notify_slip(self, t: float) -> None:
        """The engine detected contact slip; the maneuver is lost."""
        self._fall(t, "slip: tangential contact force exceeded the friction cone")

    def _seed_refs(self, enc: EncoderReading) -> None:
        # start regulating wheel angles from where they are, not from 0
        self.refs.q4_ref = enc.q4E
        self.refs.q5_ref = enc.q5E

    def _balance_phases(self, est: EstimatorState,
                        enc: EncoderReading, t: float):
        cfg = self.cfg
        worst = max(abs(est.q1_hat), abs(est.q2_hat))
        if worst > math.radians(cfg.fall_deg):
            self._fall(t, f"tilt {math.degrees(worst):.0f} deg is past recovery")
            return 0.0, 0.0
        if self.phase is ManeuverPhase.BalanceRollOnly:
            if abs(est.q1_hat) < math.radians(cfg.roll_ok_deg):
                if self._hold_since is None:
                    self._hold_since = t
                if t - self._hold_since >= cfg.hold_s:
                    self._enter(ManeuverPhase.BalanceFull, t)
            else:
                self._hold_since = None
        roll_only = self.phase is ManeuverPhase.BalanceRollOnly
        u1, u2 = balance_law(est, enc, self.gains, self.refs,
                             roll_only=roll_only)
        u1, _ = saturate_command(u1, enc.dq5E, self.params)
        u2, _ = saturate_command(u2, enc.dq4E, self.params)
        return u1, u2


@dataclass
class StandupMachine(ManeuverMachine):
    """Pre-spin, two pivot steps, then balance."""

    def step(self, est: EstimatorState, enc: EncoderReading,
             t: float) -> tuple[ManeuverPhase, float, float]:
        cfg = self.cfg
        tilt = est.q1_hat
        if self.phase is ManeuverPhase.Fallen:
            return self.phase, 0.0, 0.0
        if self.phase is ManeuverPhase.Idle:
            if abs(tilt) < math.radians(cfg.roll_ok_deg):
                self._enter(ManeuverPhase.BalanceFull, t)
            else:
                self._enter(ManeuverPhase.StandupSpin, t)
        if self.phase is ManeuverPhase.StandupSpin:
            target = cfg.spin_target
            if (target < 0 and enc.dq5E <= target) or \
               (target >= 0 and enc.dq5E >= target):
                self._enter(ManeuverPhase.StandupStep1, t)
            elif self._timed_out(t):
                self._fall(t, "pre-spin never reached its target rate")
                return self.phase, 0.0, 0.0
            else:
                u1 = math.copysign(self.params.tau_max, target)
                u1, _ = saturate_command(u1, enc.dq5E, self.params)
                return self.phase, u1, 0.0
        if self.phase is ManeuverPhase.StandupStep1:
            if abs(tilt) <= math.radians(cfg.step_switch_deg):
                self._enter(ManeuverPhase.StandupStep2, t)
            elif self._timed_out(t):
                self._fall(t, "step 1 stalled before the pivot handover")
                return self.phase, 0.0, 0.0
            else:
                u1 = self._erect_torque(tilt, est.euler_rates_G[0])
                u1, _ = saturate_command(u1, enc.dq5E, self.params)
                return self.phase, u1, 0.0
        if self.phase is ManeuverPhase.StandupStep2:
            if abs(tilt) <= math.radians(cfg.upright_deg):
                self._enter(ManeuverPhase.BalanceRollOnly, t)
                self._seed_refs(enc)
            elif self._timed_out(t):
                self._fall(t, "step 2 stalled before reaching upright")
                return self.phase, 0.0, 0.0
            else:
                u1 = self._erect_torque(tilt, est.euler_rates_G[0])
                u1, _ = saturate_command(u1, enc.dq5E, self.params)
                return self.phase, u1, 0.0
        u1, u2 = self._balance_phases(est, enc, t)
        return self.phase, u1, u2


@dataclass
class RollupMachine(ManeuverMachine):
    """Self-erection in the pitch plane using the rolling wheel.

    The rolling wheel first acts as a reaction wheel: pre-spun
    backwards while the frame still lies pressed on the ground, then
    torqued forward so the frame pivots over the chassis corner, the
    descent paced by the same rate governor as the stand-up steps. The
    pre-spin target absorbs the pivot's net torque impulse, so the
    wheel crosses zero speed about when its rim touches down. From
    there the wheel drives the frame upright through the ground
    reaction, which is where slip matters.
    """

    _spun: bool = False

    def step(self, est: EstimatorState, enc: EncoderReading,
             t: float) -> tuple[ManeuverPhase, float, float]:
        cfg = self.cfg
        tilt = est.q2_hat
        if self.phase is ManeuverPhase.Fallen:
            return self.phase, 0.0, 0.0
        if self.phase is ManeuverPhase.Idle:
            if abs(tilt) < math.radians(cfg.roll_ok_deg):
                self._enter(ManeuverPhase.BalanceFull, t)
            else:
                self._enter(ManeuverPhase.RollupContact, t)
                self._spun = False
        if self.phase is ManeuverPhase.RollupContact:
            target = cfg.rollup_spin_target
            if not self._spun and (
                    (target < 0 and enc.dq4E <= target)
                    or (target >= 0 and enc.dq4E >= target)):
                self._spun = True
            if self._spun and abs(tilt) <= math.radians(cfg.step_switch_deg):
                self._enter(ManeuverPhase.RollupRotate, t)
            elif self._timed_out(t):
                why = "drive pre-spin never reached its target" \
                    if not self._spun else "corner pivot stalled before touchdown"
                self._fall(t, why)
                return self.phase, 0.0, 0.0
            else:
                if not self._spun:
                    u2 = math.copysign(self.params.tau_max, target)
                else:
                    u2 = self._erect_torque(tilt, est.euler_rates_G[1])
                u2, _ = saturate_command(u2, enc.dq4E, self.params)
                return self.phase, 0.0, u2
        if self.phase is ManeuverPhase.RollupRotate:
            if abs(tilt) <= math.radians(cfg.upright_deg) and \
               abs(est.euler_rates_G[1]) < 2.0:
                self._enter(ManeuverPhase.BalanceRollOnly, t)
                self._seed_refs(enc)
            elif self._timed_out(t):
                self._fall(t, "erection stalled before reaching upright")
                return self.phase, 0.0, 0.0
            else:
                u2 = cfg.rollup_kp * tilt + cfg.rollup_kd * est.euler_rates_G[1]
                u2 = max(-cfg.rollup_torque, min(cfg.rollup_torque, u2))
                u2, _ = saturate_command(u2, enc.dq4E, self.params)
                return self.phase, 0.0, u2
        u1, u2 = self._balance_phases(est, enc, t)
        return self.phase, u1, u2


@dataclass
class BalanceMachine(ManeuverMachine):
    """Pure balancing: straight to full feedback, fall guard only."""

    def step(self, est: EstimatorState, enc: EncoderReading,
             t: float) -> tuple[ManeuverPhase, float, float]:
        if self.phase is ManeuverPhase.Fallen:
            return self.phase, 0.0, 0.0
        if self.phase is ManeuverPhase.Idle:
            self._enter(ManeuverPhase.BalanceFull, t)
            self._seed_refs(enc)
        u1, u2 = self._balance_phases(est, enc, t)
        return self.phase, u1, u2
