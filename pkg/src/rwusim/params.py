"""Physical parameters of the robot and derived mechanical quantities.

All quantities are SI (m, kg, s, N, Nm, rad). The robot is two identical
wheel assemblies on opposite ends of a cuboid chassis; either wheel can
act as the rolling wheel, the other one is then the reaction wheel.
Parameter files are flat JSON documents with the same keys as
:class:`RobotParams`; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

# Wheel inertia presets. "hollow-cylinder" evaluates the ring model from
# the geometry; "datasheet" is the much smaller catalog value that also
# circulates for this drivetrain. They disagree by ~7x, so the choice is
# explicit in the parameter file and exercised by the stand-up tests.
WHEEL_INERTIA_MODELS = ("hollow-cylinder", "datasheet")
DATASHEET_WHEEL_INERTIA = 5.0e-4  # kg m^2

SCHEMA_KEY = "schema_version"
PARAMS_SCHEMA_VERSION = 1


class ParamError(ValueError):
    """Raised for malformed or physically inconsistent parameter sets."""


def wheel_inertia(m_wheel: float, r_outer: float, r_inner: float) -> float:
    """Spin-axis inertia of a hollow-cylinder wheel, 0.5*m*(ri^2 + ro^2).

    Linear in mass, monotone in radius. Raises ParamError for
    non-positive mass, a non-positive outer radius, a negative inner
    radius (zero means a solid disc), or an inner radius exceeding the
    outer one.
    """
    if m_wheel <= 0.0:
        raise ParamError(f"wheel mass must be positive, got {m_wheel}")
    if r_inner < 0.0 or r_outer <= 0.0:
        raise ParamError(f"wheel radii must be non-negative, got {r_inner}, {r_outer}")
    if r_inner > r_outer:
        raise ParamError(f"inner radius {r_inner} exceeds outer radius {r_outer}")
    return 0.5 * m_wheel * (r_inner * r_inner + r_outer * r_outer)


@dataclass(frozen=True)
class RobotParams:
    """Geometry, masses, inertias and actuator limits of the robot."""

    half_height_a: float = 0.110         # m, half the total robot height
    chassis_half_width_b: float = 0.083  # m, half width of the chassis cuboid
    wheel_radius: float = 0.106          # m, both wheels (half_height - 4 mm)
    lever_L1: float = 0.061              # m, chassis half height; stand-up lever, step 1
    lever_L2: float = 0.061              # m, stand-up lever, step 2
    brake_lever_L3: float = 0.0415       # m, lever holding the frame while braking a wheel
    m_total: float = 1.4                 # kg
    m_wheel: float = 0.32                # kg, each wheel
    wheel_inner_radius: float = 0.098    # m, ring inner radius (outer - 8 mm)
    wheel_inertia_model: str = "hollow-cylinder"
    I_wheel_spin_override: float | None = None   # kg m^2, explicit spin inertia if set
    I_body_cog: tuple[float, float, float] | None = None  # kg m^2 diag; None -> cuboid model
    g0: float = 9.81                     # m/s^2
    K_T: float = 0.075                   # Nm/A motor torque constant
    i_max: float = 18.0                  # A peak phase current
    tau_max: float = 1.3                 # Nm peak shaft torque
    omega_knee: float = 282.0            # rad/s, torque plateau ends here
    kv_rpm_per_volt: float = 160.0       # motor Kv
    v_supply: float = 22.0               # V bus voltage
    Ts_control: float = 0.01             # s, control period (100 Hz)

    def __post_init__(self) -> None:
        positive = (
            "half_height_a", "chassis_half_width_b", "wheel_radius",
            "lever_L1", "lever_L2", "brake_lever_L3", "m_total", "m_wheel",
            "wheel_inner_radius", "K_T", "i_max", "tau_max",
            "omega_knee", "kv_rpm_per_volt", "v_supply", "Ts_control",
        )
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0.0):
                raise ParamError(f"{name} must be a positive finite number, got {v!r}")
        # zero gravity is a legitimate diagnostic configuration
        if not (isinstance(self.g0, (int, float)) and math.isfinite(self.g0)
                and self.g0 >= 0.0):
            raise ParamError(f"g0 must be a non-negative finite number, got {self.g0!r}")
        if self.wheel_radius >= self.half_height_a:
            raise ParamError("wheel_radius must be smaller than half_height_a")
        if self.m_total <= 2.0 * self.m_wheel:
            raise ParamError("m_total must exceed the mass of the two wheels")
        if self.wheel_inertia_model not in WHEEL_INERTIA_MODELS:
            raise ParamError(
                f"wheel_inertia_model must be one of {WHEEL_INERTIA_MODELS}, "
                f"got {self.wheel_inertia_model!r}")
        if self.lever_L1 >= self.half_height_a:
            raise ParamError("lever_L1 must be smaller than half_height_a")
        # torque constant, current limit and shaft torque limit must agree
        if abs(self.K_T * self.i_max - self.tau_max) > 0.1 * self.tau_max:
            raise ParamError(
                f"tau_max {self.tau_max} inconsistent with K_T*i_max "
                f"{self.K_T * self.i_max:.3f} (>10% off)")
        if self.omega_knee >= self.omega_noload:
            raise ParamError("omega_knee must lie below the no-load speed")
        ib = self.body_inertia_diag
        if min(ib) <= 0.0 or any(ib[i] > ib[(i + 1) % 3] + ib[(i + 2) % 3] for i in range(3)):
            raise ParamError(f"I_body_cog violates positivity/triangle inequality: {ib}")

    # -- derived quantities ------------------------------------------------

    @property
    def omega_noload(self) -> float:
        """No-load speed from Kv and bus voltage, rad/s."""
        return self.kv_rpm_per_volt * self.v_supply * (2.0 * math.pi / 60.0)

    @property
    def m_frame(self) -> float:
        """Mass of everything that is not a wheel."""
        return self.m_total - 2.0 * self.m_wheel

    @property
    def wheel_center_offset(self) -> float:
        """Axial distance from chassis center to each wheel center (4 mm)."""
        return self.half_height_a - self.wheel_radius

    @property
    def I_wheel_spin(self) -> float:
        """Wheel inertia about its spin axis per the selected model."""
        if self.I_wheel_spin_override is not None:
            return self.I_wheel_spin_override
        if self.wheel_inertia_model == "datasheet":
            return DATASHEET_WHEEL_INERTIA
        return wheel_inertia(self.m_wheel, self.wheel_radius, self.wheel_inner_radius)

    @property
    def I_wheel_transverse(self) -> float:
        """Wheel inertia about any diameter; thin ring, half the spin value."""
        return 0.5 * self.I_wheel_spin

    @property
    def body_inertia_diag(self) -> tuple[float, float, float]:
        """Chassis inertia diagonal about its COG, cuboid model by default.

        The cuboid is 2b wide along both horizontal axes and 2*L1 tall,
        which is also the geometry the stand-up pivot analysis uses.
        """
        if self.I_body_cog is not None:
            return self.I_body_cog
        m = self.m_frame
        w = 2.0 * self.chassis_half_width_b
        h = 2.0 * self.lever_L1
        ixx = m * (w * w + h * h) / 12.0
        izz = m * (w * w + w * w) / 12.0
        return (ixx, ixx, izz)

    def with_changes(self, **kw) -> "RobotParams":
        return replace(self, **kw)


def static_torque_bound(params: RobotParams) -> float:
    """Largest holding torque the stand-up must overcome, max(L1, L2)*m*g."""
    return max(params.lever_L1, params.lever_L2) * params.m_total * params.g0


def max_brake_torque(params: RobotParams, lever: float | None = None) -> float:
    """Torque that can brake a wheel without tipping the resting frame."""
    L3 = params.brake_lever_L3 if lever is None else lever
    if L3 <= 0.0:
        raise ParamError(f"brake lever must be positive, got {L3}")
    return L3 * params.m_total * params.g0

def torque_speed_envelope(omega: float, params: RobotParams) -> float:
    """Available accelerating torque at wheel speed omega (symmetric in sign).

    Flat at tau_max up to the knee, then falls linearly to zero at the
    no-load speed. Torque opposing the current spin (braking) is not
    limited by back-EMF; callers handle that distinction.
    """
    w = abs(omega)
    if w <= params.omega_knee:
        return params.tau_max
    if w >= params.omega_noload:
        return 0.0
    return params.tau_max * (params.omega_noload - w) / (params.omega_noload - params.omega_knee)


def params_to_dict(params: RobotParams) -> dict:
    d = {SCHEMA_KEY: PARAMS_SCHEMA_VERSION}
    for f in fields(RobotParams):
        v = getattr(params, f.name)
        if isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return d


def save_params(params: RobotParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params), indent=2) + "\n")


def load_params(source: str | Path | dict) -> RobotParams:
    """Load a RobotParams from a flat JSON file or an already-parsed dict.

    Unknown keys are rejected with the offending name; the document must
    carry the expected schema_version.
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as e:
            raise ParamError(f"parameter file {source} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParamError("parameter document must be a JSON object")
    version = doc.pop(SCHEMA_KEY, None)
    if version != PARAMS_SCHEMA_VERSION:
        raise ParamError(
            f"parameter document must set {SCHEMA_KEY}={PARAMS_SCHEMA_VERSION}, got {version!r}")
    known = {f.name for f in fields(RobotParams)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ParamError(f"unknown parameter keys: {', '.join(unknown)}")
    if "I_body_cog" in doc and doc["I_body_cog"] is not None:
        v = doc["I_body_cog"]
        if not (isinstance(v, (list, tuple)) and len(v) == 3):
            raise ParamError("I_body_cog must be a 3-element diagonal [Ixx, Iyy, Izz]")
        doc["I_body_cog"] = tuple(float(x) for x in v)
    return RobotParams(**doc)


def default_params() -> RobotParams:
    return RobotParams()
