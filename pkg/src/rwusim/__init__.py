"""Simulation laboratory for a reaction-wheel unicycle robot.

A self-balancing unicycle with an orthogonal reaction wheel: the lower
wheel rolls (pitch plane), the upper wheel exchanges momentum (roll
plane). The package provides the full nonholonomic rigid-body model,
simulated IMU/encoder sensing, the tilt-estimation pipeline, LQR
balance control, self-erection maneuvers and a scenario runner with
deterministic CSV logging.
"""

from rwusim.params import RobotParams, load_params

__version__ = "0.1.0"


def __getattr__(name):
    # simloop pulls in the whole stack; import it only when asked for
    if name in ("ScenarioConfig", "run_scenario"):
        from rwusim import simloop
        return getattr(simloop, name)
    raise AttributeError(f"module 'rwusim' has no attribute {name!r}")

__all__ = [
    "RobotParams",
    "load_params",
    "ScenarioConfig",
    "run_scenario",
    "__version__",
]
