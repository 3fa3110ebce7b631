__all__ = [
    "BarrierSchedules",
    "GainSettings",
    "IntegratorConfig",
    "Mode",
    "OracleConfig",
    "TimeVaryingProblem",
    "Trajectory",
    "TvipmError",
    "eval_phi",
    "integrate",
    "load_run_config",
    "solve_static",
    "tracking_error",
]

from .barrier import BarrierSchedules, eval_phi
from .config import load_run_config
from .dynamics import GainSettings
from .errors import TvipmError
from .integrator import IntegratorConfig, Mode, Trajectory, integrate
from .oracle import OracleConfig, solve_static, tracking_error
from .problem_model import TimeVaryingProblem
