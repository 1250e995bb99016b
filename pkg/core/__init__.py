"""
Spreading speeds for road-field population models with exchange kernels.
"""

from .model import Params, Kernel, ModelSpec, ModelKind, make_kernel, mollify, mix_with_atom
from .bvp import GridControl, ProfileSolution, lambda_window, psi1, psi2, solve_profile
from .dispersion import SearchControl, SpeedResult, gap, spreading_speed, curve_sample
from .errors import RoadSpreadError, DomainError, KernelError, ConfigError, SolverFailure
from .save_manager import SaveManager

__all__ = [
    'Params',
    'Kernel',
    'ModelSpec',
    'ModelKind',
    'make_kernel',
    'mollify',
    'mix_with_atom',
    'GridControl',
    'ProfileSolution',
    'lambda_window',
    'psi1',
    'psi2',
    'solve_profile',
    'SearchControl',
    'SpeedResult',
    'gap',
    'spreading_speed',
    'curve_sample',
    'RoadSpreadError',
    'DomainError',
    'KernelError',
    'ConfigError',
    'SolverFailure',
    'SaveManager',
]
