"""Extremum-seeking control of fully actuated mechanical systems on Lie groups.

Simulation of the closed loop and its averaged system, energy-function and
linearization analysis, and empirical practical-stability checks.
"""

from .averaging import AveragedFlow, AveragedState, approximation_error, averaged_rhs, symmetric_product_check
from .controller import ClosedLoop, ClosedLoopState, ControllerGains, GainError, from_tilde, to_tilde
from .geometry import AlgebraFrame, ConnectionTable, EuclideanGroup, Objective, SE3Group, body_gradient
from .plant import PlantModel, double_integrator_plant, flat_plant, kirchhoff_plant
from .signals import DitherBank, ShapingFunction, default_shaping, gram_matrix, make_harmonic_bank
from .sim import Trajectory, integrate, step_size_for

__all__ = [
    "AlgebraFrame", "AveragedFlow", "AveragedState", "ClosedLoop", "ClosedLoopState", "ConnectionTable",
    "ControllerGains", "DitherBank", "EuclideanGroup", "GainError", "Objective", "PlantModel", "SE3Group",
    "ShapingFunction", "Trajectory", "approximation_error", "averaged_rhs", "body_gradient",
    "default_shaping", "double_integrator_plant", "flat_plant", "from_tilde", "gram_matrix", "integrate",
    "kirchhoff_plant", "make_harmonic_bank", "step_size_for", "symmetric_product_check", "to_tilde",
]
