"""Bolza problems with extended-valued Lagrangians: growth checks and bounded-control reparametrization."""

__version__ = "0.1.0"

from .constants import BoundsContext, compute_c_t_B, compute_Phi_B, compute_uniform_B, estimate_Upsilon, estimate_Xi, make_context
from .errors import BolzaError
from .growth import Condition, GrowthCertificate, Verdict, check_G, check_H, check_M, check_superlinearity
from .lagrangian import LagrangianModel, builtin, model_from_descriptor, resolve_model
from .minimize import (GapReport, HardEndpoint, MinimizeConfig, QuadraticEndpoint, lavrentiev_probe, minimize_direct,
                       minimizing_sequence)
from .reparam import ReparamCertificate, nice_pair, plan_reparam
from .sampling import SamplerConfig
from .trajectory import AdmissiblePair, ControlSignal, ProblemSpec, StateTrajectory, TimeGrid, evaluate_cost

__all__ = [
    "AdmissiblePair", "BolzaError", "BoundsContext", "Condition", "ControlSignal", "GapReport", "GrowthCertificate",
    "HardEndpoint", "LagrangianModel", "MinimizeConfig", "ProblemSpec", "QuadraticEndpoint", "ReparamCertificate",
    "SamplerConfig", "StateTrajectory", "TimeGrid", "Verdict", "builtin", "check_G", "check_H", "check_M",
    "check_superlinearity", "compute_Phi_B", "compute_c_t_B", "compute_uniform_B", "estimate_Upsilon", "estimate_Xi",
    "evaluate_cost", "lavrentiev_probe", "make_context", "minimize_direct", "minimizing_sequence", "model_from_descriptor",
    "nice_pair", "plan_reparam", "resolve_model", "__version__",
]
