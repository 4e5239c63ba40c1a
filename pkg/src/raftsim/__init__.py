"""raftsim: surface finite-element simulation of membrane phase separation
coupled to bulk-membrane cholesterol exchange."""

from .kernels import BACKEND
from .raft_model import ExchangeLaw, ModelParams, SimState
from .surface_mesh import SurfaceMesh, build_bumpy_sphere, build_refined_sphere, load_mesh
from .time_stepper import StepperConfig, run

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExchangeLaw",
    "ModelParams",
    "SimState",
    "StepperConfig",
    "SurfaceMesh",
    "build_bumpy_sphere",
    "build_refined_sphere",
    "load_mesh",
    "run",
    "__version__",
]
