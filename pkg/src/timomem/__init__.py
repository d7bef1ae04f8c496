"""Viscoelastic Timoshenko beam with infinite memory.

Modules
-------
kernel       relaxation kernels, admissibility checks, Prony fits
envelope     convex-analysis decay envelope E <= C G5 / (chi q)
spatial      finite-difference operators on [0, L]
simulate     Newmark time stepping with direct or Prony memory
diagnostics  energy, dissipation identity, Jensen bound, decay fits
cli          ``timomem`` command line
"""

from .kernel import (
    BeamParams,
    ExponentialKernel,
    PowerLawKernel,
    PronyKernel,
    TabulatedKernel,
    check_A1,
    fit_prony,
)
from .simulate import HistoryProfile, InitialData, SimConfig, run

__version__ = "0.1.0"

__all__ = [
    "BeamParams", "ExponentialKernel", "PowerLawKernel", "PronyKernel", "TabulatedKernel",
    "check_A1", "fit_prony", "HistoryProfile", "InitialData", "SimConfig", "run",
]
