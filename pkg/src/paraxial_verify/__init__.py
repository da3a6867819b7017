"""Spectral verification of the paraxial approximation to the Helmholtz equation."""

from .analysis import (
    EnergyTrace,
    ErrorReport,
    SlopeFit,
    energy,
    fit_slope,
    gronwall_check,
    run_comparison,
    sweep,
    tail_norm,
)
from .approximation import (
    InitialData,
    ansatz_spectrum,
    ansatz_z_derivative,
    initial_spectrum,
    residual_spectrum,
)
from .propagators import (
    HelmholtzState,
    helmholtz_energy_per_mode,
    helmholtz_evolve,
    illposed_growth_demo,
    rk4_oracle_evolve,
    schrodinger_evolve,
)
from .spectral import (
    GridPolicy,
    KGrid,
    ModeData,
    Params,
    SpectralField,
    evaluate_physical,
    l2s_norm,
    make_grid,
    mode_data,
    project_ell,
    project_hyp,
)

__version__ = "0.1.0"
