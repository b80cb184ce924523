"""Numerical laboratory for laser-filamentation envelope models.

The package pairs a stiff time-domain oracle (the oscillator-medium system in
its 1-d transverse reduction) with the hierarchy of envelope models derived
from it: the exact envelope equation, the full-dispersion model, the cubic
Schrodinger reduction and its improved-dispersion, frequency-dependent
polarization, normalized-family and ionization-coupled variants.  A harness
measures envelope-approximation errors against the oracle and checks each
model's conservation or dissipation law.
"""

from .dispersion import (BranchId, IonizationParams, MediumParams,
                         NlsCoefficients, group_velocity_and_gvd,
                         nls_coefficients, omega_branches, polarization_lift,
                         projector)
from .dispersion_fit import FitResult, check_hyp, fit_improved
from .envelope import (EnvelopeSolver, EnvelopeState, IonizationCoupling,
                       ModelConfig, envelope_step, fenv_cubic, fenv_general,
                       genv, ionization_rhs, p2_symbol, rho_tilde_solve)
from .grid import (GridSpec, SpectralField, apply_matrix_multiplier,
                   apply_scalar_multiplier, make_grid)
from .harness import (ConvergenceConfig, ConvergenceReport,
                      build_medium_from_physical, compare_models,
                      run_convergence)
from .maxwell import (MaxwellSolver, MaxwellState, WavePacketSpec,
                      init_wave_packet, maxwell_ionization_step, maxwell_step,
                      nonlinearity_eval)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
