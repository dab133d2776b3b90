"""Adiabatic light transfer in three coupled waveguides with absorption."""
__version__ = "0.1.0"

from .model import (ConfigError, Ep3Location, ModelConfig, Site, Spectrum, analytic_spectrum,
                    couplings, ep3_locations, hamiltonian, nonadiabatic_coupling_analytic,
                    perturbative_imag_shifts, perturbed_dark_state)
from .eigen import (AlignedSpectrumPath, NearDefectiveError, RefinementLimitError, align_path,
                    eigensystem, instantaneous_frame, numeric_coupling)
from .propagate import (IntegratorSettings, StepFailureError, Trajectory, Variant,
                        integrate_adiabatic_exact, integrate_bare, integrate_reduced,
                        project_adiabatic)
from .analysis import (Method, NoCrossingError, ThresholdEstimate, ZeroNormError,
                       gamma_cr_from_pnonad, gamma_cr_initial, gamma_cr_lz, gamma_cr_semianalytic,
                       lz_estimate, nonadiabatic_probability, threshold_from_sweep,
                       transfer_probability, transfer_probability_adiabatic)
from .sweep import PhaseDiagram, SweepSpec, extract_boundary, run_sweep, scan_pnonad

__all__ = [
    "ConfigError", "Ep3Location", "ModelConfig", "Site", "Spectrum", "analytic_spectrum",
    "couplings", "ep3_locations", "hamiltonian", "nonadiabatic_coupling_analytic",
    "perturbative_imag_shifts", "perturbed_dark_state", "AlignedSpectrumPath",
    "NearDefectiveError", "RefinementLimitError", "align_path", "eigensystem",
    "instantaneous_frame", "numeric_coupling", "IntegratorSettings", "StepFailureError",
    "Trajectory", "Variant", "integrate_adiabatic_exact", "integrate_bare", "integrate_reduced",
    "project_adiabatic", "Method", "NoCrossingError", "ThresholdEstimate", "ZeroNormError",
    "gamma_cr_from_pnonad", "gamma_cr_initial", "gamma_cr_lz", "gamma_cr_semianalytic",
    "lz_estimate", "nonadiabatic_probability", "threshold_from_sweep", "transfer_probability",
    "transfer_probability_adiabatic", "PhaseDiagram", "SweepSpec", "extract_boundary", "run_sweep",
    "scan_pnonad",
]
