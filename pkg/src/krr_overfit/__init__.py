"""Kernel ridgeless regression on the sphere: Gaussian spectra, eigenframework
risk predictions, theorem bounds, regime scans and Monte Carlo checks."""
from ._accel import HAVE_NUMBA, backend
from .harmonics import (cumulative_multiplicity, index_summary, invert_index,
                        multiplicity, multiplicity_bounds, multiplicity_int)
from .bessel import log_bessel_i, log_bessel_i_series
from .spectrum import (EigenSystem, SpectrumSpec, TruncationError, build_spectrum,
                       check_ratio_bounds, eigenvalue_log, first_eigenvalue_bracket,
                       synthetic_spectrum)
from .eigenframework import (TargetSpec, e0_bracket, effective_ranks, gaussian_system,
                             predicted_risk, predicted_risk_flattened, solve_kappa)
from .regimes import (BandwidthSchedule, DimensionSchedule, RegimeReport,
                      classify_bandwidth_regime, master_upper_bound,
                      multiplicity_scaling_report, risk_lower_bound, scan, verify_assumptions)
from .simulator import (SimConfig, SimResult, TargetFunction, estimate_risk, fit_interpolant,
                        gram, run_experiment, sample_sphere)

__version__ = "0.1.0"
