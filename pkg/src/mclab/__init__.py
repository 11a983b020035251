"""Motion cloud dynamic textures.

Analytic power spectra, real-time streaming synthesis, validation samplers,
speed estimation, psychometric modeling, and 2AFC experiment tooling.
"""

from .errors import (ConfigurationError, ConflictError, DomainError,
                     FitError, MCLabError, NumericalError,
                     SessionFormatError)
from .params import (DerivedParams, MCParams, convert_mode_std,
                     convert_octave, derived_params, params_from_config,
                     params_to_config)
from .densities import eval_fr, eval_ftheta, eval_fz, l_transform, linv_h
from .spectrum import (FreqPoint, SpdeCoeffs, mc_power_spectrum,
                       power_spectrum_grid, spatial_power_grid, spde_coeffs)
from .grid import GridSpec
from .synth import (AR2_STABILITY_LIMIT, FrameStack, SynthState,
                    ar2_coefficients, grid_with_stable_substep, init_synth,
                    max_stable_delta, shot_noise_sample, step, synth_frames,
                    synth_spectral, warm_up)
from .measure import (band_mask, box_smooth, periodogram, rel_l2_error,
                      spatial_autocov, temporal_acf)
from .frameio import (QUANT_GAIN, QUANT_OFFSET, quantize_frames,
                      read_png_dir, read_raw_stack, write_png_dir,
                      write_raw_stack)
from .observer import (ObserverModel, log_speed, log_speed_inverse,
                       map_estimate, psi, psychometric_theoretical,
                       simulate_observer)
from .psychfit import (LAMBDA_FLOOR, PsychometricFit, fit_probit,
                       fit_psychometric, recover_prior_likelihood)
from .mle import U_BOUND_DEFAULT, MleReport, mle_speed
from .experiment import (ExperimentConfig, SessionStore, TrialRecord,
                         aggregate, build_schedule, load_session,
                         persist_session, write_aggregate_csv)
from .validation import (CHECK_IDS, QUICK_CHECK_IDS, CheckResult,
                         report_as_dict, run_validation)
from .appconfig import CACHE_ENV_VAR, AppConfig, load_app_config

__version__ = "0.1.0"
