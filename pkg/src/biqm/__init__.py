"""Bayesian reconstruction of 1-D lattice potentials from position data.

Draw position measurements from the canonical ensemble of a known benchmark
potential, then recover the potential by MAP optimization under Gaussian or
switching priors.  See the `cli` module (console script `biqm`) for the
command-line entry points.
"""

from .config import (ConfigError, ReconstructionConfig, parse_config,
                     parse_config_text, serialize_config)
from .datagen import (CounterRng, SampleSet, empirical_density, read_samples,
                      sample_positions, true_potential, write_samples)
from .ensemble import (Ensemble, average_energy, build_hamiltonian,
                       diagonalize, likelihood_density, log_likelihood)
from .gradients import (DegenerateSpectrumError, fd_check,
                        grad_energy_penalty, grad_log_likelihood, grad_log_z)
from .lattice import (build_laplacian, build_multiperiod_energy_matrix,
                      build_periodic_invcov, build_rbf_invcov,
                      build_shift_difference, build_symmetry_invcov,
                      disconnect_filter)
from .optimizer import (AnnealSchedule, ReconstructionError,
                        ReconstructionResult, anneal_binary_field,
                        kl_divergence, reconstruct, rmse)
from .presets import preset_config, preset_names, run_preset
from .report import emit_all, emit_csv

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule", "ConfigError", "CounterRng", "DegenerateSpectrumError",
    "Ensemble", "ReconstructionConfig", "ReconstructionError",
    "ReconstructionResult", "SampleSet", "anneal_binary_field",
    "average_energy", "build_hamiltonian", "build_laplacian",
    "build_multiperiod_energy_matrix", "build_periodic_invcov",
    "build_rbf_invcov", "build_shift_difference", "build_symmetry_invcov",
    "diagonalize", "disconnect_filter", "emit_all", "emit_csv",
    "empirical_density", "fd_check", "grad_energy_penalty",
    "grad_log_likelihood", "grad_log_z", "kl_divergence", "likelihood_density",
    "log_likelihood", "parse_config", "parse_config_text", "preset_config",
    "preset_names", "read_samples", "reconstruct", "rmse", "run_preset",
    "sample_positions", "serialize_config", "true_potential", "write_samples",
]
