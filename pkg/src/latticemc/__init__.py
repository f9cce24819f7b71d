"""Monte Carlo transport of two-level atoms in a rigid optical lattice.

Ballistic atoms cross a standing light wave while spontaneous emission
interrupts the coherent evolution with momentum recoils.  The package
integrates the coupled translational/internal equations, classifies the
underlying deterministic dynamics by maximal Lyapunov exponent, measures
momentum diffusion from trajectory ensembles, and compares against the
closed-form chaotic/regular diffusion models.

Normalized units throughout: momentum in photon recoils (hbar k_f), time in
inverse Rabi frequencies (1/Omega), diffusion in hbar^2 k_f^2 Omega.
"""

from ._kernels import available_backends, resolve_backend
from .config import (OutputSpec, RunConfig, SweepSpec, config_from_dict,
                     emit_config, parse_config, write_config)
from .dynamics import AtomState, IntegrationResult, energy, integrate_observed, step
from .emission import (JumpEvent, RngStream, TrajectoryRecord, hazard,
                       propagate_with_jumps, sample_recoil)
from .ensemble import (ChaosSpec, CloudStats, DiffusionEstimate, EnsembleResult,
                       EnsembleSpec, FrictionEstimate, SweepRow,
                       chaotic_window, cloud_observables, estimate_diffusion,
                       estimate_friction, fit_excess_slope, mixed_window,
                       momentum_grid, regular_window, resolve_threads,
                       run_ensemble, sweep_momentum)
from .lyapunov import (ChaosStats, LyapunovResult, benettin_lyapunov,
                       chaos_probability, chaos_threshold, classify_chaotic,
                       max_lyapunov, measure_noise_floor)
from .models import (EnergyMapInputs, UMapState, cloud_size, cloud_variance,
                     d_blended, d_chaotic, d_regular,
                     diffusion_from_energy_increments, energy_map,
                     mean_crossings, temperature_and_heating, u_map_chaotic,
                     u_map_chaotic_variance, u_map_regular, weak_raman_nath_ok)
from .params import PhysicalConstants, SimParams

__version__ = "0.1.0"

__all__ = [
    "AtomState", "ChaosSpec", "ChaosStats", "CloudStats", "DiffusionEstimate",
    "EnergyMapInputs", "EnsembleResult", "EnsembleSpec", "FrictionEstimate",
    "IntegrationResult", "JumpEvent", "LyapunovResult", "OutputSpec",
    "PhysicalConstants", "RngStream", "RunConfig", "SimParams", "SweepRow",
    "SweepSpec", "TrajectoryRecord", "UMapState", "available_backends",
    "benettin_lyapunov", "chaos_probability", "chaos_threshold",
    "chaotic_window", "classify_chaotic", "cloud_observables", "cloud_size",
    "cloud_variance", "config_from_dict", "d_blended", "d_chaotic",
    "d_regular", "diffusion_from_energy_increments", "emit_config", "energy",
    "energy_map", "estimate_diffusion", "estimate_friction",
    "fit_excess_slope", "hazard", "integrate_observed", "max_lyapunov",
    "mean_crossings", "measure_noise_floor", "mixed_window", "momentum_grid",
    "parse_config", "propagate_with_jumps", "regular_window",
    "resolve_backend", "resolve_threads", "run_ensemble", "sample_recoil",
    "step", "sweep_momentum", "temperature_and_heating", "u_map_chaotic",
    "u_map_chaotic_variance", "u_map_regular", "weak_raman_nath_ok",
    "write_config", "__version__",
]
