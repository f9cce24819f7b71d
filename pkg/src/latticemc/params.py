"""Normalized simulation parameters and dimensional constants.

All dynamics run in normalized units: time tau = Omega*t, position x = k_f*X,
momentum p = P/(hbar*k_f).  The three dimensionless knobs are gamma (decay
rate over Rabi frequency), omega_r (recoil frequency over Rabi frequency)
and delta (detuning over Rabi frequency).  PhysicalConstants carries the
dimensional block needed to convert variances back to kelvin and meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HBAR = 1.054571817e-34   # J s
K_BOLTZMANN = 1.380649e-23  # J/K (exact)

# Cs D2 line values used for the dimensional presets.
CS_WAVELENGTH = 852.1e-9      # m
CS_MASS = 2.2069468e-25       # kg
CS_LINEWIDTH = 3.2e7          # 1/s


@dataclass(frozen=True)
class SimParams:
    """Normalized parameters of the atom-field system."""

    gamma: float = 3.3e-3
    omega_r: float = 1e-5
    delta: float = -0.01

    def __post_init__(self):
        if not (self.gamma >= 0):
            raise ValueError("params.gamma must be ≥ 0")
        if not (self.omega_r > 0):
            raise ValueError("params.omega_r must be > 0")
        if not (abs(self.delta) < 1):
            raise ValueError("params.delta must satisfy |delta| < 1")

    @property
    def weak_detuning(self) -> bool:
        # the analytic diffusion formulas assume |delta| well below the Rabi scale
        return abs(self.delta) < 0.1

    def with_gamma(self, gamma: float) -> "SimParams":
        return SimParams(gamma=gamma, omega_r=self.omega_r, delta=self.delta)

    def with_delta(self, delta: float) -> "SimParams":
        return SimParams(gamma=self.gamma, omega_r=self.omega_r, delta=delta)


@dataclass(frozen=True)
class PhysicalConstants:
    """Dimensional constants for converting normalized output to SI."""

    rabi_frequency: float        # Omega, 1/s
    natural_linewidth: float     # Gamma, 1/s
    wavelength: float            # m
    atomic_mass: float           # kg
    hbar: float = HBAR
    boltzmann: float = K_BOLTZMANN

    def __post_init__(self):
        for name in ("rabi_frequency", "natural_linewidth", "wavelength", "atomic_mass"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"constants.{name} must be > 0")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def recoil_frequency(self) -> float:
        """hbar k_f^2 / (m_a Omega), the omega_r this block implies."""
        return self.hbar * self.wavenumber**2 / (self.atomic_mass * self.rabi_frequency)

    @classmethod
    def from_params(cls, params: SimParams, rabi_frequency: float = 1e10,
                    wavelength: float = CS_WAVELENGTH) -> "PhysicalConstants":
        """Derive a constants block consistent with the normalized parameters.

        The linewidth and mass are fixed by gamma = Gamma/Omega and
        omega_r = hbar k_f^2/(m_a Omega); wavelength and Rabi frequency are
        free choices.  Note the resulting mass is generally not the true mass
        of any particular atom; it is whatever mass makes omega_r come out
        right at the chosen wavelength and Rabi frequency.
        """
        k_f = 2 * math.pi / wavelength
        mass = HBAR * k_f**2 / (params.omega_r * rabi_frequency)
        return cls(rabi_frequency=rabi_frequency,
                   natural_linewidth=params.gamma * rabi_frequency,
                   wavelength=wavelength,
                   atomic_mass=mass)

    @classmethod
    def cesium(cls, rabi_frequency: float = 1e10) -> "PhysicalConstants":
        """Real Cs D2 values; use for temperature/length conversions only.

        This block is generally NOT cross-consistent with a given SimParams
        (check_consistency exists for that); it provides the laboratory-scale
        conversion factors.
        """
        return cls(rabi_frequency=rabi_frequency,
                   natural_linewidth=CS_LINEWIDTH,
                   wavelength=CS_WAVELENGTH,
                   atomic_mass=CS_MASS)

    def check_consistency(self, params: SimParams, tol: float = 0.01) -> list[str]:
        """Cross-check against normalized parameters, 1% default tolerance.

        Returns a list of human-readable inconsistency messages (empty when
        the block and the params agree).
        """
        problems = []
        g = self.natural_linewidth / self.rabi_frequency
        if params.gamma > 0 and abs(g - params.gamma) > tol * params.gamma:
            problems.append(
                "constants.natural_linewidth/constants.rabi_frequency = "
                f"{g:.6g} inconsistent with params.gamma = {params.gamma:.6g}")
        wr = self.recoil_frequency
        if abs(wr - params.omega_r) > tol * params.omega_r:
            problems.append(
                "constants imply omega_r = hbar k_f^2/(m_a Omega) = "
                f"{wr:.6g} inconsistent with params.omega_r = {params.omega_r:.6g}")
        return problems
