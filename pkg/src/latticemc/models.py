"""Closed-form theory: energy mapping, node-crossing u-maps, diffusion laws,
temperature/heating and the cloud-variance law.

Everything here is analytic or a lightweight map walk; the Monte Carlo
simulation these formulas are tested against lives in `ensemble`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .params import PhysicalConstants, SimParams

# validity margin used by the Raman-Nath flags: the stated inequality must
# hold by at least this factor before the regime is considered clean
RN_MARGIN = 10.0


@dataclass(frozen=True)
class UMapState:
    """State of the per-node-crossing map for the dipole component u."""
    u: float = 0.0
    m: int = 0          # crossings since the last spontaneous emission
    v0: float = 0.0     # Bloch components frozen at crossings (regular ladder)
    z0: float = -1.0

    def reset(self) -> "UMapState":
        return UMapState(u=0.0, m=0, v0=self.v0, z0=self.z0)


@dataclass(frozen=True)
class EnergyMapInputs:
    """Quantities entering one step of the inter-jump energy mapping.

    State values are taken just before the j-th jump; saturation_mean is
    (1 - z^2) averaged over a window exceeding the Rabi period (the full
    inter-jump interval by default in the simulation pipeline).
    """
    H_prev: float
    x: float
    u: float
    z: float
    p: float
    p_recoil: float
    interval: float
    saturation_mean: float

    def __post_init__(self):
        if not (self.interval > 0):
            raise ValueError("interval must be > 0")
        if not (-1e-9 <= self.saturation_mean <= 1.0 + 1e-9):
            raise ValueError("saturation_mean must lie in [0, 1]")


def weak_raman_nath_ok(state_p: float, u: float, x: float, z: float,
                       params: SimParams) -> bool:
    """Kinetic energy dominates the potential terms by RN_MARGIN."""
    kinetic = 0.5 * params.omega_r * state_p**2
    potential = abs(u * math.cos(x) + 0.5 * params.delta * z)
    return kinetic >= RN_MARGIN * potential


def energy_map(inputs: EnergyMapInputs, params: SimParams) -> float:
    """Energy just after the j-th jump, mapped from the previous jump.

    The recoil shifts the kinetic term, the Bloch reset releases the dipole
    and inversion potential energy, and between jumps the energy drifts at
    the saturation-weighted rate (delta gamma / 4)(1 - z^2).
    """
    return (inputs.H_prev
            + params.omega_r * inputs.p * inputs.p_recoil
            + 0.5 * params.omega_r * inputs.p_recoil**2
            + 0.5 * params.delta
            + inputs.u * math.cos(inputs.x)
            + 0.5 * params.delta * inputs.z
            + 0.25 * params.delta * params.gamma
            * inputs.saturation_mean * inputs.interval)


def diffusion_from_energy_increments(increments, p: float, mean_interval: float,
                                     params: SimParams) -> float:
    """D_p from the variance of inter-jump energy increments.

    Var[dH] / (2 omega_r^2 p^2 <dtau>), with p the representative momentum
    (p ~ sqrt(2 H / omega_r) for a ballistic atom).
    """
    increments = np.asarray(increments, dtype=np.float64)
    if increments.size < 30:
        raise ValueError("need at least 30 increments")
    if not (p > 0 and mean_interval > 0):
        raise ValueError("p and mean_interval must be > 0")
    var = float(np.var(increments, ddof=1))
    if var == 0.0:
        return 0.0
    return var / (2.0 * params.omega_r**2 * p**2 * mean_interval)


def u_map_chaotic(s: UMapState, params: SimParams, p: float,
                  rng: np.random.Generator) -> UMapState:
    """One node crossing in the chaotic regime: random-phase kick on u.

    u_m = |delta| sqrt(pi / omega_r p) sin(phi_m) + u_{m-1}.  The phase is
    drawn uniform on [0, 2pi), i.e. a half-range phase with a random sign:
    the kicks must be zero-mean (a martingale) for the variance of u to grow
    linearly with m, which is what feeds the chaotic diffusion law.
    """
    if not (p > 0):
        raise ValueError("p must be > 0")
    phi = rng.uniform(0.0, 2.0 * math.pi)
    kick = abs(params.delta) * math.sqrt(math.pi / (params.omega_r * p))
    return replace(s, u=s.u + kick * math.sin(phi), m=s.m + 1)


def u_map_regular(s: UMapState, params: SimParams, p: float) -> UMapState:
    """One node crossing of the deterministic regular-regime ladder.

    The alternating (-1)^m terms cancel pairwise; the surviving v0 term makes
    u grow linearly with the crossing count.
    """
    if not (p > 0):
        raise ValueError("p must be > 0")
    m = s.m + 1
    arg = 2.0 / (params.omega_r * p) - 0.25 * math.pi
    sign = -1.0 if m % 2 else 1.0
    root = math.sqrt(math.pi / (params.omega_r * p))
    du = params.delta * (root * (s.v0 * math.cos(arg) + sign * s.z0 * math.sin(arg))
                         + sign * s.z0)
    return replace(s, u=s.u + du, m=m)


def u_map_chaotic_variance(params: SimParams, p: float, m: int) -> float:
    """<u_M^2> after m chaotic crossings from u=0: m delta^2 pi/(2 omega_r p)."""
    return m * params.delta**2 * math.pi / (2.0 * params.omega_r * p)


def mean_crossings(params: SimParams, p: float) -> float:
    """Mean node crossings between jumps: 2 omega_r p / (gamma pi)."""
    if not (p > 0):
        raise ValueError("p must be > 0")
    return 2.0 * params.omega_r * p / (params.gamma * math.pi)


def d_chaotic(params: SimParams, p) -> float:
    """Diffusion in the chaotic regime: gamma/12 + delta^2/(8 omega_r^2 p^2)."""
    p = np.asarray(p, dtype=np.float64)
    out = params.gamma / 12.0 + params.delta**2 / (8.0 * params.omega_r**2 * p**2)
    return out if out.ndim else float(out)


def d_regular(params: SimParams, p, averaged: bool = True) -> float:
    """Diffusion in the regular regime.

    The oscillatory form keeps the cos^2(2/omega_r p - pi/4) factor of the
    ladder; the averaged form (default) replaces it by 1/2, giving
    gamma/12 + delta^2/(8 gamma omega_r p pi).
    """
    p = np.asarray(p, dtype=np.float64)
    base = params.delta**2 / (4.0 * params.gamma * params.omega_r * p * math.pi)
    if averaged:
        osc = 0.5
    else:
        osc = np.cos(2.0 / (params.omega_r * p) - 0.25 * math.pi) ** 2
    out = params.gamma / 12.0 + base * osc
    return out if out.ndim else float(out)


def d_blended(params: SimParams, p, Lambda) -> float:
    """Chaos-probability-weighted mixture: (1 - Lambda) D_reg + Lambda D_ch."""
    Lambda = np.asarray(Lambda, dtype=np.float64)
    if np.any((Lambda < 0) | (Lambda > 1)):
        raise ValueError("Lambda must lie in [0, 1]")
    out = (1.0 - Lambda) * d_regular(params, p) + Lambda * d_chaotic(params, p)
    return out if np.ndim(out) else float(out)


def temperature_and_heating(sigma_p2: float, D_p: float,
                            constants: PhysicalConstants) -> tuple[float, float]:
    """Kelvin temperature of the momentum spread and its growth rate.

    T = hbar^2 k_f^2 sigma_p^2 / (m_a k_B)   (T = 2<E_k>/k_B convention)
    dT/dt = 2 hbar^2 k_f^2 Omega D_p / (m_a k_B)
    """
    if sigma_p2 < 0 or D_p < 0:
        raise ValueError("sigma_p2 and D_p must be >= 0")
    scale = (constants.hbar * constants.wavenumber)**2 / (
        constants.atomic_mass * constants.boltzmann)
    return scale * sigma_p2, 2.0 * scale * constants.rabi_frequency * D_p


def cloud_variance(sigma_x0_2: float, sigma_p0_2: float, D_p: float,
                   params: SimParams, tau) -> float:
    """Ballistic-plus-diffusive position variance.

    sigma_x^2(tau) = sigma_x^2(0) + (1/2) omega_r^2 sigma_p^2(0) tau^2
                     + (2/3) D_p omega_r^2 tau^3
    Valid while the cloud stays cold (sigma_p << <p>) and the drift horizon
    tau << p/F holds; callers check those windows.
    """
    tau = np.asarray(tau, dtype=np.float64)
    out = (sigma_x0_2 + 0.5 * params.omega_r**2 * sigma_p0_2 * tau**2
           + (2.0 / 3.0) * D_p * params.omega_r**2 * tau**3)
    return out if out.ndim else float(out)


def cloud_size(sigma_x2: float, constants: PhysicalConstants) -> float:
    """Linear cloud size L = 2 sigma_x / k_f in meters."""
    return 2.0 * math.sqrt(sigma_x2) / constants.wavenumber
