import math

import pytest

from latticemc import PhysicalConstants, SimParams
from latticemc.models import temperature_and_heating


def test_default_operating_point():
    p = SimParams()
    assert p.gamma == 3.3e-3
    assert p.omega_r == 1e-5
    assert p.delta == -0.01
    # both standard operating points sit inside the analytic-formula regime
    assert p.weak_detuning
    assert not SimParams(delta=-0.5).weak_detuning


def test_validation_messages():
    with pytest.raises(ValueError, match="params.gamma must be ≥ 0"):
        SimParams(gamma=-1e-3)
    with pytest.raises(ValueError, match="params.omega_r must be > 0"):
        SimParams(omega_r=0.0)
    with pytest.raises(ValueError, match=r"params.delta must satisfy \|delta\| < 1"):
        SimParams(delta=1.5)
    # nan must not sneak through the comparisons
    with pytest.raises(ValueError):
        SimParams(gamma=float("nan"))


def test_with_helpers_replace_one_field():
    p = SimParams()
    assert p.with_gamma(0.0) == SimParams(gamma=0.0, omega_r=1e-5, delta=-0.01)
    assert p.with_delta(-5e-4).delta == -5e-4
    assert p.with_delta(-5e-4).gamma == p.gamma


def test_from_params_is_self_consistent():
    p = SimParams()
    c = PhysicalConstants.from_params(p)
    assert c.check_consistency(p) == []
    assert c.recoil_frequency == pytest.approx(p.omega_r, rel=1e-12)
    assert c.natural_linewidth / c.rabi_frequency == pytest.approx(p.gamma)
    # mass solving hbar k^2/(m Omega) = 1e-5 at the Cs wavelength, Omega=1e10
    assert c.atomic_mass == pytest.approx(5.734e-26, rel=1e-3)


def test_cesium_preset_vs_default_params():
    # real Cs numbers imply omega_r ~ 2.6e-6 and gamma 3.2e-3 at Omega=1e10,
    # so both cross-checks fire against the (3.3e-3, 1e-5) operating point
    c = PhysicalConstants.cesium()
    problems = c.check_consistency(SimParams())
    assert len(problems) == 2
    assert any("omega_r" in m for m in problems)
    assert any("gamma" in m for m in problems)
    # but the block itself is valid and carries the right wavenumber
    assert c.wavenumber == pytest.approx(2 * math.pi / 852.1e-9)


def test_consistency_tolerance_is_relative():
    p = SimParams()
    c = PhysicalConstants.from_params(p)
    near = PhysicalConstants(rabi_frequency=c.rabi_frequency,
                             natural_linewidth=c.natural_linewidth * 1.005,
                             wavelength=c.wavelength,
                             atomic_mass=c.atomic_mass)
    assert near.check_consistency(p) == []
    assert near.check_consistency(p, tol=0.001) != []


def test_constants_validation():
    with pytest.raises(ValueError, match="constants.rabi_frequency must be > 0"):
        PhysicalConstants(rabi_frequency=0, natural_linewidth=1,
                          wavelength=1, atomic_mass=1)


def test_temperature_scale_cesium():
    # T = (hbar k)^2 sigma_p^2/(m kB): 1.9844e-7 K per unit sigma_p^2 for Cs
    c = PhysicalConstants.cesium(rabi_frequency=1e10)
    T, rate = temperature_and_heating(1.0, 2.75e-4, c)
    assert T == pytest.approx(1.9844e-7, rel=1e-3)
    assert rate == pytest.approx(1.0914, rel=2e-3)
    with pytest.raises(ValueError):
        temperature_and_heating(-1.0, 1e-4, c)
