"""Chaos diagnostics: variational exponent, Benettin reference, bin statistics."""

import math

import numpy as np
import pytest

from latticemc import AtomState, SimParams
from latticemc.dynamics import deriv
from latticemc.emission import RngStream
from latticemc.lyapunov import (ChaosStats, LyapunovResult, TangentVector,
                                benettin_lyapunov, chaos_ensemble_states,
                                chaos_probability, chaos_threshold,
                                classify_chaotic, max_lyapunov,
                                measure_noise_floor, variational_deriv)

# ground-state atom in the chaotic momentum band at delta=-0.01
CHAOTIC_IC = AtomState(x=1.0, p=800.0, u=0.0, v=0.0, z=-1.0)
HAM = SimParams(gamma=0.0, omega_r=1e-5, delta=-0.01)


def test_gamma_nonzero_rejected(params):
    with pytest.raises(ValueError, match="gamma=0"):
        max_lyapunov(CHAOTIC_IC, params)
    with pytest.raises(ValueError, match="gamma=0"):
        benettin_lyapunov(CHAOTIC_IC, params)
    with pytest.raises(ValueError, match="gamma=0"):
        variational_deriv(CHAOTIC_IC, TangentVector(1, 0, 0, 0, 0), params)


def test_variational_deriv_is_flow_jacobian():
    # J t must match the directional finite difference of the vector field
    s = AtomState(x=0.9, p=420.0, u=0.31, v=-0.22, z=-0.55)
    t = TangentVector(dx=0.3, dp=-1.2, du=0.05, dv=0.11, dz=-0.07)
    eps = 1e-6
    ta = t.as_array()
    plus = deriv(AtomState.from_array(s.as_array() + eps * ta), HAM).as_array()
    minus = deriv(AtomState.from_array(s.as_array() - eps * ta), HAM).as_array()
    fd = (plus - minus) / (2 * eps)
    got = variational_deriv(s, t, HAM).as_array()
    np.testing.assert_allclose(got, fd, rtol=1e-7, atol=1e-9)


def test_chaotic_orbit_has_positive_exponent():
    r = max_lyapunov(CHAOTIC_IC, HAM, tau_max=5e4)
    assert r.method == "variational"
    assert r.tau_total == pytest.approx(5e4)
    # far above the detection threshold 10/tau_max = 2e-4
    assert r.lam > 2e-3
    assert not r.failed


def test_variational_and_benettin_agree_on_chaotic_orbit():
    rv = max_lyapunov(CHAOTIC_IC, HAM, tau_max=5e4)
    rb = benettin_lyapunov(CHAOTIC_IC, HAM, tau_max=5e4)
    assert rb.method == "benettin"
    assert abs(rv.lam - rb.lam) / rv.lam < 0.2


def test_integrable_system_exponent_decays_like_noise():
    # delta=0 keeps u frozen, no chaos: lambda is pure finite-time noise
    p0 = SimParams(gamma=0.0, omega_r=1e-5, delta=0.0)
    short = max_lyapunov(CHAOTIC_IC, p0, tau_max=1e4)
    long = max_lyapunov(CHAOTIC_IC, p0, tau_max=8e4)
    assert abs(short.lam) < 2e-3
    assert abs(long.lam) < abs(short.lam)


def test_tangent0_is_normalized_internally():
    a = max_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3,
                     tangent0=np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
    b = max_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3,
                     tangent0=np.array([7.0, 0.0, 0.0, 0.0, 0.0]))
    assert a.lam == pytest.approx(b.lam, rel=1e-12)


def test_renorm_count_and_validation():
    r = max_lyapunov(CHAOTIC_IC, HAM, tau_max=100.0, renorm_interval=10.0)
    assert r.renorm_count == 10
    with pytest.raises(ValueError, match="tau_max > renorm_interval"):
        max_lyapunov(CHAOTIC_IC, HAM, tau_max=5.0, renorm_interval=10.0)


def test_backends_agree_on_exponent():
    a = max_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3, backend="numba")
    b = max_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3, backend="numpy")
    assert a.lam == pytest.approx(b.lam, rel=1e-9)
    # benettin amplifies last-ULP libm differences between backends by
    # exp(lam tau), so only physical-level agreement is meaningful here
    ba = benettin_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3, backend="numba")
    bb = benettin_lyapunov(CHAOTIC_IC, HAM, tau_max=2e3, backend="numpy")
    assert ba.lam == pytest.approx(bb.lam, rel=1e-3)


def test_classify_chaotic_threshold():
    r = LyapunovResult(lam=1e-3, tau_total=1e4, renorm_count=10)
    assert classify_chaotic(r, 5e-4)
    assert not classify_chaotic(r, 1e-3)  # strict inequality
    with pytest.raises(ValueError, match="threshold"):
        classify_chaotic(r, 0.0)
    assert LyapunovResult(lam=float("nan"), tau_total=1.0, renorm_count=1).failed


def test_chaos_ensemble_states_layout():
    st = RngStream(99, (2, 5))
    states = chaos_ensemble_states(700.0, 12, st)
    again = chaos_ensemble_states(700.0, 12, st)
    assert [s.as_array().tolist() for s in states] \
        == [s.as_array().tolist() for s in again]
    for s in states:
        assert 0.0 <= s.x < 2 * math.pi
        assert abs(s.p - 700.0) <= 0.02 * 700.0
        assert (s.u, s.v, s.z) == (0.0, 0.0, -1.0)
    # jitter actually spreads the momenta
    assert np.std([s.p for s in states]) > 1.0


def test_chaos_threshold_rule():
    assert chaos_threshold(2e5, 1e-6) == pytest.approx(10.0 / 2e5)
    assert chaos_threshold(2e5, 1e-4) == pytest.approx(5e-4)


def test_chaos_probability_integrable_gives_zero():
    p0 = SimParams(gamma=3.3e-3, omega_r=1e-5, delta=0.0)
    stats = chaos_probability(700.0, p0, RngStream(3, (0,)), n_traj=4,
                              tau_max=2e4)
    assert stats.Lambda == 0.0
    assert stats.n_chaotic == 0
    assert stats.n_regular == 4
    assert math.isfinite(stats.noise_floor)
    assert stats.threshold == chaos_threshold(2e4, stats.noise_floor)
    assert len(stats.lambdas) == 4


def test_chaos_probability_chaotic_band():
    # the whole p~800 bin is chaotic at delta=-0.01
    stats = chaos_probability(800.0, SimParams(), RngStream(3, (1,)),
                              n_traj=4, tau_max=3e4)
    assert stats.Lambda == 1.0
    assert min(stats.lambdas) > stats.threshold


def test_chaos_probability_threshold_override():
    stats = chaos_probability(800.0, SimParams(), RngStream(3, (2,)),
                              n_traj=2, tau_max=5e3, threshold=1e-3)
    assert stats.threshold == 1e-3
    assert math.isnan(stats.noise_floor)


def test_noise_floor_is_matched_to_momentum():
    f = measure_noise_floor(800.0, HAM, RngStream(3, (3,)), n_traj=2,
                            tau_max=1e4)
    assert 0 < f < 2e-3


def test_chaos_stats_consistency_check():
    with pytest.raises(ValueError, match="inconsistent"):
        ChaosStats(Lambda=0.5, n_chaotic=3, n_regular=1, threshold=1e-4,
                   noise_floor=1e-5)
