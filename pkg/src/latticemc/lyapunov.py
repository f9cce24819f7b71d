"""Maximal Lyapunov exponent and ensemble chaos probability.

All exponents are computed on the gamma=0 system (no damping, no jumps),
the Hamiltonian analogue of the full dynamics.  Two estimators are provided:
the variational route (co-integrated tangent vector, the production path)
and a two-trajectory reference with separation renormalization, kept as an
independent cross-check.

Finite-time exponents never return exactly zero, so "chaotic" means
lambda > threshold with threshold = max(10/tau_max, 5x the noise floor
measured on matched integrable (delta=0) runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import AtomState
from .emission import RngStream
from .params import SimParams

DEFAULT_TAU_MAX = 2e5
DEFAULT_RENORM_INTERVAL = 10.0   # tau units between renormalizations
_DEFAULT_TANGENT = np.full(5, 1.0 / math.sqrt(5.0))
_BENETTIN_D0 = 1e-8


@dataclass(frozen=True)
class TangentVector:
    dx: float
    dp: float
    du: float
    dv: float
    dz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dp, self.du, self.dv, self.dz])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class LyapunovResult:
    lam: float            # finite-time maximal exponent, 1/tau
    tau_total: float
    renorm_count: int
    noise_floor: float = float("nan")  # filled when a matched floor was measured
    method: str = "variational"

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.lam)


@dataclass(frozen=True)
class ChaosStats:
    Lambda: float
    n_chaotic: int
    n_regular: int
    threshold: float
    noise_floor: float
    lambdas: tuple[float, ...] = ()

    def __post_init__(self):
        total = self.n_chaotic + self.n_regular
        if total > 0 and abs(self.Lambda - self.n_chaotic / total) > 1e-12:
            raise ValueError("Lambda inconsistent with counts")


def _require_hamiltonian(params: SimParams) -> None:
    if params.gamma != 0:
        raise ValueError("Lyapunov analysis runs on the gamma=0 system; "
                         "got gamma={:g} (use params.with_gamma(0))".format(params.gamma))


def variational_deriv(state: AtomState, tangent: TangentVector,
                      params: SimParams) -> TangentVector:
    """Jacobian of the gamma=0 flow applied to a tangent vector."""
    _require_hamiltonian(params)
    x, u, v, z = state.x, state.u, state.v, state.z
    s, c = math.sin(x), math.cos(x)
    return TangentVector(
        dx=params.omega_r * tangent.dp,
        dp=-u * c * tangent.dx - s * tangent.du,
        du=params.delta * tangent.dv,
        dv=-params.delta * tangent.du + 2.0 * c * tangent.dz - 2.0 * z * s * tangent.dx,
        dz=-2.0 * c * tangent.dv + 2.0 * v * s * tangent.dx,
    )


def max_lyapunov(state0: AtomState, params: SimParams,
                 tau_max: float = DEFAULT_TAU_MAX,
                 renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                 h: float = 1e-2, backend: str | None = None,
                 tangent0: np.ndarray | None = None) -> LyapunovResult:
    """Finite-time maximal exponent by tangent-space co-integration."""
    _require_hamiltonian(params)
    if not (tau_max > renorm_interval > 0):
        raise ValueError("need tau_max > renorm_interval > 0")
    name = _kernels.resolve_backend(backend)
    n_steps = int(round(tau_max / h))
    renorm_steps = max(int(round(renorm_interval / h)), 1)
    y = state0.as_array()
    t = (_DEFAULT_TANGENT if tangent0 is None else
         np.asarray(tangent0, dtype=np.float64) / np.linalg.norm(tangent0)).copy()
    if name == "numba":
        k = _kernels.scalar_kernels()
        sum_log, renorms = k["lyap_traj"](y, params.omega_r, params.delta, h,
                                          n_steps, renorm_steps, t)
    else:
        s, r = _kernels.lyap_ensemble_np(y[None, :], t[None, :], params.omega_r,
                                         params.delta, h, n_steps, renorm_steps)
        sum_log, renorms = float(s[0]), int(r[0])
    lam = sum_log / (n_steps * h)
    return LyapunovResult(lam=lam, tau_total=n_steps * h,
                          renorm_count=int(renorms), method="variational")


def benettin_lyapunov(state0: AtomState, params: SimParams,
                      tau_max: float = DEFAULT_TAU_MAX,
                      renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                      h: float = 1e-2, d0: float = _BENETTIN_D0,
                      backend: str | None = None) -> LyapunovResult:
    """Two-trajectory reference estimator for max_lyapunov."""
    _require_hamiltonian(params)
    name = _kernels.resolve_backend(backend)
    n_steps = int(round(tau_max / h))
    renorm_steps = max(int(round(renorm_interval / h)), 1)
    y = state0.as_array()
    if name == "numba":
        k = _kernels.scalar_kernels()
        sum_log, renorms = k["benettin_traj"](y, params.omega_r, params.delta,
                                              h, n_steps, renorm_steps, d0,
                                              _DEFAULT_TANGENT)
    else:
        s, r = _kernels.benettin_ensemble_np(y[None, :], params.omega_r,
                                             params.delta, h, n_steps,
                                             renorm_steps, d0, _DEFAULT_TANGENT)
        sum_log, renorms = float(s[0]), int(r[0])
    lam = sum_log / (n_steps * h)
    return LyapunovResult(lam=lam, tau_total=n_steps * h,
                          renorm_count=int(renorms), method="benettin")


def classify_chaotic(result: LyapunovResult, threshold: float) -> bool:
    """Strictly above threshold counts as chaotic; at or below is regular."""
    if not (threshold > 0):
        raise ValueError("threshold must be > 0")
    return result.lam > threshold


def chaos_ensemble_states(p0: float, n_traj: int, stream: RngStream,
                          p_jitter: float = 0.02) -> list[AtomState]:
    """Ground-state ensemble at momentum p0: x0 uniform, p0 jittered +-2%.

    The ground Bloch vector is the natural post-emission entry condition.
    """
    states = []
    for i in range(n_traj):
        gen = RngStream(stream.master_seed, (*stream.index, i)).generator()
        x0 = gen.uniform(0.0, 2.0 * math.pi)
        p = p0 * (1.0 + gen.uniform(-p_jitter, p_jitter))
        states.append(AtomState(x=x0, p=p, u=0.0, v=0.0, z=-1.0))
    return states


def measure_noise_floor(p0: float, params: SimParams, stream: RngStream,
                        n_traj: int = 4, tau_max: float = DEFAULT_TAU_MAX,
                        renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                        h: float = 1e-2, backend: str | None = None) -> float:
    """Mean finite-time exponent of matched integrable (delta=0) runs.

    The delta=0 system is integrable for these initial conditions (u stays
    constant), so its finite-time exponent is pure estimator noise; it decays
    like ln(tau)/tau and depends on p, hence the matching.
    """
    floor_params = SimParams(gamma=0.0, omega_r=params.omega_r, delta=0.0)
    vals = []
    for st in chaos_ensemble_states(p0, n_traj, stream):
        r = max_lyapunov(st, floor_params, tau_max, renorm_interval, h, backend)
        vals.append(abs(r.lam))
    return float(np.mean(vals))


def chaos_threshold(tau_max: float, noise_floor: float) -> float:
    return max(10.0 / tau_max, 5.0 * noise_floor)


def chaos_probability(p0: float, params: SimParams, stream: RngStream,
                      n_traj: int = 16, tau_max: float = DEFAULT_TAU_MAX,
                      renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                      h: float = 1e-2, threshold: float | None = None,
                      noise_floor_n: int = 4, p_jitter: float = 0.02,
                      backend: str | None = None,
                      executor=None) -> ChaosStats:
    """Fraction of a momentum-bin ensemble with exponent above threshold.

    When no explicit threshold is given, a matched delta=0 noise floor is
    measured first and the max(10/tau_max, 5*floor) rule is applied.
    """
    ham = params.with_gamma(0.0)
    _require_hamiltonian(ham)
    floor = float("nan")
    if threshold is None:
        floor_stream = RngStream(stream.master_seed, (*stream.index, 0x0F))
        floor = measure_noise_floor(p0, ham, floor_stream, noise_floor_n,
                                    tau_max, renorm_interval, h, backend)
        threshold = chaos_threshold(tau_max, floor)
    states = chaos_ensemble_states(p0, n_traj, stream, p_jitter)

    def one(st):
        return max_lyapunov(st, ham, tau_max, renorm_interval, h, backend)

    if executor is None:
        results = [one(st) for st in states]
    else:
        results = list(executor.map(one, states))
    lams = tuple(r.lam for r in results)
    n_ch = sum(1 for r in results if classify_chaotic(r, threshold))
    n_reg = len(results) - n_ch
    return ChaosStats(Lambda=n_ch / len(results), n_chaotic=n_ch,
                      n_regular=n_reg, threshold=threshold,
                      noise_floor=floor, lambdas=lams)
