"""Deterministic equations of motion, integrator and conserved quantities.

State variables: position x (units of 1/k_f), momentum p (units of hbar k_f),
Bloch vector (u, v, z).  Between spontaneous-emission jumps the system obeys

    dx/dtau = omega_r p
    dp/dtau = -u sin x
    du/dtau = delta v + (gamma/2) u z
    dv/dtau = -delta u + 2 z cos x + (gamma/2) v z
    dz/dtau = -2 v cos x - (gamma/2)(u^2 + v^2)

which conserves u^2+v^2+z^2 exactly (also with gamma > 0) and conserves
H = omega_r p^2/2 - u cos x - delta z/2 when gamma = 0.  Position stays
unwrapped so displacement statistics are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .params import SimParams


@dataclass(frozen=True)
class AtomState:
    x: float = 0.0
    p: float = 0.0
    u: float = 0.0
    v: float = 0.0
    z: float = -1.0
    tau: float = 0.0

    def bloch_norm(self) -> float:
        return math.sqrt(self.u**2 + self.v**2 + self.z**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.p, self.u, self.v, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, y, tau: float = 0.0) -> "AtomState":
        return cls(x=float(y[0]), p=float(y[1]), u=float(y[2]),
                   v=float(y[3]), z=float(y[4]), tau=tau)


@dataclass(frozen=True)
class StateDerivative:
    dx: float
    dp: float
    du: float
    dv: float
    dz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dp, self.du, self.dv, self.dz])


def deriv(state: AtomState, params: SimParams) -> StateDerivative:
    """Continuous part of the equations of motion (no jump terms)."""
    vals = (state.x, state.p, state.u, state.v, state.z)
    if not all(math.isfinite(q) for q in vals):
        raise ValueError("non-finite state")
    x, p, u, v, z = vals
    g2 = 0.5 * params.gamma
    c = math.cos(x)
    return StateDerivative(
        dx=params.omega_r * p,
        dp=-u * math.sin(x),
        du=params.delta * v + g2 * u * z,
        dv=-params.delta * u + 2.0 * z * c + g2 * v * z,
        dz=-2.0 * v * c - g2 * (u * u + v * v),
    )


def energy(state: AtomState, params: SimParams) -> float:
    """H = omega_r p^2/2 - u cos x - delta z/2 (conserved when gamma=0)."""
    return (0.5 * params.omega_r * state.p**2
            - state.u * math.cos(state.x)
            - 0.5 * params.delta * state.z)


def step(state: AtomState, params: SimParams, h: float) -> AtomState:
    """One explicit 4th-order step of size h (5-stage Merson scheme).

    Merson instead of classic RK4 because the latter's stability factor
    |R(iy)| = 1 - y^6/144 secularly shrinks the Bloch vector under the
    O(2)-frequency Rabi rotation; Merson's extra stage cancels the y^6 term.
    Must stay in lockstep with the compiled kernels.
    """
    if not (h > 0):
        raise ValueError("step size must be > 0")
    y0 = state.as_array()
    k1 = deriv(state, params).as_array()
    k2 = deriv(AtomState.from_array(y0 + (h / 3.0) * k1), params).as_array()
    k3 = deriv(AtomState.from_array(y0 + (h / 6.0) * (k1 + k2)), params).as_array()
    k4 = deriv(AtomState.from_array(y0 + h * (0.125 * k1 + 0.375 * k3)),
               params).as_array()
    k5 = deriv(AtomState.from_array(y0 + h * (0.5 * k1 - 1.5 * k3 + 2.0 * k4)),
               params).as_array()
    y1 = y0 + (h / 6.0) * (k1 + 4.0 * k4 + k5)
    return AtomState.from_array(y1, tau=state.tau + h)


@dataclass
class IntegrationResult:
    final_state: AtomState
    times: np.ndarray          # sample times, offset from the initial tau
    samples: np.ndarray        # (n_samples, 5) columns x, p, u, v, z
    crossings: int             # sign changes of cos x
    force_integral: float      # int (-u sin x) dtau, stepper-weight quadrature
    status: int                # 0 ok, 1 non-finite state encountered


def integrate_observed(state: AtomState, params: SimParams, duration: float,
                       sample_interval: float, observer=None, h: float = 1e-2,
                       backend: str | None = None) -> IntegrationResult:
    """Integrate for `duration`, sampling the state every `sample_interval`.

    The sample grid is aligned to the step grid (both are rounded to whole
    steps).  `observer(tau, state)` is called once per sample when given.
    Node crossings (sign changes of cos x) are counted for map validation.
    Escaping the ballistic regime is not an error here; callers judge that
    from the samples.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0:
        return IntegrationResult(state, np.empty(0), np.empty((0, 5)), 0, 0.0, 0)
    if sample_interval < h:
        raise ValueError("sample_interval must be >= h")
    name = _kernels.resolve_backend(backend)
    n_steps = int(round(duration / h))
    sample_every = max(int(round(sample_interval / h)), 1)
    n_samples = n_steps // sample_every + 1
    y = state.as_array()
    samples = np.empty((n_samples, 5))
    jumps = np.empty((0, _kernels.JUMP_RECORD_WIDTH))
    diag = np.zeros(_kernels.DIAG_WIDTH)
    no_targets = np.array([np.inf])
    no_recoils = np.empty(0)
    if name == "numba":
        k = _kernels.scalar_kernels()
        k["jump_traj"](y, params.gamma, params.omega_r, params.delta, h,
                       n_steps, sample_every, no_targets, no_recoils,
                       samples, jumps, diag)
    else:
        _kernels.jump_ensemble_np(y[None, :], params.gamma, params.omega_r,
                                  params.delta, h, n_steps, sample_every,
                                  no_targets[None, :], no_recoils[None, :],
                                  samples[None, :, :],
                                  jumps[None, :, :], diag[None, :])
    times = np.arange(n_samples) * (sample_every * h)
    final = AtomState.from_array(y, tau=state.tau + n_steps * h)
    if observer is not None:
        for i in range(n_samples):
            observer(state.tau + times[i], AtomState.from_array(samples[i],
                                                                tau=state.tau + times[i]))
    return IntegrationResult(final, times, samples, int(diag[1]),
                             float(diag[3]), int(diag[4]))
