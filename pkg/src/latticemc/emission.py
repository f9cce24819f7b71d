"""Spontaneous-emission jump process.

Jumps occur with state-dependent rate gamma (z+1)/2.  Waiting times are
sampled by cumulative-hazard inversion: draw a unit-exponential target,
accumulate the rate along the deterministic trajectory (trapezoid on the
integration grid), and fire when the integral reaches the target.  The jump
instant inside a step is located by linear interpolation of the cumulative
hazard, the step is re-taken up to that instant, then the recoil and the
Bloch reset p -> p + p_j, (u, v, z) -> (0, 0, -1) are applied.

The recoil law is uniform on [-1, 1]: the projection of the emitted photon's
recoil on the lattice axis, with second moment 1/3.  The distribution is
pluggable through the `recoil_sampler` argument.

All randomness is pre-drawn from a per-trajectory substream so that results
are reproducible regardless of scheduling, backend or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import AtomState
from .params import SimParams

# floor for exponential targets; avoids a zero target when the uniform draw
# lands exactly on 0
_MIN_TARGET = 1e-300


@dataclass(frozen=True)
class JumpEvent:
    tau: float       # event time
    p_recoil: float  # recoil momentum in [-1, 1]


@dataclass(frozen=True)
class RngStream:
    """Deterministic per-trajectory random stream.

    Identical (master_seed, index) always reproduces the same draw sequence,
    independent of scheduling.  The index may be multi-level (bin, trajectory).
    """
    master_seed: int
    index: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.master_seed, *self.index])


def hazard(state: AtomState, params: SimParams) -> float:
    """Instantaneous SE rate gamma (z+1)/2, clamped at zero."""
    if abs(state.z) > 1.0 + 1e-6:
        raise ValueError(f"z={state.z} outside the Bloch ball")
    return max(0.5 * params.gamma * (state.z + 1.0), 0.0)


def sample_recoil(rng, size=None):
    """Draw recoil momenta, uniform on [-1, 1]."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return gen.uniform(-1.0, 1.0, size)


def draw_jump_inputs(gen: np.random.Generator, max_jumps: int,
                     recoil_sampler=None):
    """Pre-draw hazard targets and recoils in the fixed stream order."""
    targets = -np.log1p(-gen.random(max_jumps + 1))
    np.maximum(targets, _MIN_TARGET, out=targets)
    if recoil_sampler is None:
        recoils = gen.uniform(-1.0, 1.0, max_jumps)
    else:
        recoils = np.asarray(recoil_sampler(gen, max_jumps), dtype=np.float64)
    return targets, recoils


def apply_jump(state: AtomState, p_j: float) -> AtomState:
    """Recoil kick plus Bloch reset; x and tau are untouched."""
    if abs(p_j) > 1.0:
        raise ValueError("|p_j| must be <= 1")
    return AtomState(x=state.x, p=state.p + p_j, u=0.0, v=0.0, z=-1.0,
                     tau=state.tau)


def default_max_jumps(duration: float, gamma: float) -> int:
    # mean count is at most duration*gamma/2 (z <= 1); triple it plus slack
    return int(duration * gamma) + 64


@dataclass
class TrajectoryRecord:
    times: np.ndarray        # sample times
    samples: np.ndarray      # (n_samples, 5) columns x, p, u, v, z
    jump_table: np.ndarray   # (n_jumps, 10) raw records, see _kernels docstring
    final_state: AtomState
    crossings: int
    sign_changes: int
    force_integral: float
    status: int

    @property
    def n_jumps(self) -> int:
        return self.jump_table.shape[0]

    @property
    def jumps(self) -> list[JumpEvent]:
        return [JumpEvent(tau=float(r[0]), p_recoil=float(r[1]))
                for r in self.jump_table]

    @property
    def failed(self) -> bool:
        return self.status != 0

    @property
    def ballistic(self) -> bool:
        return self.sign_changes == 0


def propagate_with_jumps(state: AtomState, params: SimParams, duration: float,
                         rng, sample_interval: float = 10.0, h: float = 1e-2,
                         backend: str | None = None, max_jumps: int | None = None,
                         recoil_sampler=None) -> TrajectoryRecord:
    """Evolve one trajectory with SE jumps for `duration`.

    `rng` is an RngStream or a numpy Generator; targets and recoils are drawn
    from it up front (targets first, then recoils), so reruns with the same
    stream are bit-identical.
    """
    if not (duration > 0):
        raise ValueError("duration must be > 0")
    if not (params.gamma > 0):
        raise ValueError("propagate_with_jumps needs gamma > 0; "
                         "use integrate_observed for the deterministic system")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if max_jumps is None:
        max_jumps = default_max_jumps(duration, params.gamma)
    targets, recoils = draw_jump_inputs(gen, max_jumps, recoil_sampler)
    name = _kernels.resolve_backend(backend)
    n_steps = int(round(duration / h))
    sample_every = max(int(round(sample_interval / h)), 1)
    n_samples = n_steps // sample_every + 1
    y = state.as_array()
    samples = np.empty((n_samples, 5))
    jumps = np.zeros((max_jumps, _kernels.JUMP_RECORD_WIDTH))
    diag = np.zeros(_kernels.DIAG_WIDTH)
    if name == "numba":
        k = _kernels.scalar_kernels()
        k["jump_traj"](y, params.gamma, params.omega_r, params.delta, h,
                       n_steps, sample_every, targets, recoils, samples,
                       jumps, diag)
    else:
        _kernels.jump_ensemble_np(y[None, :], params.gamma, params.omega_r,
                                  params.delta, h, n_steps, sample_every,
                                  targets[None, :], recoils[None, :],
                                  samples[None, :, :], jumps[None, :, :],
                                  diag[None, :])
    n_jumps = int(diag[0])
    times = np.arange(n_samples) * (sample_every * h)
    # jump times are relative to the start of this call, like the samples
    table = jumps[:n_jumps].copy()
    final = AtomState.from_array(y, tau=state.tau + n_steps * h)
    return TrajectoryRecord(times=times, samples=samples, jump_table=table,
                            final_state=final, crossings=int(diag[1]),
                            sign_changes=int(diag[2]),
                            force_integral=float(diag[3]), status=int(diag[4]))
