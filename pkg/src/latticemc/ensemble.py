"""Trajectory ensembles, diffusion estimation, and momentum sweeps.

The diffusion estimator follows the long-time variance growth of the
ensemble momentum: D = d(Var p)/dtau / 2, fitted by least squares over a
window that skips the initial transient and stops before ballistic-budget
violations.  Uncertainty comes from a leave-one-trajectory-out jackknife,
which tracks the observed scatter rather than an idealized chi-square count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, models
from .dynamics import AtomState
from .emission import RngStream, TrajectoryRecord, draw_jump_inputs, default_max_jumps
from .lyapunov import chaos_probability
from .params import SimParams

GROWTH_CAP = 0.05        # sigma_p budget, fraction of |mean p|
DRIFT_CAP = 0.05         # mean-p drift budget over the fit window
FRICTION_CAP = 0.05      # momentum budget against a resolved mean force
MIN_WINDOW_POINTS = 4
UNRELIABLE_FRACTION = 0.10


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit arg > LATTICEMC_THREADS > cpu count."""
    if threads is None:
        env = os.environ.get("LATTICEMC_THREADS", "")
        if env:
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


@dataclass(frozen=True)
class EnsembleSpec:
    """Initial-condition ensemble for a jump-process run.

    Momentum is Gaussian around p0_mean; position is either uniform over one
    lattice period or Gaussian.  Bloch vector starts in the ground state,
    the natural post-emission condition.  stream_index namespaces the
    per-trajectory RNG streams so nested uses (sweep bins) stay disjoint.
    """

    n_traj: int
    p0_mean: float
    duration: float
    p0_sigma: float = 0.0
    x0_dist: str = "uniform"
    x0_mean: float = 0.0
    x0_sigma: float = 1.0
    sample_interval: float = 10.0
    h: float = 1e-2
    seed: int = 0
    stream_index: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_traj < 2:
            raise ValueError("ensemble.n_traj must be >= 2")
        if not (self.duration > 0):
            raise ValueError("ensemble.duration must be > 0")
        if self.x0_dist not in ("uniform", "gaussian"):
            raise ValueError("ensemble.x0_dist must be 'uniform' or 'gaussian'")
        if self.p0_sigma < 0 or self.x0_sigma < 0:
            raise ValueError("ensemble spreads must be >= 0")
        if not (self.sample_interval >= self.h):
            raise ValueError("ensemble.sample_interval must be >= h")

    def initial_state(self, gen: np.random.Generator) -> AtomState:
        # draw order is part of the reproducibility contract: x0, then p0
        if self.x0_dist == "uniform":
            x0 = gen.uniform(0.0, 2.0 * math.pi)
        else:
            x0 = gen.normal(self.x0_mean, self.x0_sigma)
        p0 = self.p0_mean + (gen.normal(0.0, self.p0_sigma)
                             if self.p0_sigma > 0 else 0.0)
        return AtomState(x=x0, p=p0, u=0.0, v=0.0, z=-1.0)


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    params: SimParams
    times: np.ndarray          # (m,) shared sample times
    samples: np.ndarray        # (n, m, 5) columns x, p, u, v, z
    jump_tables: np.ndarray    # (n, k_max, 10) raw records, zero-padded
    jump_counts: np.ndarray    # (n,) int
    crossings: np.ndarray      # (n,) int
    sign_changes: np.ndarray   # (n,) int
    force_integrals: np.ndarray  # (n,)
    statuses: np.ndarray       # (n,) int

    @property
    def n_traj(self) -> int:
        return self.samples.shape[0]

    @property
    def ok(self) -> np.ndarray:
        return self.statuses == 0

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(~self.ok))

    @property
    def n_nonballistic(self) -> int:
        return int(np.count_nonzero((self.sign_changes > 0) & self.ok))

    @property
    def reliable(self) -> bool:
        bad = self.n_failed + self.n_nonballistic
        return bad <= UNRELIABLE_FRACTION * self.n_traj

    def momenta(self) -> np.ndarray:
        return self.samples[:, :, 1]

    def positions(self) -> np.ndarray:
        return self.samples[:, :, 0]

    def record(self, i: int) -> TrajectoryRecord:
        k = int(self.jump_counts[i])
        final = AtomState.from_array(self.samples[i, -1],
                                     tau=float(self.times[-1]))
        return TrajectoryRecord(
            times=self.times, samples=self.samples[i],
            jump_table=self.jump_tables[i, :k].copy(), final_state=final,
            crossings=int(self.crossings[i]),
            sign_changes=int(self.sign_changes[i]),
            force_integral=float(self.force_integrals[i]),
            status=int(self.statuses[i]))


def _draw_ensemble_inputs(spec: EnsembleSpec, gamma: float):
    """Initial states plus pre-drawn jump targets and recoils, traj-ordered."""
    if gamma > 0:
        k_max = default_max_jumps(spec.duration, gamma)
    else:
        k_max = 0
    n = spec.n_traj
    Y = np.empty((n, 5))
    # one spare target beyond the recoil slots: the kernel always peeks at
    # the next cumulative-hazard level, even when the jump budget is spent
    targets = np.full((n, k_max + 1), np.inf)
    recoils = np.zeros((n, k_max))
    for i in range(n):
        gen = RngStream(spec.seed, (*spec.stream_index, i)).generator()
        Y[i] = spec.initial_state(gen).as_array()
        if k_max:
            targets[i], recoils[i] = draw_jump_inputs(gen, k_max)
    return Y, targets, recoils


def run_ensemble(spec: EnsembleSpec, params: SimParams,
                 backend: str | None = None,
                 threads: int | None = None) -> EnsembleResult:
    """Propagate the ensemble; gamma = 0 runs jump-free.

    The numba backend distributes scalar kernels over a thread pool and
    writes results at fixed trajectory slots, so output is identical for any
    worker count.  The numpy backend integrates all trajectories in lockstep
    and ignores `threads`.
    """
    name = _kernels.resolve_backend(backend)
    h = spec.h
    n_steps = int(round(spec.duration / h))
    sample_every = max(int(round(spec.sample_interval / h)), 1)
    n_samples = n_steps // sample_every + 1
    n = spec.n_traj

    Y, targets, recoils = _draw_ensemble_inputs(spec, params.gamma)
    k_slots = recoils.shape[1]
    samples = np.empty((n, n_samples, 5))
    jumps = np.zeros((n, max(k_slots, 1), _kernels.JUMP_RECORD_WIDTH))
    diag = np.zeros((n, _kernels.DIAG_WIDTH))

    if name == "numba":
        kern = _kernels.scalar_kernels()["jump_traj"]

        def one(i: int) -> None:
            kern(Y[i], params.gamma, params.omega_r, params.delta, h,
                 n_steps, sample_every, targets[i], recoils[i],
                 samples[i], jumps[i], diag[i])

        n_workers = min(resolve_threads(threads), n)
        if n_workers == 1:
            for i in range(n):
                one(i)
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                # consume the iterator to surface any worker exception
                list(pool.map(one, range(n)))
    else:
        _kernels.jump_ensemble_np(Y, params.gamma, params.omega_r,
                                  params.delta, h, n_steps, sample_every,
                                  targets, recoils, samples, jumps, diag)

    times = np.arange(n_samples) * (sample_every * h)
    return EnsembleResult(
        spec=spec, params=params, times=times, samples=samples,
        jump_tables=jumps, jump_counts=diag[:, 0].astype(int),
        crossings=diag[:, 1].astype(int),
        sign_changes=diag[:, 2].astype(int),
        force_integrals=diag[:, 3].copy(), statuses=diag[:, 4].astype(int))


@dataclass(frozen=True)
class FrictionEstimate:
    force: float         # ensemble-mean lattice force, d<p>/dtau
    stderr: float

    @property
    def resolved(self) -> bool:
        return abs(self.force) > 2.0 * self.stderr


def estimate_friction(result: EnsembleResult) -> FrictionEstimate:
    """Mean force from the per-trajectory work integrals int(-u sin x) dtau."""
    ok = result.ok
    n = int(np.count_nonzero(ok))
    if n < 2:
        raise ValueError("friction estimate needs at least 2 intact trajectories")
    f = result.force_integrals[ok] / result.times[-1]
    return FrictionEstimate(force=float(np.mean(f)),
                            stderr=float(np.std(f, ddof=1) / math.sqrt(n)))


@dataclass(frozen=True)
class DiffusionEstimate:
    d: float
    stderr: float
    t_lo: float
    t_hi: float
    n_points: int        # sample times inside the fit window
    n_traj: int          # intact trajectories used
    var_rate: float      # fitted d(Var)/dtau of the increment series, = 2 d

    def __str__(self):  # pragma: no cover - convenience only
        return (f"D = {self.d:.6e} +- {self.stderr:.1e} "
                f"(window [{self.t_lo:g}, {self.t_hi:g}], "
                f"{self.n_traj} trajectories)")


def _loo_variance(p: np.ndarray) -> np.ndarray:
    """Leave-one-out sample variance (ddof=1) along axis 0, for each leave-out.

    p has shape (n, m); the result (n, m) holds Var over the other n-1 rows.
    """
    n = p.shape[0]
    s1 = p.sum(axis=0)
    s2 = (p * p).sum(axis=0)
    m_loo = (s1 - p) / (n - 1)
    ss = s2 - p * p - (n - 1) * m_loo * m_loo
    return np.maximum(ss, 0.0) / (n - 2)


def estimate_diffusion(result: EnsembleResult,
                       transient: float | None = None,
                       growth_cap: float = GROWTH_CAP,
                       drift_cap: float = DRIFT_CAP,
                       friction: FrictionEstimate | None = None,
                       window: tuple[float, float] | None = None) -> DiffusionEstimate:
    """Half the fitted growth rate of the increment variance, with jackknife
    uncertainty.

    The fit series is Var[p(t) - p(t_ref)] over intact trajectories, t_ref
    being the first sample past the transient.  Fitting increments instead
    of Var[p(t)] cancels the initial-spread baseline and its sampling noise
    (increments are uncorrelated with p(t_ref) for unbiased diffusion); the
    distinction matters once the initial spread dwarfs the growth over the
    window, as it does for slow diffusion started from a wide ensemble.

    Window policy: start at the transient (one mean inter-jump time unless
    given), stop at the first sample where the total momentum spread exceeds
    growth_cap of |mean p|, where the mean drifts beyond drift_cap of its
    window-entry value, or where a resolved mean force would have eroded
    FRICTION_CAP of the momentum.  Raises ValueError when fewer than
    MIN_WINDOW_POINTS samples survive.

    `window=(t_lo, t_hi)` fixes the fit range explicitly instead; the
    ballistic caps above still truncate the tail if they trigger earlier.
    The cap-chosen window length varies strongly across conditions (it
    scales like p^2/D), which leaks into any quantity the window length
    biases; comparing bins on a common fixed window removes that term, so
    momentum sweeps aimed at a slope should pass one.
    """
    ok = result.ok
    n = int(np.count_nonzero(ok))
    if n < 3:
        raise ValueError("diffusion estimate needs at least 3 intact trajectories")
    t = result.times
    p = result.momenta()[ok]
    mean_p = p.mean(axis=0)
    var_p = p.var(axis=0, ddof=1)

    if window is not None:
        t_start, t_end = window
        if not t_end > t_start:
            raise ValueError("window must satisfy t_hi > t_lo")
    else:
        if transient is None:
            g = result.params.gamma
            transient = 2.0 / g if g > 0 else 0.1 * t[-1]
        t_start, t_end = transient, np.inf
    i_a = int(np.searchsorted(t, t_start))
    if i_a >= len(t) - MIN_WINDOW_POINTS:
        raise ValueError("diffusion window is empty: starts past the run's end")

    p_ref = mean_p[i_a]
    sigma = np.sqrt(var_p)
    bad = sigma > growth_cap * np.abs(mean_p)
    bad |= np.abs(mean_p - p_ref) > drift_cap * abs(p_ref)
    bad |= t > t_end
    if friction is not None and friction.resolved:
        t_cap = FRICTION_CAP * abs(p_ref) / abs(friction.force)
        bad |= t > t_cap
    later = np.nonzero(bad[i_a:])[0]
    i_b = i_a + int(later[0]) if later.size else len(t)
    if i_b - i_a < MIN_WINDOW_POINTS:
        raise ValueError(
            f"diffusion window [{t[i_a]:g}, {t[min(i_b, len(t) - 1)]:g}] has "
            f"{i_b - i_a} samples; need {MIN_WINDOW_POINTS}")

    tw = t[i_a:i_b]
    tc = tw - tw.mean()
    coeff = tc / np.dot(tc, tc)
    w = p[:, i_a:i_b] - p[:, i_a:i_a + 1]
    half_var = 0.5 * w.var(axis=0, ddof=1)
    d_hat = float(np.dot(coeff, half_var))

    # jackknife over trajectories; slope is linear in the variance curve
    half_var_loo = 0.5 * _loo_variance(w)
    d_loo = half_var_loo @ coeff
    d_bar = d_loo.mean()
    se = math.sqrt((n - 1) / n * float(np.sum((d_loo - d_bar) ** 2)))
    return DiffusionEstimate(d=d_hat, stderr=se, t_lo=float(tw[0]),
                             t_hi=float(tw[-1]), n_points=i_b - i_a,
                             n_traj=n, var_rate=2.0 * d_hat)


@dataclass(frozen=True)
class ChaosSpec:
    """Per-bin chaos-probability measurement settings."""

    n_traj: int = 16
    tau_max: float = 2e5
    renorm_interval: float = 10.0
    p_jitter: float = 0.02
    noise_floor_n: int = 4
    threshold: float | None = None   # None: matched delta=0 floor rule

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("chaos.n_traj must be >= 1")
        if not (self.tau_max > 0):
            raise ValueError("chaos.tau_max must be > 0")


@dataclass
class SweepRow:
    p0: float
    Lambda: float
    n_chaotic: int
    n_chaos_traj: int
    d_measured: float
    d_stderr: float
    d_ch: float
    d_reg: float
    d_blend: float
    noise_floor: float
    threshold: float
    window: tuple[float, float]
    n_failed: int
    n_nonballistic: int
    flags: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.flags


def momentum_grid(p_min: float, p_max: float, n_bins: int) -> np.ndarray:
    if not (0 < p_min < p_max):
        raise ValueError("sweep momentum range needs 0 < p_min < p_max")
    if n_bins < 2:
        raise ValueError("sweep.n_bins must be >= 2")
    return np.geomspace(p_min, p_max, n_bins)


# RNG stream namespaces; keeps sweep draws disjoint from everything else
_NS_SWEEP_ENSEMBLE = 0x5E
_NS_SWEEP_CHAOS = 0x5C


def sweep_momentum(params: SimParams, grid: np.ndarray, n_traj: int = 200,
                   duration: float = 3e4, chaos: ChaosSpec = ChaosSpec(),
                   seed: int = 0, sample_interval: float = 10.0,
                   h: float = 1e-2, p_sigma_frac: float = 0.01,
                   transient: float | None = None,
                   growth_cap: float = GROWTH_CAP,
                   drift_cap: float = DRIFT_CAP,
                   fit_window: tuple[float, float] | None = None,
                   backend: str | None = None, threads: int | None = None,
                   executor=None, progress=None) -> list[SweepRow]:
    """Chaos probability and measured diffusion per momentum bin.

    Every bin gets its own RNG substreams derived from (seed, namespace,
    bin index), so results do not depend on grid order or worker count.
    `fit_window` pins every bin's variance fit to the same tau range (see
    estimate_diffusion); without it the caps pick a length that scales like
    p^2/D, and that p-dependence contaminates cross-bin slopes.
    """
    if params.gamma <= 0:
        raise ValueError("sweep needs gamma > 0 to measure diffusion")
    rows: list[SweepRow] = []
    for i, p0 in enumerate(np.asarray(grid, dtype=float)):
        stats = chaos_probability(
            p0, params, RngStream(seed, (_NS_SWEEP_CHAOS, i)),
            n_traj=chaos.n_traj, tau_max=chaos.tau_max,
            renorm_interval=chaos.renorm_interval, h=h,
            threshold=chaos.threshold, noise_floor_n=chaos.noise_floor_n,
            p_jitter=chaos.p_jitter, backend=backend, executor=executor)

        spec = EnsembleSpec(n_traj=n_traj, p0_mean=p0,
                            p0_sigma=p_sigma_frac * p0, duration=duration,
                            sample_interval=sample_interval, h=h, seed=seed,
                            stream_index=(_NS_SWEEP_ENSEMBLE, i))
        res = run_ensemble(spec, params, backend=backend, threads=threads)

        flags: list[str] = []
        if not res.reliable:
            flags.append("unreliable")
        try:
            fric = estimate_friction(res)
            est = estimate_diffusion(res, transient=transient,
                                     growth_cap=growth_cap,
                                     drift_cap=drift_cap, friction=fric,
                                     window=fit_window)
            d_meas, d_err = est.d, est.stderr
            window = (est.t_lo, est.t_hi)
        except ValueError:
            flags.append("no-window")
            d_meas, d_err = float("nan"), float("nan")
            window = (float("nan"), float("nan"))

        d_ch = models.d_chaotic(params, p0)
        d_reg = models.d_regular(params, p0)
        d_blend = models.d_blended(params, p0, stats.Lambda)
        rows.append(SweepRow(
            p0=float(p0), Lambda=stats.Lambda, n_chaotic=stats.n_chaotic,
            n_chaos_traj=chaos.n_traj, d_measured=d_meas, d_stderr=d_err,
            d_ch=d_ch, d_reg=d_reg, d_blend=d_blend,
            noise_floor=stats.noise_floor, threshold=stats.threshold,
            window=window, n_failed=res.n_failed,
            n_nonballistic=res.n_nonballistic, flags=tuple(flags)))
        if progress is not None:
            progress(i, len(grid), rows[-1])
    return rows


def chaotic_window(rows: list[SweepRow]) -> list[int]:
    """Indices of the contiguous full-chaos prefix (Lambda == 1 exactly)."""
    out = []
    for i, r in enumerate(rows):
        if r.n_chaotic == r.n_chaos_traj:
            out.append(i)
        else:
            break
    return out


def regular_window(rows: list[SweepRow]) -> list[int]:
    """Indices of the contiguous no-chaos suffix (Lambda == 0 exactly)."""
    out = []
    for i in range(len(rows) - 1, -1, -1):
        if rows[i].n_chaotic == 0:
            out.append(i)
        else:
            break
    return out[::-1]


def mixed_window(rows: list[SweepRow]) -> list[int]:
    return [i for i, r in enumerate(rows) if 0 < r.n_chaotic < r.n_chaos_traj]


def fit_excess_slope(rows: list[SweepRow], indices: list[int],
                     floor: float = 0.0) -> tuple[float, float]:
    """Log-log slope of (D - floor) vs p over the given bins.

    `floor` is the momentum-independent diffusion pedestal (gamma/12 for the
    recoil contribution).  Returns (slope, stderr) from unweighted least
    squares on the log points; bins whose excess is not positive or whose
    measurement failed are skipped.  The stderr is the usual residual-based
    one and goes to zero for a two-point fit, so callers should prefer
    windows of three or more bins.
    """
    xs, ys = [], []
    for i in indices:
        r = rows[i]
        excess = r.d_measured - floor
        if np.isfinite(excess) and excess > 0:
            xs.append(math.log(r.p0))
            ys.append(math.log(excess))
    if len(xs) < 2:
        raise ValueError("slope fit needs at least 2 bins with positive excess")
    x = np.array(xs)
    y = np.array(ys)
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    resid = y - (y.mean() + slope * xc)
    dof = max(len(xs) - 2, 1)
    se = float(np.sqrt(np.sum(resid ** 2) / dof / np.dot(xc, xc)))
    return slope, se


@dataclass
class CloudStats:
    times: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    mean_p: np.ndarray
    valid: np.ndarray     # sample-wise mask: momentum spread within budget

    @property
    def valid_until(self) -> float:
        bad = np.nonzero(~self.valid)[0]
        return float(self.times[bad[0] - 1] if bad.size else self.times[-1])


def cloud_observables(result: EnsembleResult,
                      growth_cap: float = GROWTH_CAP) -> CloudStats:
    """Position and momentum spread of the ensemble versus time."""
    ok = result.ok
    if int(np.count_nonzero(ok)) < 2:
        raise ValueError("cloud statistics need at least 2 intact trajectories")
    x = result.positions()[ok]
    p = result.momenta()[ok]
    var_x = x.var(axis=0, ddof=1)
    var_p = p.var(axis=0, ddof=1)
    mean_p = p.mean(axis=0)
    valid = np.sqrt(var_p) <= growth_cap * np.abs(mean_p)
    return CloudStats(times=result.times, var_x=var_x, var_p=var_p,
                      mean_p=mean_p, valid=valid)
