"""Compare the jitted scalar kernels against the vectorized numpy fallback.

Times the jump-process ensemble and the variational exponent kernel on both
backends at matched workloads and reports steps/second plus the speedup.
Run from the repo root:

    python3 benchmarks/benchmark_backends.py --n-traj 64 --duration 2000
"""

import argparse
import time

import numpy as np

from latticemc import (EnsembleSpec, SimParams, available_backends,
                       max_lyapunov, run_ensemble)
from latticemc.dynamics import AtomState


def time_ensemble(backend: str, spec: EnsembleSpec, params: SimParams,
                  threads: int | None) -> float:
    t0 = time.perf_counter()
    res = run_ensemble(spec, params, backend=backend, threads=threads)
    dt = time.perf_counter() - t0
    assert res.n_failed == 0
    return dt


def time_lyapunov(backend: str, params: SimParams, tau: float,
                  n_traj: int) -> float:
    ham = params.with_gamma(0.0)
    t0 = time.perf_counter()
    for i in range(n_traj):
        st = AtomState(x=0.3 + 0.1 * i, p=800.0, u=0.0, v=0.0, z=-1.0)
        max_lyapunov(st, ham, tau_max=tau, backend=backend)
    return time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=64)
    ap.add_argument("--duration", type=float, default=2000.0)
    ap.add_argument("--tau-lyap", type=float, default=2000.0)
    ap.add_argument("--n-lyap", type=int, default=8)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    params = SimParams()
    spec = EnsembleSpec(n_traj=args.n_traj, p0_mean=800.0, p0_sigma=8.0,
                        duration=args.duration, seed=42)
    steps = args.n_traj * args.duration / spec.h
    lsteps = args.n_lyap * args.tau_lyap / 1e-2

    backends = available_backends()
    if "numba" in backends:
        # jit warmup so compilation is not billed to the benchmark
        warm = EnsembleSpec(n_traj=2, p0_mean=800.0, duration=20.0, seed=0)
        run_ensemble(warm, params, backend="numba")
        time_lyapunov("numba", params, 20.0, 1)

    results = {}
    for b in backends:
        te = time_ensemble(b, spec, params, args.threads)
        tl = time_lyapunov(b, params, args.tau_lyap, args.n_lyap)
        results[b] = (te, tl)
        print(f"{b:6s}  ensemble {te:7.2f} s ({steps / te:.3e} steps/s)   "
              f"lyapunov {tl:7.2f} s ({lsteps / tl:.3e} steps/s)")

    if len(results) == 2:
        te_ratio = results["numpy"][0] / results["numba"][0]
        tl_ratio = results["numpy"][1] / results["numba"][1]
        print(f"speedup numba/numpy: ensemble {te_ratio:.1f}x, "
              f"lyapunov {tl_ratio:.1f}x")
        a = run_ensemble(spec, params, backend="numba", threads=args.threads)
        b = run_ensemble(spec, params, backend="numpy")
        dev = float(np.max(np.abs(a.samples - b.samples)))
        print(f"max |state| deviation between backends: {dev:.2e}")


if __name__ == "__main__":
    main()
