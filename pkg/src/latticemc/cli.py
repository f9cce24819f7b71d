"""Batch command-line driver.

Subcommands: simulate (one sampled trajectory with its jump log), sweep
(chaos probability and diffusion versus momentum), lyapunov (exponent
ensemble at one momentum), analytic (closed-form diffusion tables), cloud
(ensemble moment time series).  Every run writes a JSON manifest with the
full configuration snapshot, seeds, version, timings, and output checksums,
which is enough to reproduce any output byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, models
from ._kernels import resolve_backend
from .config import RunConfig, emit_config, parse_config
from .dynamics import integrate_observed
from .emission import RngStream, propagate_with_jumps
from .ensemble import (cloud_observables, estimate_diffusion,
                       estimate_friction, resolve_threads, run_ensemble,
                       sweep_momentum)
from .lyapunov import chaos_probability

UNITS_LINE = "# units: momentum hbar*k_f, time 1/Omega, D hbar^2*k_f^2*Omega"
SWEEP_HEADER = "p, Lambda, D_measured, D_stderr, D_ch, D_reg, D_blend, flags"


def _fmt(x: float) -> str:
    # 17 significant digits: exact double-precision round trip
    x = float(x)
    if x != x or x in (float("inf"), float("-inf")):
        return str(x)
    return np.format_float_scientific(x, precision=16, unique=False)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class Manifest:
    def __init__(self, command: str, cfg: RunConfig, seed: int | None,
                 threads: int, backend: str):
        self.data = {
            "command": command,
            "version": __version__,
            "backend": backend,
            "threads": threads,
            "seed_override": seed,
            "config": emit_config(cfg),
            "timings_s": {},
            "diagnostics": {},
            "outputs": {},
        }
        self._t0 = time.perf_counter()

    def time_mark(self, label: str) -> None:
        now = time.perf_counter()
        self.data["timings_s"][label] = round(now - self._t0, 3)
        self._t0 = now

    def write(self, out: Path, prefix: str) -> Path:
        for name in list(self.data["outputs"]):
            self.data["outputs"][name] = _sha256(out / name)
        path = out / f"{prefix}_manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _sweep_csv_lines(rows) -> list[str]:
    lines = [UNITS_LINE, SWEEP_HEADER]
    for r in rows:
        flags = ";".join(r.flags) if r.flags else "ok"
        vals = [r.p0, r.Lambda, r.d_measured, r.d_stderr,
                r.d_ch, r.d_reg, r.d_blend]
        lines.append(", ".join(_fmt(v) for v in vals) + ", " + flags)
    return lines


def emit_plot_data(rows, out: Path, prefix: str) -> list[str]:
    """Two aligned column files: diffusion curves and chaos probability."""
    dp = ["# p D_measured D_stderr D_ch D_reg D_blend"]
    lam = ["# p Lambda"]
    for r in rows:
        dp.append(" ".join(_fmt(v) for v in (
            r.p0, r.d_measured, r.d_stderr, r.d_ch, r.d_reg, r.d_blend)))
        lam.append(f"{_fmt(r.p0)} {_fmt(r.Lambda)}")
    names = [f"{prefix}_dp.dat", f"{prefix}_lambda.dat"]
    _write_lines(out / names[0], dp)
    _write_lines(out / names[1], lam)
    return names


def cmd_sweep(cfg: RunConfig, out: Path, threads: int | None,
              backend: str | None, manifest: Manifest) -> int:
    sw = cfg.sweep
    bins = []

    def note(i, n, row, _t=[time.perf_counter()]):
        now = time.perf_counter()
        bins.append({
            "p": row.p0, "Lambda": row.Lambda, "n_chaotic": row.n_chaotic,
            "n_chaos_traj": row.n_chaos_traj, "noise_floor": row.noise_floor,
            "threshold": row.threshold, "d_measured": row.d_measured,
            "d_stderr": row.d_stderr, "fit_window": list(row.window),
            "n_failed": row.n_failed, "n_nonballistic": row.n_nonballistic,
            "flags": list(row.flags), "wall_s": round(now - _t[0], 3)})
        _t[0] = now
        print(f"bin {i + 1}/{n} p={row.p0:.6g} Lambda={row.Lambda:.3f} "
              f"D={row.d_measured:.4e}", flush=True)

    rows = sweep_momentum(
        cfg.params, sw.grid(), n_traj=sw.n_traj, duration=sw.duration,
        chaos=cfg.chaos, seed=sw.seed, sample_interval=sw.sample_interval,
        h=sw.h, p_sigma_frac=sw.p_sigma_frac, transient=sw.transient,
        growth_cap=sw.growth_cap, drift_cap=sw.drift_cap, backend=backend,
        threads=threads, progress=note)
    manifest.time_mark("sweep")
    manifest.data["diagnostics"]["bins"] = bins

    prefix = cfg.output.prefix
    name = f"{prefix}_sweep.csv"
    _write_lines(out / name, _sweep_csv_lines(rows))
    manifest.data["outputs"][name] = None
    if cfg.output.plot_data:
        for extra in emit_plot_data(rows, out, prefix):
            manifest.data["outputs"][extra] = None
    if all(r.flags for r in rows):
        print("sweep failed in every bin", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(cfg: RunConfig, out: Path, threads, backend,
                 manifest: Manifest) -> int:
    spec = cfg.ensemble
    gen = RngStream(spec.seed, (0,)).generator()
    state = spec.initial_state(gen)
    if cfg.params.gamma > 0:
        rec = propagate_with_jumps(state, cfg.params, spec.duration, gen,
                                   sample_interval=spec.sample_interval,
                                   h=spec.h, backend=backend)
        samples, times, jumps = rec.samples, rec.times, rec.jump_table
        diag = {"n_jumps": rec.n_jumps, "crossings": rec.crossings,
                "sign_changes": rec.sign_changes, "status": rec.status}
    else:
        res = integrate_observed(state, cfg.params, spec.duration,
                                 spec.sample_interval, h=spec.h,
                                 backend=backend)
        samples, times = res.samples, res.times
        jumps = np.empty((0, 10))
        diag = {"n_jumps": 0, "crossings": res.crossings,
                "sign_changes": 0, "status": res.status}
    manifest.time_mark("integrate")
    manifest.data["diagnostics"].update(diag)

    prefix = cfg.output.prefix
    traj = [UNITS_LINE, "tau, x, p, u, v, z"]
    for t, row in zip(times, samples):
        traj.append(", ".join(_fmt(v) for v in (t, *row)))
    jl = [UNITS_LINE, "tau_j, p_recoil, x, p, u, v, z, interval, "
          "saturation_integral, crossings"]
    for row in jumps:
        jl.append(", ".join(_fmt(v) for v in row))
    _write_lines(out / f"{prefix}_trajectory.csv", traj)
    _write_lines(out / f"{prefix}_jumps.csv", jl)
    manifest.data["outputs"][f"{prefix}_trajectory.csv"] = None
    manifest.data["outputs"][f"{prefix}_jumps.csv"] = None
    return 0 if diag["status"] == 0 else 1


def cmd_lyapunov(cfg: RunConfig, out: Path, threads, backend,
                 manifest: Manifest) -> int:
    spec = cfg.ensemble
    stats = chaos_probability(
        spec.p0_mean, cfg.params, RngStream(spec.seed, (0x1B,)),
        n_traj=cfg.chaos.n_traj, tau_max=cfg.chaos.tau_max,
        renorm_interval=cfg.chaos.renorm_interval, h=spec.h,
        threshold=cfg.chaos.threshold,
        noise_floor_n=cfg.chaos.noise_floor_n, p_jitter=cfg.chaos.p_jitter,
        backend=backend)
    manifest.time_mark("lyapunov")
    prefix = cfg.output.prefix
    lines = ["# units: exponent Omega, time 1/Omega",
             "trajectory, lambda, chaotic"]
    for i, lam in enumerate(stats.lambdas):
        lines.append(f"{i}, {_fmt(lam)}, "
                     f"{int(lam > stats.threshold)}")
    name = f"{prefix}_lyapunov.csv"
    _write_lines(out / name, lines)
    manifest.data["outputs"][name] = None
    manifest.data["diagnostics"].update({
        "p0": spec.p0_mean, "Lambda": stats.Lambda,
        "n_chaotic": stats.n_chaotic, "n_regular": stats.n_regular,
        "threshold": stats.threshold, "noise_floor": stats.noise_floor})
    print(f"p={spec.p0_mean:g} Lambda={stats.Lambda:.4f} "
          f"threshold={stats.threshold:.3e}")
    return 0


def cmd_analytic(cfg: RunConfig, out: Path, threads, backend,
                 manifest: Manifest) -> int:
    grid = cfg.sweep.grid()
    prefix = cfg.output.prefix
    lines = [UNITS_LINE, "p, D_ch, D_reg"]
    for p in grid:
        lines.append(", ".join(_fmt(v) for v in (
            p, models.d_chaotic(cfg.params, p),
            models.d_regular(cfg.params, p))))
    name = f"{prefix}_analytic.csv"
    _write_lines(out / name, lines)
    manifest.time_mark("analytic")
    manifest.data["outputs"][name] = None
    return 0


def cmd_cloud(cfg: RunConfig, out: Path, threads, backend,
              manifest: Manifest) -> int:
    res = run_ensemble(cfg.ensemble, cfg.params, backend=backend,
                       threads=threads)
    stats = cloud_observables(res)
    d = float("nan")
    if cfg.params.gamma > 0:
        try:
            d = estimate_diffusion(res, friction=estimate_friction(res)).d
        except ValueError:
            pass
    manifest.time_mark("cloud")
    pred = models.cloud_variance(stats.var_x[0], stats.var_p[0], d,
                                 cfg.params, stats.times)
    prefix = cfg.output.prefix
    lines = [UNITS_LINE,
             "tau, var_x, var_p, mean_p, valid, var_x_cubic"]
    for i, t in enumerate(stats.times):
        lines.append(", ".join(_fmt(v) for v in (
            t, stats.var_x[i], stats.var_p[i], stats.mean_p[i]))
            + f", {int(stats.valid[i])}, " + _fmt(pred[i]))
    name = f"{prefix}_cloud.csv"
    _write_lines(out / name, lines)
    manifest.data["outputs"][name] = None
    manifest.data["diagnostics"].update({
        "d_measured": d, "valid_until": stats.valid_until,
        "n_failed": res.n_failed, "n_nonballistic": res.n_nonballistic})
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "lyapunov": cmd_lyapunov,
    "analytic": cmd_analytic,
    "cloud": cmd_cloud,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="latticemc",
        description="Monte Carlo transport of two-level atoms in an "
                    "optical lattice")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--out", default=None,
                       help="output directory (default: config output.dir)")
        p.add_argument("--seed", type=int, default=None,
                       help="override ensemble and sweep seeds")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: LATTICEMC_THREADS "
                            "or CPU count)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg,
                          ensemble=replace(cfg.ensemble, seed=args.seed),
                          sweep=replace(cfg.sweep, seed=args.seed))
        out = Path(args.out if args.out is not None else cfg.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        threads = resolve_threads(args.threads)
        backend = resolve_backend()
        manifest = Manifest(args.command, cfg, args.seed, threads, backend)
        rc = _COMMANDS[args.command](cfg, out, threads, backend, manifest)
        path = manifest.write(out, cfg.output.prefix)
        print(f"manifest: {path}")
        return rc
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
