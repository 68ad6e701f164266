"""``simulate <config> [--out DIR] [--mode MODE]``.

Outputs go to ``DIR`` (or ``output_dir`` from the config, or
``simulate-<mode>``), resolved under ``$HOPFLUID_OUTPUT_ROOT`` when that is
set and the path is relative.  Data files carry no timestamps; run metadata
lives in ``manifest.json``.  While a run is in progress the directory holds
an ``INCOMPLETE`` file, left behind (with the reason) when the run fails.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import errors
from .config import EXPERIMENT_MODES, MODES, RunConfig, canonical_text, parse_config
from .continuum import (ContinuumState, default_dt, first_law_audit, pde_step, total_energy, total_mass,
                         write_snapshots_csv)
from .experiments import EXPERIMENTS, DiscreteAudit, _jsonable
from .lattice import LatticeSpec, state_from_profiles, step_mean_field, temperatures, totals
from .oracle import build_T, dump_matrix_csv, evolve_exact, marginals, project_Q
from .thermo import entropy_continuum, entropy_production_rate, write_diagnostics_csv

OUTPUT_ROOT_ENV = "HOPFLUID_OUTPUT_ROOT"
SENTINEL = "INCOMPLETE"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_CONSERVATION = 4
EXIT_ENTROPY = 5
EXIT_BOUNDS = 6
EXIT_CONVERGENCE = 7
EXIT_TOLERANCE = 8
EXIT_IO = 9
EXIT_INTERNAL = 10

# Most specific first.
_EXIT_CODES = (
    (errors.ConfigError, EXIT_CONFIG),
    (errors.ConservationViolated, EXIT_CONSERVATION),
    (errors.SecondLawViolated, EXIT_ENTROPY),
    (errors.ConvergenceFailure, EXIT_CONVERGENCE),
    ((errors.StepTooLarge, errors.BoundsViolated, errors.UnstableStep), EXIT_BOUNDS),
    ((errors.InvalidRates, errors.InvalidState, errors.EmptyOrColdSite, errors.TooLarge,
      errors.SingularForce, errors.SingularCoord), EXIT_INPUT),
    (OSError, EXIT_IO),
)


class ToleranceFailure(errors.HopfluidError):
    """A run finished but a checked quantity missed its tolerance."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ToleranceFailure):
        return EXIT_TOLERANCE
    for kinds, code in _EXIT_CODES:
        if isinstance(exc, kinds):
            return code
    return EXIT_INTERNAL


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def _g(v) -> str:
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# modes


def _lattice(cfg: RunConfig) -> LatticeSpec:
    return LatticeSpec(cfg.sites, cfg.spacing, cfg.energy_quantum, cfg.hop_rate,
                       cfg.potential.evaluate(cfg.positions))


def _unit(cfg: RunConfig) -> np.ndarray:
    return (np.arange(cfg.sites) + 0.5) / cfg.sites


def _frames(cfg: RunConfig):
    every = cfg.output_every or max(cfg.steps, 1)
    return lambda i: i == 0 or i == cfg.steps or i % every == 0


def run_discrete_mode(cfg: RunConfig, out: Path, meta: dict) -> dict:
    spec = _lattice(cfg)
    meta["quantization_error"] = spec.quantization_error
    meta["k_max"] = spec.k_max
    state = state_from_profiles(spec, cfg.density.evaluate(_unit(cfg)), cfg.temperature.evaluate(_unit(cfg)),
                                cfg.sum_mode)
    audit = DiscreteAudit(state, spec, cfg.sum_mode, conservation_tol=cfg.tolerances.conservation,
                          entropy_tol=cfg.tolerances.entropy)
    frame = _frames(cfg)
    with (out / "snapshots.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "x", "n", "K", "theta"])

        def dump(i, st):
            th = temperatures(st, spec, cfg.sum_mode)
            for x, n, K, t in zip(spec.positions, st.n, st.K, th):
                w.writerow([i, _g(i * spec.dt), _g(x), _g(n), _g(K), _g(t)])

        dump(0, state)
        for i in range(1, cfg.steps + 1):
            state = step_mean_field(state, spec, cfg.sum_mode)
            audit.check(state)
            if frame(i):
                dump(i, state)
    N, E = totals(state, spec)
    return {
        "mode": "discrete",
        "steps": cfg.steps,
        "final_particles": N,
        "final_energy": E,
        "max_particle_drift": audit.max_drift_N,
        "max_energy_drift": audit.max_drift_E,
        "min_entropy_increment": audit.min_dS if audit.frames else 0.0,
        "final_entropy": audit.S,
        "passed": True,
    }


def run_continuum_mode(cfg: RunConfig, out: Path, meta: dict) -> dict:
    s = ContinuumState(cfg.positions, cfg.spacing, cfg.density.evaluate(_unit(cfg)),
                       cfg.temperature.evaluate(_unit(cfg)), cfg.rho_m, cfg.potential.evaluate(cfg.positions))
    s.validate()
    lam = cfg.hop_rate
    frame = _frames(cfg)
    states = [s]
    M0, E0 = total_mass(s), total_energy(s)
    S_prev, worst_first_law, entropy_gap = entropy_continuum(s), 0.0, 0.0
    for i in range(1, cfg.steps + 1):
        dt = cfg.dt if cfg.dt is not None else default_dt(s, lam)
        nxt = pde_step(s, lam, dt)
        worst_first_law = max(worst_first_law, first_law_audit(s, nxt) / max(abs(E0), 1e-300))
        if worst_first_law > cfg.tolerances.conservation:
            raise errors.ConservationViolated(f"continuum energy drifted by {worst_first_law:.3e} at step {i}")
        S = entropy_continuum(nxt)
        entropy_gap = max(entropy_gap, abs((S - S_prev) / dt - entropy_production_rate(s, lam)))
        S_prev, s = S, nxt
        if frame(i):
            states.append(s)
    write_snapshots_csv(out / "snapshots.csv", states, lam)
    write_diagnostics_csv(out, s, lam)
    return {
        "mode": "continuum",
        "steps": cfg.steps,
        "t_final": s.t,
        "mass_drift": abs(total_mass(s) - M0) / max(abs(M0), 1e-300),
        "max_energy_drift": worst_first_law,
        "max_entropy_rate_gap": entropy_gap,
        "passed": True,
    }


def run_oracle_mode(cfg: RunConfig, out: Path, meta: dict) -> dict:
    spec = _lattice(cfg)
    meta["quantization_error"] = spec.quantization_error
    cap = cfg.k_cap if cfg.k_cap is not None else min(spec.k_max, 6)
    state = state_from_profiles(spec, cfg.density.evaluate(_unit(cfg)), cfg.temperature.evaluate(_unit(cfg)),
                                "finite", cap)
    T = build_T(spec, cap)
    exact = marginals(evolve_exact(project_Q(state, spec, cap), T))
    mf = step_mean_field(state, spec, "finite", cap)
    dn = float(np.max(np.abs(exact.n - mf.n)))
    dK = float(np.max(np.abs(exact.K - mf.K)))
    dump_matrix_csv(T, out / "transition_matrix.csv")
    with (out / "oracle_marginals.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "n_mean_field", "n_exact", "K_mean_field", "K_exact"])
        for i in range(spec.num_sites):
            w.writerow([i, _g(mf.n[i]), _g(exact.n[i]), _g(mf.K[i]), _g(exact.K[i])])
    rows = T.matrix.sum(axis=1)
    cols = T.matrix.sum(axis=0)
    tol = cfg.tolerances.oracle
    return {
        "mode": "oracle-check",
        "k_cap": cap,
        "configurations": T.size,
        "max_occupation_gap": dn,
        "max_kinetic_gap": dK,
        "max_row_sum_error": float(np.max(np.abs(rows - 1))),
        "max_column_sum_error": float(np.max(np.abs(cols - 1))),
        "block_leakage": T.block_leakage(),
        "tolerance": tol,
        "passed": bool(dn <= tol and dK <= tol and T.block_leakage() == 0.0),
    }


def run_experiment_mode(cfg: RunConfig, out: Path, meta: dict) -> dict:
    kwargs = cfg.experiment_kwargs()
    report = EXPERIMENTS[cfg.mode](**kwargs)
    meta["runtime_experiment_s"] = report.runtime
    (out / "report.txt").write_text(report.to_table() + "\n")
    report.write_series_csv(out / "series.csv")
    data = report.to_dict()
    data["mode"] = cfg.mode
    return data


RUNNERS = {
    "discrete": run_discrete_mode,
    "continuum": run_continuum_mode,
    "oracle-check": run_oracle_mode,
    **{m: run_experiment_mode for m in EXPERIMENT_MODES},
}


# ---------------------------------------------------------------------------
# driver


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve_output(cfg: RunConfig, out_arg) -> Path:
    target = Path(out_arg or cfg.output_dir or f"simulate-{cfg.mode}")
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not target.is_absolute():
        target = Path(root) / target
    return target


def run(cfg: RunConfig, out: Path) -> int:
    """Execute ``cfg`` writing into ``out``; returns the exit status."""
    out.mkdir(parents=True, exist_ok=True)
    sentinel = out / SENTINEL
    sentinel.write_text("run in progress\n")
    canonical = canonical_text(cfg)
    (out / "config.ini").write_text(canonical)
    meta = {
        "package": "artifact",
        "version": _version(),
        "mode": cfg.mode,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
    }
    start = time.perf_counter()
    status = EXIT_OK
    try:
        result = RUNNERS[cfg.mode](cfg, out, meta)
        _write_json(out / "report.json", result)
        if not result.get("passed", True):
            raise ToleranceFailure(f"{cfg.mode}: a checked quantity missed its tolerance (see report.json)")
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        status = exit_code_for(exc)
        meta["error"] = f"{type(exc).__name__}: {exc}"
        sentinel.write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"simulate: {type(exc).__name__}: {exc}", file=sys.stderr)
    meta["exit_status"] = status
    meta["runtime_s"] = time.perf_counter() - start
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name not in ("manifest.json", SENTINEL))
    meta["files"] = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files}
    _write_json(out / "manifest.json", meta)
    if status == EXIT_OK:
        sentinel.unlink()
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Run a hopping-lattice or continuum simulation.")
    p.add_argument("config", help="path to the run configuration (INI text)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--mode", choices=MODES, help="override [run] mode")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"simulate: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.mode:
        text = _override_mode(text, args.mode)
    try:
        cfg = parse_config(text)
    except errors.ConfigError as exc:
        for v in exc.violations:
            print(f"simulate: config: {v}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, resolve_output(cfg, args.out))


def _override_mode(text: str, mode: str) -> str:
    import configparser

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error:
        return text  # let parse_config report it
    if not parser.has_section("run"):
        return f"[run]\nmode = {mode}\n\n" + text
    lines = text.splitlines()
    section, done = None, False
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.startswith("["):
            if section == "run" and not done:
                lines.insert(i, f"mode = {mode}")
                done = True
                break
            section = stripped.strip("[]").strip().lower()
        elif section == "run" and stripped.split("=")[0].split(":")[0].strip().lower() == "mode":
            lines[i] = f"mode = {mode}"
            done = True
            break
    if not done:
        lines.append(f"mode = {mode}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
