"""Command-line front end: generate instances, solve, and sweep grids.

``solve`` runs the full pipeline (dual bound, conditional-gradient stage,
trim, reconstruction, widening loop) and writes a self-contained JSON report
plus optional CSV residual series. Exit code 0 means the final solution is
feasible for the original constraints; nonzero codes identify the failing
stage (see EXIT_*).
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import apps as apps_registry
from . import serialize
from .config import SolverConfig
from .kernels import BACKEND, DegenerateSystemError
from .model import OracleError, evaluate, plus_norm
from .reconstruct import (SCHEMES, RepairUnavailableError, ZetaExhaustedError,
                          run_pipeline, solve_with_perturbation)
from .trim import UncoveredBlockError, trim_approx

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2          # click's own usage-error code
EXIT_INPUT = 3
EXIT_TRIM = 4
EXIT_ORACLE = 5


@click.group()
def main():
    """Separable-problem solver: dual bound, conditional gradient, trimming."""


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}") from exc


def _build_instance(app, n, n_steps, seed, instance_path, overrides):
    if (instance_path is None) == (app is None):
        raise click.UsageError("provide exactly one instance source: --instance or --app")
    if instance_path is not None:
        try:
            return serialize.load(instance_path)
        except Exception as exc:
            raise click.ClickException(f"cannot load instance: {exc}") from exc
    gen = apps_registry.GENERATORS.get(app)
    if gen is None:
        raise click.UsageError(f"unknown app {app!r}")
    kwargs = dict(overrides.get(f"{app.replace('-', '_')}", {}))
    kwargs["seed"] = seed
    if n is not None:
        kwargs["n"] = n
    if n_steps is not None:
        kwargs["N"] = n_steps
    if app == "quadratic-box":
        kwargs.pop("N", None)
        if n_steps is not None:
            kwargs["m"] = n_steps
    return gen(**kwargs)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file with generator parameter overrides.")
@click.option("--app", type=str, required=True)
@click.option("--n", type=int, default=None)
@click.option("--N", "n_steps", type=int, default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def generate(config_path, app, n, n_steps, seed, out):
    """Generate a random instance and write its JSON document."""
    overrides = _load_config(config_path)
    inst = _build_instance(app, n, n_steps, seed, None, overrides)
    serialize.save(inst, out)
    click.echo(f"wrote {out}: app={app} n={inst.n} m={inst.m}")


def _solver_config(overrides: dict, **flags) -> SolverConfig:
    cfg_dict = dict(overrides.get("solver", {}))
    for key, val in flags.items():
        if val is not None:
            cfg_dict[key] = val
    try:
        return SolverConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad solver config: {exc}") from exc


def _all_scheme_objectives(trim, instance, seed):
    out = {}
    for name, fn in SCHEMES.items():
        try:
            rec = fn(trim, instance, seed)
        except RepairUnavailableError:
            out[name] = None
            continue
        out[name] = None if not np.isfinite(rec.objective) else float(rec.objective)
    return out


def _report(instance, run, zeta, attempts, config) -> dict:
    v_star_original = attempts[0].dual.v_star if attempts else run.dual.v_star
    recheck = evaluate(instance, run.recon.x_bar)
    rep = {
        "backend": BACKEND,
        "config": config.to_dict(),
        "v_star": float(v_star_original),
        "v_star_perturbed": float(run.dual.v_star),
        "scheme": run.recon.scheme,
        "objective": None if not np.isfinite(run.recon.objective) else float(run.recon.objective),
        "objectives": _all_scheme_objectives(run.trim, instance, config.seed),
        "violation_plus_original": float(run.violation_plus_original),
        "violation_plus_perturbed": float(run.violation_plus_perturbed),
        "feasible": bool(run.feasible_original),
        "zeta": int(zeta),
        "theta": run.theta.tolist(),
        "q": int(run.trim.q),
        "trim": run.trim.to_dict(),
        "atoms_input": int(run.trim.n_input_atoms),
        "entries": int(run.trim.entry_count),
        "trim_T": run.trim_T,
        "iterations": {"dual": int(run.dual.iterations), "fw": int(run.trace.iterations)},
        "fw_residual": float(run.trace.residual),
        "timings": {k: float(v) for k, v in run.timings.items()},
        "x_bar": [x.tolist() for x in run.recon.x_bar],
        "recheck": {"objective": None if not np.isfinite(recheck.objective)
                    else float(recheck.objective),
                    "violation_plus": float(recheck.violation_plus)},
        "instance": serialize.instance_to_dict(instance),
    }
    return rep


def _write_series(path, run):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "k", "residual", "time_s"])
        times = run.trace.times if run.trace.times is not None else \
            np.full(run.trace.residual_history.shape[0], np.nan)
        for k, (r, t) in enumerate(zip(run.trace.residual_history, times)):
            writer.writerow(["fw", k, repr(float(r)), repr(float(t))])
        if run.trim.history is not None:
            ttimes = run.trim.times if run.trim.times is not None else \
                np.full(len(run.trim.history), np.nan)
            for k, (r, t) in enumerate(zip(run.trim.history, ttimes)):
                writer.writerow([run.trim.source, k, repr(float(r)), repr(float(t))])


def _run_solve(inst, config, scheme, perturb):
    if perturb:
        return solve_with_perturbation(inst, scheme=scheme, config=config)
    run = run_pipeline(inst, config, scheme=scheme)
    return run, 0, [run]


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--instance", "instance_path", type=click.Path(), default=None)
@click.option("--app", type=str, default=None)
@click.option("--n", type=int, default=None)
@click.option("--N", "n_steps", type=int, default=None)
@click.option("--K", "fw_k", type=int, default=None)
@click.option("--T", "trim_t", type=int, default=None)
@click.option("--method", type=click.Choice(["exact", "fcfw", "mnp"]), default=None)
@click.option("--scheme", type=click.Choice(["auto", "average", "sample", "repair", "max"]),
              default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-perturbation", is_flag=True,
              help="single pass at theta = 0 instead of the widening loop")
@click.option("--check-every", type=int, default=None,
              help="periodic feasibility checkpointing during the FW stage")
@click.option("--out", type=click.Path(), required=True, help="report JSON path")
@click.option("--series", type=click.Path(), default=None, help="CSV residual series path")
def solve(config_path, instance_path, app, n, n_steps, fw_k, trim_t, method,
          scheme, seed, no_perturbation, check_every, out, series):
    """Run the full pipeline and write a self-contained report."""
    overrides = _load_config(config_path)
    config = _solver_config(overrides, fw_K=fw_k, trim_T=trim_t, carath_method=method,
                            scheme=scheme, seed=seed, check_every=check_every)
    inst = _build_instance(app, n, n_steps, config.seed, instance_path, overrides)
    code = EXIT_OK
    try:
        run, zeta, attempts = _run_solve(inst, config, config.scheme, not no_perturbation)
    except ZetaExhaustedError as exc:
        run, zeta, attempts = exc.attempts[-1], len(exc.attempts) - 1, exc.attempts
        code = EXIT_INFEASIBLE
    except (DegenerateSystemError, UncoveredBlockError) as exc:
        _write_error(out, "trim", exc)
        sys.exit(EXIT_TRIM)
    except OracleError as exc:
        _write_error(out, "oracle", exc)
        sys.exit(EXIT_ORACLE)
    if code == EXIT_OK and not run.feasible_original:
        code = EXIT_INFEASIBLE
    rep = _report(inst, run, zeta, attempts, config)
    Path(out).write_text(json.dumps(rep, indent=1, sort_keys=True))
    if series is not None:
        _write_series(series, run)
    click.echo(f"v*={rep['v_star']:.6g} objective={rep['objective']} "
               f"zeta={zeta} feasible={rep['feasible']}")
    sys.exit(code)


def _write_error(out, stage, exc):
    doc = {"error": {"stage": stage, "type": type(exc).__name__, "message": str(exc)}}
    try:
        Path(out).write_text(json.dumps(doc, indent=1))
    except OSError:
        pass
    click.echo(f"{stage} error: {exc}", err=True)


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--app", type=str, required=True)
@click.option("--n", type=int, default=None)
@click.option("--N", "n_steps", type=int, default=None)
@click.option("--K", "fw_k", type=int, default=None)
@click.option("--T", "trim_t", type=int, default=None)
@click.option("--method", type=click.Choice(["exact", "fcfw", "mnp"]), default=None)
@click.option("--scheme", type=click.Choice(["auto", "average", "sample", "repair", "max"]),
              default=None)
@click.option("--param", type=click.Choice(["K", "n"]), required=True)
@click.option("--values", type=str, required=True, help="comma-separated grid")
@click.option("--seeds", type=str, default="0", help="comma-separated seeds")
@click.option("--out", type=click.Path(), required=True, help="CSV output path")
def sweep(config_path, app, n, n_steps, fw_k, trim_t, method, scheme, param,
          values, seeds, out):
    """Run the pipeline over a grid of K or n and emit one CSV row per run."""
    try:
        grid = [int(v) for v in values.split(",") if v.strip() != ""]
        seed_list = [int(s) for s in seeds.split(",") if s.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"bad grid: {exc}") from exc
    if not grid or not seed_list:
        raise click.UsageError("empty grid")
    overrides = _load_config(config_path)
    rows = []
    for value in grid:
        for seed in seed_list:
            config = _solver_config(overrides, fw_K=fw_k, trim_T=trim_t,
                                    carath_method=method, scheme=scheme, seed=seed)
            if param == "K":
                config.fw_K = value
                inst_n = n
            else:
                inst_n = value
            inst = _build_instance(app, inst_n, n_steps, seed, None, overrides)
            t0 = time.perf_counter()
            try:
                run, zeta, attempts = _run_solve(inst, config, config.scheme, True)
                code = EXIT_OK if run.feasible_original else EXIT_INFEASIBLE
            except ZetaExhaustedError as exc:
                run, zeta = exc.attempts[-1], len(exc.attempts) - 1
                code = EXIT_INFEASIBLE
            rows.append({
                "param": param, "value": value, "seed": seed,
                "v_star": run.dual.v_star,
                "objective": run.recon.objective if np.isfinite(run.recon.objective) else "",
                "violation_plus_original": run.violation_plus_original,
                "violation_plus_perturbed": run.violation_plus_perturbed,
                "zeta": zeta, "q": run.trim.q, "entries": run.trim.entry_count,
                "atoms": run.trim.n_input_atoms,
                "time_dual": run.timings["dual"], "time_fw": run.timings["fw"],
                "time_trim": run.timings["trim"],
                "time_total": time.perf_counter() - t0,
                "feasible": int(code == EXIT_OK),
            })
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {out}: {len(rows)} runs")


if __name__ == "__main__":
    main()
