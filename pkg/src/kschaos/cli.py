"""Command-line entry points.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical instability / untrusted estimate.

Every command writes its delimited outputs, rendered figures and a
manifest.json with the config echo and a checksum per output file into the
run directory; re-running with `--config <run>/manifest.json` reproduces the
outputs byte-for-byte (wall-clock timing tables are written separately and
flagged volatile in the manifest).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, rng
from .config import SCHEMAS, build_config
from .errors import ConfigError, DomainError, InstabilityError, KschaosError, StateError
from .grids import SpatialGrid, TimeGrid
from .initial import InitialLaw
from .kernels import KernelParams, kernel_lp_norm, kernel_time_integral
from .reports import write_csv, write_run_manifest

CHECK_FAIL, CONFIG_FAIL, UNSTABLE = 1, 2, 3


def _out_dir(args, command: str) -> Path:
    base = args.out or os.environ.get("KSCHAOS_OUTDIR") or f"runs/{command}"
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _kernel_params(config) -> KernelParams:
    return KernelParams(config.get("lam", 0.0), config.get("chi", 1.0))


def _figures_enabled(args) -> bool:
    return not args.no_figures


# ---------------------------------------------------------------------------
# kernel-check
# ---------------------------------------------------------------------------

def _cmd_kernel_check(args, config, out: Path):
    from scipy.integrate import quad
    from .kernels import kernel_eval

    params = _kernel_params(config)
    rows, norm_rows, failed = [], [], False

    # norm scaling: log-log slope per p must be -(1 - 1/(2p))
    tgrid = np.asarray(config["t_values"], dtype=float)
    design = np.vstack([np.log(tgrid), np.ones_like(tgrid)]).T
    for p in config["p_values"]:
        norms = np.array([kernel_lp_norm(t, p, KernelParams(0.0, params.chi)) for t in tgrid])
        for t, v in zip(tgrid, norms):
            norm_rows.append({"p": p, "t": t, "norm": v})
        slope = float(np.linalg.lstsq(design, np.log(norms), rcond=None)[0][0])
        expected = -(1.0 - 1.0 / (2.0 * p))
        ok = abs(slope - expected) < config["slope_tol"]
        failed |= not ok
        rows.append({"check": "norm_slope", "p": p, "observed": slope,
                     "expected": expected, "tol": config["slope_tol"], "pass": ok})

    # erf closed form vs adaptive quadrature on a randomized grid
    g = rng.stream(config["seed"], 0)
    worst = 0.0
    for _ in range(config["n_oracle"]):
        a = 0.0 if g.random() < 0.25 else 0.02 + 1.5 * g.random() ** 2
        b = a + 0.05 + 1.5 * g.random()
        x = (0.1 + 2.9 * g.random()) * math.sqrt(b) * (1 if g.random() < 0.5 else -1)
        closed = kernel_time_integral(x, a, b, params)
        ref, _ = quad(lambda u: kernel_eval(u, x, params), a, b,
                      epsabs=0.0, epsrel=1e-13, limit=400)
        rel = abs(closed - ref) / max(abs(ref), 1e-300)
        worst = max(worst, rel)
        if abs(closed) > 1.0 + 1e-15:
            failed = True
            rows.append({"check": "slab_bound", "p": "", "observed": closed,
                         "expected": "|.| <= 1", "tol": 0.0, "pass": False})
    ok = worst < config["oracle_tol"]
    failed |= not ok
    rows.append({"check": "erf_oracle_max_rel_err", "p": "", "observed": worst,
                 "expected": 0.0, "tol": config["oracle_tol"], "pass": ok})

    # antisymmetry of the pointwise kernel on random arguments
    worst_anti = 0.0
    for _ in range(200):
        t = 0.05 + 3.0 * g.random()
        x = 4.0 * (g.random() - 0.5)
        worst_anti = max(worst_anti, abs(kernel_eval(t, x, params) + kernel_eval(t, -x, params)))
    ok = worst_anti < 1e-14
    failed |= not ok
    rows.append({"check": "antisymmetry_max_abs", "p": "", "observed": worst_anti,
                 "expected": 0.0, "tol": 1e-14, "pass": ok})

    outputs = [write_csv(out / "kernel_check.csv",
                         ["check", "p", "observed", "expected", "tol", "pass"], rows)]
    if _figures_enabled(args):
        from . import figures
        outputs.append(figures.norm_scaling_figure(norm_rows, out / "norm_scaling.png"))
    return (CHECK_FAIL if failed else 0), outputs


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args, config, out: Path):
    from .particles import simulate, simulate_partial_driftless
    from .pathio import write_path_dump

    grid = TimeGrid(config["dt"], config["n_steps"])
    initial = InitialLaw.from_spec(config["initial"])
    params = _kernel_params(config)
    r = config["r_driftless"]
    if r == 0:
        ens = simulate(config["n_particles"], grid, initial, params,
                       config["seed"], cutoff=config["cutoff"])
    else:
        if r >= config["n_particles"]:
            raise ConfigError(f"r_driftless={r} must be < n_particles={config['n_particles']}")
        ens = simulate_partial_driftless(r, config["n_particles"], grid, initial, params,
                                         config["seed"], cutoff=config["cutoff"])

    dump = write_path_dump(out / "paths.bin", ens, params,
                           extra={"initial": json.dumps(config["initial"], sort_keys=True)})
    final = ens.positions[:, -1]
    summary = [{
        "n_particles": ens.n_particles, "n_steps": grid.n_steps, "dt": grid.dt,
        "seed": config["seed"], "r_driftless": r,
        "final_mean": float(final.mean()), "final_var": float(final.var(ddof=1)) if len(final) > 1 else 0.0,
        "max_abs_position": float(np.abs(ens.positions).max()),
        "kernel_evals": ens.kernel_evals,
    }]
    outputs = [dump, dump.with_suffix(dump.suffix + ".manifest.txt"),
               write_csv(out / "summary.csv", list(summary[0].keys()), summary)]
    if _figures_enabled(args):
        from . import figures
        outputs.append(figures.trajectories_figure(grid.times(), ens.positions,
                                                   out / "trajectories.png"))
    return 0, outputs


# ---------------------------------------------------------------------------
# pde
# ---------------------------------------------------------------------------

def _cmd_pde(args, config, out: Path):
    from .meanfield import pde_solve
    from .pathio import write_pde_dump

    space = SpatialGrid(config["x_min"], config["x_max"], config["n_cells"])
    grid = TimeGrid(config["dt"], config["n_steps"])
    initial = InitialLaw.from_spec(config["initial"])
    params = _kernel_params(config)
    pde_dt = config["pde_dt"] if config["pde_dt"] > 0 else None
    snapshots = pde_solve(initial, space, grid, params, pde_dt=pde_dt)

    nodes = space.nodes()
    snap_rows = []
    for s in snapshots:
        for x, r_, c_ in zip(nodes, s.rho.values, s.c):
            snap_rows.append([s.time, x, r_, c_])
    report_rows = []
    for s in snapshots:
        mass = s.rho.mass()
        report_rows.append({
            "t": s.time, "mass": mass, "mass_error": abs(mass - 1.0),
            "boundary_density": max(s.rho.values[0], s.rho.values[-1]),
            "l2_norm": s.rho.l2_norm(),
            "t14_l2": (s.time ** 0.25 * s.rho.l2_norm()) if s.time > 0 else 0.0,
        })
    outputs = [
        write_csv(out / "snapshots.csv", ["t", "x", "rho", "c"], snap_rows),
        write_pde_dump(out / "snapshots.bin", space, grid, snapshots),
        write_csv(out / "pde_report.csv", list(report_rows[0].keys()), report_rows),
    ]
    if _figures_enabled(args):
        from . import figures
        outputs.append(figures.pde_figure(nodes, snapshots, report_rows, out / "pde.png"))
    max_mass_err = max(r_["mass_error"] for r_ in report_rows)
    return (CHECK_FAIL if max_mass_err > 1e-8 else 0), outputs


# ---------------------------------------------------------------------------
# chaos
# ---------------------------------------------------------------------------

def _cmd_chaos(args, config, out: Path):
    from .diagnostics import ChaosConfig, chaos_study

    workers = args.workers or int(os.environ.get("KSCHAOS_WORKERS", "1"))
    cfg = ChaosConfig(
        n_values=tuple(config["n_values"]),
        n_replicas=config["n_replicas"],
        eval_times=tuple(config["eval_times"]),
        grid=TimeGrid(config["dt"], config["n_steps"]),
        initial=InitialLaw.from_spec(config["initial"]),
        params=_kernel_params(config),
        space=SpatialGrid(config["x_min"], config["x_max"], config["n_cells"]),
        cutoff=config["cutoff"],
        workers=workers,
    )
    precomputed = _load_replica_rows(out / "replicas.csv", cfg) if args.resume else None
    report = chaos_study(cfg, config["seed"], precomputed=precomputed)

    replica_rows = []
    for i_n, n in enumerate(report.n_values):
        for rep in range(cfg.n_replicas):
            for j, t in enumerate(report.times):
                replica_rows.append({"n_particles": n, "replica": rep, "t": t,
                                     "w1": float(report.w1_replicas[i_n, rep, j])})
    slope_rows = [{"t": t, "w1_slope_vs_n": s} for t, s in zip(report.times, report.slopes)]
    outputs = [
        write_csv(out / "w1.csv", ["n_particles", "t", "w1_mean", "w1_se"], report.w1_table()),
        write_csv(out / "replicas.csv", ["n_particles", "replica", "t", "w1"], replica_rows),
        write_csv(out / "slopes.csv", ["t", "w1_slope_vs_n"], slope_rows),
        write_csv(out / "l2_decay.csv", ["t", "bandwidth", "value", "value_half_bw"],
                  report.l2_rows),
    ]
    if _figures_enabled(args):
        from . import figures
        outputs.append(figures.chaos_figure(report, out / "chaos.png"))

    # qualitative convergence: mean W1 strictly decreasing in N beyond 2 SE at the last time
    ok = True
    if len(report.n_values) >= 2:
        last = len(report.times) - 1
        for i in range(len(report.n_values) - 1):
            gap = report.w1_mean[i, last] - report.w1_mean[i + 1, last]
            sig = 2.0 * math.hypot(report.w1_se[i, last], report.w1_se[i + 1, last])
            ok &= bool(gap > sig)
    return (0 if ok else CHECK_FAIL), outputs


def _load_replica_rows(path: Path, cfg) -> dict | None:
    """Completed (n_index, replica) W1 rows from a previous run's replicas.csv."""
    if not path.exists():
        return None
    by_slot: dict[tuple[int, int], dict[float, float]] = {}
    n_index = {n: i for i, n in enumerate(cfg.n_values)}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            row = dict(zip(header, line.strip().split(",")))
            n = int(row["n_particles"])
            if n not in n_index:
                continue
            slot = (n_index[n], int(row["replica"]))
            by_slot.setdefault(slot, {})[float(row["t"])] = float(row["w1"])
    out = {}
    for slot, per_t in by_slot.items():
        if slot[1] >= cfg.n_replicas:
            continue
        try:
            out[slot] = [per_t[t] for t in cfg.eval_times]
        except KeyError:
            continue  # incomplete row set for this replica; recompute it
    return out or None


# ---------------------------------------------------------------------------
# stochastic
# ---------------------------------------------------------------------------

def _cmd_stochastic(args, config, out: Path):
    from . import stochastic as st

    analysis = config["analysis"]
    grid = TimeGrid(config["dt"], config["n_steps"])
    initial = InitialLaw.from_spec(config["initial"])
    params = KernelParams(0.0, config["chi"])
    seed = config["seed"]
    outputs = []
    code = 0

    if analysis == "girsanov":
        res, logs = st.girsanov_mean_z_with_logs(
            config["r_driftless"], config["n_samples"], config["n_particles"],
            grid, initial, params, seed)
        ok = abs(res["mean"] - 1.0) <= 3.0 * res["std_error"]
        rows = [{"analysis": "girsanov", "r": config["r_driftless"],
                 "n_particles": config["n_particles"], "horizon": grid.horizon,
                 "dt": grid.dt, "n": res["n_replicas"], "estimate": res["mean"],
                 "std_error": res["std_error"], "max_exponent": res["max_log"],
                 "flag": "ok" if ok else "off", "pass": ok}]
        outputs.append(write_csv(out / "stochastic_report.csv", list(rows[0].keys()), rows))
        if _figures_enabled(args):
            from . import figures
            outputs.append(figures.girsanov_figure(res, logs, out / "girsanov.png"))
        code = 0 if ok else CHECK_FAIL

    elif analysis == "lemma31":
        anchor = config["window_anchor"]
        x_path = np.zeros(grid.n_steps + 1)
        rows = []
        for w in config["windows"]:
            r_ = st.lemma31_scaling_mc(anchor, anchor + w, x_path, config["n_samples"],
                                       grid, rng.child_seed(seed, int(round(w * 1e6))),
                                       restart_point=config["restart_point"])
            rows.append({"analysis": "lemma31", "window": w, "t1": anchor, "t2": anchor + w,
                         "estimate": r_["estimate"], "std_error": r_["std_error"],
                         "n": r_["n_samples"]})
        wlens = np.array([r_["window"] for r_ in rows])
        ests = np.array([r_["estimate"] for r_ in rows])
        design = np.vstack([np.log(wlens), np.ones_like(wlens)]).T
        slope = float(np.linalg.lstsq(design, np.log(ests), rcond=None)[0][0])
        for r_ in rows:
            r_["slope"] = slope
        outputs.append(write_csv(out / "stochastic_report.csv", list(rows[0].keys()), rows))
        if _figures_enabled(args):
            from . import figures
            outputs.append(figures.window_scaling_figure(rows, slope, out / "lemma31.png"))

    elif analysis == "expmoment":
        rows = []
        unstable = False
        for n in config["scale_inv_n"]:
            r_ = st.exp_moment_mc(config["alpha"], grid, (config["y_law"], config["y_value"]),
                                  config["n_samples"], seed, scale_inv_n=n)
            unstable |= not r_["stable"]
            rows.append({"analysis": "expmoment", "alpha": config["alpha"], "scale_inv_n": n,
                         "estimate": r_["estimate"], "std_error": r_["std_error"],
                         "max_exponent": r_["max_exponent"],
                         "max_weight_fraction": r_["max_weight_fraction"],
                         "flag": "ok" if r_["stable"] else "UNSTABLE"})
        mono = all(rows[i]["estimate"] >= rows[i + 1]["estimate"]
                   - 2.0 * math.hypot(rows[i]["std_error"], rows[i + 1]["std_error"])
                   for i in range(len(rows) - 1))
        for r_ in rows:
            r_["pass"] = mono
        outputs.append(write_csv(out / "stochastic_report.csv", list(rows[0].keys()), rows))
        if _figures_enabled(args):
            from . import figures
            outputs.append(figures.estimates_figure(rows, "scale_inv_n", out / "expmoment.png"))
        code = UNSTABLE if unstable else (0 if mono else CHECK_FAIL)

    elif analysis == "novikov":
        r_ = st.novikov_probe(config["kappa"], config["n_samples"], config["n_particles"],
                              grid, initial, params, seed)
        rows = [{"analysis": "novikov", "kappa": config["kappa"],
                 "n_particles": config["n_particles"], "horizon": grid.horizon,
                 "estimate": r_["estimate"], "std_error": r_["std_error"],
                 "max_exponent": r_["max_exponent"],
                 "max_weight_fraction": r_["max_weight_fraction"],
                 "flag": "ok" if r_["stable"] else "UNSTABLE"}]
        outputs.append(write_csv(out / "stochastic_report.csv", list(rows[0].keys()), rows))
        code = 0 if r_["stable"] else UNSTABLE

    return code, outputs


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _cmd_bench(args, config, out: Path):
    from .particles import simulate

    grid = TimeGrid(config["dt"], config["n_steps"])
    half_grid = TimeGrid(config["dt"] / 2.0, 2 * config["n_steps"])
    initial = InitialLaw.from_spec(config["initial"])
    params = KernelParams(0.0, config["chi"])
    det_rows, time_rows = [], []
    failed = False
    for n in config["n_values"]:
        seed_n = rng.child_seed(config["seed"], n)
        t0 = time.perf_counter()
        on = simulate(n, grid, initial, params, seed_n, cutoff=True)
        t_on = time.perf_counter() - t0
        t0 = time.perf_counter()
        off = simulate(n, grid, initial, params, seed_n, cutoff=False)
        t_off = time.perf_counter() - t0
        diff = float(np.max(np.abs(on.positions[:, -1] - off.positions[:, -1])))
        ok = diff < config["position_tol"]
        failed |= not ok
        # time-step self-convergence with coupled noise: the dt run reuses the
        # pairwise-summed dt/2 increments, so the comparison is pathwise.
        # Reported as an observed delta; no rate is claimed.
        fine = simulate(n, half_grid, initial, params, seed_n, cutoff=True)
        coarse_incr = fine.increments[:, ::2] + fine.increments[:, 1::2]
        coupled = simulate(n, grid, initial, params, seed_n, cutoff=True,
                           initial_positions=fine.positions[:, 0], increments=coarse_incr)
        refine_diff = float(np.max(np.abs(coupled.positions[:, -1] - fine.positions[:, -1])))
        det_rows.append({"n_particles": n, "kernel_evals_cutoff_on": on.kernel_evals,
                         "kernel_evals_cutoff_off": off.kernel_evals,
                         "max_final_position_diff": diff,
                         "dt_refinement_diff": refine_diff, "pass": ok})
        time_rows.append({"n_particles": n, "seconds_cutoff_on": t_on,
                          "seconds_cutoff_off": t_off})
    outputs = [write_csv(out / "bench.csv", list(det_rows[0].keys()), det_rows)]
    volatile = [write_csv(out / "timings.csv", list(time_rows[0].keys()), time_rows)]
    if _figures_enabled(args):
        from . import figures
        volatile.append(figures.bench_figure(
            [{**d, **t} for d, t in zip(det_rows, time_rows)], out / "bench.png"))
    return (CHECK_FAIL if failed else 0), outputs, volatile


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

_RUNNERS = {
    "kernel-check": _cmd_kernel_check,
    "simulate": _cmd_simulate,
    "pde": _cmd_pde,
    "chaos": _cmd_chaos,
    "stochastic": _cmd_stochastic,
    "bench": _cmd_bench,
}


def _add_schema_flags(sub: argparse.ArgumentParser, command: str) -> None:
    for key, field in SCHEMAS[command].items():
        flag = "--" + key.replace("_", "-")
        if field.kind in ("int", "float", "str"):
            sub.add_argument(flag, dest=key, default=None,
                             type={"int": int, "float": float, "str": str}[field.kind],
                             help=field.describe or f"{field.kind} (default {field.default})")
        elif field.kind == "bool":
            sub.add_argument(flag, dest=key, default=None, choices=["true", "false"],
                             help=field.describe or f"bool (default {field.default})")
        elif field.kind in ("list_int", "list_float"):
            sub.add_argument(flag, dest=key, default=None,
                             help=(field.describe or "") + " (comma-separated)")
        elif field.kind == "dict":
            sub.add_argument(flag, dest=key, default=None,
                             help=(field.describe or "JSON object"))


def _collect_overrides(args, command: str) -> dict:
    out = {}
    for key, field in SCHEMAS[command].items():
        raw = getattr(args, key, None)
        if raw is None:
            continue
        if field.kind in ("list_int", "list_float"):
            cast = int if field.kind == "list_int" else float
            try:
                out[key] = [cast(tok) for tok in str(raw).split(",") if tok.strip()]
            except ValueError:
                raise ConfigError(f"flag {key}: cannot parse {raw!r} as a {field.kind}")
        elif field.kind == "dict":
            try:
                out[key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"flag {key}: invalid JSON ({exc})")
        else:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kschaos",
        description="simulation and verification toolkit for the 1-D chemotaxis particle system")
    parser.add_argument("--version", action="version", version=f"kschaos {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for command in _RUNNERS:
        sub = subs.add_parser(command)
        sub.add_argument("--config", default=None,
                         help="JSON config file or a previous run's manifest.json")
        sub.add_argument("--out", default=None,
                         help="output directory (default runs/<command>, env KSCHAOS_OUTDIR)")
        sub.add_argument("--workers", type=int, default=None,
                         help="worker pool size (env KSCHAOS_WORKERS)")
        sub.add_argument("--no-figures", action="store_true",
                         help="skip figure rendering")
        _add_schema_flags(sub, command)
        if command == "kernel-check":
            sub.add_argument("--p", dest="p_single", type=float, default=None,
                             help="shorthand for a single-entry p-values list")
        if command == "chaos":
            sub.add_argument("--resume", action="store_true",
                             help="reuse completed replica rows from <out>/replicas.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    started = datetime.now(timezone.utc)
    try:
        overrides = _collect_overrides(args, command)
        if command == "kernel-check" and getattr(args, "p_single", None) is not None:
            overrides["p_values"] = [args.p_single]
        config = build_config(command, args.config, overrides)
        out = _out_dir(args, command)
        result = _RUNNERS[command](args, config, out)
        if len(result) == 3:
            code, outputs, volatile = result
        else:
            code, outputs = result
            volatile = []
        entries = write_run_manifest(out, command, config, config.get("seed", 0),
                                     outputs, started,
                                     status={0: "ok", 1: "check-failed", 3: "unstable"}.get(code, "ok"))
        if volatile:
            _append_volatile(entries, volatile)
        print(f"kschaos {command}: exit {code}, outputs in {out}")
        return code
    except ConfigError as exc:
        print(f"kschaos {command}: config error: {exc}", file=sys.stderr)
        return CONFIG_FAIL
    except (DomainError, StateError) as exc:
        print(f"kschaos {command}: invalid input: {exc}", file=sys.stderr)
        return CONFIG_FAIL
    except InstabilityError as exc:
        print(f"kschaos {command}: numerical instability: {exc}", file=sys.stderr)
        return UNSTABLE
    except KschaosError as exc:
        print(f"kschaos {command}: {exc}", file=sys.stderr)
        return CHECK_FAIL


def _append_volatile(manifest_path: Path, volatile: list[Path]) -> None:
    from .reports import load_json, sha256_file
    doc = load_json(manifest_path)
    for p in sorted(volatile):
        p = Path(p)
        doc["outputs"].append({"path": p.name, "sha256": sha256_file(p),
                               "bytes": p.stat().st_size, "volatile": True})
    tmp = manifest_path.with_name(".manifest.json.tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, manifest_path)


if __name__ == "__main__":
    sys.exit(main())
