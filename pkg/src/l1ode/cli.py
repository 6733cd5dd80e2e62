"""Experiment runner: train, sweep, verify, plot, analyze.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 property-suite failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import SparsityReport, check_theorem_bounds, sparsity_report, turnpike_check
from .integrator import DivergenceError, TimeGrid, integrate, read_control_csv
from .objective import ObjectiveSpec, error_E, functional_J, margin
from .optimizer import train
from .runconfig import ConfigError, ResolvedRun, load_config, resolve_config
from .runio import dump_json, load_metrics_csv, write_history_csv, write_metrics_csv
from .verify import SUITES, run_suite
from . import svgplot

__all__ = ["cmd_analyze", "cmd_plot", "cmd_sweep", "cmd_train", "cmd_verify", "main"]


def _holdout_metrics(run: ResolvedRun, ctrl, idx: int) -> dict:
    """Generalization convenience: drive the held-out points through the
    trained flow and report their error at T* and at T."""
    held = run.holdout
    spec = replace(run.spec, n=held.n)
    traj = integrate(spec, held.xs, ctrl, run.train_cfg.scheme)
    obj = ObjectiveSpec(
        loss=run.objective.loss,
        output=run.objective.output,
        labels=held.ys,
        M=run.objective.M,
        quadrature=run.objective.quadrature,
        penalty_weight=run.objective.penalty_weight,
    )
    out = {
        "n": held.n,
        "E_at_Tstar": error_E(traj.states[idx], obj),
        "E_at_T": error_E(traj.states[-1], obj),
    }
    if obj.loss == "cross_entropy":
        Z = obj.output(traj.states[idx])
        out["accuracy_at_Tstar"] = float(np.mean(Z.argmax(axis=1) == obj.labels))
    return out


def _build_report(run: ResolvedRun, traj, ctrl) -> dict:
    rep = sparsity_report(
        run.spec, run.x0, traj, ctrl, run.objective, scheme=run.train_cfg.scheme
    )
    J, running, penalty = functional_J(traj, ctrl, run.objective)
    report = rep.to_dict()
    report["summary"] = {"J": J, "running": running, "penalty": penalty, "Tstar": rep.Tstar}
    if run.objective.loss == "cross_entropy":
        report["margin_at_Tstar"] = margin(
            traj.states[rep.idx], run.objective.output, run.objective.labels
        )
    if run.turnpike_p is not None:
        tp = turnpike_check(
            run.spec, run.x0, run.dataset.ys, run.turnpike_p, traj, ctrl, run.objective.M
        )
        report["turnpike"] = tp.to_dict()
    if run.holdout is not None:
        report["holdout"] = _holdout_metrics(run, ctrl, rep.idx)
    return report


def _execute_run(run: ResolvedRun, checkpoint_every: int = 0) -> dict:
    """Train per the resolved config and write the full run directory."""
    run.out.mkdir(parents=True, exist_ok=True)
    result = train(
        run.spec, run.x0, run.grid, run.objective, run.train_cfg,
        checkpoint_every=checkpoint_every, checkpoint_dir=run.out,
    )
    report = _build_report(run, result.traj, result.ctrl)
    dump_json(run.out / "config.json", run.raw)
    write_history_csv(run.out / "history.csv", result.history)
    result.ctrl.to_csv(run.out / "controls.csv")
    result.traj.to_csv(run.out / "trajectory.csv")
    write_metrics_csv(run.out / "metrics.csv", result.traj, result.ctrl, run.objective)
    dump_json(run.out / "report.json", report)
    return report


def cmd_train(config: str, out: str | None = None, seed: int | None = None,
              dataset_n: int | None = None, checkpoint_every: int = 0) -> Path:
    run = resolve_config(load_config(config), out=out, seed=seed, dataset_n=dataset_n)
    report = _execute_run(run, checkpoint_every=checkpoint_every)
    print(
        f"run written to {run.out}: Tstar={report['Tstar']:.6g} "
        f"E(Tstar)={report['E_at_Tstar']:.6g} J={report['summary']['J']:.6g}"
    )
    return run.out


def _parse_axis(axis: str) -> tuple[str, list[float]]:
    try:
        key, vals = axis.split("=", 1)
        values = [float(v) for v in vals.split(",") if v]
    except ValueError as err:
        raise ConfigError(f"--axis must look like T=1,2,4,8 or M=2,4,8,16, got {axis!r}") from err
    key = key.strip()
    if key not in ("T", "M") or not values:
        raise ConfigError(f"--axis must sweep T or M over a nonempty list, got {axis!r}")
    return key, values


def _sweep_variant(raw: dict, key: str, value: float) -> dict:
    cfg = json.loads(json.dumps(raw))
    if key == "T":
        base_T = float(cfg["grid"]["T"])
        base_nt = int(cfg["grid"]["n_t"])
        n_t = max(1, int(round(base_nt * value / base_T)))
        cfg["grid"] = {"T": value, "n_t": n_t}  # keep dt fixed across the sweep
    else:
        cfg.setdefault("objective", {})["M"] = value
    return cfg


def _sweep_worker(args: tuple[dict, str, int | None]) -> tuple[dict | None, str | None]:
    cfg, out_dir, seed = args
    try:
        run = resolve_config(cfg, out=out_dir, seed=seed)
        return _execute_run(run), None
    except Exception as err:  # noqa: BLE001 - per-run failures must not kill the sweep
        return None, f"{type(err).__name__}: {err}"


def cmd_sweep(config: str, axis: str, out: str | None = None, seed: int | None = None,
              jobs: int = 1, dataset_n: int | None = None) -> Path:
    raw = load_config(config)
    key, values = _parse_axis(axis)
    base = resolve_config(raw, dataset_n=dataset_n)  # validate before spending time
    sweep_dir = Path(out) if out else Path(f"{base.out}_sweep_{key}")
    sweep_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for v in values:
        cfg = _sweep_variant(raw, key, v)
        if dataset_n is not None:
            cfg["dataset"]["n"] = dataset_n
        tasks.append((cfg, str(sweep_dir / f"{key}={v:g}"), seed))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_worker, tasks))
    else:
        outcomes = [_sweep_worker(t) for t in tasks]

    rows, runs, failures = [], [], []
    for v, (report, err) in zip(values, outcomes):
        T = v if key == "T" else float(raw["grid"]["T"])
        M = v if key == "M" else float(raw["objective"]["M"])
        if err is not None:
            failures.append({"value": v, "error": err})
            rows.append((T, M, None, None, None))
            continue
        rep = SparsityReport.from_dict(report)
        rows.append((T, M, rep.Tstar, rep.E_at_Tstar, rep.E_at_Tstar * T))
        runs.append((T, M, rep))

    with (sweep_dir / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "M", "Tstar", "E_at_Tstar", "product_ET"])
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) for v in row])

    bounds: dict = {"axis": key, "values": values, "failures": failures}
    if len(runs) >= 2:
        bounds.update(check_theorem_bounds(runs))
    else:
        bounds["note"] = "fewer than two successful runs; no bound fit"
    dump_json(sweep_dir / "bounds.json", bounds)
    print(f"sweep written to {sweep_dir}: {len(runs)} runs ok, {len(failures)} failed")
    return sweep_dir


def cmd_verify(suite: str, seed: int = 0) -> int:
    ok, lines = run_suite(suite, seed)
    for line in lines:
        print(f"  {line}")
    print(f"{'PASS' if ok else 'FAIL'} suite {suite}")
    return 0 if ok else 3


def _require(directory: Path, names: list[str]) -> None:
    missing = [n for n in names if not (directory / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{directory} is missing required files: {', '.join(missing)}")


def _plot_run(directory: Path) -> list[Path]:
    _require(directory, ["metrics.csv", "config.json", "report.json"])
    cfg = json.loads((directory / "config.json").read_text())
    report = json.loads((directory / "report.json").read_text())
    ts, Es, norms = load_metrics_csv(directory / "metrics.csv")
    M = float(cfg["objective"]["M"])
    Tstar = float(report["Tstar"])
    written = []

    p = directory / "u_l1_vs_t.svg"
    svgplot.line_plot(
        p,
        [{"x": ts, "y": np.append(norms, norms[-1]), "label": "||u(t)||_1", "step": True}],
        title="Control l1 norm over time",
        xlabel="t", ylabel="||u||_1",
        hlines=[("M", M)], vlines=[("T*", Tstar)],
    )
    written.append(p)

    p = directory / "error_vs_t.svg"
    svgplot.line_plot(
        p,
        [{"x": ts, "y": Es, "label": "E(x(t))"}],
        title="Empirical error over time (log scale)",
        xlabel="t", ylabel="log10 E",
        ylog=True, vlines=[("T*", Tstar)],
    )
    written.append(p)

    dyn = cfg["dynamics"]
    if dyn["form"] in ("inside", "outside") and (directory / "controls.csv").is_file():
        grid = TimeGrid(float(cfg["grid"]["T"]), int(cfg["grid"]["n_t"]))
        ctrl = read_control_csv(directory / "controls.csv", grid)
        d = int(dyn["d"])
        n_snaps = min(6, grid.n_t)
        for k in np.linspace(0, grid.n_t - 1, n_snaps).astype(int):
            w = ctrl.points[k, : d * d].reshape(d, d)
            p = directory / f"w_heatmap_t{k}.svg"
            svgplot.heatmap(p, w, title=f"w(t) at t = {k * grid.dt:.3g}")
            written.append(p)
    return written


def _plot_sweep(directory: Path) -> list[Path]:
    _require(directory, ["sweep.csv"])
    with (directory / "sweep.csv").open(newline="") as fh:
        rows = [r for r in csv.reader(fh)][1:]
    good = [r for r in rows if r[2] != ""]
    if not good:
        raise FileNotFoundError(f"{directory}/sweep.csv holds no successful runs to plot")
    T = np.array([float(r[0]) for r in good])
    E = np.array([float(r[3]) for r in good])
    order = np.argsort(T)
    p = directory / "decay_vs_T.svg"
    ref = E[order][0] * T[order][0] / T[order]  # c/T guide through the first point
    svgplot.line_plot(
        p,
        [
            {"x": T[order], "y": E[order], "label": "E(x(T*))"},
            {"x": T[order], "y": ref, "label": "c/T reference"},
        ],
        title="Error at the stopping time vs horizon",
        xlabel="T", ylabel="log10 E", ylog=True, markers=True,
    )
    return [p]


def cmd_plot(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"no such run directory: {d}")
    written = _plot_sweep(d) if (d / "sweep.csv").is_file() else _plot_run(d)
    for p in written:
        print(f"wrote {p}")
    return written


def cmd_analyze(directory: str) -> Path:
    """Recompute report.json from the artifacts in a run directory."""
    d = Path(directory)
    _require(d, ["config.json", "controls.csv"])
    raw = json.loads((d / "config.json").read_text())
    run = resolve_config(raw, out=str(d))
    ctrl = read_control_csv(d / "controls.csv", run.grid)
    traj = integrate(run.spec, run.x0, ctrl, run.train_cfg.scheme)
    report = _build_report(run, traj, ctrl)
    dump_json(d / "report.json", report)
    print(f"report refreshed: Tstar={report['Tstar']:.6g} E(Tstar)={report['E_at_Tstar']:.6g}")
    return d


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="l1ode", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run from a config file")
    p.add_argument("config", help="config path or bundled name (fig1, lsq1d, turnpike1d)")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--seed", type=int, default=None, help="training seed override")
    p.add_argument("--dataset-n", type=int, default=None, help="dataset size override")
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="snapshot the control as JSON every N iterations")

    p = sub.add_parser("sweep", help="train one run per axis value and fit bounds")
    p.add_argument("config")
    p.add_argument("--axis", required=True, help="T=1,2,4,8 or M=2,4,8,16")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.add_argument("--dataset-n", type=int, default=None)

    p = sub.add_parser("verify", help="run a randomized property suite")
    p.add_argument("suite", help=f"one of: {', '.join(sorted(SUITES))}")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plot", help="emit SVG figures for a run or sweep directory")
    p.add_argument("directory")

    p = sub.add_parser("analyze", help="recompute report.json for a run directory")
    p.add_argument("directory")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cmd_train(args.config, args.out, args.seed, args.dataset_n, args.checkpoint_every)
            return 0
        if args.command == "sweep":
            cmd_sweep(args.config, args.axis, args.out, args.seed, args.jobs, args.dataset_n)
            return 0
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed)
        if args.command == "plot":
            cmd_plot(args.directory)
            return 0
        if args.command == "analyze":
            cmd_analyze(args.directory)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DivergenceError, FloatingPointError, ArithmeticError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
