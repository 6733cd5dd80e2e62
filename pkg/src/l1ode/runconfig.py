"""Run configuration: JSON schema, resolution and reproducibility.

A config file fully determines a run: dataset (generator + seed or a CSV
path), dynamics, objective, grid and training hyperparameters.  Resolution
materializes every derived quantity (sample count, augmented dimension,
explicit readout matrices), so the resolved config written into the run
directory reproduces the run on its own.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .datagen import (
    Dataset,
    augment_zero,
    gen_circles,
    gen_two_gaussians,
    load_dataset,
    split_holdout,
)
from .dynamics import DynamicsSpec, spec_from_dict, spec_to_dict
from .integrator import TimeGrid
from .objective import ObjectiveSpec, OutputMap, output_from_dict, output_to_dict
from .optimizer import TrainConfig

__all__ = ["ResolvedRun", "bundled_config_path", "load_config", "resolve_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; message names the field."""


@dataclass
class ResolvedRun:
    raw: dict = field(repr=False)
    dataset: Dataset = field(repr=False)
    spec: DynamicsSpec
    x0: np.ndarray = field(repr=False)
    grid: TimeGrid
    objective: ObjectiveSpec = field(repr=False)
    train_cfg: TrainConfig
    out: Path
    turnpike_p: int | None = None
    name: str = "run"
    holdout: Dataset | None = field(repr=False, default=None)


def bundled_config_path(name: str) -> Path | None:
    """Path of a reference config shipped with the package, or None."""
    fname = name if name.endswith(".json") else name + ".json"
    ref = resources.files("l1ode") / "configs" / fname
    try:
        if ref.is_file():
            return Path(str(ref))
    except (OSError, AttributeError):
        return None
    return None


def load_config(path_or_name: str) -> dict:
    """Read a config file; bare names fall back to the bundled references."""
    p = Path(path_or_name)
    if not p.is_file():
        bundled = bundled_config_path(path_or_name)
        if bundled is None:
            raise ConfigError(f"config not found: {path_or_name!r} (no such file or bundled name)")
        p = bundled
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {p} is not valid JSON: {err}") from err


def _build_dataset(section: dict) -> tuple[Dataset, Dataset | None, dict]:
    if "path" in section:
        ds = load_dataset(section["path"])
        resolved = dict(section)
    else:
        gen = section.get("generator")
        seed = int(section.get("seed", 0))
        n = int(section.get("n", 200))
        if gen == "circles":
            ds = gen_circles(
                n,
                (float(section.get("r_in", 1.0)), float(section.get("r_out", 3.0))),
                float(section.get("noise", 0.05)),
                seed,
            )
        elif gen == "two_gaussians":
            ds = gen_two_gaussians(n, float(section.get("separation", 6.0)), seed)
        elif gen == "points":
            xs = np.asarray(section["xs"], dtype=float)
            ys = np.asarray(section["ys"], dtype=float)
            ds = Dataset(xs=xs, ys=ys, kind="regression", m=ys.shape[1] if ys.ndim > 1 else 1)
        else:
            raise ConfigError(f"dataset.generator must be circles|two_gaussians|points, got {gen!r}")
        resolved = dict(section)
        resolved.setdefault("n", ds.n)
    if section.get("augment", False):
        ds = augment_zero(ds)
    held = None
    if "holdout" in section:
        # seeded generalization split: the held-out part never enters training
        ds, held = split_holdout(ds, float(section["holdout"]), int(section.get("seed", 0)))
    return ds, held, resolved


def _build_output(section: dict, d: int) -> OutputMap:
    kind = section.get("kind")
    if kind == "pm_last":
        # two logits +- kappa * (last coordinate): the lifted axis carries the label
        kappa = float(section.get("scale", 1.0))
        P = np.zeros((2, d))
        P[0, d - 1] = kappa
        P[1, d - 1] = -kappa
        return OutputMap(P, np.zeros(2))
    if kind == "identity":
        return OutputMap(np.eye(d), np.zeros(d))
    if "P" in section:
        return output_from_dict(section)
    raise ConfigError("objective.output needs explicit P/q or kind pm_last|identity")


def resolve_config(
    raw: dict,
    *,
    out: str | None = None,
    seed: int | None = None,
    dataset_n: int | None = None,
) -> ResolvedRun:
    """Validate and materialize a raw config dict into run-ready objects."""
    cfg = json.loads(json.dumps(raw))  # deep copy; keeps the original pristine
    for key in ("dataset", "dynamics", "objective", "grid", "train"):
        if key not in cfg:
            raise ConfigError(f"missing config section {key!r}")

    ds_section = dict(cfg["dataset"])
    if dataset_n is not None:
        ds_section["n"] = int(dataset_n)
    dataset, holdout, ds_resolved = _build_dataset(ds_section)
    cfg["dataset"] = ds_resolved

    dyn = dict(cfg["dynamics"])
    dyn.setdefault("n", dataset.n)
    dyn.setdefault("d", dataset.d)
    if int(dyn["n"]) != dataset.n:
        raise ConfigError(f"dynamics.n = {dyn['n']} but the dataset has {dataset.n} points")
    if int(dyn["d"]) != dataset.d:
        raise ConfigError(
            f"dynamics.d = {dyn['d']} but the dataset dimension is {dataset.d} "
            f"(augment adds one)"
        )
    try:
        spec = spec_from_dict(dyn)
    except (KeyError, ValueError) as err:
        raise ConfigError(f"dynamics: {err}") from err
    cfg["dynamics"] = spec_to_dict(spec)

    obj = dict(cfg["objective"])
    output = _build_output(dict(obj.get("output", {})), spec.d)
    obj["output"] = output_to_dict(output)
    loss = obj.get("loss", "least_squares")
    if loss == "cross_entropy" and dataset.kind != "classification":
        raise ConfigError("objective.loss cross_entropy needs a classification dataset")
    if loss == "least_squares" and dataset.kind != "regression":
        raise ConfigError("objective.loss least_squares needs a regression dataset (targets)")
    if dataset.kind == "classification" and output.m != dataset.m:
        raise ConfigError(f"output has {output.m} rows but the dataset has {dataset.m} classes")
    if dataset.kind == "regression" and output.m != dataset.m:
        raise ConfigError(f"output has {output.m} rows but targets have dimension {dataset.m}")
    M = float(obj.get("M", 1.0))
    quadrature = obj.get("quadrature", "left")
    penalty_weight = float(obj.get("penalty_weight", 1.0))
    try:
        objective = ObjectiveSpec(
            loss=loss,
            output=output,
            labels=dataset.ys,
            M=M,
            quadrature=quadrature,
            penalty_weight=penalty_weight,
        )
    except ValueError as err:
        raise ConfigError(f"objective: {err}") from err
    obj.update({"loss": loss, "M": M, "quadrature": quadrature, "penalty_weight": penalty_weight})
    cfg["objective"] = obj

    grid_raw = cfg["grid"]
    try:
        grid = TimeGrid(float(grid_raw["T"]), int(grid_raw["n_t"]))
    except (KeyError, ValueError) as err:
        raise ConfigError(f"grid: {err}") from err
    cfg["grid"] = {"T": grid.T, "n_t": grid.n_t}

    tr = dict(cfg["train"])
    if seed is not None:
        tr["seed"] = int(seed)
    if "M" in tr or "penalty_weight" in tr:
        raise ConfigError("M and penalty_weight belong to the objective section")
    known = {
        "lr", "beta1", "beta2", "eps", "iters", "seed",
        "init", "init_scale", "scheme", "quadrature",
    }
    unknown = set(tr) - known
    if unknown:
        raise ConfigError(f"unknown train fields: {sorted(unknown)}")
    try:
        train_cfg = TrainConfig(
            lr=float(tr.get("lr", 0.01)),
            beta1=float(tr.get("beta1", 0.9)),
            beta2=float(tr.get("beta2", 0.999)),
            eps=float(tr.get("eps", 1e-8)),
            iters=int(tr.get("iters", 1000)),
            seed=int(tr.get("seed", 0)),
            M=M,
            penalty_weight=penalty_weight,
            init=tr.get("init", "uniform_small"),
            init_scale=tr.get("init_scale"),
            scheme=tr.get("scheme", "euler"),
            quadrature=quadrature,
        )
    except ValueError as err:
        raise ConfigError(f"train: {err}") from err
    cfg["train"] = {
        "lr": train_cfg.lr, "beta1": train_cfg.beta1, "beta2": train_cfg.beta2,
        "eps": train_cfg.eps, "iters": train_cfg.iters, "seed": train_cfg.seed,
        "init": train_cfg.init, "init_scale": train_cfg.init_scale,
        "scheme": train_cfg.scheme, "quadrature": train_cfg.quadrature,
    }

    turnpike_p = None
    if "turnpike" in cfg:
        turnpike_p = int(cfg["turnpike"].get("p", 2))
        if spec.form != "driftless":
            raise ConfigError("turnpike diagnostics need driftless dynamics")
        if turnpike_p not in (1, 2):
            raise ConfigError(f"turnpike.p must be 1 or 2, got {turnpike_p}")
        if not (np.array_equal(output.P, np.eye(spec.d)) and not output.q.any()):
            raise ConfigError("turnpike diagnostics need the identity readout (targets in state space)")

    name = cfg.get("name", "run")
    out_dir = Path(out) if out is not None else Path(cfg.get("out", f"runs/{name}"))
    cfg["out"] = str(out_dir)
    return ResolvedRun(
        raw=cfg,
        dataset=dataset,
        spec=spec,
        x0=dataset.xs,
        grid=grid,
        objective=objective,
        train_cfg=train_cfg,
        out=out_dir,
        turnpike_p=turnpike_p,
        name=name,
        holdout=holdout,
    )
