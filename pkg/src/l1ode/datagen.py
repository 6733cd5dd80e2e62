"""Desk-scale dataset generators and the zero-coordinate augmentation.

Classification labels are stored as integers 0..m-1; binary sets map to the
signs -1/+1 only inside :func:`separability_check`.  All generators are
deterministic under their seed, and every dataset round-trips losslessly
through CSV plus a JSON sidecar.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "augment_zero",
    "gen_circles",
    "gen_two_gaussians",
    "load_dataset",
    "save_dataset",
    "separability_check",
    "split_holdout",
]


@dataclass(eq=False)
class Dataset:
    """Points with labels; classification ys are (n,) ints, regression (n, m)."""

    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    kind: str
    m: int

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.xs, dtype=float))
        if self.kind == "classification":
            y = np.atleast_1d(np.asarray(self.ys, dtype=int))
            if y.ndim != 1 or y.shape[0] != X.shape[0]:
                raise ValueError("classification labels must be one int per point")
            if self.m < 2 or (y.size and (y.min() < 0 or y.max() >= self.m)):
                raise ValueError(f"class indices must lie in [0, {self.m})")
        elif self.kind == "regression":
            y = np.atleast_2d(np.asarray(self.ys, dtype=float))
            if y.shape != (X.shape[0], self.m):
                raise ValueError(f"regression targets must be (n, m) = ({X.shape[0]}, {self.m})")
        else:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if X.shape[0] < 1:
            raise ValueError("a dataset needs at least one point")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("dataset points must be pairwise distinct")
        self.xs = X
        self.ys = y

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]


def gen_two_gaussians(n: int, separation: float, seed: int) -> Dataset:
    """Two unit-variance blobs centered at (+-separation/2, 0), n/2 points each."""
    if n % 2 != 0:
        raise ValueError(f"n must be even, got {n}")
    if not separation > 0.0:
        raise ValueError(f"separation must be positive, got {separation}")
    rng = np.random.default_rng(seed)
    half = n // 2
    centers = np.array([[-separation / 2.0, 0.0], [separation / 2.0, 0.0]])
    ys = np.repeat([0, 1], half)
    xs = centers[ys] + rng.standard_normal((n, 2))
    return Dataset(xs=xs, ys=ys, kind="classification", m=2)


def gen_circles(n: int, radii: tuple[float, float], noise: float, seed: int) -> Dataset:
    """Inner circle (class 0) vs outer ring (class 1); radial Gaussian noise.

    Not linearly separable for small noise, which is what makes it a useful
    stand-in for flows that must bend the plane.
    """
    r_in, r_out = radii
    if not 0.0 < r_in < r_out:
        raise ValueError(f"radii must satisfy 0 < r_in < r_out, got {radii}")
    rng = np.random.default_rng(seed)
    n_in = n // 2
    n_out = n - n_in
    parts, labels = [], []
    for count, radius, label in ((n_in, r_in, 0), (n_out, r_out, 1)):
        angles = rng.uniform(0.0, 2.0 * np.pi, count)
        rad = radius + noise * rng.standard_normal(count)
        parts.append(np.column_stack([rad * np.cos(angles), rad * np.sin(angles)]))
        labels.append(np.full(count, label, dtype=int))
    return Dataset(
        xs=np.vstack(parts), ys=np.concatenate(labels), kind="classification", m=2
    )


def augment_zero(ds: Dataset) -> Dataset:
    """Append a zero coordinate to every point (d -> d+1).

    Lifting to one extra dimension lets a flow separate sets that are tangled
    in the original space; distinctness is preserved since the map is
    injective.  Applying it twice just adds two trailing zeros.
    """
    xs = np.hstack([ds.xs, np.zeros((ds.n, 1))])
    return Dataset(xs=xs, ys=ds.ys.copy(), kind=ds.kind, m=ds.m)


def split_holdout(ds: Dataset, frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split into (train, held-out) parts; frac is the held-out share."""
    if not 0.0 < frac < 1.0:
        raise ValueError(f"holdout fraction must lie in (0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = max(1, int(round(frac * ds.n)))
    if n_test >= ds.n:
        raise ValueError(f"holdout of {n_test} points would empty a dataset of {ds.n}")
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    mk = lambda idx: Dataset(xs=ds.xs[idx], ys=ds.ys[idx], kind=ds.kind, m=ds.m)
    return mk(train_idx), mk(test_idx)


def separability_check(ds: Dataset, max_iters: int = 10000) -> bool:
    """Perceptron-with-bias test for linear separability of a binary dataset.

    Returns True as soon as an epoch finishes without mistakes (a separating
    hyperplane exists); after ``max_iters`` epochs returns False, which is a
    heuristic "probably not separable" since the perceptron converges iff the
    data are separable but the cap truncates.
    """
    if ds.kind != "classification":
        raise ValueError("separability is defined for classification datasets")
    classes = np.unique(ds.ys)
    if classes.size != 2:
        raise ValueError(f"need exactly two classes, got {classes.size}")
    signs = np.where(ds.ys == classes[0], -1.0, 1.0)
    Xh = np.hstack([ds.xs, np.ones((ds.n, 1))])  # homogenized: bias folded in
    w = np.zeros(ds.d + 1)
    for _ in range(max_iters):
        mistakes = 0
        for xi, yi in zip(Xh, signs):
            if yi * (w @ xi) <= 0.0:
                w += yi * xi
                mistakes += 1
        if mistakes == 0:
            return True
    return False


def save_dataset(ds: Dataset, csv_path, meta: dict | None = None) -> None:
    """Write dataset.csv plus a JSON sidecar with kind, shape and provenance."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if ds.kind == "classification":
            w.writerow([f"x_{j}" for j in range(ds.d)] + ["y"])
            for xi, yi in zip(ds.xs, ds.ys):
                w.writerow([repr(float(v)) for v in xi] + [int(yi)])
        else:
            w.writerow([f"x_{j}" for j in range(ds.d)] + [f"y_{j}" for j in range(ds.m)])
            for xi, yi in zip(ds.xs, ds.ys):
                w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
    sidecar = {"kind": ds.kind, "d": ds.d, "n": ds.n, "m": ds.m}
    if meta:
        sidecar.update(meta)
    csv_path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n"
    )


def load_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    with csv_path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    d, m, kind = int(sidecar["d"]), int(sidecar["m"]), sidecar["kind"]
    body = rows[1:]
    xs = np.asarray([[float(v) for v in row[:d]] for row in body])
    if kind == "classification":
        ys = np.asarray([int(row[d]) for row in body], dtype=int)
    else:
        ys = np.asarray([[float(v) for v in row[d : d + m]] for row in body])
    return Dataset(xs=xs, ys=ys, kind=kind, m=m)
