"""Synthetic datasets and the CSV interchange format.

Datasets are written as a CSV with header ``f0..f{d-1}[,label]`` plus a
JSON sidecar (same path with ``.meta.json`` appended) recording the
generator parameters. Floats are serialized with %.17g so a round trip
reproduces the in-memory matrix exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "gen_dataset", "save_dataset", "load_dataset"]

DATASET_KINDS = ("moons", "rings", "blobs")


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray | None
    generator_seed: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", f)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (f.shape[0],):
                raise ValueError("labels length must match the number of rows")
            uniq = np.unique(lab)
            if not np.array_equal(uniq, np.arange(uniq.size)):
                raise ValueError("labels must be 0..K-1 with every class nonempty")
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _moons(n: int, noise: float, rng: np.random.Generator):
    n_top = n // 2
    n_bot = n - n_top
    t_top = np.linspace(0.0, np.pi, n_top)
    t_bot = np.linspace(0.0, np.pi, n_bot)
    x = np.concatenate(
        [
            np.column_stack([np.cos(t_top), np.sin(t_top)]),
            np.column_stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)]),
        ]
    )
    x += noise * rng.standard_normal(x.shape)
    y = np.concatenate([np.zeros(n_top, dtype=np.int64), np.ones(n_bot, dtype=np.int64)])
    return x, y


def _rings(n: int, noise: float, rng: np.random.Generator, radii=(1.0, 3.0)):
    n_in = n // 2
    n_out = n - n_in
    parts, labels = [], []
    for cls, (m, r) in enumerate(zip((n_in, n_out), radii)):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
        rad = r + noise * rng.standard_normal(m)
        parts.append(np.column_stack([rad * np.cos(theta), rad * np.sin(theta)]))
        labels.append(np.full(m, cls, dtype=np.int64))
    return np.concatenate(parts), np.concatenate(labels)


def _blobs(n, noise, rng, k=4, separation=10.0, dim=2):
    centers = rng.standard_normal((k, dim))
    dists = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    min_dist = dists[~np.eye(k, dtype=bool)].min()
    if min_dist <= 0:
        raise ValueError("degenerate blob centers")
    centers *= separation / min_dist
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    parts, labels = [], []
    for cls, m in enumerate(counts):
        parts.append(centers[cls] + noise * rng.standard_normal((m, dim)))
        labels.append(np.full(m, cls, dtype=np.int64))
    return np.concatenate(parts), np.concatenate(labels)


def gen_dataset(
    kind: str,
    n: int,
    noise: float,
    seed: int,
    k: int = 4,
    separation: float = 10.0,
    dim: int = 2,
) -> Dataset:
    """Generate a labeled synthetic dataset; deterministic per seed."""
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}, expected one of {DATASET_KINDS}")
    if n < 10:
        raise ValueError("n must be >= 10")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    if kind == "moons":
        x, y = _moons(n, noise, rng)
    elif kind == "rings":
        x, y = _rings(n, noise, rng)
    else:
        if k < 2 or k > n:
            raise ValueError("blobs need 2 <= k <= n")
        x, y = _blobs(n, noise, rng, k=k, separation=separation, dim=dim)
    return Dataset(name=f"{kind}-n{n}-s{seed}", features=x, labels=y, generator_seed=seed)


def save_dataset(ds: Dataset, path) -> None:
    """Write the CSV plus its JSON sidecar."""
    path = Path(path)
    d = ds.dim
    header = ",".join(f"f{i}" for i in range(d))
    with path.open("w", newline="\n") as fh:
        if ds.labels is not None:
            fh.write(header + ",label\n")
            for row, lab in zip(ds.features, ds.labels):
                fh.write(",".join(f"{v:.17g}" for v in row) + f",{lab}\n")
        else:
            fh.write(header + "\n")
            for row in ds.features:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    meta = {
        "name": ds.name,
        "n": ds.n,
        "dim": d,
        "has_labels": ds.labels is not None,
        "generator_seed": ds.generator_seed,
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_dataset(path) -> Dataset:
    """Read a dataset CSV (sidecar optional)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    has_labels = header[-1] == "label"
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    seed = -1
    name = path.stem
    meta_path = Path(str(path) + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        seed = meta.get("generator_seed", -1)
        name = meta.get("name", name)
    if has_labels:
        return Dataset(
            name=name,
            features=raw[:, :-1],
            labels=raw[:, -1].astype(np.int64),
            generator_seed=seed,
        )
    return Dataset(name=name, features=raw, labels=None, generator_seed=seed)
