"""Force regression from marker features by exact k-nearest-neighbors.

The training set is synthesized with the forward gel model: random
wrenches and contact centers produce marker displacement fields whose
central-39 features pair with the ground-truth forces.  Estimation
averages the forces of the K nearest training features under Euclidean
distance.

``knn_estimate`` is the production path (vectorized scan over the
feature matrix).  ``reference_estimate`` answers the same query through
a deliberately separate route (per-row accumulation, library sort) so
the two can cross-check each other; both break distance ties by lower
sample index and share the final averaging expression, which makes
agreement exact rather than approximate.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .frames import Wrench
from .gelpad import GelPadModel, marker_displacements

DEFAULT_RANGES = ((-3.0, 3.0), (-3.0, 3.0), (0.0, 10.0))  # F_x, F_y, F_n intervals, N


@dataclass
class KnnConfig:
    k: int = 50
    weighted: bool = False  # inverse-distance weighting, off by default

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass
class TrainingSet:
    features: np.ndarray  # (n, 78) mm
    forces: np.ndarray  # (n, 3) N
    seed: int = 0
    sigma_m: float = 0.0
    ranges: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_RANGES))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.forces = np.asarray(self.forces, dtype=float)
        if self.features.ndim != 2 or self.features.shape[1] != 78:
            raise ValueError("features must be (n, 78)")
        if self.forces.shape != (len(self.features), 3):
            raise ValueError("forces must be (n, 3)")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.forces))):
            raise ValueError("training data must be finite")
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(3, 2)

    def __len__(self) -> int:
        return len(self.features)

    def save_csv(self, path: str) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self._serialize())

    def _serialize(self) -> str:
        buf = io.StringIO()
        rng_txt = ",".join(f"{v:.17g}" for v in self.ranges.ravel())
        buf.write(f"# seed={self.seed} sigma_m={self.sigma_m:.17g} ranges={rng_txt}\n")
        cols = [f"f{i}" for i in range(78)] + ["Fx", "Fy", "Fn"]
        buf.write(",".join(cols) + "\n")
        for feat, force in zip(self.features, self.forces):
            row = np.concatenate([feat, force])
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def load_csv(cls, path: str) -> "TrainingSet":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("#"):
                raise ValueError("missing metadata header")
            meta = dict(item.split("=", 1) for item in header[1:].split())
            fh.readline()  # column names
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape[1] != 81:
            raise ValueError("expected 81 columns")
        ranges = np.array([float(v) for v in meta["ranges"].split(",")]).reshape(3, 2)
        return cls(
            data[:, :78],
            data[:, 78:],
            seed=int(meta["seed"]),
            sigma_m=float(meta["sigma_m"]),
            ranges=ranges,
        )


def generate_dataset(
    pad: GelPadModel,
    ranges: Optional[Sequence[Sequence[float]]] = None,
    n: int = 10000,
    seed: int = 0,
) -> TrainingSet:
    """Sample (feature, force) pairs from the forward gel model.

    Forces are uniform per axis over ``ranges``; contact centers are
    uniform over the central third of the pad field of view.  One rng
    seeded by ``seed`` drives everything, so the set is reproducible.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng_arr = np.asarray(ranges if ranges is not None else DEFAULT_RANGES, dtype=float).reshape(3, 2)
    if rng_arr[2, 0] < 0.0:
        raise ValueError("normal-force range must be non-negative")
    if np.any(rng_arr[:, 1] < rng_arr[:, 0]):
        raise ValueError("ranges must be ordered (low, high)")
    rng = np.random.default_rng(seed)
    forces = rng.uniform(rng_arr[:, 0], rng_arr[:, 1], size=(n, 3))
    # contact centers roam the central third of the marker grid
    half_w = (pad.cols - 1) * pad.pitch_mm / 6.0
    half_h = (pad.rows - 1) * pad.pitch_mm / 6.0
    centers = rng.uniform([-half_w, -half_h], [half_w, half_h], size=(n, 2))
    central = pad.central_indices()
    feats = np.empty((n, 2 * len(central)))
    for i in range(n):
        contact = Wrench(forces[i], np.zeros(3), "E")
        fld = marker_displacements(contact, pad, centers[i], rng=rng)
        feats[i] = fld.displacement[central].ravel()
    return TrainingSet(feats, forces, seed=seed, sigma_m=pad.sigma_m, ranges=rng_arr)


def knn_estimate(feature: np.ndarray, train: TrainingSet, cfg: KnnConfig) -> np.ndarray:
    """Mean force of the K nearest training features (production path)."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if cfg.k > len(train):
        raise ValueError("k exceeds the training set size")
    q = np.asarray(feature, dtype=float).reshape(78)
    diff = train.features - q
    # pairwise-summed squares; the reference route reduces each row the
    # same way, which keeps the two routes comparable bit for bit
    d2 = np.sum(diff * diff, axis=1)
    order = np.lexsort((np.arange(len(d2)), d2))[: cfg.k]
    return _aggregate(train.forces, d2, order, cfg)


def reference_estimate(feature: np.ndarray, train: TrainingSet, cfg: KnnConfig) -> np.ndarray:
    """Same query via an independent linear scan (cross-check oracle)."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if cfg.k > len(train):
        raise ValueError("k exceeds the training set size")
    q = np.asarray(feature, dtype=float).reshape(78)
    d2 = np.array([float(np.sum((row - q) ** 2)) for row in train.features])
    order = sorted(range(len(d2)), key=lambda i: (d2[i], i))[: cfg.k]
    return _aggregate(train.forces, d2, np.asarray(order), cfg)


def _aggregate(forces: np.ndarray, d2: np.ndarray, order: np.ndarray, cfg: KnnConfig) -> np.ndarray:
    chosen = forces[order]
    if not cfg.weighted:
        return chosen.mean(axis=0)
    w = 1.0 / (np.sqrt(d2[order]) + 1e-9)
    return (w[:, None] * chosen).sum(axis=0) / w.sum()
