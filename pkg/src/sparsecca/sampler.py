"""Gaussian sampling from a CCA model and sample covariance blocks.

Random numbers come from numpy's counter-based Philox generator keyed by
``SeedSequence([seed, SAMPLE_STREAM])``; normals use numpy's ziggurat
sampler. Model construction uses a different stream key, so one integer
seed can drive both without overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelConstructionError
from .matcore import read_matrix_csv, write_matrix_csv
from .model import CcaModel, Covariance

SAMPLE_STREAM = 1

SampleCov = Covariance


@dataclass(frozen=True, eq=False)
class DataSet:
    x: np.ndarray
    y: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"x {self.x.shape} and y {self.y.shape} must share a row count")
        if self.x.shape[0] < 2:
            raise ValueError("a data set needs at least two observations")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def export(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(directory / "x.csv", self.x)
        write_matrix_csv(directory / "y.csv", self.y)

    @classmethod
    def load(cls, directory, p: int | None = None, m: int | None = None) -> "DataSet":
        directory = Path(directory)
        x = read_matrix_csv(directory / "x.csv")
        y = read_matrix_csv(directory / "y.csv")
        if p is not None and x.shape[1] != p:
            raise ValueError(f"x.csv has {x.shape[1]} columns, model expects p={p}")
        if m is not None and y.shape[1] != m:
            raise ValueError(f"y.csv has {y.shape[1]} columns, model expects m={m}")
        return cls(x, y)


def make_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def joint_factor(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L L' = sigma``, falling back to a symmetric root
    when ``sigma`` is PSD but rank deficient."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(sigma)
        if w[0] < -1e-8 * max(1.0, w[-1]):
            raise ModelConstructionError(
                f"joint covariance is not PSD (min eigenvalue {w[0]:.3e})"
            ) from None
        return Q * np.sqrt(np.clip(w, 0.0, None))


def sample(model: CcaModel, n: int, seed: int) -> DataSet:
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    L = joint_factor(model.sigma_joint)
    z = make_rng(seed, SAMPLE_STREAM).standard_normal((n, model.p + model.m))
    w = z @ L.T
    return DataSet(w[:, : model.p].copy(), w[:, model.p :].copy(), seed)


def sample_covariance(data: DataSet) -> Covariance:
    """Uncentered second moments ``(1/n) sum z_i z_i'`` split into blocks."""
    z = np.hstack([data.x, data.y])
    S = z.T @ z / data.n
    S = 0.5 * (S + S.T)
    p = data.x.shape[1]
    return Covariance(S[:p, :p], S[p:, p:], S[:p, p:], data.n)
