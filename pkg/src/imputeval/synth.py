"""Synthetic mixed-type tables for simulation runs.

Continuous columns are multivariate normal (Cholesky of the covariance built
from a correlation matrix and standard deviations). Each categorical column
draws its level from a multinomial-logit model whose baseline is the given
level probabilities; an optional continuous driver shifts mass towards the
higher levels as the standardized driver grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .frame import ColumnSchema, DataTable, Kind

__all__ = ["CategoricalSpec", "SyntheticSpec", "default_spec", "generate_synthetic"]


@dataclass(frozen=True)
class CategoricalSpec:
    name: str
    probs: tuple[float, ...]
    driver: Optional[str] = None
    strength: float = 0.0
    labels: tuple[str, ...] = ()
    ordinal: bool = False

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.size < 1 or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"{self.name!r}: level probabilities must be positive and sum to 1")
        if self.labels and len(self.labels) != p.size:
            raise ValueError(f"{self.name!r}: one label per level required")

    @property
    def level_labels(self) -> tuple[str, ...]:
        return self.labels or tuple(f"L{k + 1}" for k in range(len(self.probs)))


@dataclass(frozen=True)
class SyntheticSpec:
    n_rows: int
    names: tuple[str, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]
    corr: tuple[tuple[float, ...], ...]
    categorical: tuple[CategoricalSpec, ...] = field(default=())

    def __post_init__(self):
        k = len(self.names)
        if self.n_rows < 1:
            raise ValueError("n_rows must be positive")
        if len(self.means) != k or len(self.sds) != k:
            raise ValueError("one mean and one sd per continuous column")
        if any(s <= 0 for s in self.sds):
            raise ValueError("standard deviations must be positive")
        c = np.asarray(self.corr, dtype=float)
        if c.shape != (k, k) or not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
            raise ValueError("corr must be a symmetric k x k matrix with unit diagonal")
        names = list(self.names) + [s.name for s in self.categorical]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        for s in self.categorical:
            if s.driver is not None and s.driver not in self.names:
                raise ValueError(f"{s.name!r}: driver {s.driver!r} is not a continuous column")

    @property
    def covariance(self) -> np.ndarray:
        sd = np.asarray(self.sds, dtype=float)
        return np.asarray(self.corr, dtype=float) * np.outer(sd, sd)

    def schema(self) -> list[ColumnSchema]:
        cols = [ColumnSchema(n, Kind.CONTINUOUS) for n in self.names]
        cols += [
            ColumnSchema(s.name, Kind.CATEGORICAL, s.level_labels, ordinal=s.ordinal)
            for s in self.categorical
        ]
        return cols


def default_spec(n_rows: int = 2000) -> SyntheticSpec:
    """Employee-like table: 8 continuous columns, 4 categorical (3 to 6 levels).

    ``x1``/``x2`` are correlated at 0.9 so the covariate filter has work to
    do; the remaining correlations are moderate.
    """
    names = tuple(f"x{i}" for i in range(1, 9))
    c = np.full((8, 8), 0.2)
    np.fill_diagonal(c, 1.0)
    for (a, b), r in {(0, 1): 0.9, (0, 2): 0.5, (1, 2): 0.45, (3, 4): 0.6,
                      (5, 6): 0.4, (2, 7): 0.3}.items():
        c[a, b] = c[b, a] = r
    cats = (
        CategoricalSpec("c1", (0.5, 0.3, 0.2), driver="x1", strength=1.0, ordinal=True),
        CategoricalSpec("c2", (0.3, 0.25, 0.2, 0.15, 0.1), driver="x4", strength=0.8, ordinal=True),
        CategoricalSpec("c3", (0.25, 0.25, 0.25, 0.25), driver="x6", strength=0.6),
        CategoricalSpec("c4", (0.3, 0.2, 0.15, 0.15, 0.1, 0.1), driver="x3", strength=0.5),
    )
    return SyntheticSpec(
        n_rows=n_rows,
        names=names,
        means=(40.0, 3000.0, 10.0, 0.0, 5.0, 100.0, 1.0, 20.0),
        sds=(10.0, 800.0, 3.0, 1.0, 2.0, 15.0, 0.5, 4.0),
        corr=tuple(tuple(row) for row in c),
        categorical=cats,
    )


def _categorical(spec: CategoricalSpec, driver: Optional[np.ndarray], rng, n: int) -> np.ndarray:
    logits = np.tile(np.log(np.asarray(spec.probs, dtype=float)), (n, 1))
    if driver is not None and spec.strength:
        z = (driver - driver.mean()) / driver.std()
        levels = np.arange(len(spec.probs)) - (len(spec.probs) - 1) / 2.0
        logits += spec.strength * z[:, None] * levels[None, :]
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.uniform(size=(n, 1))
    codes = (np.cumsum(p, axis=1) < u).sum(axis=1)
    return np.minimum(codes, len(spec.probs) - 1)


def generate_synthetic(spec: SyntheticSpec, seed) -> DataTable:
    """Draw a complete table from ``spec``; deterministic given ``seed``."""
    try:
        L = np.linalg.cholesky(spec.covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    rng = np.random.default_rng(seed)
    n, k = spec.n_rows, len(spec.names)
    Z = rng.standard_normal((n, k))
    cont = np.asarray(spec.means, dtype=float) + Z @ L.T
    cols: list[np.ndarray] = [cont[:, j] for j in range(k)]
    for s in spec.categorical:
        driver = cont[:, spec.names.index(s.driver)] if s.driver else None
        cols.append(_categorical(s, driver, rng, n))
    return DataTable(spec.schema(), cols)

