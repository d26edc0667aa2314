"""Imputation accuracy measures.

Predictive accuracy: NRMSE (continuous) and PFC (categorical), both
restricted to the imputed cells. Distributional accuracy compares the full
true column with the full completed column: KS and Cramer-von Mises
statistics on empirical distribution functions, the Mallows L2 distance on
order statistics, the Kullback-Leibler divergence between Gaussian kernel
density estimates, and Cramer's V / kappa for categorical columns.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Edf",
    "KdeEstimate",
    "ContingencyTable",
    "MeasureRecord",
    "edf",
    "nrmse",
    "pfc",
    "ks_statistic",
    "cm_statistic",
    "mallows_l2",
    "silverman_bandwidth",
    "kde",
    "kl_divergence",
    "crosstab",
    "chi_square",
    "cramers_v",
    "kappa",
]

KDE_POINTS = 512
KDE_CUT = 3.0
EPS = 1e-12
KL_ZERO_MASS_TOL = 1e-2
KL_ZERO_DENSITY = "kl_zero_density"


@dataclass(frozen=True)
class Edf:
    support: np.ndarray
    cum_probs: np.ndarray

    def __call__(self, z) -> np.ndarray:
        k = np.searchsorted(self.support, z, side="right")
        return np.concatenate([[0.0], self.cum_probs])[k]


@dataclass(frozen=True)
class KdeEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def at(self, x) -> np.ndarray:
        """Linear interpolation of the density; 0 outside the grid."""
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MeasureRecord:
    """One long-format result row."""

    mc_iter: int
    mechanism: str
    rate: float
    method: str
    variable: str
    measure: str
    value: float
    flag: str = ""


def edf(x) -> Edf:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    support, counts = np.unique(x, return_counts=True)
    cum = np.cumsum(counts) / x.size
    cum[-1] = 1.0
    return Edf(support, cum)


# -- predictive accuracy ------------------------------------------------------


def _as_list(a) -> list[np.ndarray]:
    if isinstance(a, np.ndarray) and a.ndim == 1:
        return [a]
    if len(a) and np.ndim(a[0]) == 0:
        return [np.asarray(a)]
    return [np.asarray(v) for v in a]


def nrmse(true_vals, imputed_vals, var_true) -> float:
    """Normalized RMSE pooled over variables.

    ``sqrt(mean over all imputed cells of (true - imp)^2 / var_true)`` where
    each cell is standardized by the variance of its variable's full true
    column. Accepts one array per variable (or a single array with a scalar
    variance). Variables with zero variance are skipped with a warning.
    """
    trues, imps = _as_list(true_vals), _as_list(imputed_vals)
    variances = np.atleast_1d(np.asarray(var_true, dtype=float))
    if not (len(trues) == len(imps) == len(variances)):
        raise ValueError("need one true array, imputed array and variance per variable")
    total, count = 0.0, 0
    for t, i, v in zip(trues, imps, variances):
        t = np.asarray(t, dtype=float)
        i = np.asarray(i, dtype=float)
        if t.shape != i.shape:
            raise ValueError("true and imputed values differ in length")
        if t.size == 0:
            continue
        if not v > 0:
            logger.warning("skipping a zero-variance variable in NRMSE")
            continue
        total += float(np.sum((t - i) ** 2)) / v
        count += t.size
    if count == 0:
        raise ValueError("NRMSE undefined: no imputed continuous cells")
    return math.sqrt(total / count)


def pfc(true_cats, imputed_cats) -> float:
    """Proportion of falsely classified imputed cells, pooled over variables."""
    trues, imps = _as_list(true_cats), _as_list(imputed_cats)
    wrong, count = 0, 0
    for t, i in zip(trues, imps, strict=True):
        t, i = np.asarray(t), np.asarray(i)
        if t.shape != i.shape:
            raise ValueError("true and imputed values differ in length")
        wrong += int(np.sum(t != i))
        count += t.size
    if count == 0:
        raise ValueError("PFC undefined: no imputed categorical cells")
    return wrong / count


# -- edf statistics -----------------------------------------------------------


def _edf_gaps(x, y) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Edf gaps at every distinct pooled value, as exact integers.

    ``F_x(z) - F_y(z) = gap / lcm(n, m)``. Returns ``(gaps, multiplicity,
    n, m)``; integer gaps keep tied statistics exactly equal across code
    paths (the permutation test relies on this).
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise ValueError("empty sample")
    z, mult = np.unique(np.concatenate([x, y]), return_counts=True)
    cx = np.searchsorted(np.sort(x), z, side="right").astype(np.int64)
    cy = np.searchsorted(np.sort(y), z, side="right").astype(np.int64)
    g = math.gcd(n, m)
    return cx * (m // g) - cy * (n // g), mult.astype(np.int64), n, m


def _ks_from_gaps(gaps, n, m):
    return np.abs(gaps).max(axis=-1) / math.lcm(n, m)


def _cm_from_gaps(gaps, mult, n, m):
    # T = nm / (n+m)^2 * sum mult * (gap / lcm)^2, with the sum kept integral
    # whenever it provably fits in int64
    lcm = math.lcm(n, m)
    if (n + m) * lcm * lcm < 2**62:
        s = (mult * gaps * gaps).sum(axis=-1)
    else:
        g = gaps.astype(float)
        s = (mult * g * g).sum(axis=-1)
    return s * (n * m / ((n + m) ** 2 * float(lcm) ** 2))


def ks_statistic(x, y) -> float:
    """``max_z |F_x(z) - F_y(z)|`` over the pooled distinct values."""
    gaps, _, n, m = _edf_gaps(x, y)
    return float(_ks_from_gaps(gaps, n, m))


def cm_statistic(x, y) -> float:
    """Two-sample Cramer-von Mises statistic.

    ``T = n m / (n + m)^2 * sum_i (F_x(z_i) - F_y(z_i))^2`` summed over all
    ``n + m`` pooled observations ``z_i`` (tied values counted with their
    multiplicity).
    """
    gaps, mult, n, m = _edf_gaps(x, y)
    return float(_cm_from_gaps(gaps, mult, n, m))


def mallows_l2(x, y) -> float:
    """Root mean squared gap between matched order statistics."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size != y.size:
        raise ValueError(f"Mallows L2 needs equal sample sizes, got {x.size} and {y.size}")
    if x.size == 0:
        raise ValueError("empty sample")
    return math.sqrt(float(np.mean((x - y) ** 2)))


# -- kernel densities -----------------------------------------------------------


def silverman_bandwidth(x) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``; falls back to sd when IQR is 0."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.quantile(x, [0.75, 0.25])
    lo = min(sd, (q75 - q25) / 1.34)
    if not lo > 0:
        lo = sd
    return 0.9 * lo * x.size ** (-0.2)


def _gauss_kde(x, points, h, chunk=4096):
    out = np.zeros(points.size)
    norm = 1.0 / (x.size * h * math.sqrt(2.0 * math.pi))
    for s in range(0, x.size, chunk):
        d = (points[:, None] - x[None, s : s + chunk]) / h
        out += np.exp(-0.5 * d * d).sum(axis=1)
    return out * norm


def kde(sample) -> KdeEstimate:
    """Gaussian kernel density estimate with Silverman's bandwidth.

    The density is evaluated exactly at 512 equally spaced points spanning
    ``[min - 3h, max + 3h]``.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("KDE needs at least 2 observations")
    if not np.std(x) > 0:
        raise ValueError("KDE of a degenerate (constant) sample")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - KDE_CUT * h, x.max() + KDE_CUT * h, KDE_POINTS)
    return KdeEstimate(grid, _gauss_kde(x, grid, h), h)


def _trapezoid(y, x) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def kl_divergence(p: KdeEstimate, q: KdeEstimate, *, zero_mass_tol: float = KL_ZERO_MASS_TOL) -> float:
    """``KL(p || q)`` on ``p``'s grid; ``q`` is linearly interpolated.

    The integrand ``p log(p / q)`` is integrated by the trapezoid rule over
    grid points where both densities exceed 1e-12. If the probability mass
    of ``p`` lying where ``q`` vanishes exceeds ``zero_mass_tol`` the
    divergence is ``+inf`` (zero-density case).
    """
    x = p.grid
    pv = p.density
    qv = q.at(x)
    p_pos = pv > EPS
    q_zero = qv <= EPS
    lost = np.where(p_pos & q_zero, pv, 0.0)
    if _trapezoid(lost, x) > zero_mass_tol:
        return math.inf
    keep = p_pos & ~q_zero
    integrand = np.zeros_like(pv)
    integrand[keep] = pv[keep] * np.log(pv[keep] / qv[keep])
    return max(_trapezoid(integrand, x), 0.0)


# -- association ----------------------------------------------------------------


def crosstab(true_codes, imputed_codes, labels: Sequence | None = None) -> ContingencyTable:
    """Cross-tabulate true (rows) against imputed (columns) category codes."""
    t = np.asarray(true_codes, dtype=np.int64)
    i = np.asarray(imputed_codes, dtype=np.int64)
    if t.shape != i.shape:
        raise ValueError("columns differ in length")
    k = int(max(t.max(initial=-1), i.max(initial=-1))) + 1
    if labels is not None:
        k = max(k, len(labels))
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, i), 1)
    labels = tuple(range(k)) if labels is None else tuple(labels)
    return ContingencyTable(counts, labels, labels)


def _reduced(table: ContingencyTable) -> np.ndarray:
    c = np.asarray(table.counts, dtype=float)
    c = c[c.sum(axis=1) > 0]
    return c[:, c.sum(axis=0) > 0]


def chi_square(table: ContingencyTable) -> float:
    """Pearson's chi-squared statistic of independence.

    Computed as ``n * (sum O^2 / (row * col) - 1)`` so that a perfectly
    diagonal table yields exactly ``n (min(R, C) - 1)``. Degenerate tables
    (one row or one column after dropping empty margins) give 0.
    """
    c = _reduced(table)
    total = c.sum()
    if total <= 0:
        raise ValueError("empty contingency table")
    if c.shape[0] < 2 or c.shape[1] < 2:
        logger.debug("degenerate contingency table %s", c.shape)
        return 0.0
    rows = c.sum(axis=1)[:, None]
    cols = c.sum(axis=0)[None, :]
    nz = c > 0
    ratio = float(np.sum(c[nz] ** 2 / (rows * cols)[nz]))
    return max(total * (ratio - 1.0), 0.0)


def cramers_v(table: ContingencyTable) -> float:
    """``sqrt(chi2 / (n (min(R, C) - 1)))`` on the table without empty margins.

    A table reduced to a single cell (true and imputed columns constant and
    equal) counts as perfect association, ``V = 1``; other degenerate
    tables give 0.
    """
    c = _reduced(table)
    if c.shape == (1, 1):
        return 1.0
    k = min(c.shape)
    if k < 2:
        return 0.0
    v = math.sqrt(chi_square(table) / (c.sum() * (k - 1)))
    return min(v, 1.0)


def kappa(v_stats) -> float:
    """Mean of ``|V^2 - 1|`` over all (iteration, variable) entries."""
    v = np.asarray(v_stats, dtype=float)
    if v.size == 0:
        raise ValueError("kappa of an empty V matrix")
    return float(np.mean(np.abs(v**2 - 1.0)))
