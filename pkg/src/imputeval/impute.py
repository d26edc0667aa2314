"""Imputation engines.

All engines share one contract: given a table whose cells to impute are
flagged Missing (optionally widened by a :class:`MissingMask`), return ``m``
completed tables that agree bit-for-bit with the input on every other cell.

* ``NAIVE`` fills with the observed mean (continuous) or mode (categorical).
* ``MICE_NORM`` / ``MICE_PMM`` / ``MICE_RF`` run chained equations; the
  linear models cover continuous targets only, categorical targets fall
  back to the random-forest model.
* ``ITER_FOREST`` is the missForest iteration; ``ITER_FOREST_PMM`` adds
  predictive mean matching to its continuous predictions.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .forest import ForestConfig, fit_forest, predict, sample_predictions
from .frame import DataTable, pearson_correlation
from .missing import MissingMask

logger = logging.getLogger(__name__)

__all__ = [
    "Method",
    "ImputerSpec",
    "ImputationResult",
    "ImputationError",
    "NotSupportedError",
    "impute_naive",
    "select_covariates",
    "impute_mice",
    "impute_iterforest",
    "run_method",
]

RIDGE = 1e-6
MAX_ITER_FOREST = 10


class ImputationError(RuntimeError):
    pass


class NotSupportedError(ImputationError):
    pass


class Method(str, enum.Enum):
    NAIVE = "Naive"
    MICE_NORM = "MiceNorm"
    MICE_PMM = "MicePmm"
    MICE_RF = "MiceRF"
    ITER_FOREST = "IterForest"
    ITER_FOREST_PMM = "IterForestPmm"
    AMELIA = "Amelia"

    @classmethod
    def parse(cls, name: str) -> "Method":
        for m in cls:
            if m.value.lower() == str(name).lower() or m.name.lower() == str(name).lower():
                return m
        raise ValueError(f"unknown imputation method {name!r}")


_DEFAULT_TREES = {Method.MICE_RF: 10, Method.MICE_NORM: 10, Method.MICE_PMM: 10}


@dataclass(frozen=True)
class ImputerSpec:
    """Configuration of one imputation method.

    ``forest_cfg`` defaults to 10 trees for the chained-equation engines and
    100 trees for the iterative forest engines.
    """

    method: Method
    m: int = 1
    iterations: int = 5
    forest_cfg: Optional[ForestConfig] = None
    pmm_donors: int = 5
    correlation_threshold: float = 0.8
    seed: int = 0
    max_iter: int = MAX_ITER_FOREST

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method) if not isinstance(self.method, Method) else self.method)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.iterations < 1 or self.max_iter < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.pmm_donors < 1:
            raise ValueError("pmm_donors must be >= 1")
        if not 0.0 < self.correlation_threshold <= 1.0:
            raise ValueError("correlation_threshold must lie in (0, 1]")

    @property
    def forest(self) -> ForestConfig:
        if self.forest_cfg is not None:
            return self.forest_cfg
        return ForestConfig(n_trees=_DEFAULT_TREES.get(self.method, 100))


@dataclass(frozen=True)
class ImputationResult:
    completions: tuple[DataTable, ...]
    method: Method
    wall_clock_seconds: float
    seed: int
    iterations: tuple[int, ...] = field(default=())

    @property
    def m(self) -> int:
        return len(self.completions)


# -- shared plumbing ---------------------------------------------------------


def _impute_mask(table: DataTable, mask: MissingMask | None) -> np.ndarray:
    M = table.missing_matrix()
    if mask is not None:
        if mask.shape != M.shape:
            raise ValueError("mask shape does not match the table")
        M = M | mask.flags
    return M


def _targets(table: DataTable, M: np.ndarray) -> list[int]:
    """Columns with cells to impute, ascending by missing count (stable)."""
    counts = M.sum(axis=0)
    cols = [j for j in range(table.n_cols) if counts[j] > 0]
    return sorted(cols, key=lambda j: counts[j])


def _naive_fill(table: DataTable, X: np.ndarray, M: np.ndarray) -> np.ndarray:
    X = X.copy()
    for j, col in enumerate(table.schema):
        miss = M[:, j]
        if not miss.any():
            continue
        obs = X[~miss, j]
        if obs.size == 0:
            raise ImputationError(f"column {col.name!r} has no observed values")
        if col.is_categorical:
            counts = np.bincount(obs.astype(np.int64), minlength=len(col.categories))
            X[miss, j] = int(np.argmax(counts))
        else:
            X[miss, j] = obs.mean()
    return X


def _complete(table: DataTable, X: np.ndarray, M: np.ndarray) -> DataTable:
    # observed cells come straight from the input; only masked cells change
    cols = []
    for j, col in enumerate(table.schema):
        v = np.array(table.columns[j], copy=True)
        miss = M[:, j]
        v[miss] = np.rint(X[miss, j]) if col.is_categorical else X[miss, j]
        cols.append(v)
    return DataTable(table.schema, cols, [np.zeros(table.n_rows, bool)] * table.n_cols)


def impute_naive(table: DataTable, mask: MissingMask | None = None) -> DataTable:
    """Observed mean for continuous columns, observed mode (lowest code on ties) otherwise."""
    M = _impute_mask(table, mask)
    X, _ = table.to_matrix()
    return _complete(table, _naive_fill(table, X, M), M)


def _kept_metric(table: DataTable, threshold: float) -> list[str]:
    kept: list[str] = []
    for name in table.continuous_names():
        view = table.view(name)
        ok = True
        for other in kept:
            try:
                r = pearson_correlation(view, table.view(other))
            except ValueError:
                r = math.nan
            if not math.isnan(r) and abs(r) >= threshold:
                ok = False
                break
        if ok:
            kept.append(name)
    return kept


def select_covariates(table: DataTable, target: str, threshold: float = 0.8) -> list[str]:
    """Covariates for ``target``: every categorical column plus filtered metric columns.

    Metric columns are visited in schema order and dropped when their
    absolute Pearson correlation with an already kept metric column reaches
    ``threshold``. The filter is global: it does not depend on ``target``,
    which is only removed from the result.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    kept = set(_kept_metric(table, threshold))
    return [
        c.name
        for c in table.schema
        if c.name != target and (c.is_categorical or c.name in kept)
    ]


def _seeds(seed, n: int) -> list[np.random.SeedSequence]:
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return base.spawn(n)


def _nearest_donors(pred_mis: np.ndarray, pred_obs: np.ndarray, k: int, rng) -> np.ndarray:
    """Index into ``pred_obs`` of one of the ``k`` closest values, per recipient."""
    n = pred_obs.size
    k = min(k, n)
    order = np.argsort(pred_obs, kind="stable")
    s = pred_obs[order]
    # the k nearest lie in a window of 2k sorted neighbours of the insertion point
    width = min(2 * k, n)
    pos = np.searchsorted(s, pred_mis)
    start = np.clip(pos - k, 0, n - width)
    window = start[:, None] + np.arange(width)[None, :]
    dist = np.abs(s[window] - pred_mis[:, None])
    near = np.sort(np.argsort(dist, axis=1, kind="stable")[:, :k], axis=1)
    picks = rng.integers(0, k, size=pred_mis.size)
    return order[window[np.arange(pred_mis.size), near[np.arange(pred_mis.size), picks]]]


# -- chained equations -------------------------------------------------------


class _Design:
    """Intercept + metric covariates + one-hot categoricals (first level dropped)."""

    def __init__(self, table: DataTable, covariates: Sequence[str]):
        self.parts = []
        for name in covariates:
            col = table.column_schema(name)
            j = table.index(name)
            if col.is_categorical:
                self.parts.append((j, tuple(range(1, len(col.categories)))))
            else:
                self.parts.append((j, None))

    def build(self, X: np.ndarray) -> np.ndarray:
        blocks = [np.ones((X.shape[0], 1))]
        for j, levels in self.parts:
            if levels is None:
                blocks.append(X[:, j : j + 1])
            elif levels:
                codes = X[:, j].astype(np.int64)
                blocks.append((codes[:, None] == np.asarray(levels)[None, :]).astype(float))
        return np.hstack(blocks)


def _linear_draw(name, Xo, yo, Xm, rng, pmm_donors: int | None):
    keep = np.any(Xo != 0, axis=0)  # drop dummies absent from the fitting rows
    Xo, Xm = Xo[:, keep], Xm[:, keep]
    n_obs, q = Xo.shape
    if n_obs < max(5, q + 1):
        raise ImputationError(f"{name!r}: {n_obs} observed rows for {q - 1} covariates")
    A = Xo.T @ Xo + RIDGE * np.eye(q)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ImputationError(f"singular design when imputing {name!r}") from exc
    Linv = np.linalg.solve(L, np.eye(q))
    V = Linv.T @ Linv
    beta = V @ (Xo.T @ yo)
    rss = float(np.sum((yo - Xo @ beta) ** 2))
    df = n_obs - q
    sigma = math.sqrt(rss / rng.chisquare(df))
    beta_star = beta + sigma * (Linv.T @ rng.standard_normal(q))
    if pmm_donors is None:
        return Xm @ beta_star + sigma * rng.standard_normal(Xm.shape[0])
    # type-1 matching: donors scored with the fitted, recipients with the drawn coefficients
    donors = _nearest_donors(Xm @ beta_star, Xo @ beta, pmm_donors, rng)
    return yo[donors]


def _forest_cfg(spec: ImputerSpec, seq: np.random.SeedSequence) -> ForestConfig:
    return replace(spec.forest, seed=int(seq.generate_state(1)[0]))


def _forest_inputs(table: DataTable, X: np.ndarray, cols: Sequence[int]):
    is_cat = np.array([table.schema[c].is_categorical for c in cols], dtype=bool)
    levels = np.array(
        [len(table.schema[c].categories) if table.schema[c].is_categorical else 0 for c in cols],
        dtype=np.int64,
    )
    return np.ascontiguousarray(X[:, cols]), is_cat, levels


def _fit_rf(table, X, j, cols, obs, spec, seq):
    Xf, is_cat, levels = _forest_inputs(table, X, cols)
    col = table.schema[j]
    n_classes = len(col.categories) if col.is_categorical else 0
    forest = fit_forest(
        Xf[obs], X[obs, j], _forest_cfg(spec, seq),
        categorical=is_cat, n_levels=levels, n_classes=n_classes,
    )
    return forest, Xf


def _mice_chain(table, X0, M, spec, targets, covariates, seq) -> np.ndarray:
    X = _naive_fill(table, X0, M)
    sweep_seeds = seq.spawn(spec.iterations)
    for it in range(spec.iterations):
        var_seeds = sweep_seeds[it].spawn(len(targets))
        for t, j in enumerate(targets):
            col = table.schema[j]
            miss = M[:, j]
            obs = ~miss
            cov = covariates[j]
            s_fit, s_draw = var_seeds[t].spawn(2)
            rng = np.random.default_rng(s_draw)
            use_linear = spec.method in (Method.MICE_NORM, Method.MICE_PMM) and not col.is_categorical
            if use_linear:
                design = _Design(table, [table.names[c] for c in cov])
                D = design.build(X)
                X[miss, j] = _linear_draw(
                    col.name, D[obs], X[obs, j], D[miss], rng,
                    spec.pmm_donors if spec.method is Method.MICE_PMM else None,
                )
            else:
                if obs.sum() < 5:
                    raise ImputationError(f"{col.name!r}: fewer than 5 observed rows")
                if not cov:
                    raise ImputationError(f"{col.name!r}: no covariates")
                forest, Xf = _fit_rf(table, X, j, cov, obs, spec, s_fit)
                X[miss, j] = sample_predictions(forest, Xf[miss], rng)
    return X


def impute_mice(table: DataTable, mask: MissingMask | None, spec: ImputerSpec) -> ImputationResult:
    """Multiple imputation by chained equations (``m`` independent chains)."""
    if spec.method not in (Method.MICE_NORM, Method.MICE_PMM, Method.MICE_RF):
        raise ValueError(f"{spec.method.value} is not a chained-equation method")
    start = time.perf_counter()
    M = _impute_mask(table, mask)
    X0, _ = table.to_matrix()
    targets = _targets(table, M)
    masked = table.with_missing(M)
    kept = set(_kept_metric(masked, spec.correlation_threshold)) if targets else set()
    covariates = {
        j: [
            c for c, col in enumerate(table.schema)
            if c != j and (col.is_categorical or col.name in kept)
        ]
        for j in targets
    }
    out = []
    for seq in _seeds(spec.seed, spec.m):
        X = _mice_chain(table, X0, M, spec, targets, covariates, seq) if targets else X0
        out.append(_complete(table, X, M))
    return ImputationResult(
        tuple(out), spec.method, time.perf_counter() - start, spec.seed,
        tuple([spec.iterations if targets else 0] * spec.m),
    )


# -- iterative forests -------------------------------------------------------


def _delta(table, X_new, X_old, M) -> dict[str, float]:
    d = {}
    cont = [j for j, c in enumerate(table.schema) if not c.is_categorical and M[:, j].any()]
    cat = [j for j, c in enumerate(table.schema) if c.is_categorical and M[:, j].any()]
    if cont:
        num = sum(float(np.sum((X_new[M[:, j], j] - X_old[M[:, j], j]) ** 2)) for j in cont)
        den = sum(float(np.sum(X_new[M[:, j], j] ** 2)) for j in cont)
        d["continuous"] = num / den if den > 0 else 0.0
    if cat:
        wrong = sum(int(np.sum(X_new[M[:, j], j] != X_old[M[:, j], j])) for j in cat)
        d["categorical"] = wrong / sum(int(M[:, j].sum()) for j in cat)
    return d


def _forest_sweep(table, X, M, spec, targets, seq):
    X = X.copy()
    var_seeds = seq.spawn(len(targets))
    pmm = spec.method is Method.ITER_FOREST_PMM
    for t, j in enumerate(targets):
        col = table.schema[j]
        miss = M[:, j]
        obs = ~miss
        if obs.sum() < 5:
            raise ImputationError(f"{col.name!r}: fewer than 5 observed rows")
        others = [c for c in range(table.n_cols) if c != j]
        if not others:
            raise ImputationError(f"{col.name!r}: no predictors")
        s_fit, s_pmm = var_seeds[t].spawn(2)
        forest, Xf = _fit_rf(table, X, j, others, obs, spec, s_fit)
        pred = predict(forest, Xf[miss])
        if pmm and not col.is_categorical:
            yo = X[obs, j]
            pred = yo[_nearest_donors(pred, yo, spec.pmm_donors, np.random.default_rng(s_pmm))]
        X[miss, j] = pred
    return X


def _iterforest_replicate(table, X0, M, spec, targets, seq) -> tuple[np.ndarray, int]:
    X = _naive_fill(table, X0, M)
    if not targets:
        return X, 1
    iter_seeds = seq.spawn(spec.max_iter)
    old_delta = None
    previous = X
    for it in range(spec.max_iter):
        current = _forest_sweep(table, previous, M, spec, targets, iter_seeds[it])
        delta = _delta(table, current, previous, M)
        if old_delta is not None and not any(delta[k] < old_delta[k] for k in delta):
            # the stopping statistic grew: keep the previous iterate
            return previous, it + 1
        old_delta = delta
        previous = current
    return previous, spec.max_iter


def impute_iterforest(table: DataTable, mask: MissingMask | None, spec: ImputerSpec) -> ImputationResult:
    """missForest-style iterative imputation; ``m > 1`` gives independent replicates."""
    if spec.method not in (Method.ITER_FOREST, Method.ITER_FOREST_PMM):
        raise ValueError(f"{spec.method.value} is not an iterative forest method")
    start = time.perf_counter()
    M = _impute_mask(table, mask)
    X0, _ = table.to_matrix()
    targets = _targets(table, M)
    out, iters = [], []
    for seq in _seeds(spec.seed, spec.m):
        X, k = _iterforest_replicate(table, X0, M, spec, targets, seq)
        out.append(_complete(table, X, M))
        iters.append(k)
    return ImputationResult(tuple(out), spec.method, time.perf_counter() - start, spec.seed, tuple(iters))


def run_method(table: DataTable, mask: MissingMask | None, spec: ImputerSpec) -> ImputationResult:
    """Dispatch on ``spec.method``; wall-clock time covers all ``m`` completions."""
    start = time.perf_counter()
    if spec.method is Method.NAIVE:
        done = impute_naive(table, mask)
        result = ImputationResult((done,) * spec.m, spec.method, 0.0, spec.seed)
    elif spec.method in (Method.MICE_NORM, Method.MICE_PMM, Method.MICE_RF):
        result = impute_mice(table, mask, spec)
    elif spec.method in (Method.ITER_FOREST, Method.ITER_FOREST_PMM):
        result = impute_iterforest(table, mask, spec)
    else:
        raise NotSupportedError(
            "Amelia (EM with bootstrapping under multivariate normality) is not implemented"
        )
    return replace(result, wall_clock_seconds=time.perf_counter() - start)
