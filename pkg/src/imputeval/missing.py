"""Missingness masks and MCAR/MAR amputation.

MCAR follows ``prodNA``: exactly ``ceil(r * n * k)`` cells are drawn uniformly
without replacement from the target cells. MAR links missingness in a target
to the observed characteristics of a conditioning variable: each distinct
characteristic receives a Uniform(0, 1) draw, the draws are matched to the
sorted characteristics according to a direction, and the resulting
frequency-weighted probabilities split the target's missing-value budget
across the characteristic strata.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .frame import ColumnView, DataTable

__all__ = [
    "Direction",
    "MCAR",
    "MAR",
    "MissingMask",
    "AmputationPlan",
    "MarAllocation",
    "AmputationError",
    "inject_mcar",
    "conditional_probabilities",
    "mar_allocation",
    "largest_remainder",
    "inject_mar",
    "characteristics",
    "apply_plan",
]

N_BINS = 10


class AmputationError(ValueError):
    pass


class Direction(str, enum.Enum):
    HIGH_MORE_MISSING = "high_more_missing"
    HIGH_LESS_MISSING = "high_less_missing"


@dataclass(frozen=True)
class _Mcar:
    def __repr__(self):
        return "MCAR"


MCAR = _Mcar()


@dataclass(frozen=True)
class MAR:
    conditioner: str
    direction: Direction = Direction.HIGH_MORE_MISSING

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))


Mechanism = Union[_Mcar, MAR]


@dataclass(frozen=True)
class MissingMask:
    """Boolean ``n x k`` matrix of missing cells (True = missing)."""

    flags: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        flags = np.array(self.flags, dtype=bool)
        if flags.ndim != 2 or flags.shape[1] != len(self.names):
            raise ValueError("mask shape does not match the variable names")
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def empty(cls, table: DataTable) -> "MissingMask":
        return cls(np.zeros((table.n_rows, table.n_cols), dtype=bool), table.names)

    @property
    def shape(self):
        return self.flags.shape

    def column(self, name: str) -> np.ndarray:
        return self.flags[:, self.names.index(name)]

    def variable_rate(self, j) -> float:
        if isinstance(j, str):
            j = self.names.index(j)
        n = self.flags.shape[0]
        return float(self.flags[:, j].sum()) / n if n else 0.0

    def overall_rate(self, variables: Sequence[str] | None = None) -> float:
        """Mean of the variable rates, over ``variables`` if given."""
        idx = range(len(self.names)) if variables is None else [
            self.names.index(v) for v in variables
        ]
        rates = [self.variable_rate(j) for j in idx]
        return float(np.mean(rates)) if rates else 0.0

    def count(self) -> int:
        return int(self.flags.sum())

    def __or__(self, other: "MissingMask") -> "MissingMask":
        if other.names != self.names:
            raise ValueError("masks over different variables")
        return MissingMask(self.flags | other.flags, self.names)


@dataclass(frozen=True)
class AmputationPlan:
    """Per-variable mechanisms plus the overall missing rate and seed."""

    targets: tuple[tuple[str, Mechanism], ...]
    rate: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple((str(v), m) for v, m in self.targets))
        if not 0.0 < self.rate < 1.0:
            raise AmputationError(f"missing rate must lie in (0, 1), got {self.rate}")
        names = [v for v, _ in self.targets]
        if len(set(names)) != len(names):
            raise AmputationError("each target variable may appear only once")
        seen_mar = set()
        for v, mech in self.targets:
            if isinstance(mech, MAR):
                if mech.conditioner == v:
                    raise AmputationError(f"{v!r} cannot condition on itself")
                if mech.conditioner in seen_mar:
                    raise AmputationError(
                        f"conditioner {mech.conditioner!r} of {v!r} is amputed earlier in the plan"
                    )
                seen_mar.add(v)
            elif mech is not MCAR:
                raise AmputationError(f"unknown mechanism {mech!r}")

    @property
    def variables(self) -> list[str]:
        return [v for v, _ in self.targets]

    def validate(self, table: DataTable) -> None:
        names = set(table.names)
        for v, mech in self.targets:
            if v not in names:
                raise AmputationError(f"unknown target variable {v!r}")
            if isinstance(mech, MAR) and mech.conditioner not in names:
                raise AmputationError(f"unknown conditioner {mech.conditioner!r}")


@dataclass(frozen=True)
class MarAllocation:
    """Per-characteristic missing probabilities for one MAR target.

    ``conditioner`` holds the characteristic of every observed conditioner
    row; ``characteristics`` are its sorted distinct values.
    """

    characteristics: np.ndarray
    counts: np.ndarray
    allocated: np.ndarray
    pi: np.ndarray
    conditioner: ColumnView


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ceil_count(x: float) -> int:
    # guards against 0.05 * 100 * 24 = 120.00000000000001
    return int(math.ceil(round(x, 9)))


def inject_mcar(table: DataTable, variables: Sequence[str], r: float, seed) -> MissingMask:
    """Mark exactly ``ceil(r * n * k)`` of the target cells as missing.

    ``k`` counts the target variables only. Cells are drawn uniformly without
    replacement among target cells that are observed in ``table``.
    """
    if not 0.0 < r < 1.0:
        raise AmputationError(f"missing rate must lie in (0, 1), got {r}")
    variables = list(variables)
    if not variables:
        raise AmputationError("no target variables")
    cols = [table.index(v) for v in variables]
    n, k = table.n_rows, len(cols)
    n_cells = _ceil_count(r * n * k)
    observed = ~np.column_stack([table.missing[j] for j in cols])
    candidates = np.flatnonzero(observed.ravel())
    if n_cells > candidates.size:
        raise AmputationError(
            f"cannot place {n_cells} missing cells among {candidates.size} observed target cells"
        )
    chosen = _rng(seed).choice(candidates, size=n_cells, replace=False)
    flags = np.zeros((n, table.n_cols), dtype=bool)
    rows, sub = np.unravel_index(chosen, (n, k))
    flags[rows, np.asarray(cols)[sub]] = True
    return MissingMask(flags, table.names)


def conditional_probabilities(allocated, counts) -> np.ndarray:
    """``pi_r = p_r * H_r / sum_s p_s * H_s``."""
    w = np.asarray(allocated, dtype=float) * np.asarray(counts, dtype=float)
    total = w.sum()
    if not total > 0:
        raise AmputationError("allocated probabilities carry no weight")
    return w / total


def mar_allocation(conditioner: ColumnView, direction, seed) -> MarAllocation:
    """Draw and allocate per-characteristic probabilities.

    Draws are sorted and matched to the characteristics sorted by value:
    ascending for ``HIGH_MORE_MISSING`` (largest characteristic gets the
    largest draw), descending for ``HIGH_LESS_MISSING``.
    """
    direction = Direction(direction)
    values = np.asarray(conditioner.values)
    if values.size == 0:
        raise AmputationError(f"conditioner {conditioner.variable!r} has no observed values")
    chars, counts = np.unique(values, return_counts=True)
    draws = np.sort(_rng(seed).uniform(0.0, 1.0, size=chars.size))
    if direction is Direction.HIGH_LESS_MISSING:
        draws = draws[::-1]
    return MarAllocation(
        characteristics=chars,
        counts=counts,
        allocated=draws,
        pi=conditional_probabilities(draws, counts),
        conditioner=conditioner,
    )


def largest_remainder(total: int, weights) -> np.ndarray:
    """Integer quotas proportional to ``weights`` summing exactly to ``total``.

    Leftover units go to the largest fractional remainders; ties favour the
    lower index.
    """
    w = np.asarray(weights, dtype=float)
    exact = total * w / w.sum()
    quotas = np.floor(np.round(exact, 9)).astype(np.int64)
    remainder = np.round(exact - quotas, 9)
    short = int(total - quotas.sum())
    if short > 0:
        order = np.argsort(-remainder, kind="stable")
        quotas[order[:short]] += 1
    return quotas


def inject_mar(
    table: DataTable, target: str, allocation: MarAllocation, n_mis: int, seed
) -> np.ndarray:
    """Per-row missing flags for ``target`` following ``allocation``.

    Stratum ``r`` (rows whose conditioner equals characteristic ``r``)
    receives ``quota_r`` missing cells, with quotas from
    :func:`largest_remainder` applied to ``n_mis * pi``.
    """
    n = table.n_rows
    if n_mis > n:
        raise AmputationError(f"n_mis={n_mis} exceeds the {n} rows")
    quotas = largest_remainder(n_mis, allocation.pi)
    target_obs = ~table.is_missing(target)
    view = allocation.conditioner
    rng = _rng(seed)
    flags = np.zeros(n, dtype=bool)
    for r, (a_r, q) in enumerate(zip(allocation.characteristics, quotas)):
        rows = view.row_index[view.values == a_r]
        rows = rows[target_obs[rows]]
        if q > rows.size:
            raise AmputationError(
                f"{target!r}: quota {q} for characteristic {a_r!r} of "
                f"{view.variable!r} exceeds its {rows.size} rows"
            )
        if q:
            flags[rng.choice(rows, size=q, replace=False)] = True
    return flags


def characteristics(table: DataTable, name: str, n_bins: int = N_BINS) -> ColumnView:
    """Observed characteristics of a conditioning variable.

    Categorical columns use their category codes. Continuous columns are cut
    into ``n_bins`` equal-frequency bins whose index (ordered by value) is the
    characteristic.
    """
    view = table.view(name)
    if table.column_schema(name).is_categorical or view.values.size == 0:
        return view
    edges = np.quantile(view.values, np.linspace(0, 1, n_bins + 1)[1:-1])
    codes = np.searchsorted(edges, view.values, side="right")
    return ColumnView(name, codes.astype(np.int64), view.row_index)


def apply_plan(table: DataTable, plan: AmputationPlan) -> tuple[DataTable, MissingMask]:
    """Amputate ``table`` according to ``plan``.

    MAR targets are processed first, in plan order, each with
    ``ceil(n * r)`` missing cells; all MCAR targets are then amputed jointly
    at rate ``r``.
    """
    plan.validate(table)
    flags = np.zeros((table.n_rows, table.n_cols), dtype=bool)
    if not plan.targets:
        return table, MissingMask(flags, table.names)
    ss = np.random.SeedSequence(plan.seed)
    seeds = ss.spawn(2 * len(plan.targets) + 1)
    n_mis = _ceil_count(table.n_rows * plan.rate)
    current = table
    for t, (var, mech) in enumerate(plan.targets):
        if not isinstance(mech, MAR):
            continue
        alloc = mar_allocation(
            characteristics(current, mech.conditioner), mech.direction, seeds[2 * t]
        )
        col = inject_mar(current, var, alloc, n_mis, seeds[2 * t + 1])
        flags[:, current.index(var)] = col
        current = current.with_missing(flags)
    mcar = [v for v, mech in plan.targets if mech is MCAR]
    if mcar:
        flags |= inject_mcar(current, mcar, plan.rate, seeds[-1]).flags
    return table.with_missing(flags), MissingMask(flags, table.names)
