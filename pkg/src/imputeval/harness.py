"""Monte-Carlo simulation driver.

Every cell of the grid (mechanism x rate x iteration) amputes the complete
table once; each configured imputer then completes the amputed table and the
completions are scored against the truth. All randomness flows from
:func:`sub_seed`, a pure function of the master seed and the cell
coordinates, so any cell can be re-run on its own and parallel runs match
sequential ones record for record.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import sys
import time
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .forest import ForestConfig
from .frame import DataTable, read_csv, summary_stats
from .impute import ImputerSpec, Method, run_method
from .measures import (
    KL_ZERO_DENSITY,
    MeasureRecord,
    chi_square,
    crosstab,
    cramers_v,
    kappa,
    kde,
    kl_divergence,
    mallows_l2,
    nrmse,
    pfc,
)
from .missing import MAR, MCAR, AmputationPlan, Direction, MissingMask, apply_plan
from .permtest import Statistic, permutation_tests
from .synth import SyntheticSpec, default_spec, generate_synthetic

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "HarnessError",
    "DataSource",
    "MarEntry",
    "ExperimentConfig",
    "RunReport",
    "SummaryRow",
    "sub_seed",
    "load_config",
    "config_from_dict",
    "load_data",
    "run_cell",
    "run_experiment",
    "summarize",
    "kappa_table",
    "write_records",
    "read_records",
    "write_report",
    "oracle_imputer",
    "RECORD_COLUMNS",
]

RECORD_COLUMNS = ("mc_iter", "mechanism", "rate", "method", "variable", "measure", "value", "flag")
POOLED = "_pooled_"
ALL_VARIABLES = "*"
MECHANISMS = ("MCAR", "MAR")
ROLES = {"subsample": 1, "amputate": 2, "impute": 3, "permtest": 4}

ExtraImputer = Callable[[DataTable, MissingMask, DataTable, int], Sequence[DataTable]]


class ConfigError(ValueError):
    pass


class HarnessError(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class DataSource:
    """Either a CSV file with its schema or a synthetic generator."""

    csv: Optional[Path] = None
    schema: Optional[Path] = None
    synthetic: Optional[SyntheticSpec] = None
    seed: int = 0
    missing_token: str = "NA"

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ConfigError("data source needs exactly one of a CSV path or a synthetic spec")
        if self.csv is not None and self.schema is None:
            raise ConfigError("a CSV data source needs a schema file")


@dataclass(frozen=True)
class MarEntry:
    target: str
    conditioner: str
    direction: Direction = Direction.HIGH_MORE_MISSING


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSource
    imputers: tuple[ImputerSpec, ...]
    mechanisms: tuple[str, ...] = ("MCAR",)
    rates: tuple[float, ...] = (0.01, 0.05, 0.1)
    mar: tuple[MarEntry, ...] = ()
    targets: Optional[tuple[str, ...]] = None
    mc_iterations: int = 100
    perm: int = 999
    seed: int = 0
    output_dir: Optional[Path] = None
    subsample: Optional[int] = None
    workers: Optional[int] = None
    per_completion: bool = False
    cramers_v_scope: str = "full"

    def __post_init__(self):
        if self.mc_iterations < 1:
            raise ConfigError("mc_iterations must be >= 1")
        if self.perm < 1:
            raise ConfigError("perm must be >= 1")
        if not self.rates:
            raise ConfigError("at least one missing rate is required")
        for r in self.rates:
            if not 0.0 < r < 1.0:
                raise ConfigError(f"missing rate {r} outside (0, 1)")
        if not self.imputers:
            raise ConfigError("at least one imputer is required")
        for mech in self.mechanisms:
            if mech not in MECHANISMS:
                raise ConfigError(f"unknown mechanism {mech!r}; expected MCAR or MAR")
        if "MAR" in self.mechanisms and not self.mar:
            raise ConfigError("mechanism MAR needs at least one [[amputation.mar]] entry")
        if self.cramers_v_scope not in ("full", "masked"):
            raise ConfigError("cramers_v scope must be 'full' or 'masked'")
        if self.subsample is not None and self.subsample < 2:
            raise ConfigError("subsample must be >= 2 rows")
        labels = [s.method.value for s in self.imputers]
        if len(set(labels)) != len(labels):
            raise ConfigError("each imputation method may be listed once")


def _section(d: Mapping, key: str) -> dict:
    v = d.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"[{key}] must be a table")
    return dict(v)


def _take(d: dict, key: str, kind, default=None):
    if key not in d:
        return default
    v = d.pop(key)
    if kind is float and isinstance(v, int):
        v = float(v)
    if not isinstance(v, kind) or (kind is int and isinstance(v, bool)):
        raise ConfigError(f"{key!r} must be of type {getattr(kind, '__name__', kind)}")
    return v


def _no_leftovers(d: dict, where: str) -> None:
    if d:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(d))}")


def _imputer(d: dict, index: int) -> ImputerSpec:
    d = dict(d)
    where = f"imputer #{index + 1}"
    name = _take(d, "method", str)
    if name is None:
        raise ConfigError(f"{where}: 'method' is required")
    try:
        method = Method.parse(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    forest = {}
    for key in ("n_trees", "mtry", "min_node_size", "max_depth"):
        v = _take(d, key, int)
        if v is not None:
            forest[key] = v
    kw = {}
    for key in ("m", "iterations", "pmm_donors", "max_iter"):
        v = _take(d, key, int)
        if v is not None:
            kw[key] = v
    thr = _take(d, "correlation_threshold", float)
    if thr is not None:
        kw["correlation_threshold"] = thr
    _no_leftovers(d, where)
    try:
        return ImputerSpec(method, forest_cfg=ForestConfig(**forest) if forest else None, **kw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: Mapping, base_dir: Path | str = ".") -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed TOML.

    Relative paths are resolved against ``base_dir``.
    """
    base = Path(base_dir)
    raw = dict(raw)
    data = _section(raw, "data")
    raw.pop("data", None)
    amp = _section(raw, "amputation")
    raw.pop("amputation", None)
    meas = _section(raw, "measures")
    raw.pop("measures", None)
    imputers = raw.pop("imputer", [])
    if not isinstance(imputers, list) or not imputers:
        raise ConfigError("at least one [[imputer]] table is required")

    synth_name = _take(data, "synthetic", str)
    csv_path = _take(data, "csv", str)
    schema_path = _take(data, "schema", str)
    n_rows = _take(data, "n_rows", int, 2000)
    targets = data.pop("targets", None)
    if targets is not None and not (isinstance(targets, list) and all(isinstance(t, str) for t in targets)):
        raise ConfigError("data.targets must be a list of column names")
    source = DataSource(
        csv=None if csv_path is None else base / csv_path,
        schema=None if schema_path is None else base / schema_path,
        synthetic=None if synth_name is None else _synthetic(synth_name, n_rows),
        seed=_take(data, "seed", int, 0),
        missing_token=_take(data, "missing_token", str, "NA"),
    )
    _no_leftovers(data, "[data]")

    mechanisms = amp.pop("mechanisms", ["MCAR"])
    rates = amp.pop("rates", [0.01, 0.05, 0.1])
    mar_raw = amp.pop("mar", [])
    _no_leftovers(amp, "[amputation]")
    mar = []
    for e in mar_raw:
        e = dict(e)
        try:
            entry = MarEntry(
                e.pop("target"), e.pop("conditioner"),
                Direction(e.pop("direction", Direction.HIGH_MORE_MISSING.value)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad [[amputation.mar]] entry: {exc}") from None
        _no_leftovers(e, "[[amputation.mar]]")
        mar.append(entry)

    per_completion = _take(meas, "per_completion", bool, False)
    scope = _take(meas, "cramers_v", str, "full")
    _no_leftovers(meas, "[measures]")

    out = _take(raw, "output_dir", str)
    subsample = _take(raw, "subsample", int)
    cfg = ExperimentConfig(
        data=source,
        imputers=tuple(_imputer(d, i) for i, d in enumerate(imputers)),
        mechanisms=tuple(str(m).upper() for m in mechanisms),
        rates=tuple(float(r) for r in rates),
        mar=tuple(mar),
        targets=None if targets is None else tuple(targets),
        mc_iterations=_take(raw, "mc_iterations", int, 100),
        perm=_take(raw, "perm", int, 999),
        seed=_take(raw, "seed", int, 0),
        output_dir=None if out is None else base / out,
        subsample=subsample or None,
        workers=_take(raw, "workers", int),
        per_completion=per_completion,
        cramers_v_scope=scope,
    )
    _no_leftovers(raw, "the top level")
    return cfg


def _synthetic(name: str, n_rows: int) -> SyntheticSpec:
    if name != "default":
        raise ConfigError(f"unknown synthetic spec {name!r}; only 'default' is built in")
    return default_spec(n_rows)


def load_config(path) -> ExperimentConfig:
    """Read a TOML experiment file (``#`` comments allowed)."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, path.parent)


def load_data(source: DataSource) -> DataTable:
    if source.synthetic is not None:
        return generate_synthetic(source.synthetic, source.seed)
    table = read_csv(source.csv, source.schema, missing_token=source.missing_token)
    if table.n_missing():
        raise ConfigError(f"{source.csv}: the input table must be complete")
    return table


# -- seeds -------------------------------------------------------------------


def _method_id(method: str | None) -> int:
    return 0 if method is None else zlib.crc32(method.encode("utf-8"))


def sub_seed(master: int, mechanism: str, rate: float, mc_iter: int,
             method: str | None, role: str, *extra: int) -> np.random.SeedSequence:
    """Seed for one role of one grid cell; a pure function of its arguments."""
    key = (
        MECHANISMS.index(mechanism),
        int(round(rate * 1e6)),
        int(mc_iter),
        _method_id(method),
        ROLES[role],
        *map(int, extra),
    )
    return np.random.SeedSequence(int(master), spawn_key=key)


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


# -- measures for one imputation ----------------------------------------------


@dataclass
class _TruthCache:
    """Per-variable quantities of the complete table that every method reuses."""

    table: DataTable
    kdes: dict = field(default_factory=dict)

    def kde(self, name):
        if name not in self.kdes:
            try:
                self.kdes[name] = kde(self.table.values(name))
            except ValueError as exc:
                self.kdes[name] = exc
        return self.kdes[name]


def _unique(completions: Sequence[DataTable]) -> tuple[list[DataTable], list[int]]:
    # identical completions (e.g. Naive) are scored once
    seen: dict[int, int] = {}
    uniq, where = [], []
    for c in completions:
        if id(c) not in seen:
            seen[id(c)] = len(uniq)
            uniq.append(c)
        where.append(seen[id(c)])
    return uniq, where


def _score(cfg: ExperimentConfig, truth: _TruthCache, mask: MissingMask,
           completions: Sequence[DataTable], targets: Sequence[str], perm_seed) -> tuple[list, list]:
    """Return ``(rows, notes)``; rows are ``(variable, measure, value, flag)``."""
    true = truth.table
    rows: list[tuple[str, str, float, str]] = []
    notes: list[str] = []
    m = len(completions)
    uniq, where = _unique(completions)

    def mean_over(fn):
        vals = [fn(c) for c in uniq]
        return float(np.mean([vals[k] for k in where])), [vals[k] for k in where]

    def emit(var, measure, value, flag="", per=None):
        rows.append((var, measure, value, flag))
        if cfg.per_completion and per is not None:
            for k, v in enumerate(per):
                rows.append((var, f"{measure}#{k + 1}", v, flag if math.isinf(v) else ""))

    cont_true, cont_imp, cont_var = [[] for _ in range(m)], [[] for _ in range(m)], []
    cat_true, cat_imp = [[] for _ in range(m)], [[] for _ in range(m)]
    for vi, name in enumerate(targets):
        col = true.column_schema(name)
        miss = mask.column(name)
        t = true.values(name)
        if col.is_categorical:
            if miss.any():
                val, _ = mean_over(lambda c: pfc(t[miss], c.values(name)[miss]))
                emit(name, "pfc", val)
                for k, c in enumerate(completions):
                    cat_true[k].append(t[miss])
                    cat_imp[k].append(c.values(name)[miss])
            sel = miss if cfg.cramers_v_scope == "masked" else slice(None)
            if cfg.cramers_v_scope == "full" or miss.any():
                def table_of(c):
                    return crosstab(t[sel], c.values(name)[sel], col.categories)
                val, _ = mean_over(lambda c: chi_square(table_of(c)))
                emit(name, "chi2", val)
                val, per = mean_over(lambda c: cramers_v(table_of(c)))
                emit(name, "cramers_v", val, per=per)
            if not col.ordinal:
                continue
        else:
            if miss.any():
                var = float(np.var(t, ddof=1))
                val, _ = mean_over(lambda c: nrmse(t[miss], c.values(name)[miss], var))
                emit(name, "nrmse", val)
                cont_var.append(var)
                for k, c in enumerate(completions):
                    cont_true[k].append(t[miss])
                    cont_imp[k].append(c.values(name)[miss])

        # edf statistics (continuous and ordinal columns)
        cols = [c.values(name).astype(float) for c in completions]
        tests = permutation_tests(
            t.astype(float), cols, (Statistic.KS, Statistic.CM), cfg.perm,
            np.random.SeedSequence(perm_seed.entropy, spawn_key=tuple(perm_seed.spawn_key) + (vi,)),
        )
        emit(name, "ks", tests[Statistic.KS].observed_stat)
        emit(name, "cm", tests[Statistic.CM].observed_stat)
        emit(name, "ks_pvalue", tests[Statistic.KS].p_value)
        emit(name, "cm_pvalue", tests[Statistic.CM].p_value)
        if col.is_categorical:
            continue
        val, per = mean_over(lambda c: mallows_l2(t, c.values(name)))
        emit(name, "mallows_l2", val, per=per)
        p = truth.kde(name)
        if isinstance(p, Exception):
            notes.append(f"kl excluded for {name}: {p}")
            continue
        try:
            val, per = mean_over(lambda c: kl_divergence(p, kde(c.values(name))))
        except ValueError as exc:
            notes.append(f"kl excluded for {name}: {exc}")
            continue
        if math.isinf(val):
            notes.append(f"kl infinite for {name} (zero imputed density)")
            emit(name, "kl", math.inf, KL_ZERO_DENSITY, per=per)
        else:
            emit(name, "kl", val, per=per)

    if cont_var:
        val = float(np.mean([nrmse(cont_true[k], cont_imp[k], cont_var) for k in range(m)]))
        emit(POOLED, "nrmse", val)
    if cat_true[0]:
        val = float(np.mean([pfc(cat_true[k], cat_imp[k]) for k in range(m)]))
        emit(POOLED, "pfc", val)
    return rows, notes


# -- running -----------------------------------------------------------------


@dataclass
class _CellResult:
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)  # (method, mechanism, rate, seconds)
    errors: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    successes: int = 0


def _plan(cfg: ExperimentConfig, table: DataTable, mechanism: str, rate: float, seed: int) -> AmputationPlan:
    targets = list(cfg.targets) if cfg.targets is not None else table.names
    if mechanism == "MCAR":
        return AmputationPlan([(v, MCAR) for v in targets], rate, seed)
    mar = {e.target: MAR(e.conditioner, e.direction) for e in cfg.mar}
    unknown = [v for v in mar if v not in targets]
    if unknown:
        raise ConfigError(f"MAR target(s) {unknown} are not amputation targets")
    ordered = [(e.target, mar[e.target]) for e in cfg.mar]
    ordered += [(v, MCAR) for v in targets if v not in mar]
    return AmputationPlan(ordered, rate, seed)


def oracle_imputer(amputed: DataTable, mask: MissingMask, truth: DataTable, seed: int) -> list[DataTable]:
    """Test hook: 'impute' by copying the truth back."""
    return [truth]


def run_cell(cfg: ExperimentConfig, table: DataTable, mechanism: str, rate: float, mc_iter: int,
             extra_imputers: Mapping[str, ExtraImputer] | None = None,
             truth_cache: _TruthCache | None = None) -> _CellResult:
    """Amputate, impute with every method, and score one grid cell."""
    out = _CellResult()
    master = cfg.seed
    truth = table
    if cfg.subsample is not None and cfg.subsample < table.n_rows:
        rng = np.random.default_rng(sub_seed(master, mechanism, rate, mc_iter, None, "subsample"))
        truth = table.take(np.sort(rng.choice(table.n_rows, cfg.subsample, replace=False)))
        truth_cache = None
    if truth_cache is None:
        truth_cache = _TruthCache(truth)
    plan = _plan(cfg, truth, mechanism, rate,
                 _int_seed(sub_seed(master, mechanism, rate, mc_iter, None, "amputate")))
    amputed, mask = apply_plan(truth, plan)
    targets = plan.variables

    methods: list[tuple[str, Callable[[], Sequence[DataTable]]]] = []
    for spec in cfg.imputers:
        label = spec.method.value
        s = replace(spec, seed=_int_seed(sub_seed(master, mechanism, rate, mc_iter, label, "impute")))
        methods.append((label, lambda s=s: run_method(amputed, mask, s).completions))
    for label, fn in (extra_imputers or {}).items():
        seed = _int_seed(sub_seed(master, mechanism, rate, mc_iter, label, "impute"))
        methods.append((label, lambda fn=fn, seed=seed: fn(amputed, mask, truth, seed)))

    for label, impute in methods:
        where = f"mc_iter={mc_iter} mechanism={mechanism} rate={rate:g} method={label}"
        try:
            start = time.perf_counter()
            completions = list(impute())
            seconds = time.perf_counter() - start
            rows, notes = _score(
                cfg, truth_cache, mask, completions, targets,
                sub_seed(master, mechanism, rate, mc_iter, label, "permtest"),
            )
        except Exception as exc:  # isolate failures per (iteration, method)
            logger.warning("%s failed: %s", where, exc)
            out.errors.append(f"{where}: {type(exc).__name__}: {exc}")
            continue
        out.successes += 1
        out.timings.append((label, mechanism, rate, seconds))
        out.notes.extend(f"{where}: {n}" for n in notes)
        out.records.extend(
            MeasureRecord(mc_iter, mechanism, rate, label, var, measure, value, flag)
            for var, measure, value, flag in rows
        )
    logger.info("cell mechanism=%s rate=%g mc_iter=%d done", mechanism, rate, mc_iter)
    return out


@dataclass(frozen=True)
class SummaryRow:
    method: str
    mechanism: str
    rate: float
    measure: str
    variable: str
    n: int
    q0: float
    q25: float
    q50: float
    q75: float
    q100: float
    sd: float
    n_excluded: int


@dataclass
class RunReport:
    records: list[MeasureRecord]
    summary: list[SummaryRow]
    kappa: list[tuple[str, str, float, float, int]]
    timing: list[tuple[str, str, float, float, int]]
    errors: list[str]
    kl_exclusions: list[str]
    successes: int = 0

    def values(self, *, method=None, mechanism=None, rate=None, measure=None, variable=None) -> np.ndarray:
        """Record values matching the given fields (convenience filter)."""
        out = [
            r.value for r in self.records
            if (method is None or r.method == method)
            and (mechanism is None or r.mechanism == mechanism)
            and (rate is None or math.isclose(r.rate, rate))
            and (measure is None or r.measure == measure)
            and (variable is None or r.variable == variable)
        ]
        return np.asarray(out, dtype=float)


def _sort_key(r: MeasureRecord):
    return (r.mc_iter, r.mechanism, r.rate, r.method, r.variable, r.measure)


def summarize(records: Iterable[MeasureRecord]) -> list[SummaryRow]:
    """Five-number summaries and sd per (method, mechanism, rate, measure, variable).

    Each measure also gets a ``*`` row pooling all per-variable values.
    Infinite values are left out and counted in ``n_excluded``.
    """
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        keys = [(r.method, r.mechanism, r.rate, r.measure, r.variable)]
        if r.variable != POOLED:
            keys.append((r.method, r.mechanism, r.rate, r.measure, ALL_VARIABLES))
        for k in keys:
            groups[k].append(r.value)
    rows = []
    for key in sorted(groups):
        vals = np.asarray(groups[key], dtype=float)
        finite = vals[np.isfinite(vals)]
        excluded = int(vals.size - finite.size)
        if finite.size:
            s = summary_stats(finite)
            rows.append(SummaryRow(*key, int(finite.size), *s, excluded))
        else:
            nan = math.nan
            rows.append(SummaryRow(*key, 0, nan, nan, nan, nan, nan, nan, excluded))
    return rows


def kappa_table(records: Iterable[MeasureRecord]) -> list[tuple[str, str, float, float, int]]:
    """kappa per (method, mechanism, rate) from the Cramer's V records."""
    groups: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        if r.measure == "cramers_v":
            groups[(r.method, r.mechanism, r.rate)].append(r.value)
    return [(*k, kappa(v), len(v)) for k, v in sorted(groups.items())]


def _timing_table(timings) -> list[tuple[str, str, float, float, int]]:
    groups: dict[tuple, list[float]] = defaultdict(list)
    for method, mech, rate, secs in timings:
        groups[(method, mech, rate)].append(secs)
    return [(*k, float(np.mean(v)), len(v)) for k, v in sorted(groups.items())]


def _workers(cfg: ExperimentConfig) -> int:
    w = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    return max(int(w), 1)


def _cell_job(args):
    cfg, table, mech, rate, it, extra = args
    return run_cell(cfg, table, mech, rate, it, extra)


def run_experiment(cfg: ExperimentConfig, *, table: DataTable | None = None,
                   extra_imputers: Mapping[str, ExtraImputer] | None = None,
                   write: bool = True) -> RunReport:
    """Run the full grid and (optionally) write the output files.

    ``table`` overrides the configured data source; ``extra_imputers`` adds
    named imputation callables (for example :func:`oracle_imputer`).
    """
    if table is None:
        table = load_data(cfg.data)
    for spec in cfg.imputers:
        if spec.method is Method.AMELIA:
            logger.warning("Amelia is not implemented; every Amelia cell will be logged as failed")
    grid = [(mech, rate, it) for mech in cfg.mechanisms for rate in cfg.rates
            for it in range(cfg.mc_iterations)]
    workers = min(_workers(cfg), len(grid))
    results: list[_CellResult]
    if workers == 1:
        cache = _TruthCache(table) if cfg.subsample is None else None
        results = [run_cell(cfg, table, m, r, i, extra_imputers, cache) for m, r, i in grid]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, [(cfg, table, m, r, i, extra_imputers) for m, r, i in grid]))

    records, timings, errors, notes = [], [], [], []
    successes = 0
    for res in results:
        records.extend(res.records)
        timings.extend(res.timings)
        errors.extend(res.errors)
        notes.extend(res.notes)
        successes += res.successes
    records.sort(key=_sort_key)
    # summaries use the values as written, so summarize(read_records(...)) reproduces them
    printed = [replace(r, value=float(_fmt(r.value))) for r in records]
    report = RunReport(
        records=records,
        summary=summarize(printed) if printed else [],
        kappa=kappa_table(printed),
        timing=_timing_table(timings),
        errors=errors,
        kl_exclusions=notes,
        successes=successes,
    )
    if write and cfg.output_dir is not None:
        write_report(report, cfg.output_dir)
    if successes == 0:
        raise HarnessError("no imputation succeeded in any iteration:\n" + "\n".join(errors[:20]))
    return report


# -- output files ------------------------------------------------------------


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return "%.6g" % x


def _record_row(r: MeasureRecord) -> list:
    return [r.mc_iter, r.mechanism, "%g" % r.rate, r.method, r.variable, r.measure, _fmt(r.value), r.flag]


def write_records(records: Iterable[MeasureRecord], path) -> None:
    """Write records sorted canonically; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        w = csv.writer(path, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        w.writerows(_record_row(r) for r in sorted(records, key=_sort_key))
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_records(records, fh)


def read_records(path) -> list[MeasureRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RECORD_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(RECORD_COLUMNS)}")
        out = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(RECORD_COLUMNS):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields")
            try:
                out.append(MeasureRecord(int(row[0]), row[1], float(row[2]), row[3], row[4],
                                         row[5], float(row[6]), row[7]))
            except ValueError:
                raise ValueError(f"{path}: row {lineno} is malformed") from None
    return out


def write_summary(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SummaryRow.__dataclass_fields__.keys())
        for s in rows:
            w.writerow([s.method, s.mechanism, "%g" % s.rate, s.measure, s.variable, s.n,
                        *(_fmt(v) for v in (s.q0, s.q25, s.q50, s.q75, s.q100, s.sd)), s.n_excluded])


def write_kappa(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mechanism", "rate", "kappa", "n"])
        for method, mech, rate, k, n in rows:
            w.writerow([method, mech, "%g" % rate, _fmt(k), n])


def write_timing(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mechanism", "rate", "mean_seconds", "n"])
        for method, mech, rate, secs, n in rows:
            w.writerow([method, mech, "%g" % rate, "%.4f" % secs, n])


def write_report(report: RunReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(report.records, out / "records.csv")
    write_summary(report.summary, out / "summary.csv")
    write_kappa(report.kappa, out / "kappa.csv")
    write_timing(report.timing, out / "timing.csv")
    lines = list(report.errors) + list(report.kl_exclusions)
    (out / "errors.log").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
