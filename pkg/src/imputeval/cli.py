"""Command-line interface.

    imputeval run --config exp.toml
    imputeval synth --spec default --seed 7 -o data.csv
    imputeval amputate --input data.csv --schema data.schema --rate 0.1 -o amputed/
    imputeval impute --input amputed/amputed.csv --schema amputed/amputed.schema --method MiceNorm -o done/
    imputeval measure --true data.csv --imputed done/completion_1.csv
    imputeval summarize --records out/records.csv -o out/

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors (an
``errors.log`` is written to the output directory when one was given).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .forest import ForestConfig
from .frame import DataTable, infer_schema, read_csv, read_schema, write_csv, write_schema
from .harness import (
    kappa_table,
    load_config,
    read_records,
    run_experiment,
    summarize,
    write_kappa,
    write_records,
    write_summary,
)
from .impute import ImputerSpec, Method, run_method
from .measures import (
    KL_ZERO_DENSITY,
    MeasureRecord,
    chi_square,
    cm_statistic,
    cramers_v,
    crosstab,
    kde,
    kl_divergence,
    ks_statistic,
    mallows_l2,
    nrmse,
    pfc,
)
from .missing import MAR, MCAR, AmputationPlan, Direction, apply_plan
from .permtest import permutation_tests
from .synth import default_spec, generate_synthetic

logger = logging.getLogger("imputeval")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _shared() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--config", type=Path, help="experiment config file (TOML)")
    g.add_argument("--seed", type=int, help="master seed (overrides the config)")
    g.add_argument("-o", "--output", type=Path, help="output directory (a file for synth)")
    g.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    g.add_argument("--workers", type=int, help="worker processes; 1 runs sequentially")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared()
    parser = _Parser(prog="imputeval", description="Evaluate imputation methods on mixed-type data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sub.add_parser("run", parents=[shared], help="run a simulation experiment",
                   description="Run the experiment described by --config.")

    p = sub.add_parser("amputate", parents=[shared], help="inject missing values into a CSV",
                       description="Write amputed.csv, amputed.schema and mask.csv to --output.")
    p.add_argument("--input", type=Path, required=True, help="complete CSV")
    p.add_argument("--schema", type=Path, help="schema file (inferred when omitted)")
    p.add_argument("--rate", type=float, required=True, help="overall missing rate in (0, 1)")
    p.add_argument("--targets", help="comma-separated target columns (default: all)")
    p.add_argument("--mar", action="append", default=[], metavar="TARGET:CONDITIONER[:DIRECTION]",
                   help="make TARGET MAR given CONDITIONER; direction high_more_missing "
                        "(default) or high_less_missing; repeatable")
    p.add_argument("--missing-token", default="NA", help="missing-cell token (default NA)")

    p = sub.add_parser("impute", parents=[shared], help="complete a CSV with one method",
                       description="Write completion_<k>.csv files to --output.")
    p.add_argument("--input", type=Path, required=True, help="CSV with missing cells")
    p.add_argument("--schema", type=Path, help="schema file (inferred when omitted)")
    p.add_argument("--method", required=True, help=", ".join(m.value for m in Method if m is not Method.AMELIA))
    p.add_argument("--m", type=int, default=1, help="number of completions (default 1)")
    p.add_argument("--iterations", type=int, default=5, help="chained-equation sweeps (default 5)")
    p.add_argument("--max-iter", type=int, default=10, help="iterative forest cap (default 10)")
    p.add_argument("--n-trees", type=int, help="trees per forest")
    p.add_argument("--pmm-donors", type=int, default=5, help="donor pool size (default 5)")
    p.add_argument("--correlation-threshold", type=float, default=0.8,
                   help="covariate filter threshold (default 0.8)")
    p.add_argument("--missing-token", default="NA", help="missing-cell token (default NA)")

    p = sub.add_parser("measure", parents=[shared], help="compare a true and an imputed CSV",
                       description="Print measure records (CSV) comparing two tables column by column.")
    p.add_argument("--true", dest="true_csv", type=Path, required=True, help="complete true CSV")
    p.add_argument("--imputed", type=Path, required=True, help="completed CSV")
    p.add_argument("--schema", type=Path, help="schema file (inferred when omitted)")
    p.add_argument("--mask", type=Path, help="mask.csv from amputate; enables NRMSE/PFC")
    p.add_argument("--perm", type=int, default=0, help="permutation rounds for p-values (default 0: none)")

    p = sub.add_parser("summarize", parents=[shared], help="summary tables from records.csv",
                       description="Write summary.csv and kappa.csv next to the records or to --output.")
    p.add_argument("--records", type=Path, required=True, help="records.csv of a run")

    p = sub.add_parser("synth", parents=[shared], help="write a synthetic dataset",
                       description="Write a synthetic CSV to --output and its schema beside it.")
    p.add_argument("--spec", default="default", help="synthetic spec name (only 'default')")
    p.add_argument("--n-rows", type=int, default=2000, help="rows (default 2000)")
    return parser


# -- helpers -----------------------------------------------------------------


def _schema_for(path: Path, schema: Path | None, token: str):
    return read_schema(schema) if schema is not None else infer_schema(path, token)


def _read(path: Path, schema: Path | None, token: str = "NA") -> DataTable:
    return read_csv(path, schema=_schema_for(path, schema, token), missing_token=token)


def _out_dir(args) -> Path:
    if args.output is None:
        raise UsageError("--output is required for this command")
    args.output.mkdir(parents=True, exist_ok=True)
    return args.output


def _seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


# -- commands ----------------------------------------------------------------


def cmd_run(args) -> int:
    if args.config is None:
        raise UsageError("run needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    if cfg.output_dir is None:
        raise UsageError("no output directory: set output_dir in the config or pass --output")
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    args.output = cfg.output_dir
    report = run_experiment(cfg)
    logger.info("%d records written to %s", len(report.records), cfg.output_dir)
    if report.errors:
        logger.warning("%d (iteration, method) failures; see errors.log", len(report.errors))
    return 0


def _parse_mar(items) -> list[tuple[str, MAR]]:
    out = []
    for item in items:
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise UsageError(f"--mar expects TARGET:CONDITIONER[:DIRECTION], got {item!r}")
        try:
            direction = Direction(parts[2]) if len(parts) == 3 else Direction.HIGH_MORE_MISSING
        except ValueError:
            raise UsageError(f"unknown MAR direction {parts[2]!r}") from None
        out.append((parts[0], MAR(parts[1], direction)))
    return out


def cmd_amputate(args) -> int:
    out = _out_dir(args)
    table = _read(args.input, args.schema, args.missing_token)
    targets = args.targets.split(",") if args.targets else table.names
    mar = _parse_mar(args.mar)
    mar_names = {v for v, _ in mar}
    plan = AmputationPlan(mar + [(v, MCAR) for v in targets if v not in mar_names], args.rate, _seed(args))
    amputed, mask = apply_plan(table, plan)
    write_csv(amputed, out / "amputed.csv", missing_token=args.missing_token)
    write_schema(amputed.schema, out / "amputed.schema")
    with open(out / "mask.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(mask.names)
        w.writerows(mask.flags.astype(int).tolist())
    logger.info("%d cells amputed", mask.count())
    return 0


def cmd_impute(args) -> int:
    out = _out_dir(args)
    table = _read(args.input, args.schema, args.missing_token)
    forest = ForestConfig(n_trees=args.n_trees) if args.n_trees else None
    try:
        method = Method.parse(args.method)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    spec = ImputerSpec(
        method, m=args.m, iterations=args.iterations, forest_cfg=forest,
        pmm_donors=args.pmm_donors, correlation_threshold=args.correlation_threshold,
        seed=_seed(args), max_iter=args.max_iter,
    )
    result = run_method(table, None, spec)
    for k, done in enumerate(result.completions, 1):
        write_csv(done, out / f"completion_{k}.csv")
    write_schema(table.schema, out / "completion.schema")
    logger.info("%s finished in %.2f s", method.value, result.wall_clock_seconds)
    return 0


def _read_pair(true_csv: Path, imp_csv: Path, schema: Path | None) -> tuple[DataTable, DataTable]:
    base = _schema_for(true_csv, schema, "NA")
    t0 = read_csv(true_csv, schema=base)
    i0 = read_csv(imp_csv, schema=_schema_for(imp_csv, schema, "NA"))
    if t0.names != i0.names:
        raise ValueError("true and imputed CSVs have different columns")
    if t0.n_rows != i0.n_rows:
        raise ValueError("true and imputed CSVs have different row counts")
    pinned = []
    for a, b in zip(t0.schema, i0.schema):
        if a.is_categorical != b.is_categorical:
            raise ValueError(f"column {a.name!r} has different kinds in the two files")
        if a.is_categorical and a.categories != b.categories:
            # both files must share one code book
            a = a.with_categories(sorted(set(a.categories) | set(b.categories)))
        pinned.append(a)
    t, i = read_csv(true_csv, schema=pinned), read_csv(imp_csv, schema=pinned)
    if t.n_missing() or i.n_missing():
        raise ValueError("measure needs complete tables")
    return t, i


def _read_mask(path: Path, names) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(names):
        raise ValueError(f"{path}: mask header does not match the table columns")
    return np.array([[c.strip() == "1" for c in r] for r in rows[1:]], dtype=bool)


def cmd_measure(args) -> int:
    t, imp = _read_pair(args.true_csv, args.imputed, args.schema)
    M = _read_mask(args.mask, t.names) if args.mask else None
    if M is not None and M.shape != (t.n_rows, t.n_cols):
        raise ValueError("mask shape does not match the tables")
    records = []

    def rec(var, measure, value, flag=""):
        records.append(MeasureRecord(0, "none", 0.0, "input", var, measure, value, flag))

    for j, col in enumerate(t.schema):
        a, b = t.columns[j], imp.columns[j]
        miss = M[:, j] if M is not None else None
        if col.is_categorical:
            tab = crosstab(a, b, col.categories)
            rec(col.name, "chi2", chi_square(tab))
            rec(col.name, "cramers_v", cramers_v(tab))
            if miss is not None and miss.any():
                rec(col.name, "pfc", pfc(a[miss], b[miss]))
            if not col.ordinal:
                continue
        a = a.astype(float)
        b = b.astype(float)
        rec(col.name, "ks", ks_statistic(a, b))
        rec(col.name, "cm", cm_statistic(a, b))
        if args.perm > 0:
            tests = permutation_tests(a, [b], perm=args.perm, seed=_seed(args))
            for s, o in tests.items():
                rec(col.name, f"{s.value}_pvalue", o.p_value)
        if col.is_categorical:
            continue
        rec(col.name, "mallows_l2", mallows_l2(a, b))
        try:
            kl = kl_divergence(kde(a), kde(b))
            rec(col.name, "kl", kl, KL_ZERO_DENSITY if np.isinf(kl) else "")
        except ValueError as exc:
            logger.warning("kl skipped for %s: %s", col.name, exc)
        if miss is not None and miss.any():
            rec(col.name, "nrmse", nrmse(a[miss], b[miss], float(np.var(a, ddof=1))))
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        write_records(records, args.output / "records.csv")
    else:
        write_records(records, sys.stdout)
    return 0


def cmd_summarize(args) -> int:
    records = read_records(args.records)
    if not records:
        raise ValueError(f"{args.records}: no records")
    out = args.output if args.output is not None else args.records.parent
    out.mkdir(parents=True, exist_ok=True)
    write_summary(summarize(records), out / "summary.csv")
    write_kappa(kappa_table(records), out / "kappa.csv")
    return 0


def cmd_synth(args) -> int:
    if args.output is None:
        raise UsageError("synth needs -o/--output (the CSV file to write)")
    if args.spec != "default":
        raise UsageError(f"unknown synthetic spec {args.spec!r}; only 'default' is built in")
    table = generate_synthetic(default_spec(args.n_rows), _seed(args))
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, args.output)
    write_schema(table.schema, args.output.with_suffix(".schema"))
    return 0


COMMANDS = {
    "run": cmd_run,
    "amputate": cmd_amputate,
    "impute": cmd_impute,
    "measure": cmd_measure,
    "summarize": cmd_summarize,
    "synth": cmd_synth,
}


def _error_dir(args) -> Path | None:
    out = getattr(args, "output", None)
    if out is None:
        return None
    return out.parent if args.command == "synth" else out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"imputeval: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"imputeval: {type(exc).__name__}: {exc}", file=sys.stderr)
        where = _error_dir(args)
        if where is not None:
            try:
                where.mkdir(parents=True, exist_ok=True)
                with open(where / "errors.log", "a", encoding="utf-8") as fh:
                    fh.write(f"{args.command}: {type(exc).__name__}: {exc}\n")
                    fh.write(traceback.format_exc())
            except OSError:
                pass
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
