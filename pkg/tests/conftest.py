import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from imputeval.frame import ColumnSchema, DataTable, Kind

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def mixed_table(n=60, seed=0, missing_rate=0.0):
    """Small table: two correlated continuous columns and one 3-level categorical."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = 2.0 * x + rng.normal(scale=0.5, size=n)
    c = np.digitize(x + rng.normal(scale=0.3, size=n), [-0.5, 0.5])
    schema = [
        ColumnSchema("x", Kind.CONTINUOUS),
        ColumnSchema("y", Kind.CONTINUOUS),
        ColumnSchema("c", Kind.CATEGORICAL, ("a", "b", "c")),
    ]
    miss = None
    if missing_rate:
        miss = [rng.random(n) < missing_rate for _ in range(3)]
    return DataTable(schema, [x, y, c], miss)


@pytest.fixture
def table():
    return mixed_table()


ACCEPTANCE: list[str] = []


def report_criterion(number, ok, detail):
    """Record one acceptance line; printed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
