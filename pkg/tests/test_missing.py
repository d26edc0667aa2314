import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imputeval.frame import ColumnSchema, ColumnView, DataTable, Kind
from imputeval.missing import (
    MAR,
    MCAR,
    AmputationError,
    AmputationPlan,
    Direction,
    MissingMask,
    apply_plan,
    characteristics,
    conditional_probabilities,
    inject_mar,
    inject_mcar,
    largest_remainder,
    mar_allocation,
)

from conftest import mixed_table


def cont_table(n, k, seed=0):
    rng = np.random.default_rng(seed)
    schema = [ColumnSchema(f"v{j}", Kind.CONTINUOUS) for j in range(k)]
    return DataTable(schema, [rng.normal(size=n) for _ in range(k)])


def strat_table(levels, seed=0):
    """Categorical conditioner ``g`` with the given stratum sizes plus a target ``y``."""
    codes = np.repeat(np.arange(len(levels)), levels)
    rng = np.random.default_rng(seed)
    rng.shuffle(codes)
    labels = tuple(f"g{r}" for r in range(len(levels)))
    schema = [ColumnSchema("g", Kind.CATEGORICAL, labels), ColumnSchema("y", Kind.CONTINUOUS)]
    return DataTable(schema, [codes, rng.normal(size=codes.size)])


def test_mask_rates():
    flags = np.zeros((4, 2), dtype=bool)
    flags[:2, 0] = True
    m = MissingMask(flags, ("a", "b"))
    assert m.variable_rate("a") == 0.5
    assert m.variable_rate(1) == 0.0
    assert m.overall_rate() == 0.25
    assert m.count() == 2


@pytest.mark.parametrize("n, k, r, expected", [(10, 1, 0.1, 1), (100, 24, 0.05, 120)])
def test_mcar_exact_count_examples(n, k, r, expected):
    t = cont_table(n, k)
    mask = inject_mcar(t, t.names, r, seed=1)
    assert mask.count() == expected


def test_mcar_is_deterministic_and_seed_sensitive():
    t = cont_table(50, 3)
    a = inject_mcar(t, t.names, 0.2, seed=5)
    b = inject_mcar(t, t.names, 0.2, seed=5)
    c = inject_mcar(t, t.names, 0.2, seed=6)
    np.testing.assert_array_equal(a.flags, b.flags)
    assert not np.array_equal(a.flags, c.flags)


def test_mcar_touches_only_targets():
    t = cont_table(30, 4)
    mask = inject_mcar(t, ["v1", "v3"], 0.3, seed=0)
    assert not mask.flags[:, [0, 2]].any()
    assert mask.count() == math.ceil(0.3 * 30 * 2)


@pytest.mark.parametrize("r", [0.0, 1.0, -0.1, 1.5])
def test_mcar_rejects_bad_rate(r):
    with pytest.raises(AmputationError):
        inject_mcar(cont_table(5, 1), ["v0"], r, seed=0)


def test_mcar_rejects_overfull_request():
    t = cont_table(4, 1)
    t = t.with_missing(np.array([[True], [True], [True], [False]]))
    with pytest.raises(AmputationError):
        inject_mcar(t, ["v0"], 0.5, seed=0)


@given(st.integers(1, 200), st.integers(1, 8), st.floats(0.001, 0.999), st.integers(0, 2**32))
def test_mcar_count_property(n, k, r, seed):
    t = cont_table(n, k, seed=1)
    need = math.ceil(round(r * n * k, 9))
    mask = inject_mcar(t, t.names, r, seed)
    assert mask.count() == need


def test_mcar_uniform_over_cells():
    # 10 x 2 grid, r = 0.1 -> 2 cells per run; each cell hit with probability 0.1
    t = cont_table(10, 2)
    runs = 3000
    hits = np.zeros((10, 2))
    for s in range(runs):
        hits += inject_mcar(t, t.names, 0.1, seed=s).flags
    se = math.sqrt(0.1 * 0.9 / runs)
    assert np.all(np.abs(hits / runs - 0.1) < 4 * se)


def _alloc(values, direction=Direction.HIGH_MORE_MISSING, seed=0):
    values = np.asarray(values)
    return mar_allocation(ColumnView("g", values, np.arange(values.size)), direction, seed)


def test_single_characteristic_gets_all_probability():
    a = _alloc([3, 3, 3])
    np.testing.assert_array_equal(a.pi, [1.0])


@pytest.mark.parametrize(
    "p, h, pi", [((0.25, 0.75), (2, 2), (0.25, 0.75)), ((0.5, 0.5), (1, 3), (0.25, 0.75))]
)
def test_conditional_probability_examples(p, h, pi):
    np.testing.assert_allclose(conditional_probabilities(p, h), pi, atol=1e-15)


def test_direction_orders_draws():
    up = _alloc([0, 1, 2, 3, 4] * 4, Direction.HIGH_MORE_MISSING, seed=9)
    down = _alloc([0, 1, 2, 3, 4] * 4, Direction.HIGH_LESS_MISSING, seed=9)
    assert np.all(np.diff(up.allocated) >= 0)
    assert np.all(np.diff(down.allocated) <= 0)
    np.testing.assert_array_equal(up.allocated, down.allocated[::-1])


def test_allocation_rejects_empty_conditioner():
    with pytest.raises(AmputationError):
        _alloc([])


@given(st.lists(st.integers(0, 6), min_size=1, max_size=60), st.integers(0, 2**32))
def test_pi_sums_to_one_and_matches_formula(values, seed):
    a = _alloc(values, seed=seed)
    assert abs(a.pi.sum() - 1.0) <= 1e-12
    w = a.allocated * a.counts
    np.testing.assert_allclose(a.pi, w / w.sum(), rtol=1e-12)


@pytest.mark.parametrize(
    "total, weights, quotas",
    [(3, [1.0], [3]), (4, [0.25, 0.75], [1, 3]), (5, [0.3, 0.3, 0.4], [2, 1, 2])],
)
def test_largest_remainder_examples(total, weights, quotas):
    np.testing.assert_array_equal(largest_remainder(total, weights), quotas)


def _lr_oracle(total, w):
    exact = [total * x / sum(w) for x in w]
    base = [math.floor(e + 1e-9) for e in exact]
    rem = sorted(range(len(w)), key=lambda i: (-(round(exact[i] - base[i], 9)), i))
    for i in rem[: total - sum(base)]:
        base[i] += 1
    return base


@given(st.integers(0, 500), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12))
def test_largest_remainder_sums_exactly(total, w):
    q = largest_remainder(total, w)
    assert q.sum() == total
    assert np.all(q >= 0)
    assert q.tolist() == _lr_oracle(total, w)


def test_inject_mar_quotas_land_in_strata():
    t = strat_table([20, 20, 20])
    view = characteristics(t, "g")
    alloc = mar_allocation(view, Direction.HIGH_MORE_MISSING, seed=2)
    flags = inject_mar(t, "y", alloc, 9, seed=3)
    assert flags.sum() == 9
    got = np.bincount(t.values("g")[flags], minlength=3)
    np.testing.assert_array_equal(got, largest_remainder(9, alloc.pi))


def test_inject_mar_infeasible_quota_names_characteristic():
    t = strat_table([2, 30])
    view = characteristics(t, "g")
    alloc = mar_allocation(view, Direction.HIGH_MORE_MISSING, seed=0)
    alloc = type(alloc)(alloc.characteristics, alloc.counts, np.array([0.99, 0.01]),
                        conditional_probabilities([0.99, 0.01], alloc.counts), view)
    with pytest.raises(AmputationError, match="characteristic"):
        inject_mar(t, "y", alloc, 10, seed=0)


def test_continuous_conditioner_uses_ten_bins():
    t = cont_table(200, 2)
    view = characteristics(t, "v0")
    assert np.unique(view.values).size == 10
    assert np.all(np.bincount(view.values) == 20)


def test_empty_plan_is_identity(table):
    out, mask = apply_plan(table, AmputationPlan((), 0.1, seed=0))
    assert out.equals(table)
    assert mask.count() == 0


def test_mcar_plan_exact_count():
    t = cont_table(1000, 6)
    plan = AmputationPlan(tuple((f"v{j}", MCAR) for j in range(4)), 0.05, seed=4)
    out, mask = apply_plan(t, plan)
    assert mask.count() == 200
    assert not mask.flags[:, 4:].any()
    np.testing.assert_array_equal(out.missing_matrix(), mask.flags)


def test_plan_masks_only_observed_cells_and_keeps_others():
    t = mixed_table(n=100, seed=2, missing_rate=0.1)
    plan = AmputationPlan((("y", MAR("c")), ("x", MCAR)), 0.1, seed=1)
    out, mask = apply_plan(t, plan)
    before = t.missing_matrix()
    assert not (mask.flags & before).any()
    after = out.missing_matrix()
    np.testing.assert_array_equal(after, before | mask.flags)
    for name in t.names:
        keep = ~after[:, t.index(name)]
        np.testing.assert_array_equal(out.values(name)[keep], t.values(name)[keep])
    assert mask.flags[:, t.index("y")].sum() == 10
    assert not mask.flags[:, t.index("c")].any()


def test_mar_rate_per_variable_is_ceil_nr():
    t = strat_table([100, 100, 100, 100, 100])
    plan = AmputationPlan((("y", MAR("g", Direction.HIGH_LESS_MISSING)),), 0.07, seed=3)
    _, mask = apply_plan(t, plan)
    assert mask.count() == math.ceil(500 * 0.07)


def _spearman(a, b):
    ra = np.argsort(np.argsort(a)).astype(float)
    rb = np.argsort(np.argsort(b)).astype(float)
    return float(np.corrcoef(ra, rb)[0, 1])


@pytest.mark.parametrize("direction, sign", [(Direction.HIGH_LESS_MISSING, -1), (Direction.HIGH_MORE_MISSING, 1)])
def test_mar_direction_sign(direction, sign):
    t = strat_table([200] * 5)
    codes = t.values("g")
    fractions = np.zeros(5)
    for s in range(100):
        _, mask = apply_plan(t, AmputationPlan((("y", MAR("g", direction)),), 0.2, seed=s))
        fractions += np.bincount(codes[mask.column("y")], minlength=5) / 200
    rho = _spearman(np.arange(5), fractions / 100)
    assert sign * rho >= 0
    assert abs(rho) > 0.8


def test_plan_validation():
    t = cont_table(10, 2)
    with pytest.raises(AmputationError):
        apply_plan(t, AmputationPlan((("v0", MAR("v0")),), 0.1))
    with pytest.raises(AmputationError):
        apply_plan(t, AmputationPlan((("zz", MCAR),), 0.1))
