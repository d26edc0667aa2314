import numpy as np
import pytest

from imputeval.synth import CategoricalSpec, SyntheticSpec, default_spec, generate_synthetic


def identity_spec(n=10_000, k=4):
    return SyntheticSpec(
        n_rows=n,
        names=tuple(f"z{j}" for j in range(k)),
        means=(0.0,) * k,
        sds=(1.0,) * k,
        corr=tuple(tuple(float(i == j) for j in range(k)) for i in range(k)),
    )


def test_identity_covariance_sds_and_correlations():
    t = generate_synthetic(identity_spec(), seed=1)
    X = np.column_stack([t.values(n) for n in t.names])
    sd = X.std(axis=0, ddof=1)
    assert np.all((sd >= 0.97) & (sd <= 1.03))
    c = np.corrcoef(X, rowvar=False)
    assert np.max(np.abs(c[np.triu_indices(4, 1)])) < 0.05


def test_fixed_seed_is_reproducible():
    a = generate_synthetic(default_spec(300), seed=5)
    b = generate_synthetic(default_spec(300), seed=5)
    c = generate_synthetic(default_spec(300), seed=6)
    assert a.equals(b)
    assert not a.equals(c)


def test_default_spec_shape():
    spec = default_spec()
    t = generate_synthetic(spec, seed=0)
    assert t.n_rows == 2000
    assert len(t.continuous_names()) == 8
    assert len(t.categorical_names()) == 4
    levels = [len(t.column_schema(n).categories) for n in t.categorical_names()]
    assert min(levels) >= 3 and max(levels) <= 6
    r = np.corrcoef(t.values("x1"), t.values("x2"))[0, 1]
    assert r == pytest.approx(0.9, abs=0.03)
    for name in t.categorical_names():
        assert np.unique(t.values(name)).size == len(t.column_schema(name).categories)


def test_driver_shifts_levels():
    spec = default_spec(5000)
    t = generate_synthetic(spec, seed=2)
    x1, c1 = t.values("x1"), t.values("c1")
    assert np.mean(x1[c1 == 2]) > np.mean(x1[c1 == 0])


def test_spec_validation():
    with pytest.raises(ValueError):
        CategoricalSpec("g", (0.5, 0.6))
    with pytest.raises(ValueError):
        SyntheticSpec(10, ("a", "b"), (0, 0), (1, 1), ((1, 0.5), (0.4, 1)))
    bad = SyntheticSpec(10, ("a", "b"), (0, 0), (1, 1), ((1, 1.5), (1.5, 1)))
    with pytest.raises(ValueError, match="positive definite"):
        generate_synthetic(bad, 0)
