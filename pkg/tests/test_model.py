import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splitdiag import ColumnSelection, SplitIndices, TestConfig, simulate_null
from splitdiag.dataset import from_arrays
from splitdiag.model import (
    ModelError,
    ModelFormula,
    association_sweep,
    design_matrix,
    fit_ols,
    least_squares,
    normalized_aic,
)
from splitdiag.splitters import random_split

from conftest import ABALONE_FORMULA, DIAMONDS_FORMULA


def normal_equations(x, y):
    return np.linalg.solve(x.T @ x, x.T @ y)


class TestFormula:
    def test_parse(self):
        f = ModelFormula.parse("y ~ a + b:c + d^2")
        assert f.response == "y" and f.terms == ("a", "b:c", "d^2")
        assert f.n_coefficients == 4
        assert f.selection().selected == ("y", "a", "b:c", "d^2")
        assert str(ModelFormula.parse(str(f))) == str(f)

    @pytest.mark.parametrize("text", ["y a", "y ~", "~ a", "y ~ a +", "y ~ y", "y ~ a + a",
                                      "y ~ a^0", "y ~ a ~ b"])
    def test_rejects(self, text):
        with pytest.raises(ModelError):
            ModelFormula.parse(text)


class TestDesignMatrix:
    def test_intercept_and_term(self):
        ds = from_arrays("t", {"y": [0.0, 0.0], "a": [1.0, 2.0]})
        np.testing.assert_array_equal(design_matrix(ds, ModelFormula.parse("y ~ a")), [[1, 1], [1, 2]])

    def test_product_and_power(self):
        ds = from_arrays("t", {"y": [0.0, 0.0], "x": [2.0, 1.0], "yy": [3.0, 1.0],
                               "z": [4.0, 1.0], "a": [3.0, -1.0]})
        x = design_matrix(ds, ModelFormula.parse("y ~ x:yy:z + a^2"))
        np.testing.assert_array_equal(x, [[1, 24, 9], [1, 1, 1]])

    def test_categorical_base_column_rejected(self):
        ds = from_arrays("t", {"y": [1.0, 2.0], "g": ["a", "b"]})
        with pytest.raises(ValueError):
            design_matrix(ds, ModelFormula.parse("y ~ g"))


def test_exact_fit_gives_sentinel():
    x = np.arange(10.0)
    ds = from_arrays("t", {"x": x, "y": 2 * x})
    fit = fit_ols(ds, ModelFormula.parse("y ~ x"), random_split(10, 0.8, 0))
    np.testing.assert_allclose(fit.coefficients, [0, 2], atol=1e-12)
    assert fit.rss_train < 1e-20
    assert fit.r2_train == 1.0
    assert fit.aicn_train == -math.inf and fit.aicn_test == -math.inf


def test_aicn_at_unit_mean_rss():
    assert normalized_aic(50.0, 50, 2) == pytest.approx(4 / 50, abs=1e-15)


def test_normal_equations_oracle():
    r = np.random.default_rng(0)
    for _ in range(100):
        n, p = r.integers(8, 51), r.integers(1, 6)
        x = np.column_stack([np.ones(n), r.normal(size=(n, p - 1))]) if p > 1 else np.ones((n, 1))
        y = x @ r.normal(size=p) + r.normal(size=n)
        beta = least_squares(x, y)
        ref = normal_equations(x, y)
        np.testing.assert_allclose(beta, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(6, 40), st.integers(1, 4)),
              elements=st.floats(-100, 100)),
       st.integers(0, 2**32 - 1))
def test_residuals_orthogonal_to_design(x_raw, seed):
    x = np.column_stack([np.ones(x_raw.shape[0]), x_raw])
    if np.linalg.cond(x) > 1e8:
        return
    y = np.random.default_rng(seed).normal(size=x.shape[0]) * 10
    resid = y - x @ least_squares(x, y)
    scale = np.linalg.norm(x, axis=0) * max(np.linalg.norm(y), 1.0)
    assert np.all(np.abs(x.T @ resid) <= 1e-8 * scale)


def test_rank_deficient_rejected():
    a = np.arange(20.0)
    ds = from_arrays("t", {"y": np.sin(a), "a": a, "b": 3 * a + 1})
    with pytest.raises(ModelError):
        fit_ols(ds, ModelFormula.parse("y ~ a + b"), random_split(20, 0.8, 0))


def test_fewer_rows_than_coefficients():
    with pytest.raises(ModelError):
        least_squares(np.ones((2, 3)), np.ones(2))


def test_row_order_invariance(abalone):
    f = ModelFormula.parse(ABALONE_FORMULA)
    split = random_split(abalone.n_rows, 0.8, 5)
    perm = np.random.default_rng(1).permutation(abalone.n_rows)
    cols = {c: abalone.numeric[c][perm] for c in abalone.numeric_columns}
    shuffled = from_arrays("p", cols)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    moved = SplitIndices.from_train(inv[split.train], abalone.n_rows)
    a, b = fit_ols(abalone, f, split), fit_ols(shuffled, f, moved)
    assert a.aicn_train == pytest.approx(b.aicn_train, rel=1e-12)
    assert a.aicn_test == pytest.approx(b.aicn_test, rel=1e-12)


def test_irrelevant_term(rng):
    n = 200
    x = rng.normal(size=n)
    ds = from_arrays("t", {"y": 1 + 2 * x + rng.normal(size=n), "x": x, "noise": rng.normal(size=n)})
    split = random_split(n, 0.8, 0)
    small = fit_ols(ds, ModelFormula.parse("y ~ x"), split)
    big = fit_ols(ds, ModelFormula.parse("y ~ x + noise"), split)
    assert big.rss_train <= small.rss_train
    nt = small.n_train
    expected = math.log(big.rss_train / small.rss_train) + 2 / nt
    assert big.aicn_train - small.aicn_train == pytest.approx(expected, abs=1e-12)


def test_r2_ranges(abalone):
    fit = fit_ols(abalone, ModelFormula.parse(ABALONE_FORMULA), random_split(abalone.n_rows, 0.8, 0))
    assert 0 <= fit.r2_train <= 1 and fit.r2_test <= 1
    assert fit.k == 4 and fit.n_train == 3342


def test_out_of_sample_r2_uses_test_mean():
    x = np.r_[np.arange(8.0), 100.0, 101.0]
    y = np.r_[np.arange(8.0), 0.0, 0.0]
    ds = from_arrays("t", {"x": x, "y": y})
    fit = fit_ols(ds, ModelFormula.parse("y ~ x"), SplitIndices.from_train(range(8), 10))
    # test response is constant, so its TSS is 0 and the fit is poor
    assert fit.r2_test == -math.inf
    assert fit.rss_test == pytest.approx(100.0**2 + 101.0**2)


class TestSweep:
    def test_empty(self, abalone):
        f = ModelFormula.parse(ABALONE_FORMULA)
        assert association_sweep(abalone, f.selection(), f, 0.8, 0, 1) == []

    def test_matches_montecarlo_null(self, abalone):
        f = ModelFormula.parse(ABALONE_FORMULA)
        rows = association_sweep(abalone, f.selection(), f, 0.8, 100, 7)
        null = simulate_null(abalone, f.selection(), 0.8, TestConfig(n_sims=100, master_seed=7))
        assert [r.sim_index for r in rows] == list(range(1, 101))
        np.testing.assert_array_equal([r.lam for r in rows], null)

    def test_workers_do_not_change_rows(self, abalone):
        f = ModelFormula.parse(ABALONE_FORMULA)
        one = association_sweep(abalone, f.selection(), f, 0.8, 40, 3, workers=1)
        many = association_sweep(abalone, f.selection(), f, 0.8, 40, 3, workers=4)
        assert one == many

    @pytest.mark.slow
    def test_abalone_positive_association(self, abalone):
        f = ModelFormula.parse(ABALONE_FORMULA)
        rows = association_sweep(abalone, f.selection(), f, 0.8, 1000, 0)
        lam = np.array([r.lam for r in rows])
        aic = np.array([r.aicn_test for r in rows])
        assert np.corrcoef(lam, aic)[0, 1] > 0

    def test_diamonds_band(self, diamonds):
        f = ModelFormula.parse(DIAMONDS_FORMULA)
        rows = association_sweep(diamonds, f.selection(), f, 0.8, 5, 0)
        assert all(14.5 <= r.aicn_train <= 15.0 for r in rows)

    def test_failures_become_flags(self):
        x = np.arange(10.0)
        ds = from_arrays("t", {"x": x, "y": 2 * x})
        f = ModelFormula.parse("y ~ x")
        rows = association_sweep(ds, ColumnSelection(("x",)), f, 0.8, 3, 0)
        assert len(rows) == 3
        assert all(r.flag == "perfect fit" and r.aicn_train == -math.inf for r in rows)
