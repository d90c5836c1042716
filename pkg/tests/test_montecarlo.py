import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from splitdiag import ColumnSelection, TestConfig, decide, lambda_metric, run_test, simulate_null
from splitdiag.dataset import from_arrays
from splitdiag.metric import DegenerateDataError
from splitdiag.montecarlo import (
    ACCEPT,
    REJECT,
    ConfigError,
    SimulationResult,
    critical_rank,
    simulate_block,
)
from splitdiag.splitters import adversarial_split, random_split

ABALONE_COLS = ColumnSelection(("Rings", "LongestShell", "Diameter", "Height"))


class TestDecide:
    def test_far_above_null(self):
        dec = decide(np.arange(1, 101), 200, 0.05)
        assert dec.p_value == pytest.approx(1 / 101)
        assert dec.decision == REJECT

    def test_far_below_null(self):
        dec = decide(np.arange(1, 101), 0.5, 0.05)
        assert dec.p_value == 1.0
        assert dec.decision == ACCEPT

    def test_ties_count_as_exceeding(self):
        assert decide([1.0, 2.0, 3.0], 2.0, 0.5).p_value == pytest.approx(3 / 4)

    def test_threshold_order_statistic(self):
        null = np.arange(1, 1000, dtype=float)[::-1]  # 999 values, unsorted
        # rank ceil(0.95 * 1000) = 950
        assert decide(null, 0.0, 0.05).threshold_c == 950.0
        assert critical_rank(0.05, 499) == 475
        assert critical_rank(0.05, 1000) == 951

    def test_reject_iff_strictly_above_threshold(self):
        # at c itself 50 of 999 values tie or exceed, so p = 51/1000 > alpha
        null = np.linspace(0, 1, 999)
        c = decide(null, 0, 0.05).threshold_c
        assert decide(null, c, 0.05).decision == ACCEPT
        assert decide(null, np.nextafter(c, 2), 0.05).decision == REJECT

    def test_include_observed_pools_threshold(self):
        null = np.arange(1.0, 100.0)  # 99 values
        pooled = decide(null, 1000.0, 0.05, include_observed=True)
        plain = decide(null, 1000.0, 0.05)
        assert pooled.p_value == plain.p_value
        assert pooled.threshold_c >= plain.threshold_c

    def test_calibration(self):
        r = np.random.default_rng(11)
        rejections = sum(
            decide(r.uniform(size=999), r.uniform(), 0.05).decision == REJECT for _ in range(2000)
        )
        assert abs(rejections / 2000 - 0.05) <= 0.015


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=200),
       st.floats(0, 60, allow_nan=False), st.floats(0, 60, allow_nan=False),
       st.randoms(use_true_random=False))
def test_p_value_properties(null, a, b, rnd):
    lo, hi = sorted((a, b))
    p_lo, p_hi = decide(null, lo, 0.05).p_value, decide(null, hi, 0.05).p_value
    n = len(null)
    assert 1 / (n + 1) <= p_hi <= p_lo <= 1
    shuffled = list(null)
    rnd.shuffle(shuffled)
    assert decide(shuffled, lo, 0.05) == decide(null, lo, 0.05)


class TestConfigValidation:
    def test_defaults(self):
        cfg = TestConfig()
        assert (cfg.alpha, cfg.n_sims, cfg.include_observed) == (0.05, 1000, False)

    @pytest.mark.parametrize("kwargs", [
        {"alpha": 0}, {"alpha": 1}, {"n_sims": 99}, {"alpha": 0.001, "n_sims": 500},
        {"master_seed": -1}, {"master_seed": 2**64}, {"workers": 0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            TestConfig(**kwargs)


@pytest.fixture(scope="module")
def abalone_null(abalone):
    return simulate_null(abalone, ABALONE_COLS, 0.8, TestConfig(n_sims=1000, master_seed=1))


def test_null_mean_near_dimension(abalone_null):
    assert abs(abalone_null.mean() - 4) <= 0.15


def test_null_deterministic(abalone):
    cfg = TestConfig(n_sims=100, master_seed=9)
    np.testing.assert_array_equal(simulate_null(abalone, ABALONE_COLS, 0.8, cfg),
                                  simulate_null(abalone, ABALONE_COLS, 0.8, cfg))


def test_null_seed_independence(abalone, abalone_null):
    other = simulate_null(abalone, ABALONE_COLS, 0.8, TestConfig(n_sims=1000, master_seed=2))
    assert stats.ks_2samp(abalone_null, other).statistic < 0.08


def test_worker_count_does_not_change_sample(rng):
    x = rng.normal(size=(60, 2))
    one, _ = simulate_block(x, 45, 120, 3, workers=1)
    many, _ = simulate_block(x, 45, 120, 3, workers=7)
    np.testing.assert_array_equal(one, many)


def test_run_test_accepts_random_and_rejects_adversarial(abalone):
    cfg = TestConfig(n_sims=200, master_seed=4)
    rnd = run_test(abalone, ABALONE_COLS, random_split(abalone.n_rows, 0.8, 3), cfg)
    assert rnd.n_train == 3342 and rnd.n_test == 835
    assert rnd.fraction == pytest.approx(3342 / 4177)
    assert len(rnd.null_sample) == 200
    assert 1 / 201 <= rnd.p_value <= 1
    adv = run_test(abalone, ABALONE_COLS, adversarial_split(abalone, "Height", 0.8), cfg)
    assert adv.decision == REJECT and adv.p_value == pytest.approx(1 / 201)
    assert adv.lambda_obs > adv.threshold_c


def test_adversarial_beats_95th_percentile(abalone, abalone_null):
    q95 = np.quantile(abalone_null, 0.95)
    results = []
    for col in abalone.numeric_columns:
        res = run_test(abalone, ABALONE_COLS, adversarial_split(abalone, col, 0.8),
                       TestConfig(n_sims=1000, master_seed=1), null_sample=abalone_null)
        results.append(res.lambda_obs >= q95)
    assert any(results)


def test_over_representative_flag(rng):
    x = rng.normal(size=200)
    ds = from_arrays("t", {"a": x})
    sel = ColumnSelection(("a",))
    split = random_split(200, 0.8, 0)
    cfg = TestConfig(n_sims=200)
    res = run_test(ds, sel, split, cfg, null_sample=np.full(200, 1e6))
    assert res.p_value == 1.0 and res.over_representative and res.decision == ACCEPT
    res = run_test(ds, sel, split, cfg)
    assert res.over_representative == (res.p_value > 0.99)


def test_constant_column_aborts(rng):
    ds = from_arrays("d", {"a": rng.normal(size=50), "b": np.full(50, 3.0)})
    with pytest.raises(DegenerateDataError):
        run_test(ds, ColumnSelection(("a", "b")), random_split(50, 0.8, 0), TestConfig(n_sims=100))


def test_result_dict_round_trip(abalone):
    res = run_test(abalone, ABALONE_COLS, random_split(abalone.n_rows, 0.8, 1),
                   TestConfig(n_sims=100))
    assert SimulationResult.from_dict(res.to_dict()) == res
    assert res.to_dict(include_null=False)["null_sample"] is None


def test_precomputed_null_must_match_config(abalone, abalone_null):
    with pytest.raises(ConfigError):
        run_test(abalone, ABALONE_COLS, random_split(abalone.n_rows, 0.8, 1),
                 TestConfig(n_sims=500), null_sample=abalone_null)


def test_exhaustive_small_null_is_exchangeable():
    # every 3-of-6 split, each observed split ranked against all the others
    r = np.random.default_rng(5)
    x = r.normal(size=(6, 1))
    lams = []
    for train in itertools.combinations(range(6), 3):
        m = np.zeros(6, bool)
        m[list(train)] = True
        lams.append(lambda_metric(x[m], x[~m]).lam)
    lams = np.array(lams)
    ps = [decide(np.delete(lams, i), lams[i], 0.05).p_value for i in range(lams.size)]
    # add-one p-values of exchangeable draws are (super-)uniform
    assert np.mean(np.array(ps) <= 0.25) <= 0.25 + 1e-12
