import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grip.bootstrap import (
    MultiplierScheme,
    bootstrap_distribution,
    draw_block_multipliers,
    multiplier_matrix,
    quantile_and_decide,
    quantile_index,
)
from grip.errors import ParameterError
from grip.statistic import TestStatistic
from grip.synthdata import stream


class TestBlockMultipliers:
    def test_enumerated_layout(self):
        xi = draw_block_multipliers(10, 3, 2, stream(0))
        nonzero = set(np.flatnonzero(xi) + 1)
        assert nonzero == {1, 2, 3, 6, 7, 8}
        assert np.all(xi[[3, 4, 8, 9]] == 0)
        assert len(set(xi[xi != 0])) == 2

    def test_no_full_block(self):
        with pytest.raises(ParameterError):
            draw_block_multipliers(4, 3, 2, stream(0))

    @pytest.mark.parametrize("n, q, r", [(10, 3, 2), (200, 35, 6), (57, 8, 3), (41, 35, 6)])
    def test_counts_and_within_block_equality(self, n, q, r):
        m = n // (q + r)
        rng = stream(1)
        for _ in range(1000):
            xi = draw_block_multipliers(n, q, r, rng)
            assert np.count_nonzero(xi) == m * q
            for k in range(m):
                blk = xi[(q + r) * k : (q + r) * k + q]
                assert np.all(blk == blk[0])

    def test_blocks_uncorrelated(self):
        xi = multiplier_matrix(30, MultiplierScheme.block(8, 2), 10_000, stream(2))
        first, second, third = xi[:, 0], xi[:, 10], xi[:, 20]
        for a, b in [(first, second), (first, third), (second, third)]:
            assert abs(np.corrcoef(a, b)[0, 1]) < 0.05

    def test_batched_equals_sequential(self):
        batch = multiplier_matrix(23, MultiplierScheme.block(5, 2), 6, stream(3))
        rng = stream(3)
        seq = np.array([draw_block_multipliers(23, 5, 2, rng) for _ in range(6)])
        np.testing.assert_array_equal(batch, seq)

    def test_default_sizes(self):
        s = MultiplierScheme.default_block(200)
        assert (s.q, s.r) == (35, 6)

    @pytest.mark.parametrize("q, r", [(3, 3), (2, 3), (3, 0)])
    def test_scheme_validation(self, q, r):
        with pytest.raises(ParameterError):
            MultiplierScheme.block(q, r)


def test_iid_multiplier_mean():
    n, B = 200, 500
    xi = multiplier_matrix(n, MultiplierScheme(), B, stream(4))
    assert abs(xi.mean()) < 4 / math.sqrt(n * B)


class TestDistribution:
    def test_constant_columns_give_zero(self):
        rows = np.tile([0.1, -3.7, 2.0], (7, 1))
        draws = bootstrap_distribution(TestStatistic.from_rows(rows), B=50, rng=stream(0))
        assert np.all(draws == 0)
        assert quantile_and_decide(0.0, draws, 0.05).quantile == 0.0

    def test_zero_rows_degenerate(self):
        draws = bootstrap_distribution(TestStatistic.from_rows(np.zeros((5, 2))), B=20, rng=stream(0))
        assert np.all(draws == 0)

    @pytest.mark.parametrize("scheme", [MultiplierScheme(), MultiplierScheme.block(2, 1)])
    def test_direct_re_evaluation(self, scheme):
        rows = np.array([[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]])
        draws = bootstrap_distribution(TestStatistic.from_rows(rows), scheme, B=4, rng=stream(9))
        rng = stream(9)
        n, d = rows.shape
        t_n = rows.sum(axis=0) / math.sqrt(n)
        for b in range(4):
            if scheme.kind == "iid":
                xi = rng.standard_normal(n)
            else:
                xi = draw_block_multipliers(n, scheme.q, scheme.r, rng)
            tilde = [sum(xi[i] * (rows[i, j] - t_n[j] / math.sqrt(n)) for i in range(n)) / math.sqrt(n) for j in range(d)]
            assert draws[b] == pytest.approx(max(abs(v) for v in tilde), rel=1e-12, abs=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(1e-3, 1e3))
    def test_homogeneity(self, c):
        rows = np.random.default_rng(5).standard_normal((12, 3))
        a = bootstrap_distribution(TestStatistic.from_rows(rows), B=30, rng=stream(1))
        b = bootstrap_distribution(TestStatistic.from_rows(c * rows), B=30, rng=stream(1))
        np.testing.assert_allclose(b, c * a, rtol=1e-10)


class TestQuantile:
    def test_order_statistic(self):
        res = quantile_and_decide(0.0, np.arange(1.0, 101.0), 0.05)
        assert res.quantile == 95.0

    @pytest.mark.parametrize("B, alpha, k", [(100, 0.05, 95), (500, 0.05, 475), (500, 0.01, 495), (500, 0.10, 450), (7, 0.5, 4)])
    def test_rank(self, B, alpha, k):
        assert quantile_index(B, alpha) == k

    def test_boundary_no_reject(self):
        res = quantile_and_decide(0.0, np.zeros(100), 0.05)
        assert not res.reject
        assert res.p_value == 1.0

    def test_monotone_in_alpha(self):
        draws = stream(3).standard_normal(200) ** 2
        qs = [quantile_and_decide(1.0, draws, a).quantile for a in (0.01, 0.05, 0.1, 0.2, 0.5)]
        assert qs == sorted(qs, reverse=True)

    def test_larger_draw_never_lowers_quantile(self):
        draws = stream(4).standard_normal(99) ** 2
        q0 = quantile_and_decide(1.0, draws, 0.05).quantile
        q1 = quantile_and_decide(1.0, np.append(draws, draws.max() + 1), 0.05).quantile
        assert q1 >= q0

    @settings(max_examples=200, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        B=st.integers(20, 300),
        alpha=st.sampled_from([0.01, 0.05, 0.1, 0.2]),
        t=st.floats(0, 4),
    )
    def test_p_value_consistent_with_rejection(self, seed, B, alpha, t):
        draws = np.abs(np.random.default_rng(seed).standard_normal(B)) * 1.5
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = quantile_and_decide(t, draws, alpha)
        assert 1 / (B + 1) <= res.p_value <= 1
        if res.reject:
            assert res.p_value <= alpha + 1 / (B + 1) + 1e-12
        assert res.reject == (t > res.quantile)

    def test_empty(self):
        with pytest.raises(ParameterError):
            quantile_and_decide(1.0, [], 0.05)

    def test_warns_on_small_B(self):
        with pytest.warns(UserWarning):
            quantile_and_decide(1.0, np.ones(10), 0.05)
