import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satavit.tensorops import (
    cosine_similarity,
    gelu,
    layer_norm,
    matmul,
    mean_std_median,
    row_softmax,
)


class TestMatmul:
    def test_identity_case(self):
        out = matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]])
        assert np.array_equal(out, [[3, 4], [5, 6]])

    def test_hand_product(self):
        assert np.array_equal(matmul([[1, 2]], [[3], [4]]), [[11]])

    def test_dimension_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"2x3.*4x2"):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_identity_association_exact(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(5, 5))
        eye = np.eye(5)
        assert np.array_equal(matmul(eye, a), a)
        assert np.array_equal(matmul(a, eye), a)

    def test_nonfinite_result_rejected(self):
        big = np.full((1, 1), 1e200)
        with np.errstate(over="ignore"):
            sq = big @ big
        with pytest.raises(FloatingPointError):
            matmul(big, sq)


class TestRowSoftmax:
    def test_symmetry(self):
        assert np.allclose(row_softmax([[0.0, 0.0]]), [[0.5, 0.5]], atol=0)

    def test_large_logit_stability(self):
        assert np.allclose(row_softmax([[1000.0, 1000.0]]), [[0.5, 0.5]], atol=0)

    def test_closed_form(self):
        out = row_softmax([[0.0, math.log(3.0)]])
        assert np.allclose(out, [[0.25, 0.75]], atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
                    min_size=1, max_size=8).filter(
                        lambda rows: len({len(r) for r in rows}) == 1))
    def test_rows_sum_to_one(self, rows):
        out = row_softmax(np.array(rows))
        assert np.max(np.abs(out.sum(axis=1) - 1.0)) < 1e-9
        assert np.all(out > 0) and np.all(out <= 1)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        out = layer_norm([[2.0, 2.0, 2.0]], np.ones(3), np.zeros(3))
        assert np.allclose(out, 0.0, atol=1e-9)

    def test_already_standardized_row(self):
        out = layer_norm([[1.0, -1.0]], np.ones(2), np.zeros(2))
        assert np.allclose(out, [[1.0, -1.0]], atol=1e-5)

    def test_bias_passthrough(self):
        out = layer_norm([[0.0, 0.0]], np.ones(2), np.full(2, 5.0))
        assert np.allclose(out, [[5.0, 5.0]], atol=0)

    def test_standardization_within_tolerance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(20, 16)) * 4 + 2
        out = layer_norm(x, np.ones(16), np.zeros(16))
        assert np.max(np.abs(out.mean(axis=1))) < 1e-6
        assert np.max(np.abs(out.var(axis=1) - 1.0)) < 1e-6

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            layer_norm(np.zeros((2, 3)), np.ones(4), np.zeros(3))


class TestGelu:
    def test_zero_fixed_point(self):
        assert gelu([[0.0]])[0, 0] == 0.0

    def test_positive_asymptote(self):
        x = np.array([[30.0, 100.0]])
        assert np.allclose(gelu(x), x, atol=1e-12)

    def test_unit_value(self):
        # 1 * Phi(1), frozen from the normal CDF
        assert abs(gelu([[1.0]])[0, 0] - 0.841345) < 1e-5

    def test_monotone_above_stationary_point(self):
        # exact GELU dips below x ~ -0.7518; monotone only from there up
        grid = np.linspace(-0.7, 50, 2000)[None, :]
        vals = gelu(grid)[0]
        assert np.all(np.diff(vals) >= 0)


class TestMeanStdMedian:
    def test_odd_vector(self):
        m, s, med = mean_std_median([2, 4, 6])
        assert m == 4.0 and med == 4.0
        assert abs(s - 1.632993161855452) < 1e-12

    def test_singleton(self):
        assert mean_std_median([5.0]) == (5.0, 0.0, 5.0)

    def test_even_length_median_rule(self):
        m, s, med = mean_std_median([1, 2, 3, 4])
        assert m == 2.5 and med == 2.5
        assert abs(s - 1.118033988749895) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_std_median([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, values, rnd):
        shuffled = list(values)
        rnd.shuffle(shuffled)
        a = mean_std_median(values)
        b = mean_std_median(shuffled)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


class TestCosineSimilarity:
    def test_identical_is_exactly_one(self):
        v = np.array([0.3, -2.0, 5.5])
        assert cosine_similarity(v, v.copy()) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_closed_form(self):
        assert abs(cosine_similarity([1.0, 1.0], [1.0, 0.0]) - 0.7071067811865475) < 1e-6

    def test_zero_conventions(self):
        assert cosine_similarity([0.0, 0.0], [0.0, 0.0]) == 1.0
        assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity([1.0], [1.0, 2.0])
