import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from ordinal_extremes.errors import DomainError, InsufficientDataError, UndefinedScoreError
from ordinal_extremes.extreme_dist import EgpdParams, egpd_cdf, egpd_quantile, egpd_sample
from ordinal_extremes.severity import (
    SeverityScheme, classify, fit_egpd_scheme, fit_kmeans_scheme, kmeans_1d, silhouette_1d,
)


def brute_force_kmeans(x, k):
    """Best SSE over every split of the sorted points into k contiguous runs."""
    x = np.sort(np.asarray(x, float))
    best = (np.inf, None)
    for cuts in itertools.combinations(range(1, len(x)), k - 1):
        parts = np.split(x, cuts)
        sse = sum(float(np.sum((p - p.mean()) ** 2)) for p in parts)
        if sse < best[0]:
            best = (sse, np.array([p.mean() for p in parts]))
    return best


class TestKmeans:
    def test_hand_example(self):
        scheme = fit_kmeans_scheme([0, 0, 1, 1, 10, 10, 50, 50, 100, 100])
        np.testing.assert_allclose(scheme.centers, [1, 10, 50, 100])
        np.testing.assert_array_equal(
            classify(scheme, [0, 1, 10, 50, 100, 5.5, 5.6, 74]), [0, 1, 2, 3, 4, 1, 2, 3]
        )

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            n = int(rng.integers(4, 12))
            k = int(rng.integers(2, min(n, 5) + 1))
            x = np.round(rng.lognormal(0, 1.5, size=n), 2)
            sse_ref, centers_ref = brute_force_kmeans(x, k)
            centers, bounds, sse = kmeans_1d(x, k)
            assert sse == pytest.approx(sse_ref, rel=1e-9, abs=1e-9)
            np.testing.assert_allclose(centers, centers_ref, rtol=1e-9)
            assert bounds[0][0] == 0 and bounds[-1][1] == n

    def test_weights_equal_repetition(self):
        x = np.array([1.0, 2.0, 7.0, 8.0, 20.0])
        w = np.array([3, 1, 2, 2, 1])
        a = kmeans_1d(x, 3, weights=w)
        b = kmeans_1d(np.repeat(x, w), 3)
        np.testing.assert_allclose(a[0], b[0])
        assert a[2] == pytest.approx(b[2])

    def test_large_input_is_fast_and_ordered(self):
        x = np.random.default_rng(1).lognormal(0, 2, size=20_000)
        centers, _, _ = kmeans_1d(x, 4)
        assert np.all(np.diff(centers) > 0)

    def test_sqrt_transform(self):
        scheme = fit_kmeans_scheme([1, 4, 100, 10000], transform="sqrt")
        assert scheme.transform == "sqrt"
        np.testing.assert_allclose(scheme.centers, [1, 2, 10, 100])
        np.testing.assert_array_equal(classify(scheme, [1, 4, 100, 10000]), [1, 2, 3, 4])

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            fit_kmeans_scheme([0, 0, 0])
        with pytest.raises(InsufficientDataError) as info:
            fit_kmeans_scheme([0, 1, 1, 2, 3, 3])
        assert info.value.count == 3

    def test_refit_on_centers(self):
        rng = np.random.default_rng(2)
        scheme = fit_kmeans_scheme(rng.lognormal(0, 1, size=500))
        again = fit_kmeans_scheme(scheme.centers)
        np.testing.assert_allclose(again.centers, scheme.centers, rtol=1e-12)

    def test_midpoint_tie_goes_low(self):
        scheme = SeverityScheme("kmeans", centers=(1.0, 3.0, 5.0, 7.0))
        np.testing.assert_array_equal(classify(scheme, [2.0, 4.0, 6.0]), [1, 2, 3])


class TestEgpdScheme:
    TRUE = EgpdParams(2.0, 1.5, 0.3)

    @pytest.fixture(scope="class")
    @staticmethod
    def fitted():
        x = egpd_sample(20_000, TestEgpdScheme.TRUE, np.random.default_rng(4))
        return fit_egpd_scheme(np.concatenate([np.zeros(5000), x]))

    def test_thresholds_near_true_quantiles(self, fitted):
        expected = egpd_quantile(np.array([0.3, 0.6, 0.9]), self.TRUE)
        np.testing.assert_allclose(fitted.thresholds, expected, rtol=0.10)

    def test_quantile_round_trip(self, fitted):
        f = egpd_cdf(np.array(fitted.thresholds), fitted.egpd_params)
        np.testing.assert_allclose(f, [0.3, 0.6, 0.9], rtol=0, atol=1e-9)

    def test_ascending(self, fitted):
        assert np.all(np.diff(fitted.thresholds) > 0)

    def test_bad_quantiles(self):
        x = np.arange(1, 30, dtype=float)
        for q in ((0.9, 0.3, 0.6), (0.3, 0.3, 0.6), (0.0, 0.5, 0.9), (0.3, 0.6)):
            with pytest.raises(DomainError):
                fit_egpd_scheme(x, q)

    def test_too_few_positives(self):
        with pytest.raises(InsufficientDataError) as info:
            fit_egpd_scheme([0, 0, 1, 2, 3])
        assert info.value.count == 3

    def test_json_round_trip(self, fitted):
        back = SeverityScheme.from_json(fitted.to_json())
        assert back == fitted
        assert sorted(fitted.to_dict()) == ["centers", "egpd_params", "method", "thresholds", "transform"]


class TestClassify:
    def test_threshold_examples(self):
        scheme = SeverityScheme("egpd_risk", thresholds=(1.0, 2.0, 3.0))
        np.testing.assert_array_equal(classify(scheme, [0, 0.5, 2.5, 100, 1.0, 2.0]), [0, 1, 3, 4, 1, 2])

    def test_rejects_negative(self):
        scheme = SeverityScheme("egpd_risk", thresholds=(1.0, 2.0, 3.0))
        with pytest.raises(DomainError):
            classify(scheme, [-1.0])

    def test_invalid_schemes(self):
        with pytest.raises(DomainError):
            SeverityScheme("egpd_risk", thresholds=(2.0, 1.0, 3.0))
        with pytest.raises(DomainError):
            SeverityScheme("kmeans", centers=(1.0, 2.0, 3.0))
        with pytest.raises(DomainError):
            SeverityScheme("gmm", thresholds=(1.0, 2.0, 3.0))

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(0.01, 1e3), min_size=3, max_size=3, unique=True),
        st.sampled_from(["identity", "sqrt"]),
        st.sampled_from(["egpd_risk", "kmeans"]),
    )
    def test_monotone(self, bounds, transform, method):
        b = tuple(sorted(bounds))
        if method == "kmeans":
            scheme = SeverityScheme("kmeans", transform, centers=b + (b[-1] * 2 + 1,))
        else:
            scheme = SeverityScheme("egpd_risk", transform, thresholds=b)
        m = np.sort(np.random.default_rng(0).exponential(100.0, size=2000))
        m[:50] = 0.0
        c = classify(scheme, m)
        assert np.all(np.diff(c) >= 0)
        assert np.all(c[m == 0] == 0) and set(c) <= {0, 1, 2, 3, 4}

    def test_sqrt_preserves_order(self):
        rng = np.random.default_rng(5)
        m = rng.lognormal(0, 2, size=3000)
        for transform in ("identity", "sqrt"):
            scheme = fit_kmeans_scheme(m, transform)
            order = np.argsort(m)
            assert np.all(np.diff(classify(scheme, m[order])) >= 0)


class TestSilhouette:
    def test_separated(self):
        assert silhouette_1d([0, 0, 0, 100, 100, 100], [0, 0, 0, 1, 1, 1]) == pytest.approx(1.0, abs=1e-9)

    def test_identical_values(self):
        assert silhouette_1d([5.0] * 6, [0, 1, 0, 1, 0, 1]) == 0.0

    def test_random_labels(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=5000)
        assert abs(silhouette_1d(x, rng.integers(0, 5, size=5000))) < 0.1

    def test_single_class(self):
        with pytest.raises(UndefinedScoreError):
            silhouette_1d([1.0, 2.0], [3, 3])

    def test_matches_sklearn(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(5, 300))
            x = rng.lognormal(0, 1, size=n)
            labels = rng.integers(0, 4, size=n)
            if len(np.unique(labels)) < 2:
                continue
            ref = silhouette_score(x[:, None], labels)
            assert silhouette_1d(x, labels) == pytest.approx(ref, rel=1e-9, abs=1e-12)
