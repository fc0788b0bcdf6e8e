import numpy as np
import pytest

from ordinal_extremes.errors import DomainError
from ordinal_extremes.gradcheck import central_diff, random_batch, rel_error
from ordinal_extremes.losses import (
    LINK_OFFSET, LOSS_NAMES, DEFAULT_COST_MATRIX, CostMatrix, LossConfig, PenaltyMatrix,
    at_bce_loss, ce_loss, gwdl_loss, inverse_link, link_params, make_objective,
    mce_loss, mcewk_loss, predict_class, softmax, tdegpd_loss, wk_loss,
)

EPS = LossConfig().epsilon


def onehot(labels, j=5):
    out = np.zeros((len(labels), j))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros((1, 5))), [[0.2] * 5], rtol=0, atol=1e-15)

    def test_log_weights(self):
        p = softmax(np.log([[1.0, 2.0, 3.0, 4.0]]))
        np.testing.assert_allclose(p, [[0.1, 0.2, 0.3, 0.4]], rtol=1e-14)

    def test_saturation(self):
        p = softmax(np.array([[1000.0, 0.0]]))
        assert abs(p[0, 0] - 1.0) < 1e-12 and p[0, 1] < 1e-12
        assert np.all(np.isfinite(p))

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            softmax(np.array([[np.nan, 0.0]]))


class TestCrossEntropy:
    def test_perfect(self):
        assert ce_loss(onehot([0, 3, 4]), [0, 3, 4]).value == 0.0

    def test_uniform(self):
        r = ce_loss(np.full((4, 5), 0.2), [0, 1, 2, 3])
        assert abs(r.value - np.log(5)) < 1e-12
        assert abs(r.value - 1.6094379) < 1e-7

    def test_underflow_clamped(self):
        r = ce_loss(np.array([[1.0, 0.0]]), [1])
        assert r.flags["clamped"] and np.isfinite(r.value)


class TestWeightedKappa:
    def test_perfect_prediction(self):
        for labels in ([0, 1, 2, 3, 4], [0, 0, 4], [2, 3]):
            assert wk_loss(onehot(labels), labels).value < 1e-6

    def test_random_predictions_near_one(self):
        rng = np.random.default_rng(0)
        labels = np.repeat(np.arange(5), 2000)
        probs = rng.dirichlet(np.ones(5), size=labels.size)
        value = wk_loss(probs, labels, PenaltyMatrix.quadratic(5)).value
        assert abs(value - 1.0) < 0.05

    def test_hand_two_class(self):
        r = wk_loss(np.array([[1.0, 0.0]]), [1], PenaltyMatrix.linear(2))
        assert abs(r.value - 1.0 / (1.0 + EPS)) < 1e-15

    def test_degenerate_flag(self):
        # single label class, confident correct predictions: zero expectation
        r = wk_loss(onehot([2, 2, 2]), [2, 2, 2])
        assert r.flags["degenerate"] and r.value == 0.0
        r = wk_loss(softmax(np.random.default_rng(1).normal(size=(4, 5))), [1, 1, 1, 1])
        assert not r.flags["degenerate"]
        # num / (num + eps): constant in the logits up to an eps-sized slope
        assert np.max(np.abs(r.grad)) < 1e-6

    def test_bounded_by_two(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(500):
            logits, labels = random_batch(rng, "wkloss")
            worst = max(worst, wk_loss(softmax(logits * 4), labels).value)
        assert worst <= 2.0 + 1e-6
        # maximally discordant: all mass on the opposite end
        labels = np.array([0, 4] * 10)
        assert wk_loss(onehot(4 - labels), labels).value == pytest.approx(2.0, abs=1e-6)

    @pytest.mark.parametrize("kind", ["linear", "quadratic"])
    def test_far_miss_costs_more(self, kind):
        # batches identical except for one sample's prediction
        omega = PenaltyMatrix.of_kind(kind, 5)
        labels = [0, 1, 4]
        near = onehot([1, 1, 4])
        far = onehot([4, 1, 4])
        assert wk_loss(near, labels, omega).value < wk_loss(far, labels, omega).value

    @pytest.mark.parametrize("kind", ["linear", "quadratic"])
    def test_single_row_ratio_is_one(self, kind):
        # with N = 1 the expectation equals the observation, so any miss
        # scores num / (num + eps)
        omega = PenaltyMatrix.of_kind(kind, 5)
        near = wk_loss(onehot([1]), [0], omega).value
        far = wk_loss(onehot([4]), [0], omega).value
        assert near == pytest.approx(1.0, abs=1e-6) and far == pytest.approx(1.0, abs=1e-6)
        soft_near = wk_loss(np.array([[0.6, 0.4, 0, 0, 0]]), [0], omega)
        soft_far = wk_loss(np.array([[0.6, 0, 0, 0, 0.4]]), [0], omega)
        assert soft_near.value == pytest.approx(soft_far.value)


class TestPenaltyMatrix:
    def test_entries(self):
        lin = PenaltyMatrix.linear(5).omega
        quad = PenaltyMatrix.quadratic(5).omega
        assert lin[0, 4] == 1.0 and lin[1, 3] == 0.5
        assert quad[0, 2] == 0.25 and quad[4, 0] == 1.0
        for m in (lin, quad):
            np.testing.assert_array_equal(m, m.T)
            assert np.all(np.diag(m) == 0)

    def test_validation(self):
        with pytest.raises(DomainError):
            PenaltyMatrix(np.ones((3, 3)))
        with pytest.raises(DomainError):
            PenaltyMatrix.of_kind("cubic", 5)

    def test_json_round_trip(self):
        for m in (PenaltyMatrix.linear(5), PenaltyMatrix.quadratic(4)):
            back = PenaltyMatrix.from_json(m.to_json(), m.kind)
            np.testing.assert_array_equal(back.omega, m.omega)
        cm = CostMatrix()
        np.testing.assert_array_equal(CostMatrix.from_json(cm.to_json()).m, DEFAULT_COST_MATRIX)


class TestMcewk:
    def test_endpoints_bitwise(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            logits, labels = random_batch(rng, "mcewk")
            p = softmax(logits)
            one = mcewk_loss(p, labels, LossConfig(mcewk_c=1.0))
            wk = wk_loss(p, labels)
            assert one.value == wk.value and np.array_equal(one.grad, wk.grad)
            zero = mcewk_loss(p, labels, LossConfig(mcewk_c=0.0))
            mce = mce_loss(p, labels)
            assert zero.value == mce.value and np.array_equal(zero.grad, mce.grad)

    def test_combination(self):
        rng = np.random.default_rng(4)
        logits, labels = random_batch(rng, "mcewk")
        p = softmax(logits)
        wk, mce = wk_loss(p, labels).value, mce_loss(p, labels).value
        got = mcewk_loss(p, labels, LossConfig(mcewk_c=0.7)).value
        assert got == pytest.approx(0.7 * wk + 0.3 * mce, rel=1e-14)
        assert 0.7 * 0.4 + 0.3 * 1.0 == pytest.approx(0.58)

    def test_mce_macro_average(self):
        # class 0 twice with -log p = ln 2, class 1 once with -log p = ln 4
        p = np.array([[0.5, 0.5], [0.5, 0.5], [0.75, 0.25]])
        r = mce_loss(p, [0, 0, 1])
        assert r.value == pytest.approx((np.log(2) + np.log(4)) / 2, rel=1e-14)
        # plain CE would weight the majority class twice
        assert ce_loss(p, [0, 0, 1]).value == pytest.approx((2 * np.log(2) + np.log(4)) / 3)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            LossConfig(mcewk_c=1.5)
        with pytest.raises(DomainError):
            LossConfig(epsilon=0.0)


class TestGwdl:
    def test_perfect(self):
        labels = [0, 1, 2, 3, 4, 4]
        assert gwdl_loss(onehot(labels), labels).value < 1e-6

    def test_hand_two_class(self):
        m = CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        r = gwdl_loss(np.array([[0.3, 0.7]]), [1], m)
        assert r.value == pytest.approx(1 - 1.4 / 1.7, abs=1e-8)
        assert r.value == pytest.approx(0.17647, abs=1e-5)

    def test_all_background(self):
        r = gwdl_loss(np.full((3, 5), 0.2), [0, 0, 0])
        assert r.flags["all_background"]
        assert r.value == pytest.approx(1.0)
        assert not gwdl_loss(np.full((2, 5), 0.2), [0, 2]).flags["all_background"]

    def test_cost_matrix_validation(self):
        with pytest.raises(DomainError):
            CostMatrix(np.ones((5, 5)))
        with pytest.raises(DomainError):
            CostMatrix(background_class=7)


class TestAllThreshold:
    def test_perfect(self):
        assert at_bce_loss(onehot([0, 2, 4]), [0, 2, 4]).value < 1e-10

    def test_hand_three_class(self):
        r = at_bce_loss(np.array([[0.1, 0.2, 0.7]]), [2])
        expected = (-np.log(0.9) - np.log(0.7)) / 2
        assert r.value == pytest.approx(expected, rel=1e-12)
        assert r.value == pytest.approx(0.2310177, abs=1e-7)

    def test_weights_select_sample(self):
        p = np.array([[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]])
        only = at_bce_loss(p[1:], [1]).value
        assert at_bce_loss(p, [2, 1], weights=[0.0, 1.0]).value == pytest.approx(only, rel=1e-14)

    def test_bad_weights(self):
        with pytest.raises(DomainError):
            at_bce_loss(np.full((2, 3), 1 / 3), [0, 1], weights=[0.0, 0.0])


class TestTdegpdLoss:
    def test_link_round_trip(self):
        theta = np.array([[1.0, 1.0, 1.0], [0.3, 2.5, 0.05]])
        np.testing.assert_allclose(link_params(inverse_link(theta)), theta, rtol=1e-12)
        assert np.all(link_params(np.full((1, 3), -50.0)) >= LINK_OFFSET)

    def test_hand_value(self):
        raw = inverse_link(np.ones((1, 3)))
        assert tdegpd_loss(raw, [0]).value == pytest.approx(-np.log(0.6), abs=1e-7)
        assert tdegpd_loss(raw, [0]).value == pytest.approx(0.5108256, abs=1e-7)

    def test_duplicate_rows(self):
        raw = inverse_link(np.array([[2.0, 1.5, 0.3]]))
        one = tdegpd_loss(raw, [3])
        two = tdegpd_loss(np.vstack([raw, raw]), [3, 3])
        assert two.value == pytest.approx(one.value, rel=1e-15)
        np.testing.assert_allclose(two.grad, np.vstack([one.grad, one.grad]) / 2, rtol=1e-15)


@pytest.mark.parametrize("name", LOSS_NAMES)
class TestAllLosses:
    def test_gradient_randomized(self, name):
        obj = make_objective(name)
        rng = np.random.default_rng(100 + LOSS_NAMES.index(name))
        worst = 0.0
        for _ in range(100):
            out, labels = random_batch(rng, name)
            fd = central_diff(lambda z: obj.evaluate(z, labels).value, out)
            worst = max(worst, rel_error(obj.evaluate(out, labels).grad, fd))
        assert worst < 1e-4

    def test_nonnegative(self, name):
        obj = make_objective(name)
        rng = np.random.default_rng(7)
        for _ in range(50):
            out, labels = random_batch(rng, name)
            assert obj.evaluate(out, labels).value >= 0.0

    def test_shift_invariance(self, name):
        if name == "tdegpd":
            pytest.skip("raw distribution parameters are not softmax logits")
        obj = make_objective(name)
        rng = np.random.default_rng(8)
        for _ in range(50):
            out, labels = random_batch(rng, name)
            shift = rng.normal(0.0, 10.0, size=(len(labels), 1))
            a = obj.evaluate(out, labels).value
            b = obj.evaluate(out + shift, labels).value
            assert abs(a - b) < 1e-9


class TestPredictClass:
    def test_examples(self):
        np.testing.assert_array_equal(
            predict_class(np.array([[0.6, 0.2, 0.1, 0.06, 0.04], [0, 0, 0, 0, 1.0],
                                    [0.5, 0.5, 0, 0, 0]])),
            [0, 4, 0],
        )

    def test_monotone_invariance(self):
        rng = np.random.default_rng(9)
        p = rng.dirichlet(np.ones(5), size=1000)
        base = predict_class(p)
        for f in (np.log, np.sqrt, lambda v: 3 * v ** 3 + 1, lambda v: np.exp(5 * v)):
            np.testing.assert_array_equal(predict_class(f(p)), base)


def test_unknown_loss_lists_names():
    with pytest.raises(DomainError, match="ce, wkloss"):
        make_objective("hinge")


def test_tdegpd_head_width():
    assert make_objective("tdegpd").out_dim == 3
    assert make_objective("ce").out_dim == 5
