import itertools
from types import SimpleNamespace

import numpy as np
import pytest

from warpkit.exceptions import IndefiniteGram, ShapeMismatch, SingleClass
from warpkit.svm import (
    OneVsRestPrecomputedSVC,
    PrecomputedKernelSVC,
    SvmModel,
    decision_values,
    kkt_violation,
    train_one_vs_all,
    train_svm,
)


def dual_objective(K, y, alpha):
    Q = K * np.outer(y, y)
    return 0.5 * alpha @ Q @ alpha - alpha.sum()


def qp_oracle(K, y, C):
    """Global minimum of the SVM dual by active-set enumeration (K <= 6).

    Every assignment of each variable to {0, C, free} is tried; free
    variables and the equality multiplier come from the stationarity
    system.  The best feasible candidate is the optimum of the convex QP.
    """
    n = len(y)
    Q = K * np.outer(y, y)
    best = None
    for assign in itertools.product((0, 1, 2), repeat=n):
        alpha = np.where(np.array(assign) == 1, float(C), 0.0)
        free = [i for i, a in enumerate(assign) if a == 2]
        if free:
            bound = [i for i in range(n) if i not in free]
            A = np.zeros((len(free) + 1, len(free) + 1))
            A[:-1, :-1] = Q[np.ix_(free, free)]
            A[:-1, -1] = y[free]
            A[-1, :-1] = y[free]
            rhs = np.concatenate([
                1.0 - Q[np.ix_(free, bound)] @ alpha[bound],
                [-(y[bound] @ alpha[bound])],
            ]) if bound else np.concatenate([np.ones(len(free)), [0.0]])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            a_free = sol[:-1]
            if np.any(a_free < -1e-9) or np.any(a_free > C + 1e-9):
                continue
            alpha[free] = np.clip(a_free, 0.0, C)
        if abs(y @ alpha) > 1e-8 * max(1.0, C):
            continue
        obj = dual_objective(K, y, alpha)
        if best is None or obj < best[0]:
            best = (obj, alpha)
    return best


def random_psd_gram(rng, n):
    A = rng.normal(size=(n, n + 2))
    K = A @ A.T
    d = np.sqrt(np.diag(K))
    return K / np.outer(d, d)


class TestTrainSvm:
    def test_two_point_analytic(self):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([-1.0, 1.0])
        model = train_svm(K, y, C=10.0)
        np.testing.assert_allclose(model.alphas, [0.5, 0.5], atol=1e-6)
        assert model.bias == pytest.approx(0.0, abs=1e-6)
        f = decision_values(model, K)
        assert np.sign(f[0]) == -1 and np.sign(f[1]) == 1
        # a kernel row matching the +1 point scores +1, and vice versa
        assert decision_values(model, np.array([[-1.0, 1.0]]))[0] == pytest.approx(
            1.0, abs=1e-6)
        assert decision_values(model, np.array([[1.0, -1.0]]))[0] == pytest.approx(
            -1.0, abs=1e-6)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            train_svm(np.eye(3), np.ones(3), C=1.0)

    def test_xor_gaussian(self):
        pts = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        y = np.array([1.0, -1.0, -1.0, 1.0])
        sq = ((pts[:, None] - pts[None]) ** 2).sum(-1)
        K = np.exp(-sq / 2.0)
        model = train_svm(K, y, C=10.0)
        preds = np.sign(decision_values(model, K))
        np.testing.assert_array_equal(preds, y)
        obj = dual_objective(K, y, model.alphas)
        oracle_obj, _ = qp_oracle(K, y, 10.0)
        assert obj == pytest.approx(oracle_obj, rel=1e-4, abs=1e-6)

    def test_dual_objective_matches_oracle(self, rng):
        for n in (4, 5, 6):
            for _ in range(6):
                K = random_psd_gram(rng, n)
                y = np.ones(n)
                y[: n // 2] = -1.0
                rng.shuffle(y)
                if np.all(y == y[0]):
                    continue
                C = float(rng.choice([0.5, 1.0, 4.0]))
                model = train_svm(K, y, C=C)
                obj = dual_objective(K, y, model.alphas)
                oracle_obj, _ = qp_oracle(K, y, C)
                assert obj == pytest.approx(oracle_obj, rel=1e-4, abs=1e-6)

    def test_dual_feasibility(self, rng):
        for _ in range(10):
            n = int(rng.integers(4, 12))
            K = random_psd_gram(rng, n)
            y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            if np.all(y == y[0]):
                y[0] = -y[0]
            C = 2.0
            model = train_svm(K, y, C=C)
            assert np.all(model.alphas >= 0.0) and np.all(model.alphas <= C)
            assert abs(model.alphas @ y) <= 1e-8 * C * n

    def test_indefinite_gram_rejected(self):
        K = np.array([[1.0, 0.0], [0.0, -0.5]])
        with pytest.raises(IndefiniteGram):
            train_svm(K, np.array([1.0, -1.0]), C=1.0)

    def test_label_flip_antisymmetry(self, rng):
        K = random_psd_gram(rng, 8)
        y = np.where(rng.random(8) < 0.5, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        rows = random_psd_gram(rng, 8)[:3]
        m_pos = train_svm(K, y, C=1.5)
        m_neg = train_svm(K, -y, C=1.5)
        np.testing.assert_array_equal(decision_values(m_pos, rows),
                                      -decision_values(m_neg, rows))
        assert m_pos.bias == -m_neg.bias

    def test_duplication_with_halved_c(self, rng):
        n = 6
        X = rng.normal(size=(n, 2)) + np.array([[2.5, 0]]) * np.array(
            [[1.0] if k < n // 2 else [-1.0] for k in range(n)])
        y = np.array([1.0] * (n // 2) + [-1.0] * (n // 2))
        test_X = rng.normal(size=(5, 2))
        k = lambda A, B: np.exp(-((A[:, None] - B[None]) ** 2).sum(-1) / 4.0)
        model = train_svm(k(X, X), y, C=2.0)
        X2 = np.vstack([X, X])
        y2 = np.concatenate([y, y])
        model2 = train_svm(k(X2, X2), y2, C=1.0)
        f1 = decision_values(model, k(test_X, X))
        f2 = decision_values(model2, k(test_X, X2))
        np.testing.assert_array_equal(np.sign(f1), np.sign(f2))
        np.testing.assert_allclose(f1, f2, atol=5e-3)

    def test_training_order_invariance(self, rng):
        n = 8
        K = random_psd_gram(rng, n)
        y = np.array([1.0, -1.0] * 4)
        rows = random_psd_gram(rng, n)[:4]
        model = train_svm(K, y, C=1.0)
        perm = rng.permutation(n)
        model_p = train_svm(K[np.ix_(perm, perm)], y[perm], C=1.0)
        f = decision_values(model, rows)
        f_p = decision_values(model_p, rows[:, perm])
        np.testing.assert_array_equal(np.sign(f), np.sign(f_p))
        np.testing.assert_allclose(f, f_p, atol=5e-3)

    def test_serialization_roundtrip(self, rng):
        K = random_psd_gram(rng, 5)
        y = np.array([1.0, 1.0, -1.0, -1.0, 1.0])
        model = train_svm(K, y, C=1.0, gram_ref="gram-0")
        back = SvmModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(back.alphas, model.alphas)
        assert back.bias == model.bias
        assert back.gram_ref == "gram-0"


class TestKktViolation:
    def test_fresh_model_within_tolerance(self, rng):
        for _ in range(5):
            K = random_psd_gram(rng, 10)
            y = np.where(rng.random(10) < 0.5, 1.0, -1.0)
            if np.all(y == y[0]):
                y[0] = -y[0]
            model = train_svm(K, y, C=3.0)
            assert kkt_violation(model, K, y, 3.0) <= 1e-3

    def test_all_zero_alphas_violate(self):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([-1.0, 1.0])
        model = SvmModel(np.zeros(2), y, 0.0, np.array([], dtype=int), 10.0)
        assert kkt_violation(model, K, y, 10.0) >= 1.0 - 1e-3

    def test_perturbation_increases_violation(self, rng):
        K = random_psd_gram(rng, 6)
        y = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
        C = 2.0
        model = train_svm(K, y, C=C)
        base = kkt_violation(model, K, y, C)
        alphas = model.alphas.copy()
        alphas[0] += 0.1 * C
        # raw dual state (the perturbation breaks the SvmModel invariant)
        perturbed = SimpleNamespace(alphas=alphas, labels=model.labels,
                                    bias=model.bias, n_train=model.n_train)
        assert kkt_violation(perturbed, K, y, C) > base

    def test_shape_mismatch(self, rng):
        K = random_psd_gram(rng, 4)
        y = np.array([1.0, -1.0, 1.0, -1.0])
        model = train_svm(K, y, C=1.0)
        with pytest.raises(ShapeMismatch):
            kkt_violation(model, K[:3, :3], y[:3], 1.0)


class TestDecisionValues:
    def test_zero_row_gives_bias(self, rng):
        K = random_psd_gram(rng, 4)
        y = np.array([1.0, -1.0, 1.0, -1.0])
        model = train_svm(K, y, C=1.0)
        assert decision_values(model, np.zeros((1, 4)))[0] == model.bias

    def test_free_support_vector_sits_on_margin(self, rng):
        K = random_psd_gram(rng, 8)
        y = np.array([1.0, -1.0] * 4)
        model = train_svm(K, y, C=2.0)
        free = (model.alphas > 1e-6) & (model.alphas < 2.0 - 1e-6)
        if free.any():
            i = int(np.flatnonzero(free)[0])
            f = decision_values(model, K[i: i + 1])[0]
            assert y[i] * f == pytest.approx(1.0, abs=2e-3)

    def test_shape_mismatch(self, rng):
        model = train_svm(random_psd_gram(rng, 4),
                          np.array([1.0, -1.0, 1.0, -1.0]), C=1.0)
        with pytest.raises(ShapeMismatch):
            decision_values(model, np.zeros((1, 5)))


class TestOneVsAll:
    def test_three_class_structure(self, rng):
        K = random_psd_gram(rng, 9)
        labels = ["a", "b", "c"] * 3
        ova = train_one_vs_all(K, labels, C=1.0)
        assert ova.classes == ("a", "b", "c")
        assert len(ova.models) == 3
        assert len(ova.predict(K)) == 9

    def test_two_class_consistent_with_binary(self, rng):
        K = random_psd_gram(rng, 8)
        labels = ["pos", "neg"] * 4
        ova = train_one_vs_all(K, labels, C=1.0)
        y = np.array([1.0 if l == "pos" else -1.0 for l in labels])
        binary = train_svm(K, y, C=1.0)
        f_bin = decision_values(binary, K)
        preds = ova.predict(K)
        for k in range(8):
            assert preds[k] == ("pos" if f_bin[k] >= 0 else "neg")

    def test_absent_class_tagged(self, rng):
        K = random_psd_gram(rng, 4)
        with pytest.raises(SingleClass) as exc:
            train_one_vs_all(K, ["a", "a", "b", "b"], C=1.0, classes=("a", "b", "zzz"))
        assert "zzz" in str(exc.value)

    def test_single_class_input(self, rng):
        with pytest.raises(SingleClass):
            train_one_vs_all(random_psd_gram(rng, 3), ["a", "a", "a"], C=1.0)

    def test_to_dicts_carries_class(self, rng):
        K = random_psd_gram(rng, 6)
        ova = train_one_vs_all(K, ["a", "b"] * 3, C=1.0)
        docs = ova.to_dicts()
        assert [d["class"] for d in docs] == ["a", "b"]
        assert all("alphas" in d and "bias" in d for d in docs)


class TestEstimators:
    def test_binary_estimator(self, rng):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([-1.0, 1.0])
        clf = PrecomputedKernelSVC(C=10.0).fit(K, y)
        np.testing.assert_array_equal(clf.predict(K), y)
        assert clf.get_params()["C"] == 10.0

    def test_one_vs_rest_estimator(self, rng):
        K = random_psd_gram(rng, 9)
        labels = ["a", "b", "c"] * 3
        clf = OneVsRestPrecomputedSVC(C=1.0).fit(K, labels)
        assert clf.decision_function(K).shape == (9, 3)
        assert set(clf.predict(K)) <= {"a", "b", "c"}
