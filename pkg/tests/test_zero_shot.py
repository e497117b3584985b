import numpy as np
import pytest

from pointalign.embeddings import ProviderMissError, SyntheticEmbeddingProvider
from pointalign.validation import unit_rows
from pointalign.zero_shot import (
    DEFAULT_TEMPLATE,
    ClassBank,
    ZeroShotClassifier,
    build_class_bank,
    classify_proba,
    ensemble_proba,
    softmax,
    top_k,
)


class StoredProvider:
    def __init__(self, table):
        self.table = table
        self.dim = len(next(iter(table.values())))

    def embed_text(self, text):
        if text not in self.table:
            raise ProviderMissError(text)
        return np.asarray(self.table[text], dtype=np.float64)


class TestBuildClassBank:
    def test_rows_are_normalized_stored_vectors(self):
        provider = StoredProvider({DEFAULT_TEMPLATE.format("chair"): [3.0, 4.0]})
        bank = build_class_bank(["chair"], provider)
        np.testing.assert_allclose(bank.vectors, [[0.6, 0.8]])
        assert bank.names == ("chair",)

    def test_duplicate_class_rejected(self):
        provider = StoredProvider(
            {DEFAULT_TEMPLATE.format("chair"): [1.0, 0.0], DEFAULT_TEMPLATE.format("Chair"): [1.0, 0.0]}
        )
        with pytest.raises(ValueError, match="duplicate class"):
            build_class_bank(["chair", "Chair"], provider)

    def test_orthogonal_synthetic_anchors(self):
        provider = SyntheticEmbeddingProvider(["crate", "ball", "post"], dim=16, seed=0)
        bank = build_class_bank(["crate", "ball", "post"], provider)
        gram = bank.vectors @ bank.vectors.T
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-9)

    def test_placeholder_count_enforced(self):
        provider = StoredProvider({"x": [1.0, 0.0]})
        with pytest.raises(ValueError, match="placeholder"):
            build_class_bank(["chair"], provider, template="no placeholder")
        with pytest.raises(ValueError, match="placeholder"):
            build_class_bank(["chair"], provider, template="{} and {}")

    def test_provider_miss_names_key(self):
        provider = StoredProvider({"something else": [1.0, 0.0]})
        with pytest.raises(ProviderMissError) as err:
            build_class_bank(["chair"], provider)
        assert "chair" in str(err.value)


class TestClassify:
    def bank3(self):
        return ClassBank(names=("a", "b", "c"), vectors=np.eye(3))

    def test_forced_geometry_probability(self):
        bank = self.bank3()
        probs = classify_proba(np.array([0.0, 1.0, 0.0]), bank)
        expected_top = np.e / (np.e + 2.0)
        assert np.argmax(probs) == 1
        assert probs[1] == pytest.approx(expected_top, abs=1e-12)

    def test_single_class_probability_one(self):
        bank = ClassBank(names=("only",), vectors=np.array([[1.0, 0.0]]))
        probs = classify_proba(np.array([0.3, 0.4]), bank)
        assert probs.shape == (1,)
        assert probs[0] == pytest.approx(1.0)

    def test_softmax_shift_invariance(self):
        x = np.array([0.3, -1.2, 2.0, 0.0])
        np.testing.assert_allclose(softmax(x), softmax(x + 7.5), atol=1e-12)

    def test_argmax_invariant_to_positive_rescaling(self):
        rng = np.random.default_rng(0)
        bank = ClassBank(names=tuple("abcde"), vectors=unit_rows(rng.normal(size=(5, 8))))
        for _ in range(20):
            v = rng.normal(size=8)
            base = np.argmax(classify_proba(v, bank))
            for alpha in (1e-3, 0.5, 42.0):
                assert np.argmax(classify_proba(alpha * v, bank)) == base

    def test_probabilities_form_distribution(self):
        rng = np.random.default_rng(1)
        bank = ClassBank(names=tuple("abcd"), vectors=unit_rows(rng.normal(size=(4, 6))))
        for _ in range(10):
            probs = classify_proba(rng.normal(size=6), bank)
            assert abs(probs.sum() - 1.0) < 1e-6
            assert np.all(probs >= 0.0) and np.all(probs <= 1.0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            classify_proba(np.ones(4), self.bank3())

    def test_bank_requires_unit_rows(self):
        with pytest.raises(ValueError):
            ClassBank(names=("a",), vectors=np.array([[2.0, 0.0]]))


class TestTopK:
    def test_ordering_and_tie_break(self):
        probs = np.array([0.2, 0.4, 0.4])
        np.testing.assert_array_equal(top_k(probs, 3), [1, 2, 0])

    def test_k_clipped_to_class_count(self):
        np.testing.assert_array_equal(top_k(np.array([0.9, 0.1]), 5), [0, 1])


class TestEnsemble:
    def test_single_input_unchanged_argmax(self):
        probs = np.array([0.2, 0.5, 0.3])
        out = ensemble_proba([probs])
        assert np.argmax(out) == 1
        np.testing.assert_allclose(out, probs)

    def test_agreeing_inputs_keep_argmax(self):
        out = ensemble_proba([np.array([0.7, 0.3]), np.array([0.6, 0.4])])
        assert np.argmax(out) == 0

    def test_summation_arithmetic(self):
        out = ensemble_proba([np.array([0.6, 0.4]), np.array([0.1, 0.9])])
        np.testing.assert_allclose(out, [0.35, 0.65], atol=1e-12)
        assert np.argmax(out) == 1

    def test_identical_inputs_are_fixed_point(self):
        probs = np.array([0.25, 0.5, 0.25])
        np.testing.assert_allclose(ensemble_proba([probs, probs, probs]), probs, atol=1e-12)

    def test_class_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ensemble_proba([np.array([0.5, 0.5]), np.array([0.3, 0.3, 0.4])])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ensemble_proba([])


class FixedEncoder:
    """Transform stub returning pre-set embeddings."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=np.float64)

    def transform(self, X):
        return self.rows[: len(X)]


class TestZeroShotClassifier:
    def test_predicts_nearest_bank_row(self):
        bank = ClassBank(names=("a", "b", "c"), vectors=np.eye(3))
        clf = ZeroShotClassifier(encoder=FixedEncoder(np.eye(3)[[2, 0, 1]]), bank=bank)
        preds = clf.predict([None, None, None])
        np.testing.assert_array_equal(preds, [2, 0, 1])
        proba = clf.predict_proba([None, None, None])
        assert proba.shape == (3, 3)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)

    def test_requires_components(self):
        with pytest.raises(ValueError):
            ZeroShotClassifier().fit()
