import math

import numpy as np
import pytest
import scipy.sparse as sp

from hiertax.baselines import (BaselineError, balanced_class_weights,
                               baseline_predict, build_features, fit_svd,
                               load_model, record_features, save_model,
                               tokenize, train_baseline, transform)
from hiertax.encoding import TenderRecord
from hiertax.inference import InferenceConfig

from synthdata import keyword_benchmark_taxonomy, keyword_records, taxonomy_from_rows


def corpus(texts, **common):
    return [TenderRecord(id=str(i), object_text=t, **common)
            for i, t in enumerate(texts)]


class TestTokenize:
    def test_splits_on_non_alphanumeric(self):
        assert tokenize("Reservoy supply-and_installation, 2x!") == \
            ["reservoy", "supply", "and", "installation", "2x"]

    def test_keeps_accented_letters(self):
        assert tokenize("società di ingegneria") == ["società", "di", "ingegneria"]


class TestBuildFeatures:
    def test_idf_of_everywhere_term_is_one(self):
        records = corpus(["alpha beta"] * 8, month="May")
        space, X = build_features(records, min_df=5)
        col = space.vocabulary["alpha"]
        assert space.idf[col] == pytest.approx(1.0)

    def test_rare_terms_are_excluded(self):
        texts = ["common phrase"] * 6 + ["common rare phrase"] * 4
        space, _ = build_features(corpus(texts), min_df=5)
        assert "rare" not in space.vocabulary
        assert "common" in space.vocabulary

    def test_log_value_feature(self):
        records = corpus(["alpha words here"] * 6, value_eur=1000.0)
        space, X = build_features(records)
        dense = X.toarray()
        assert dense[0, space.value_column] == pytest.approx(math.log(1000.0))

    def test_tfidf_block_is_l2_normalized(self):
        records = corpus(["alpha beta beta"] * 7, value_eur=50.0)
        space, X = build_features(records)
        block = X.toarray()[:, :len(space.vocabulary)]
        assert np.linalg.norm(block, axis=1) == pytest.approx(np.ones(7))

    def test_one_hot_categories(self):
        records = corpus(["alpha term"] * 6, month="May", macro_area="North")
        space, X = build_features(records)
        col = space.categorical_columns[("month", "May")]
        assert np.all(X.toarray()[:, col] == 1.0)

    def test_unseen_terms_dropped_at_transform_time(self):
        space, _ = build_features(corpus(["alpha beta"] * 6))
        row = transform(space, corpus(["alpha gamma unseen"])).toarray()[0]
        nonzero_vocab_cols = np.flatnonzero(row[:len(space.vocabulary)])
        assert list(nonzero_vocab_cols) == [space.vocabulary["alpha"]]

    def test_empty_corpus_rejected(self):
        with pytest.raises(BaselineError):
            build_features([])


class TestFitSvd:
    def test_rank_one_recovery(self):
        u = np.arange(1, 9, dtype=float).reshape(-1, 1)
        v = np.array([[2.0, -1.0, 0.5]])
        X = sp.csr_matrix(u @ v)
        proj = fit_svd(X, 1)
        recon = (X @ proj.basis) @ proj.basis.T
        assert np.linalg.norm(X.toarray() - recon) <= 1e-8

    def test_basis_is_orthonormal(self):
        rng = np.random.default_rng(0)
        X = sp.csr_matrix(rng.normal(size=(40, 12)))
        proj = fit_svd(X, 5)
        gram = proj.basis.T @ proj.basis
        assert np.allclose(gram, np.eye(5), atol=1e-8)

    def test_matches_dense_reference(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 50))
        proj = fit_svd(sp.csr_matrix(X), 10)
        reference = np.linalg.svd(X, compute_uv=False)[:10]
        assert np.allclose(proj.singular_values, reference, atol=1e-6)

    def test_full_rank_preserves_dot_products(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 8))
        proj = fit_svd(sp.csr_matrix(X), 8)
        Z = proj.project(sp.csr_matrix(X))
        assert np.allclose(Z @ Z.T, X @ X.T, atol=1e-6)

    def test_oversized_d_rejected(self):
        with pytest.raises(BaselineError):
            fit_svd(sp.csr_matrix(np.ones((4, 3))), 5)


def blob_dataset(tax, per_class=20, seed=0, dim=12):
    """Hierarchical Gaussian blobs: one center per leaf, grouped by ancestry.

    Offsets shrink with depth so every split in the tree stays linearly
    separable.
    """
    rng = np.random.default_rng(seed)
    offsets = {}
    for key in sorted(tax.nodes):
        scale = 60.0 / (4 ** tax.depth(key))
        offsets[key] = rng.normal(scale=scale, size=dim)
    rows, labels = [], []
    for leaf in sorted(k for k in tax.nodes if tax.is_leaf(k)):
        center = np.sum([offsets[a] for a in tax.ancestors_and_self(leaf)], axis=0)
        rows.append(center + rng.normal(scale=0.3, size=(per_class, dim)))
        labels.extend([leaf] * per_class)
    return sp.csr_matrix(np.vstack(rows)), labels


@pytest.fixture(scope="module")
def tax():
    return keyword_benchmark_taxonomy()


class TestTrainBaseline:

    @pytest.mark.parametrize("strategy", ["bigbang", "topdown", "pernode"])
    def test_separable_blobs_reach_perfect_training_precision(self, tax, strategy):
        X, labels = blob_dataset(tax)
        model = train_baseline(X, labels, strategy, tax, d=10)
        cfg = InferenceConfig(use_stopper=False)
        hits = 0
        for i, truth in enumerate(labels):
            x = model.projector.project(X[i])[0]
            result = baseline_predict(model, x, tax, cfg)
            hits += bool(result.ranked) and result.ranked[0][0] == truth
        assert hits == len(labels)

    def test_absent_class_is_never_predictable(self, tax):
        X, labels = blob_dataset(tax)
        held_out = sorted({l for l in labels})[0]
        keep = [i for i, l in enumerate(labels) if l != held_out]
        model = train_baseline(X[keep], [labels[i] for i in keep], "topdown",
                               tax, d=10)
        assert held_out not in model.seen_classes
        cfg = InferenceConfig(use_stopper=False)
        for i in range(0, X.shape[0], 7):
            x = model.projector.project(X[i])[0]
            result = baseline_predict(model, x, tax, cfg)
            assert all(code != held_out for code, _ in result.ranked)

    def test_balanced_weights_ratio(self):
        weights = balanced_class_weights(["a"] * 90 + ["b"] * 10)
        assert weights["b"] / weights["a"] == pytest.approx(9.0)

    def test_softmax_scores_sum_to_one(self, tax):
        X, labels = blob_dataset(tax, per_class=8)
        model = train_baseline(X, labels, "bigbang", tax, d=10)
        x = model.projector.project(X[3])[0]
        scores = model.classifiers["ROOT"].class_scores(x)
        assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)

    def test_single_class_training_set(self, tax):
        X, labels = blob_dataset(tax, per_class=3)
        one = [i for i, l in enumerate(labels) if l == labels[0]]
        model = train_baseline(X[one], [labels[i] for i in one], "bigbang",
                               tax, d=3)
        x = model.projector.project(X[one[0]])[0]
        result = baseline_predict(model, x, tax, InferenceConfig(use_stopper=False))
        assert result.ranked[0] == (labels[0], 1.0)

    def test_missing_root_classifier_abstains(self, tax):
        X, labels = blob_dataset(tax, per_class=3)
        model = train_baseline(X, labels, "topdown", tax, d=10)
        del model.classifiers["ROOT"]
        x = model.projector.project(X[0])[0]
        result = baseline_predict(model, x, tax, InferenceConfig(use_stopper=False))
        assert result.abstained is True

    def test_coverage_recorded(self, tax):
        X, labels = blob_dataset(tax, per_class=4)
        model = train_baseline(X, labels, "pernode", tax, d=10)
        assert 0.0 < model.coverage <= 1.0


class TestEndToEndWithText:
    def test_text_pipeline_and_artifact_round_trip(self, tmp_path):
        tax = keyword_benchmark_taxonomy()
        train = keyword_records(tax, per_leaf=12, seed=1, id_prefix="train")
        test = keyword_records(tax, per_leaf=3, seed=2, id_prefix="test")
        space, X = build_features(train, min_df=5)
        model = train_baseline(X, [r.cpv for r in train], "topdown", tax,
                               d=32, space=space)
        path = tmp_path / "model.htx"
        save_model(model, path)
        loaded = load_model(path)
        cfg = InferenceConfig(use_stopper=False)
        hits = 0
        for rec in test:
            a = baseline_predict(model, record_features(model, rec), tax, cfg)
            b = baseline_predict(loaded, record_features(loaded, rec), tax, cfg)
            assert a.ranked == b.ranked
            hits += bool(b.ranked) and b.ranked[0][0] == rec.cpv
        assert hits / len(test) >= 0.95

    def test_feature_extraction_is_train_test_consistent(self):
        tax = keyword_benchmark_taxonomy()
        train = keyword_records(tax, per_leaf=8, seed=3)
        space, X = build_features(train)
        again = transform(space, train)
        assert (X != again).nnz == 0
