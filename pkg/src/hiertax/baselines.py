"""Non-LM baselines: sparse features, SVD densification, tree classifiers.

Feature rows are tf-idf over the object text (document frequency >= 5),
one-hot categorical metadata, and the log-value, compressed with truncated
SVD. Three strategies sit on top: one flat classifier over all observed
labels (big-bang), one multinomial classifier per internal node (top-down),
or one boolean classifier per node (per-node).
"""

from __future__ import annotations

import io
import json
import math
import re
import zipfile
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds
from scipy.special import expit
from sklearn.linear_model import LogisticRegression

from .encoding import TenderRecord
from .inference import InferenceConfig, PredictionResult, _sort_ranked
from .stopper import StopperWeights, should_stop
from .taxonomy import LabelCode, Taxonomy, TaxonomyNode, normalize_code

CATEGORICAL_FIELDS = ("contractual_choice", "legal_form", "macro_area", "month")

_TOKEN_SPLIT = re.compile(r"[\W_]+", re.UNICODE)

ARTIFACT_VERSION = 1


class BaselineError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass
class FeatureSpace:
    vocabulary: dict[str, int]
    idf: np.ndarray
    categorical_columns: dict[tuple[str, str], int]
    n_columns: int

    @property
    def value_column(self) -> int:
        return self.n_columns - 1


def build_features(records: Sequence[TenderRecord], min_df: int = 5
                   ) -> tuple[FeatureSpace, sp.csr_matrix]:
    """Fit the sparse feature space on a corpus and vectorize it.

    The tf-idf block is L2-normalized per row on its own; categorical and
    numeric blocks are appended unscaled.
    """
    if not records:
        raise BaselineError("empty corpus")
    docs = [tokenize(r.object_text) for r in records]
    df = Counter(term for doc in docs for term in set(doc))
    vocabulary = {t: i for i, t in enumerate(sorted(t for t, c in df.items() if c >= min_df))}
    n = len(records)
    idf = np.array(
        [math.log((1 + n) / (1 + df[t])) + 1.0 for t in sorted(vocabulary, key=vocabulary.get)]
    )
    categories: dict[tuple[str, str], int] = {}
    offset = len(vocabulary)
    for fld in CATEGORICAL_FIELDS:
        for value in sorted({getattr(r, fld) for r in records if getattr(r, fld)}):
            categories[(fld, value)] = offset
            offset += 1
    space = FeatureSpace(vocabulary, idf, categories, n_columns=offset + 1)
    return space, transform(space, records)


def transform(space: FeatureSpace, records: Sequence[TenderRecord]) -> sp.csr_matrix:
    """Vectorize records in a fitted space; unseen terms and categories drop."""
    rows, cols, vals = [], [], []
    for i, rec in enumerate(records):
        counts = Counter(t for t in tokenize(rec.object_text) if t in space.vocabulary)
        if counts:
            weights = {space.vocabulary[t]: c * space.idf[space.vocabulary[t]]
                       for t, c in counts.items()}
            norm = math.sqrt(sum(w * w for w in weights.values()))
            for col, w in weights.items():
                rows.append(i)
                cols.append(col)
                vals.append(w / norm)
        for fld in CATEGORICAL_FIELDS:
            value = getattr(rec, fld)
            if value and (fld, value) in space.categorical_columns:
                rows.append(i)
                cols.append(space.categorical_columns[(fld, value)])
                vals.append(1.0)
        if rec.value_eur is not None:
            rows.append(i)
            cols.append(space.value_column)
            vals.append(math.log(rec.value_eur))
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(len(records), space.n_columns))


@dataclass
class DenseProjector:
    basis: np.ndarray
    singular_values: np.ndarray
    d: int

    def project(self, X) -> np.ndarray:
        out = X @ self.basis
        return np.asarray(out)


def fit_svd(X, d: int) -> DenseProjector:
    """Top-d right-singular basis of a (sparse) matrix.

    Uses Lanczos iteration below full rank and a dense decomposition at it;
    basis columns are orthonormal, singular values descend.
    """
    min_dim = min(X.shape)
    if d < 1 or d > min_dim:
        raise BaselineError(f"d={d} out of range for matrix {X.shape}")
    if d < min_dim:
        X = sp.csr_matrix(X, dtype=float)
        v0 = np.ones(min_dim)
        _, s, vt = svds(X, k=d, v0=v0)
    else:
        dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
        _, s, vt = np.linalg.svd(dense, full_matrices=False)
        s, vt = s[:d], vt[:d]
    order = np.argsort(-s)
    return DenseProjector(basis=vt[order].T.copy(), singular_values=s[order].copy(), d=d)


@dataclass
class LinearHead:
    """One classifier seat: multinomial softmax, binary sigmoid, or constant."""

    kind: str
    classes: list[str]
    coef: np.ndarray | None = None
    intercept: np.ndarray | None = None

    def class_scores(self, x: np.ndarray) -> dict[str, float]:
        if self.kind == "constant":
            return {self.classes[0]: 1.0}
        z = x @ self.coef.T + self.intercept
        if self.kind == "binary":
            p = float(expit(z[0]))
            return {self.classes[0]: 1.0 - p, self.classes[1]: p}
        z = z - z.max()
        e = np.exp(z)
        probs = e / e.sum()
        return {c: float(p) for c, p in zip(self.classes, probs)}

    def yes_score(self, x: np.ndarray) -> float:
        if self.kind == "constant":
            return 1.0
        return self.class_scores(x)[self.classes[1]]


def fit_logistic(X: np.ndarray, y: Sequence[str], max_iter: int = 1000,
                 C: float = 1.0) -> LinearHead:
    """Balanced logistic head; single-class data collapses to a constant."""
    classes = sorted(set(y))
    if len(classes) == 1:
        return LinearHead("constant", classes)
    clf = LogisticRegression(max_iter=max_iter, C=C, class_weight="balanced")
    clf.fit(X, list(y))
    classes = [str(c) for c in clf.classes_]
    kind = "binary" if len(classes) == 2 else "softmax"
    return LinearHead(kind, classes, coef=np.asarray(clf.coef_),
                      intercept=np.asarray(clf.intercept_))


@dataclass
class BaselineModel:
    strategy: str
    projector: DenseProjector
    classifiers: dict[str, LinearHead]
    seen_classes: set[str]
    class_weights: dict[str, float]
    space: FeatureSpace | None = None
    coverage: float = 0.0
    # (digits, check digit, parent) rows; lets the artifact carry the tree
    taxonomy_table: list[tuple[str, str | None, str | None]] | None = None

    def skeleton_taxonomy(self) -> Taxonomy:
        """Structure-only taxonomy rebuilt from the bundled table."""
        if not self.taxonomy_table:
            raise BaselineError("model artifact carries no taxonomy table")
        nodes = {
            digits: TaxonomyNode(LabelCode(digits, check), {"und": ""}, parent)
            for digits, check, parent in self.taxonomy_table
        }
        roots = sorted(d for d, n in nodes.items() if n.parent is None)
        for digits, node in nodes.items():
            if node.parent is not None:
                nodes[node.parent].children.append(digits)
        for node in nodes.values():
            node.children.sort()
        stack = [(r, 0) for r in roots]
        while stack:
            key, depth = stack.pop()
            nodes[key].depth = depth
            stack.extend((c, depth + 1) for c in nodes[key].children)
        return Taxonomy(nodes, roots, default_lang="und")


def balanced_class_weights(labels: Sequence[str]) -> dict[str, float]:
    counts = Counter(labels)
    n, k = len(labels), len(counts)
    return {c: n / (k * cnt) for c, cnt in counts.items()}


def train_baseline(features, labels: Sequence, strategy: str, tax: Taxonomy,
                   d: int = 256, space: FeatureSpace | None = None,
                   max_iter: int = 1000, C: float = 1.0) -> BaselineModel:
    if strategy not in ("bigbang", "topdown", "pernode"):
        raise BaselineError(f"unknown strategy {strategy!r}")
    if features.shape[0] != len(labels):
        raise BaselineError("feature rows and labels disagree")
    keys = [normalize_code(y) for y in labels]
    chains = [tax.ancestors_and_self(y) for y in keys]
    d_eff = min(d, min(features.shape))
    projector = fit_svd(features, d_eff)
    Z = projector.project(features)
    class_weights = balanced_class_weights(keys)

    heads: dict[str, LinearHead] = {}
    if strategy == "bigbang":
        heads["ROOT"] = fit_logistic(Z, keys, max_iter=max_iter, C=C)
        seen = set(heads["ROOT"].classes)
    elif strategy == "topdown":
        per_node: dict[str, tuple[list[int], list[str]]] = defaultdict(lambda: ([], []))
        for row, chain in enumerate(chains):
            per_node["ROOT"][0].append(row)
            per_node["ROOT"][1].append(chain[0])
            for j in range(1, len(chain)):
                node = chain[j - 1]
                per_node[node][0].append(row)
                per_node[node][1].append(chain[j])
        for node, (row_ids, targets) in per_node.items():
            heads[node] = fit_logistic(Z[row_ids], targets, max_iter=max_iter, C=C)
        seen = set()
        for head in heads.values():
            seen.update(head.classes)
    else:
        containing: dict[str, set[int]] = defaultdict(set)
        for row, chain in enumerate(chains):
            for node in chain:
                containing[node].add(row)
        for node, pos in containing.items():
            neg: set[int] = set()
            for sib in tax.siblings(node):
                neg |= containing.get(sib, set())
            neg -= pos
            row_ids = sorted(pos) + sorted(neg)
            targets = ["yes"] * len(pos) + ["no"] * len(neg)
            if not neg:
                heads[node] = LinearHead("constant", ["yes"])
                continue
            head = fit_logistic(Z[row_ids], targets, max_iter=max_iter, C=C)
            heads[node] = head
        seen = set(heads)

    n_internal = sum(1 for key in tax.nodes if not tax.is_leaf(key)) + 1
    coverage = len(heads) / (n_internal if strategy == "topdown" else len(tax))
    table = [(key, node.code.check_digit, node.parent)
             for key, node in sorted(tax.nodes.items())]
    return BaselineModel(strategy, projector, heads, seen, class_weights,
                         space=space, coverage=coverage, taxonomy_table=table)


def record_features(model: BaselineModel, rec: TenderRecord) -> np.ndarray:
    if model.space is None:
        raise BaselineError("model was trained without a bundled feature space")
    return model.projector.project(transform(model.space, [rec]))[0]


def baseline_predict(model: BaselineModel, x: np.ndarray, tax: Taxonomy,
                     cfg: InferenceConfig = InferenceConfig(),
                     stopper_weights: StopperWeights | None = None) -> PredictionResult:
    """Same recursive scheme as the cross-encoder traversal, per-node models.

    Untrained nodes end their path where they are; the big-bang strategy
    ranks every observed class by softmax in one shot.
    """
    if model.strategy == "bigbang":
        head = model.classifiers.get("ROOT")
        if head is None:
            return PredictionResult([], True, 0, 0)
        ranked = _sort_ranked(list(head.class_scores(x).items()))
        if cfg.max_results is not None:
            ranked = ranked[:cfg.max_results]
        return PredictionResult(ranked, not ranked, 0, 1)

    use_stopper = cfg.use_stopper and stopper_weights is not None
    counts = {"visited": 0, "calls": 0}

    def candidate_scores(node: str | None) -> list[tuple[str, float]] | None:
        if model.strategy == "topdown":
            head = model.classifiers.get("ROOT" if node is None else node)
            if head is None:
                return None
            counts["calls"] += 1
            return sorted(head.class_scores(x).items())
        pool = tax.roots if node is None else tax.children(node)
        cands = [c for c in pool if c in model.classifiers]
        if not cands:
            return None
        counts["calls"] += 1
        return [(c, model.classifiers[c].yes_score(x)) for c in cands]

    def visit(node: str, entry_score: float) -> list[tuple[str, float]]:
        counts["visited"] += 1
        if tax.is_leaf(node):
            return [(node, entry_score)]
        scored = candidate_scores(node)
        if scored is None:
            return [(node, entry_score)]
        if use_stopper and should_stop([s for _, s in scored], stopper_weights):
            return [(node, entry_score)]
        out: list[tuple[str, float]] = []
        for cand, score in scored:
            if score >= cfg.threshold:
                out.extend(visit(cand, score))
        return out

    top = candidate_scores(None)
    if top is None:
        return PredictionResult([], True, 0, counts["calls"])
    results: list[tuple[str, float]] = []
    for cand, score in top:
        if score >= cfg.threshold:
            results.extend(visit(cand, score))
    ranked = _sort_ranked(results)
    if cfg.max_results is not None:
        ranked = ranked[:cfg.max_results]
    return PredictionResult(ranked, not ranked, counts["visited"], counts["calls"])


def save_model(model: BaselineModel, path: str | Path) -> None:
    """Single-file artifact: JSON manifest plus binary matrix blocks."""
    if model.space is None:
        raise BaselineError("refusing to save a model without its feature space")
    manifest = {
        "format_version": ARTIFACT_VERSION,
        "strategy": model.strategy,
        "d": model.projector.d,
        "seen_classes": sorted(model.seen_classes),
        "class_weights": model.class_weights,
        "coverage": model.coverage,
        "taxonomy_table": model.taxonomy_table,
        "vocabulary": model.space.vocabulary,
        "categorical_columns": [[f, v, c] for (f, v), c in
                                sorted(model.space.categorical_columns.items())],
        "n_columns": model.space.n_columns,
        "heads": [
            {"key": key, "kind": head.kind, "classes": head.classes}
            for key, head in sorted(model.classifiers.items())
        ],
    }
    arrays = {"idf": model.space.idf, "basis": model.projector.basis,
              "singular_values": model.projector.singular_values}
    for i, (_, head) in enumerate(sorted(model.classifiers.items())):
        if head.kind != "constant":
            arrays[f"head_{i}_coef"] = head.coef
            arrays[f"head_{i}_intercept"] = head.intercept
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest))
        zf.writestr("arrays.npz", buf.getvalue())


def load_model(path: str | Path) -> BaselineModel:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != ARTIFACT_VERSION:
            raise BaselineError(
                f"unsupported artifact version {manifest.get('format_version')}"
            )
        arrays = np.load(io.BytesIO(zf.read("arrays.npz")))
        space = FeatureSpace(
            vocabulary=manifest["vocabulary"],
            idf=arrays["idf"],
            categorical_columns={(f, v): c for f, v, c in manifest["categorical_columns"]},
            n_columns=manifest["n_columns"],
        )
        projector = DenseProjector(arrays["basis"], arrays["singular_values"],
                                   manifest["d"])
        heads = {}
        for i, meta in enumerate(manifest["heads"]):
            if meta["kind"] == "constant":
                heads[meta["key"]] = LinearHead("constant", meta["classes"])
            else:
                heads[meta["key"]] = LinearHead(
                    meta["kind"], meta["classes"],
                    coef=arrays[f"head_{i}_coef"],
                    intercept=arrays[f"head_{i}_intercept"],
                )
        table = manifest.get("taxonomy_table")
        return BaselineModel(
            strategy=manifest["strategy"],
            projector=projector,
            classifiers=heads,
            seen_classes=set(manifest["seen_classes"]),
            class_weights=manifest["class_weights"],
            space=space,
            coverage=manifest["coverage"],
            taxonomy_table=[tuple(row) for row in table] if table else None,
        )
