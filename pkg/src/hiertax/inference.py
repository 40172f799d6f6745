"""Top-down zero-shot prediction with threshold, stopper, and abstention.

Traversal scores all roots, recurses into every candidate at or above the
threshold, and lets the stopper cut a path short at non-root nodes. Paths end
at leaves or stopper hits; if nothing survives, the prediction abstains.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .encoding import EncodingConfig, TenderRecord, serialize_record
from .scorer import Scorer, ScoreRequest, ScorerError
from .stopper import StopperWeights, should_stop
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InferenceConfig:
    threshold: float = 0.5
    use_stopper: bool = True
    max_results: int | None = None
    language: str = "en"
    encoding: EncodingConfig = EncodingConfig()

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass
class TraceNode:
    node: str | None
    candidates: list[str]
    scores: list[float]
    stopped: bool

    def to_dict(self) -> dict:
        return {"node": self.node, "candidates": list(self.candidates),
                "scores": [float(s) for s in self.scores], "stopped": self.stopped}


@dataclass
class TraversalTrace:
    record_id: str
    ground_truth: str | None
    nodes: list[TraceNode] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"record_id": self.record_id, "ground_truth": self.ground_truth,
                "nodes": [n.to_dict() for n in self.nodes]}


@dataclass
class PredictionResult:
    ranked: list[tuple[str, float]]
    abstained: bool
    visited_nodes: int
    scorer_calls: int

    def top1(self) -> tuple[str, float] | None:
        return self.ranked[0] if self.ranked else None


def _sort_ranked(entries: list[tuple[str, float]]) -> list[tuple[str, float]]:
    return sorted(entries, key=lambda e: (-e[1], e[0]))


def predict(
    rec: TenderRecord,
    tax: Taxonomy,
    scorer: Scorer,
    stopper_weights: StopperWeights | None = None,
    cfg: InferenceConfig = InferenceConfig(),
    allowed: frozenset[str] | set[str] | None = None,
    collect_trace: bool = False,
) -> tuple[PredictionResult, TraversalTrace | None]:
    """Recursive scoring of the taxonomy for one record.

    ``allowed`` restricts traversal to a node subset (used by the hybrid
    mode); the stopper is consulted only at non-root nodes and only when
    weights are supplied and enabled.
    """
    input_text = serialize_record(rec, cfg.encoding.field_order,
                                  cfg.encoding.max_object_chars)
    use_stopper = cfg.use_stopper and stopper_weights is not None
    trace = TraversalTrace(rec.id, rec.cpv) if collect_trace else None
    counts = {"visited": 0, "calls": 0}

    def score_candidates(parent: str | None, cands: list[str]) -> list[float]:
        req = ScoreRequest(
            input_text,
            tuple((c, tax.description(c, cfg.language)) for c in cands),
        )
        try:
            scores = scorer.score_batch(req)
        except ScorerError as e:
            e.partial_trace = trace
            raise
        counts["calls"] += 1
        return scores

    def visit(node: str, entry_score: float) -> list[tuple[str, float]]:
        counts["visited"] += 1
        if tax.is_leaf(node):
            return [(node, entry_score)]
        cands = [c for c in tax.children(node) if allowed is None or c in allowed]
        if not cands:
            # restriction pruned every child; the node ends its own path
            return [(node, entry_score)]
        scores = score_candidates(node, cands)
        stopped = use_stopper and should_stop(scores, stopper_weights)
        if trace is not None:
            trace.nodes.append(TraceNode(node, cands, scores, stopped))
        if stopped:
            return [(node, entry_score)]
        out: list[tuple[str, float]] = []
        for cand, score in zip(cands, scores):
            if score >= cfg.threshold:
                out.extend(visit(cand, score))
        return out

    roots = [r for r in tax.roots if allowed is None or r in allowed]
    if not roots:
        return PredictionResult([], True, 0, 0), trace
    root_scores = score_candidates(None, roots)
    if trace is not None:
        trace.nodes.append(TraceNode(None, roots, root_scores, False))
    results: list[tuple[str, float]] = []
    for root, score in zip(roots, root_scores):
        if score >= cfg.threshold:
            results.extend(visit(root, score))
    ranked = _sort_ranked(results)
    if cfg.max_results is not None:
        ranked = ranked[:cfg.max_results]
    return PredictionResult(ranked, not ranked, counts["visited"], counts["calls"]), trace


def unseen_subtree_filter(tax: Taxonomy, seen_classes: set[str]) -> frozenset[str]:
    """Nodes whose subtree contains at least one class outside ``seen_classes``."""
    allowed: set[str] = set()

    def walk(node: str) -> bool:
        has_unseen = node not in seen_classes
        for child in tax.children(node):
            has_unseen = walk(child) or has_unseen
        if has_unseen:
            allowed.add(node)
        return has_unseen

    for root in tax.roots:
        walk(root)
    return frozenset(allowed)


def predict_hybrid(
    rec: TenderRecord,
    tax: Taxonomy,
    model,
    scorer: Scorer,
    stopper_weights: StopperWeights | None = None,
    cfg: InferenceConfig = InferenceConfig(),
    allowed: frozenset[str] | None = None,
) -> PredictionResult:
    """Baseline prediction with zero-shot coverage of its unseen classes.

    The baseline runs as usual; the cross-encoder explores only subtrees
    holding classes the baseline never saw. Whichever of the two top
    candidates scores higher wins, the rest merge by score.
    """
    from .baselines import baseline_predict, record_features

    x = record_features(model, rec)
    base = baseline_predict(model, x, tax, cfg, stopper_weights=stopper_weights)
    if allowed is None:
        allowed = unseen_subtree_filter(tax, model.seen_classes)
    if allowed:
        hce, _ = predict(rec, tax, scorer, stopper_weights, cfg, allowed=allowed)
    else:
        hce = PredictionResult([], True, 0, 0)
    hce_unseen = [(c, s) for c, s in hce.ranked if c not in model.seen_classes]

    contenders = []
    if base.ranked:
        contenders.append(base.ranked[0])
    if hce_unseen:
        contenders.append(hce_unseen[0])
    visited = base.visited_nodes + hce.visited_nodes
    calls = base.scorer_calls + hce.scorer_calls
    if not contenders:
        return PredictionResult([], True, visited, calls)
    winner = min(contenders, key=lambda e: (-e[1], e[0]))

    merged: dict[str, float] = {}
    for code, score in list(base.ranked) + list(hce.ranked):
        if code == winner[0]:
            continue
        merged[code] = max(score, merged.get(code, 0.0))
    ranked = [winner] + _sort_ranked(list(merged.items()))
    if cfg.max_results is not None:
        ranked = ranked[:cfg.max_results]
    return PredictionResult(ranked, False, visited, calls)


@dataclass
class RecordOutcome:
    record_id: str
    result: PredictionResult | None
    trace: TraversalTrace | None
    error: str | None


def classify_corpus(
    records: list[TenderRecord],
    tax: Taxonomy,
    scorer_factory,
    stopper_weights: StopperWeights | None = None,
    cfg: InferenceConfig = InferenceConfig(),
    parallelism: int = 1,
    strict: bool = False,
    collect_traces: bool = False,
) -> list[RecordOutcome]:
    """Predict every record, preserving input order regardless of parallelism.

    ``scorer_factory(record)`` supplies the scorer per record (a shared
    instance for lexical/remote, a per-record one for the oracle). In lenient
    mode per-record failures become error entries instead of aborting.
    """

    def work(rec: TenderRecord) -> RecordOutcome:
        try:
            result, trace = predict(rec, tax, scorer_factory(rec), stopper_weights,
                                    cfg, collect_trace=collect_traces)
            return RecordOutcome(rec.id, result, trace, None)
        except Exception as e:
            if strict:
                raise
            logger.warning("record %s failed: %s", rec.id, e)
            return RecordOutcome(rec.id, None, None, f"{type(e).__name__}: {e}")

    if parallelism <= 1:
        return [work(rec) for rec in records]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(work, records))
