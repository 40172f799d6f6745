"""Hierarchical evaluation: hP/hR, aggregation, imbalance, and the t-test.

Ancestor sets include the node itself, so predicting an ancestor of the truth
is fully precise and a correct root prediction scores 1 rather than 0/0.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import stdtr

from .taxonomy import Taxonomy, normalize_code


class MetricsError(ValueError):
    pass


def h_scores(y, y_hat, tax: Taxonomy) -> tuple[float, float]:
    """Hierarchical precision and recall of one prediction.

    Overlap of the augmented ancestor chains divided by the predicted chain
    length (hP) or the true chain length (hR).
    """
    truth = set(tax.ancestors_and_self(y))
    pred = set(tax.ancestors_and_self(y_hat))
    inter = len(truth & pred)
    return inter / len(pred), inter / len(truth)


@dataclass(frozen=True)
class InstanceScore:
    record_id: str
    ground_truth: str
    predicted: str | None
    hp: float
    hr: float
    intersection: int
    pred_depth: int
    truth_depth: int


@dataclass(frozen=True)
class Ranking:
    """One evaluated record: ground truth plus the ranked candidates."""

    record_id: str
    ground_truth: str
    ranked: tuple[tuple[str, float], ...]


def instance_score(record_id: str, truth, ranked: Sequence[tuple[str, float]],
                   tax: Taxonomy, k: int = 1) -> InstanceScore:
    """Best-of-top-k instance score; an empty ranking scores zero.

    Among the first k candidates the one with the highest hP wins, ties going
    to the better rank. Abstentions keep hp = hr = 0 with the truth chain
    length standing in for the predicted one so micro sums stay defined.
    """
    truth_key = normalize_code(truth)
    truth_chain = set(tax.ancestors_and_self(truth_key))
    if not ranked:
        return InstanceScore(record_id, truth_key, None, 0.0, 0.0, 0,
                             len(truth_chain), len(truth_chain))
    best = None
    for code, _ in ranked[:k]:
        pred_chain = set(tax.ancestors_and_self(code))
        inter = len(truth_chain & pred_chain)
        hp = inter / len(pred_chain)
        if best is None or hp > best[0]:
            best = (hp, normalize_code(code), inter, len(pred_chain))
    hp, pred_key, inter, pred_len = best
    return InstanceScore(record_id, truth_key, pred_key, hp,
                         inter / len(truth_chain), inter, pred_len, len(truth_chain))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y) or len(x) < 2:
        return float("nan")
    ax = np.asarray(x, dtype=float)
    ay = np.asarray(y, dtype=float)
    sx = ax.std()
    sy = ay.std()
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float(np.mean((ax - ax.mean()) * (ay - ay.mean())) / (sx * sy))


def welch_ttest(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch two-sample t statistic and two-sided p-value.

    Degrees of freedom follow Welch-Satterthwaite; two identical constant
    samples give (0, 1) rather than 0/0.
    """
    if len(a) < 2 or len(b) < 2:
        raise MetricsError("each sample needs at least two values")
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    va = xa.var(ddof=1)
    vb = xb.var(ddof=1)
    se2 = va / len(xa) + vb / len(xb)
    diff = xa.mean() - xb.mean()
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, diff), 0.0
    t = diff / math.sqrt(se2)
    df = se2**2 / ((va / len(xa)) ** 2 / (len(xa) - 1) + (vb / len(xb)) ** 2 / (len(xb) - 1))
    p = 2.0 * float(stdtr(df, -abs(t)))
    return float(t), p


@dataclass
class ImbalanceReport:
    irlbp: dict[str, float]
    hmeanir: float
    n_zero_support: int


def imbalance(labels: Iterable, tax: Taxonomy) -> ImbalanceReport:
    """Per-class imbalance ratios with ancestor-propagated support.

    An instance supports its label and every ancestor of it. Classes with
    zero support have an undefined ratio and are only counted.
    """
    support: Counter[str] = Counter()
    n = 0
    for y in labels:
        n += 1
        for node in tax.ancestors_and_self(y):
            support[node] += 1
    if n == 0:
        raise MetricsError("empty dataset")
    max_support = max(support.values())
    irlbp = {c: max_support / s for c, s in support.items()}
    return ImbalanceReport(
        irlbp=irlbp,
        hmeanir=sum(irlbp.values()) / len(irlbp),
        n_zero_support=len(tax) - len(irlbp),
    )


@dataclass
class EvaluationReport:
    micro_hp: float
    micro_hr: float
    macro_hp: float
    macro_hr: float
    rho: float
    abstention_rate: float
    n_instances: int
    n_abstained: int
    seen_unseen: dict
    precision_at_k: dict[int, dict]
    per_depth: dict[int, dict]
    excluding_abstentions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "micro_hp": self.micro_hp,
            "micro_hr": self.micro_hr,
            "macro_hp": self.macro_hp,
            "macro_hr": self.macro_hr,
            "rho": self.rho,
            "abstention_rate": self.abstention_rate,
            "n_instances": self.n_instances,
            "n_abstained": self.n_abstained,
            "seen_unseen": self.seen_unseen,
            "precision_at_k": {str(k): v for k, v in self.precision_at_k.items()},
            "per_depth": {str(d): v for d, v in self.per_depth.items()},
            "excluding_abstentions": self.excluding_abstentions,
        }
        return _jsonable(out)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _micro(instances: Sequence[InstanceScore], include_abstained: bool = True
           ) -> tuple[float, float]:
    inter = hp_den = hr_den = 0
    for inst in instances:
        if inst.predicted is None and not include_abstained:
            continue
        inter += inst.intersection
        hp_den += inst.pred_depth
        hr_den += inst.truth_depth
    if hp_den == 0 or hr_den == 0:
        return 0.0, 0.0
    return inter / hp_den, inter / hr_den


def _per_class_means(instances: Sequence[InstanceScore], include_abstained: bool = True
                     ) -> dict[str, float]:
    sums: dict[str, list[float]] = defaultdict(list)
    for inst in instances:
        if inst.predicted is None and not include_abstained:
            continue
        sums[inst.ground_truth].append(inst.hp)
    return {c: sum(v) / len(v) for c, v in sums.items()}


def _per_class_means_hr(instances: Sequence[InstanceScore], include_abstained: bool = True
                        ) -> dict[str, float]:
    sums: dict[str, list[float]] = defaultdict(list)
    for inst in instances:
        if inst.predicted is None and not include_abstained:
            continue
        sums[inst.ground_truth].append(inst.hr)
    return {c: sum(v) / len(v) for c, v in sums.items()}


def _macro(per_class: Mapping[str, float]) -> float:
    if not per_class:
        return 0.0
    return sum(per_class.values()) / len(per_class)


def _seen_split(per_class: Mapping[str, float], seen_set: set[str]
                ) -> tuple[list[float], list[float]]:
    seen = [v for c, v in per_class.items() if c in seen_set]
    unseen = [v for c, v in per_class.items() if c not in seen_set]
    return seen, unseen


def _truncated_micro_macro(rankings: Sequence[Ranking], tax: Taxonomy, depth: int,
                           seen_set: set[str]) -> dict:
    inter_sum = pred_sum = 0
    split_sums = {True: [0, 0], False: [0, 0]}
    per_class: dict[str, list[float]] = defaultdict(list)
    for r in rankings:
        truth_chain = tax.ancestors_and_self(r.ground_truth)[:depth + 1]
        truth_set = set(truth_chain)
        if r.ranked:
            pred_chain = tax.ancestors_and_self(r.ranked[0][0])[:depth + 1]
            inter = len(truth_set & set(pred_chain))
            pred_len = len(pred_chain)
        else:
            inter, pred_len = 0, len(truth_chain)
        inter_sum += inter
        pred_sum += pred_len
        truth_key = normalize_code(r.ground_truth)
        bucket = split_sums[truth_key in seen_set]
        bucket[0] += inter
        bucket[1] += pred_len
        per_class[truth_key].append(inter / pred_len if pred_len else 0.0)
    class_means = {c: sum(v) / len(v) for c, v in per_class.items()}
    seen_vals, unseen_vals = _seen_split(class_means, seen_set)
    return {
        "micro": inter_sum / pred_sum if pred_sum else 0.0,
        "macro": _macro(class_means),
        "micro_seen": split_sums[True][0] / split_sums[True][1] if split_sums[True][1] else 0.0,
        "micro_unseen": split_sums[False][0] / split_sums[False][1] if split_sums[False][1] else 0.0,
        "macro_seen": sum(seen_vals) / len(seen_vals) if seen_vals else 0.0,
        "macro_unseen": sum(unseen_vals) / len(unseen_vals) if unseen_vals else 0.0,
    }


def aggregate(rankings: Sequence[Ranking], tax: Taxonomy,
              train_class_freq: Mapping[str, int] | None = None,
              seen_set: set[str] | None = None,
              k_values: Sequence[int] = (1, 2, 3, 4, 5)) -> EvaluationReport:
    """Full evaluation report over ranked predictions.

    Abstentions score zero by default and are reported via abstention_rate;
    the same figures with abstained instances excluded are attached under
    ``excluding_abstentions``.
    """
    if not rankings:
        raise MetricsError("no instances to evaluate")
    train_class_freq = dict(train_class_freq or {})
    seen_set = {normalize_code(c) for c in (seen_set or set())}

    instances = [instance_score(r.record_id, r.ground_truth, r.ranked, tax, k=1)
                 for r in rankings]
    n = len(instances)
    n_abstained = sum(1 for i in instances if i.predicted is None)
    micro_hp, micro_hr = _micro(instances)
    per_class_hp = _per_class_means(instances)
    per_class_hr = _per_class_means_hr(instances)

    def _rho(per_class: Mapping[str, float]) -> float:
        classes = sorted(per_class)
        return pearson([float(train_class_freq.get(c, 0)) for c in classes],
                       [per_class[c] for c in classes])

    seen_vals, unseen_vals = _seen_split(per_class_hp, seen_set)
    if len(seen_vals) >= 2 and len(unseen_vals) >= 2:
        t_stat, p_value = welch_ttest(seen_vals, unseen_vals)
    else:
        t_stat, p_value = float("nan"), float("nan")
    seen_unseen = {
        "macro_seen": sum(seen_vals) / len(seen_vals) if seen_vals else 0.0,
        "macro_unseen": sum(unseen_vals) / len(unseen_vals) if unseen_vals else 0.0,
        "t": t_stat,
        "p": p_value,
        "n_seen_classes": len(seen_vals),
        "n_unseen_classes": len(unseen_vals),
    }

    precision_at_k = {}
    for k in k_values:
        inst_k = [instance_score(r.record_id, r.ground_truth, r.ranked, tax, k=k)
                  for r in rankings]
        pc = _per_class_means(inst_k)
        sv, uv = _seen_split(pc, seen_set)
        micro_k, _ = _micro(inst_k)
        precision_at_k[k] = {
            "micro": micro_k,
            "macro": _macro(pc),
            "seen": sum(sv) / len(sv) if sv else 0.0,
            "unseen": sum(uv) / len(uv) if uv else 0.0,
            "rho": _rho(pc),
        }

    max_depth = 0
    for r in rankings:
        max_depth = max(max_depth, tax.depth(r.ground_truth))
        if r.ranked:
            max_depth = max(max_depth, tax.depth(r.ranked[0][0]))
    per_depth = {d: _truncated_micro_macro(rankings, tax, d, seen_set)
                 for d in range(max_depth + 1)}

    micro_hp_x, micro_hr_x = _micro(instances, include_abstained=False)
    excluding = {
        "micro_hp": micro_hp_x,
        "micro_hr": micro_hr_x,
        "macro_hp": _macro(_per_class_means(instances, include_abstained=False)),
        "macro_hr": _macro(_per_class_means_hr(instances, include_abstained=False)),
    }

    return EvaluationReport(
        micro_hp=micro_hp,
        micro_hr=micro_hr,
        macro_hp=_macro(per_class_hp),
        macro_hr=_macro(per_class_hr),
        rho=_rho(per_class_hp),
        abstention_rate=n_abstained / n,
        n_instances=n,
        n_abstained=n_abstained,
        seen_unseen=seen_unseen,
        precision_at_k=precision_at_k,
        per_depth=per_depth,
        excluding_abstentions=excluding,
    )
