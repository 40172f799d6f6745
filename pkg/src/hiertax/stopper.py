"""Stopping model: score-distribution features plus a one-hidden-layer net.

The stopper looks at the distribution of the child scores at a node and
decides whether taxonomy exploration should stop there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .taxonomy import Taxonomy, derive_parent, normalize_code

FEATURE_NAMES = ("max", "mean", "variance", "kurtosis", "skewness", "top_gap", "l2_norm")
N_FEATURES = len(FEATURE_NAMES)


class StopperError(ValueError):
    pass


def extract_features(scores: Sequence[float]) -> np.ndarray:
    """Seven population-moment features of a score vector.

    Degenerate inputs (single score or zero variance) map skewness and
    kurtosis to 0; the top gap of a single score is the score itself.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise StopperError("score vector must be non-empty and one-dimensional")
    mx = float(s.max())
    mean = float(s.mean())
    var = float(np.mean((s - mean) ** 2))
    if s.size == 1 or var == 0.0:
        skew = kurt = 0.0
    else:
        m3 = float(np.mean((s - mean) ** 3))
        m4 = float(np.mean((s - mean) ** 4))
        skew = m3 / var**1.5
        kurt = m4 / var**2
    if s.size == 1:
        gap = float(s[0])
    else:
        top2 = np.partition(s, -2)[-2:]
        gap = float(top2[1] - top2[0])
    norm = float(math.sqrt(float(np.dot(s, s))))
    return np.array([mx, mean, var, kurt, skew, gap, norm])


@dataclass
class StopperWeights:
    hidden: np.ndarray
    hidden_bias: np.ndarray
    out: np.ndarray
    out_bias: float

    def __post_init__(self):
        self.hidden = np.asarray(self.hidden, dtype=float)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=float)
        self.out = np.asarray(self.out, dtype=float)
        self.out_bias = float(self.out_bias)
        h = self.hidden_size
        if h < 1 or self.hidden.shape != (N_FEATURES, h) \
                or self.hidden_bias.shape != (h,) or self.out.shape != (h,):
            raise StopperError(f"inconsistent weight shapes for hidden size {h}")
        for arr in (self.hidden, self.hidden_bias, self.out):
            if not np.all(np.isfinite(arr)):
                raise StopperError("weights must be finite")
        if not math.isfinite(self.out_bias):
            raise StopperError("weights must be finite")

    @property
    def hidden_size(self) -> int:
        return self.hidden.shape[1] if self.hidden.ndim == 2 else 0

    def to_json(self) -> dict:
        return {
            "h": self.hidden_size,
            "hidden": self.hidden.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "out": self.out.tolist(),
            "out_bias": self.out_bias,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StopperWeights":
        return cls(
            hidden=np.array(obj["hidden"], dtype=float),
            hidden_bias=np.array(obj["hidden_bias"], dtype=float),
            out=np.array(obj["out"], dtype=float),
            out_bias=float(obj["out_bias"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "StopperWeights":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class StopperExample:
    features: np.ndarray
    target: bool


def stopper_forward(features: Sequence[float], weights: StopperWeights) -> float:
    f = np.asarray(features, dtype=float)
    if f.shape != (N_FEATURES,):
        raise StopperError(f"expected {N_FEATURES} features, got shape {f.shape}")
    hidden = np.maximum(f @ weights.hidden + weights.hidden_bias, 0.0)
    return float(expit(hidden @ weights.out + weights.out_bias))


def should_stop(scores: Sequence[float], weights: StopperWeights) -> bool:
    return stopper_forward(extract_features(scores), weights) >= 0.5


def loss_and_grad(weights: StopperWeights, features: np.ndarray,
                  targets: np.ndarray) -> tuple[float, StopperWeights]:
    """Mean binary cross-entropy and its analytic gradient (same shapes)."""
    F = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = F.shape[0]
    pre = F @ weights.hidden + weights.hidden_bias
    act = np.maximum(pre, 0.0)
    z = act @ weights.out + weights.out_bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (expit(z) - y) / n
    g_out = act.T @ dz
    g_out_bias = float(dz.sum())
    d_act = np.outer(dz, weights.out) * (pre > 0)
    g_hidden = F.T @ d_act
    g_hidden_bias = d_act.sum(axis=0)
    return loss, StopperWeights(g_hidden, g_hidden_bias, g_out, g_out_bias)


def init_weights(hidden_size: int, seed: int) -> StopperWeights:
    rng = np.random.default_rng(seed)
    return StopperWeights(
        hidden=rng.uniform(-0.1, 0.1, size=(N_FEATURES, hidden_size)),
        hidden_bias=rng.uniform(-0.1, 0.1, size=hidden_size),
        out=rng.uniform(-0.1, 0.1, size=hidden_size),
        out_bias=float(rng.uniform(-0.1, 0.1)),
    )


def train_stopper(examples: Sequence[StopperExample], hidden_size: int = 16,
                  lr: float = 1e-3, epochs: int = 500, seed: int = 0) -> StopperWeights:
    """Full-batch gradient descent on mean binary cross-entropy."""
    if not examples:
        raise StopperError("no training examples")
    targets = np.array([1.0 if ex.target else 0.0 for ex in examples])
    if targets.min() == targets.max():
        raise StopperError("training set must contain both classes")
    F = np.stack([np.asarray(ex.features, dtype=float) for ex in examples])
    w = init_weights(hidden_size, seed)
    for _ in range(epochs):
        _, g = loss_and_grad(w, F, targets)
        w = StopperWeights(
            w.hidden - lr * g.hidden,
            w.hidden_bias - lr * g.hidden_bias,
            w.out - lr * g.out,
            w.out_bias - lr * g.out_bias,
        )
    return w


def training_accuracy(weights: StopperWeights, examples: Sequence[StopperExample]) -> float:
    hits = sum(
        (stopper_forward(ex.features, weights) >= 0.5) == ex.target
        for ex in examples
    )
    return hits / len(examples)


def _prefix_chain(key: str) -> set[str]:
    chain = set()
    cur: str | None = key
    while cur is not None:
        chain.add(cur)
        cur = derive_parent(cur)
    return chain


def build_stopper_dataset(traces: Iterable, tax: Taxonomy | None = None
                          ) -> list[StopperExample]:
    """Stop/go examples from traversal traces.

    A visited node is a stop example when it equals the ground truth and a
    go example when the truth lies strictly below it; nodes in unrelated
    subtrees are the upstream classifier's error and are excluded. Without a
    taxonomy, ancestry falls back to the digit-prefix convention.
    """
    examples = []
    for trace in traces:
        truth = trace.get("ground_truth") if isinstance(trace, dict) else trace.ground_truth
        nodes = trace.get("nodes") if isinstance(trace, dict) else trace.nodes
        if truth is None:
            continue
        truth_key = normalize_code(truth)
        if tax is not None:
            chain = set(tax.ancestors_and_self(truth_key))
        else:
            chain = _prefix_chain(truth_key)
        for entry in nodes:
            node = entry.get("node") if isinstance(entry, dict) else entry.node
            scores = entry.get("scores") if isinstance(entry, dict) else entry.scores
            if node is None:
                continue
            key = normalize_code(node)
            if key == truth_key:
                target = True
            elif key in chain:
                target = False
            else:
                continue
            examples.append(StopperExample(extract_features(scores), target))
    return examples
