"""Sequence-pair classification fine-tuning on generated training pairs.

Accepts one pairs file per epoch so regenerated epochs are honored; with a
single file every epoch reuses it. Without a pretrained base a small encoder
is initialized from scratch, which needs the more aggressive default
learning rate used here.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .bundle import ModelBundle, adapt_pretrained_bundle, build_base_bundle

logger = logging.getLogger(__name__)


class FinetuneError(ValueError):
    pass


@dataclass(frozen=True)
class TrainPair:
    input_text: str
    label_text: str
    polarity: bool


def load_pairs(path: str | Path) -> list[TrainPair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pairs.append(TrainPair(obj["input_text"], obj["label_text"],
                                   bool(obj["polarity"])))
        except (json.JSONDecodeError, KeyError) as e:
            raise FinetuneError(f"{path}:{lineno}: {e}") from None
    if not pairs:
        raise FinetuneError(f"{path}: no pairs")
    return pairs


def pair_accuracy(bundle: ModelBundle, pairs: Sequence[TrainPair]) -> float:
    from .app import score_pairs

    scores = score_pairs(bundle, [(p.input_text, p.label_text) for p in pairs])
    hits = sum((s >= 0.5) == p.polarity for s, p in zip(scores, pairs))
    return hits / len(pairs)


def fine_tune(pairs_files: Sequence[str | Path], epochs: int = 5,
              base: str | None = None, lr: float = 1e-3, batch_size: int = 4,
              max_length: int = 128, seed: int = 0,
              val_fraction: float = 0.1) -> tuple[ModelBundle, dict]:
    """Train the pair-validity head (and encoder) for ``epochs`` passes.

    Returns the bundle plus metrics: final training-subset accuracy and
    held-out validation accuracy.
    """
    per_epoch = [load_pairs(p) for p in pairs_files]
    all_pairs = [p for pairs in per_epoch for p in pairs]
    polarities = {p.polarity for p in all_pairs}
    if len(polarities) < 2:
        raise FinetuneError("training pairs must include both polarities")

    if base:
        bundle = adapt_pretrained_bundle(base, max_length=max_length)
    else:
        texts = [p.input_text for p in all_pairs] + [p.label_text for p in all_pairs]
        bundle = build_base_bundle(texts, max_length=max_length, seed=seed)

    rng = random.Random(seed)
    holdout = {}
    first = per_epoch[0]
    n_val = int(len(first) * val_fraction)
    if n_val >= 2:
        val_idx = set(rng.sample(range(len(first)), n_val))
        holdout = {i: first[i] for i in sorted(val_idx)}

    torch.manual_seed(seed)
    optimizer = torch.optim.AdamW(bundle.model.parameters(), lr=lr)
    for epoch in range(epochs):
        pairs = per_epoch[epoch % len(per_epoch)]
        train_pairs = [p for i, p in enumerate(pairs)
                       if not (epoch % len(per_epoch) == 0 and i in holdout)]
        order = list(range(len(train_pairs)))
        rng.shuffle(order)
        bundle.model.train()
        total_loss = 0.0
        steps = 0
        for start in range(0, len(order), batch_size):
            batch = [train_pairs[i] for i in order[start:start + batch_size]]
            enc = bundle.tokenizer(
                [p.input_text for p in batch], [p.label_text for p in batch],
                padding=True, truncation=True, max_length=bundle.max_length,
                return_tensors="pt")
            targets = torch.tensor([int(p.polarity) for p in batch])
            out = bundle.model(**enc, labels=targets)
            out.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total_loss += float(out.loss.detach())
            steps += 1
        logger.info("epoch %d: mean loss %.4f over %d steps",
                    epoch, total_loss / max(steps, 1), steps)
    bundle.model.eval()

    metrics = {"train_accuracy": pair_accuracy(bundle, all_pairs)}
    if holdout:
        metrics["val_accuracy"] = pair_accuracy(bundle, list(holdout.values()))
    return bundle, metrics
