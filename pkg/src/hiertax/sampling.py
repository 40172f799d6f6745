"""Balanced training-pair generation with exclusive-sibling negatives.

Each draw is positive with probability 1/2 (candidate uniform over the true
label's ancestor chain) and negative with probability 1/2 (uniform depth along
the chain, then a uniform exclusive sibling at that depth).
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .encoding import EncodingConfig, PairText, TenderRecord, make_pair
from .taxonomy import Taxonomy, normalize_code

logger = logging.getLogger(__name__)


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingPair:
    record_id: str
    candidate: str
    polarity: bool
    pair: PairText


def rng_for_record(seed: int, epoch: int, record_id: str) -> random.Random:
    """Per-record stream derived from (seed, epoch, record id).

    Counter-based so epoch generation is reproducible and independent of
    record order.
    """
    digest = hashlib.sha256(f"{seed}:{epoch}:{record_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def draw_candidate(y, tax: Taxonomy, rng: random.Random) -> tuple[str, bool]:
    """One (candidate, polarity) draw for ground truth ``y``.

    Depths whose chain node has no sibling are excluded from the negative
    draw; when no depth has siblings the draw falls back to a positive.
    """
    chain = tax.ancestors_and_self(y)
    d = len(chain)
    positive = rng.random() < 0.5
    if not positive:
        eligible = [i for i in range(d) if tax.siblings(chain[i])]
        if not eligible:
            logger.warning(
                "label %s has no exclusive siblings at any depth; emitting a positive",
                normalize_code(y),
            )
            positive = True
        else:
            i = eligible[rng.randrange(len(eligible))]
            sibs = tax.siblings(chain[i])
            return sibs[rng.randrange(len(sibs))], False
    return chain[rng.randrange(d)], True


def generate_pair(
    rec: TenderRecord,
    tax: Taxonomy,
    rng: random.Random,
    lang: str = "en",
    cfg: EncodingConfig = EncodingConfig(),
    y: str | None = None,
) -> TrainingPair:
    truth = y if y is not None else rec.cpv
    if truth is None:
        raise SamplingError(f"record {rec.id!r} has no ground-truth label")
    candidate, polarity = draw_candidate(truth, tax, rng)
    pair = make_pair(rec, tax.node(candidate), lang, cfg)
    return TrainingPair(rec.id, candidate, polarity, pair)


def generate_epoch(
    records: Iterable[TenderRecord],
    tax: Taxonomy,
    seed: int,
    epoch: int,
    lang: str = "en",
    cfg: EncodingConfig = EncodingConfig(),
    skip_errors: bool = False,
) -> Iterator[TrainingPair]:
    """One pair per record, regenerated deterministically per epoch."""
    for rec in records:
        try:
            yield generate_pair(rec, tax, rng_for_record(seed, epoch, rec.id),
                                lang=lang, cfg=cfg)
        except Exception as e:
            if not skip_errors:
                raise
            logger.warning("skipping record %s: %s", rec.id, e)


def pair_probability(y, candidate, polarity: bool, tax: Taxonomy) -> Fraction:
    """Exact probability that draw_candidate(y) emits (candidate, polarity)."""
    chain = tax.ancestors_and_self(y)
    d = len(chain)
    cand = normalize_code(candidate)
    tax.node(cand)
    eligible = [i for i in range(d) if tax.siblings(chain[i])]
    if polarity:
        if cand not in chain:
            return Fraction(0)
        p = Fraction(1, 2) * Fraction(1, d)
        if not eligible:
            p *= 2
        return p
    if not eligible:
        return Fraction(0)
    i = tax.depth(cand)
    if i >= d or cand == chain[i]:
        return Fraction(0)
    sibs = tax.siblings(chain[i])
    if cand not in sibs:
        return Fraction(0)
    return Fraction(1, 2) * Fraction(1, len(eligible)) * Fraction(1, len(sibs))
