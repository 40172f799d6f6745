"""Model bundle: tokenizer + bidirectional encoder + 2-way pair-validity head.

The engine-side special tokens (value magnitudes and field markers) are part
of the vocabulary so each round-trips to a single id. Without a pretrained
checkpoint a small randomly initialized encoder is built from the corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, trainers
from tokenizers.processors import TemplateProcessing
from transformers import (AutoModelForSequenceClassification, AutoTokenizer,
                          BertConfig, BertForSequenceClassification,
                          PreTrainedTokenizerFast)

VALUE_TOKENS = ["[" + "€" * k + "]" for k in range(1, 10)]
FIELD_TOKENS = ["[MONTH]", "[VALUE]", "[CONTRACTUAL_CHOICE]", "[LEGAL_FORM]",
                "[MACRO_AREA]"]
SPECIAL_TOKENS = VALUE_TOKENS + FIELD_TOKENS

_CORE_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


class BundleError(ValueError):
    pass


@dataclass
class ModelBundle:
    model: torch.nn.Module
    tokenizer: PreTrainedTokenizerFast
    model_id: str
    max_length: int = 128

    def __post_init__(self):
        self.model.eval()
        for token in SPECIAL_TOKENS:
            ids = self.tokenizer.encode(token, add_special_tokens=False)
            if len(ids) != 1 or ids[0] == self.tokenizer.unk_token_id:
                raise BundleError(f"special token {token!r} does not map to a "
                                  "single vocabulary id")

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(path / "model")
        self.tokenizer.save_pretrained(path / "tokenizer")
        meta = {"model_id": self.model_id, "max_length": self.max_length}
        (path / "bundle.json").write_text(json.dumps(meta), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        path = Path(path)
        meta = json.loads((path / "bundle.json").read_text(encoding="utf-8"))
        model = AutoModelForSequenceClassification.from_pretrained(path / "model")
        tokenizer = AutoTokenizer.from_pretrained(path / "tokenizer")
        return cls(model=model, tokenizer=tokenizer,
                   model_id=meta["model_id"], max_length=meta["max_length"])


def _train_tokenizer(texts: Iterable[str], vocab_size: int) -> PreTrainedTokenizerFast:
    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.Lowercase()
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordPieceTrainer(
        vocab_size=vocab_size, special_tokens=_CORE_TOKENS + SPECIAL_TOKENS)
    tok.train_from_iterator(texts, trainer)
    tok.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", tok.token_to_id("[CLS]")),
                        ("[SEP]", tok.token_to_id("[SEP]"))],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
        additional_special_tokens=SPECIAL_TOKENS)


def build_base_bundle(texts: Iterable[str], vocab_size: int = 4000,
                      hidden_size: int = 128, num_layers: int = 2,
                      num_heads: int = 4, max_length: int = 128,
                      seed: int = 0) -> ModelBundle:
    """Randomly initialized small encoder with a corpus-trained tokenizer."""
    tokenizer = _train_tokenizer(texts, vocab_size)
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(tokenizer), hidden_size=hidden_size,
        num_hidden_layers=num_layers, num_attention_heads=num_heads,
        intermediate_size=4 * hidden_size,
        max_position_embeddings=max_length, type_vocab_size=2, num_labels=2)
    model = BertForSequenceClassification(config)
    return ModelBundle(model=model, tokenizer=tokenizer,
                       model_id=f"scratch-bert-{hidden_size}x{num_layers}",
                       max_length=max_length)


def adapt_pretrained_bundle(name_or_path: str, max_length: int = 128) -> ModelBundle:
    """Wrap an existing checkpoint, adding the engine's special tokens."""
    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    tokenizer.add_special_tokens({"additional_special_tokens": SPECIAL_TOKENS})
    model = AutoModelForSequenceClassification.from_pretrained(
        name_or_path, num_labels=2)
    model.resize_token_embeddings(len(tokenizer))
    return ModelBundle(model=model, tokenizer=tokenizer,
                       model_id=str(name_or_path), max_length=max_length)
