"""Tender records and their serialized text form for pair scoring."""

from __future__ import annotations

import calendar
import datetime
import json
from dataclasses import dataclass, field
from pathlib import Path

from .taxonomy import TaxonomyNode

DEFAULT_FIELD_ORDER = ("month", "value", "contractual_choice", "legal_form", "macro_area")
DEFAULT_MAX_OBJECT_CHARS = 2000

# Reserved scorer-structure sequences; parenthesized so user text cannot
# inject pair boundaries into a model-side tokenizer.
_RESERVED = (("[SEP]", "(SEP)"), ("[CLS]", "(CLS)"))

_KNOWN_KEYS = frozenset(
    {"id", "object", "month", "value", "contractual_choice", "legal_form",
     "macro_area", "cpv", "date"}
)


class EncodingError(ValueError):
    """Invalid record content or serialization request."""


@dataclass
class TenderRecord:
    """One contract: free-text object plus optional categorical/numeric metadata.

    ``cpv`` is the ground-truth label when known; it is never serialized into
    the scorer input.
    """

    id: str
    object_text: str
    month: str | None = None
    value_eur: float | None = None
    contractual_choice: str | None = None
    legal_form: str | None = None
    macro_area: str | None = None
    extra: dict[str, str] = field(default_factory=dict)
    cpv: str | None = None

    def __post_init__(self):
        self.object_text = self.object_text.strip()
        if not self.object_text:
            raise EncodingError(f"record {self.id!r}: empty object text")
        if self.value_eur is not None:
            if self.value_eur == 0:
                self.value_eur = None
            elif self.value_eur < 0:
                raise EncodingError(f"record {self.id!r}: negative value")


@dataclass(frozen=True)
class EncodingConfig:
    field_order: tuple[str, ...] = DEFAULT_FIELD_ORDER
    max_object_chars: int = DEFAULT_MAX_OBJECT_CHARS


@dataclass(frozen=True)
class PairText:
    input_text: str
    label_text: str


def quantize_value(amount: float, max_digits: int = 9) -> str:
    """Magnitude token for a positive amount: one euro sign per integer digit.

    Amounts below 1 count as a single digit; the digit count is capped at
    ``max_digits``.
    """
    if amount <= 0:
        raise EncodingError(f"value must be positive, got {amount}")
    k = len(str(int(amount))) if amount >= 1 else 1
    k = min(k, max_digits)
    return "[" + "€" * k + "]"


def sanitize(text: str) -> str:
    for raw, safe in _RESERVED:
        text = text.replace(raw, safe)
    return text


def _truncate(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    cut = text[:limit]
    ws = max((i for i, ch in enumerate(cut) if ch.isspace()), default=-1)
    if ws <= 0:
        return cut
    return cut[:ws].rstrip()


def _field_value(rec: TenderRecord, name: str) -> str | None:
    if name in ("month", "contractual_choice", "legal_form", "macro_area"):
        return getattr(rec, name)
    if name in rec.extra:
        return rec.extra[name]
    raise EncodingError(f"unknown field {name!r} in field order")


def serialize_record(
    rec: TenderRecord,
    field_order: tuple[str, ...] = DEFAULT_FIELD_ORDER,
    max_object_chars: int = DEFAULT_MAX_OBJECT_CHARS,
) -> str:
    """Document side of a scoring pair.

    The object text comes first (truncated at a whitespace boundary), then
    each present metadata field as ``[FIELDNAME] value``; missing fields are
    skipped entirely.
    """
    parts = [_truncate(sanitize(rec.object_text), max_object_chars)]
    for name in field_order:
        if name == "value":
            if rec.value_eur is not None:
                parts.append("[VALUE] " + quantize_value(rec.value_eur))
            continue
        value = _field_value(rec, name)
        if value:
            parts.append(f"[{name.upper()}] {sanitize(value)}")
    return " ".join(parts)


def make_pair(
    rec: TenderRecord,
    label: TaxonomyNode,
    lang: str = "en",
    cfg: EncodingConfig = EncodingConfig(),
) -> PairText:
    return PairText(
        input_text=serialize_record(rec, cfg.field_order, cfg.max_object_chars),
        label_text=sanitize(label.description(lang)),
    )


def month_from_date(value: str) -> str:
    """English month name from an ISO date(-time) string; the year is dropped."""
    try:
        day = datetime.date.fromisoformat(value.strip()[:10])
    except ValueError:
        raise EncodingError(f"not an ISO date: {value!r}") from None
    return calendar.month_name[day.month]


def record_from_json(obj: dict) -> TenderRecord:
    if "id" not in obj or obj["id"] in (None, ""):
        raise EncodingError("record is missing an id")
    if not isinstance(obj.get("object"), str):
        raise EncodingError(f"record {obj['id']!r}: missing object text")
    value = obj.get("value")
    if value is not None:
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise EncodingError(f"record {obj['id']!r}: non-numeric value") from None
    month = obj.get("month")
    if month is None and obj.get("date"):
        month = month_from_date(str(obj["date"]))
    extra = {k: str(v) for k, v in obj.items()
             if k not in _KNOWN_KEYS and v is not None}
    return TenderRecord(
        id=str(obj["id"]),
        object_text=obj["object"],
        month=month,
        value_eur=value,
        contractual_choice=obj.get("contractual_choice"),
        legal_form=obj.get("legal_form"),
        macro_area=obj.get("macro_area"),
        extra=extra,
        cpv=obj.get("cpv"),
    )


def read_records(path: str | Path) -> list[TenderRecord]:
    """Parse a JSON-lines tender file; raises on the first malformed line."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, EncodingError) as e:
                raise EncodingError(f"{path}:{lineno}: {e}") from None
    return records
