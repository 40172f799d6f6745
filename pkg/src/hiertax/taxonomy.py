"""Digit-coded label taxonomy: parsing, ancestor chains, and structural stats.

Codes follow the CPV convention: 8 digits plus an opaque check digit
(``DDDDDDDD-C``). The hierarchy is encoded in the digits themselves unless an
explicit parent column overrides it.
"""

from __future__ import annotations

import csv
import math
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

_CODE_RE = re.compile(r"^([0-9]{8})(?:-([0-9]))?$")


class TaxonomyError(ValueError):
    """Invalid taxonomy file, label code, or query."""


@dataclass(frozen=True)
class LabelCode:
    """An 8-digit label code plus its check digit.

    The check digit is parsed and echoed verbatim but never validated or
    computed; node identity is the 8-digit string alone.
    """

    digits: str
    check_digit: str | None = None

    def __str__(self) -> str:
        if self.check_digit is None:
            return self.digits
        return f"{self.digits}-{self.check_digit}"


def parse_code(text: str) -> LabelCode:
    m = _CODE_RE.match(text.strip())
    if m is None:
        raise TaxonomyError(f"malformed label code: {text!r}")
    digits = m.group(1)
    if digits[:2] == "00":
        raise TaxonomyError(f"label code {text!r} has no root (starts with 00)")
    return LabelCode(digits, m.group(2))


def normalize_code(code: Union[str, LabelCode]) -> str:
    """8-digit node key from a LabelCode or a ``DDDDDDDD[-C]`` string."""
    if isinstance(code, LabelCode):
        return code.digits
    return parse_code(code).digits


def derive_parent(code: Union[str, LabelCode]) -> str | None:
    """Parent key under the digit-prefix convention.

    Zeroes the last non-zero digit among positions 3-8; a code whose
    positions 3-8 are all zero is a root and has no parent.
    """
    digits = normalize_code(code)
    if digits[2:] == "000000":
        return None
    last = max(i for i in range(2, 8) if digits[i] != "0")
    return digits[:last] + "0" + digits[last + 1:]


@dataclass
class TaxonomyNode:
    code: LabelCode
    descriptions: dict[str, str]
    parent: str | None
    children: list[str] = field(default_factory=list)
    depth: int = 0

    def description(self, lang: str) -> str:
        try:
            return self.descriptions[lang]
        except KeyError:
            raise TaxonomyError(
                f"node {self.code} has no description in language {lang!r}"
            ) from None


@dataclass
class TaxonomyStats:
    n_classes: int
    n_leaves: int
    n_roots: int
    max_depth: int
    mean_children: float
    sd_children: float
    classes_per_depth: dict[int, int]
    children_histogram: dict[int, int]
    description_word_counts: dict[int, int]


class Taxonomy:
    """Immutable tree of labels; safe for concurrent reads after load."""

    def __init__(self, nodes: dict[str, TaxonomyNode], roots: list[str],
                 default_lang: str = "en"):
        self.nodes = nodes
        self.roots = roots
        self.default_lang = default_lang

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, code) -> bool:
        try:
            return normalize_code(code) in self.nodes
        except TaxonomyError:
            return False

    def node(self, code) -> TaxonomyNode:
        key = normalize_code(code)
        try:
            return self.nodes[key]
        except KeyError:
            raise TaxonomyError(f"unknown label code: {key}") from None

    def full_code(self, code) -> str:
        return str(self.node(code).code)

    def parent(self, code) -> str | None:
        return self.node(code).parent

    def children(self, code) -> list[str]:
        return self.node(code).children

    def depth(self, code) -> int:
        return self.node(code).depth

    def is_leaf(self, code) -> bool:
        return not self.node(code).children

    def description(self, code, lang: str | None = None) -> str:
        return self.node(code).description(lang or self.default_lang)

    def ancestors_and_self(self, code) -> list[str]:
        """Chain of keys from the root down to ``code`` inclusive."""
        chain = []
        key: str | None = normalize_code(code)
        if key not in self.nodes:
            raise TaxonomyError(f"unknown label code: {key}")
        while key is not None:
            chain.append(key)
            key = self.nodes[key].parent
        chain.reverse()
        return chain

    def siblings(self, code) -> list[str]:
        """Exclusive siblings: same-parent nodes other than the code itself.

        Siblings of a root are the other roots.
        """
        node = self.node(code)
        pool = self.roots if node.parent is None else self.nodes[node.parent].children
        return [c for c in pool if c != node.code.digits]

    def iter_subtree(self, code) -> Iterable[str]:
        stack = [normalize_code(code)]
        self.node(stack[0])
        while stack:
            key = stack.pop()
            yield key
            stack.extend(reversed(self.nodes[key].children))

    def stats(self) -> TaxonomyStats:
        return taxonomy_stats(self)


def taxonomy_stats(tax: Taxonomy) -> TaxonomyStats:
    """Structural statistics of a loaded taxonomy.

    ``max_depth`` counts levels along the deepest chain (a lone root is 1),
    matching the convention used for the CPV figure of 7. ``classes_per_depth``
    is cumulative over 0-based node depth.
    """
    n = len(tax.nodes)
    child_counts = [len(node.children) for node in tax.nodes.values()]
    n_leaves = sum(1 for c in child_counts if c == 0)
    n_roots = len(tax.roots)
    mean_children = (n - n_roots) / n if n else 0.0
    var = sum((c - mean_children) ** 2 for c in child_counts) / n if n else 0.0
    per_depth = Counter(node.depth for node in tax.nodes.values())
    cumulative: dict[int, int] = {}
    running = 0
    for d in sorted(per_depth):
        running += per_depth[d]
        cumulative[d] = running
    word_counts: Counter[int] = Counter()
    for node in tax.nodes.values():
        desc = node.descriptions.get(tax.default_lang)
        if desc is None:
            desc = node.descriptions[min(node.descriptions)]
        word_counts[len(desc.split())] += 1
    return TaxonomyStats(
        n_classes=n,
        n_leaves=n_leaves,
        n_roots=n_roots,
        max_depth=(max(per_depth) + 1) if per_depth else 0,
        mean_children=mean_children,
        sd_children=math.sqrt(var),
        classes_per_depth=cumulative,
        children_histogram=dict(sorted(Counter(child_counts).items())),
        description_word_counts=dict(sorted(word_counts.items())),
    )


def _open_source(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def parse_taxonomy(source, default_lang: str = "en") -> Taxonomy:
    """Load a taxonomy from CSV with header ``code,description[,parent][,lang]``.

    Loading is total: every parent (explicit or digit-derived) must resolve,
    and row order never affects the result.
    """
    stream, owned = _open_source(source)
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None:
            raise TaxonomyError("empty taxonomy file")
        fields = set(reader.fieldnames)
        if not {"code", "description"} <= fields:
            raise TaxonomyError(
                f"taxonomy header must include code and description, got {sorted(fields)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                code = parse_code(row["code"] or "")
            except TaxonomyError as e:
                raise TaxonomyError(f"row {lineno}: {e}") from None
            desc = (row.get("description") or "").strip()
            if not desc:
                raise TaxonomyError(f"row {lineno}: empty description for {code}")
            parent_cell = (row.get("parent") or "").strip()
            parent = None
            if parent_cell:
                try:
                    parent = normalize_code(parent_cell)
                except TaxonomyError as e:
                    raise TaxonomyError(f"row {lineno}: bad parent: {e}") from None
            lang = (row.get("lang") or "").strip() or default_lang
            rows.append((lineno, code, desc, parent, lang))
    finally:
        if owned:
            stream.close()
    if not rows:
        raise TaxonomyError("taxonomy file has no data rows")

    by_code: dict[str, list] = {}
    for entry in rows:
        by_code.setdefault(entry[1].digits, []).append(entry)

    nodes: dict[str, TaxonomyNode] = {}
    first_lineno: dict[str, int] = {}
    for digits, entries in by_code.items():
        entries.sort(key=lambda e: e[0])
        first_lineno[digits] = entries[0][0]
        checks = {e[1].check_digit for e in entries if e[1].check_digit is not None}
        if len(checks) > 1:
            raise TaxonomyError(
                f"row {entries[-1][0]}: conflicting check digits for {digits}"
            )
        explicit = {e[3] for e in entries if e[3] is not None}
        if len(explicit) > 1:
            raise TaxonomyError(
                f"row {entries[-1][0]}: conflicting explicit parents for {digits}"
            )
        descriptions: dict[str, str] = {}
        for lineno, _, desc, _, lang in entries:
            if lang in descriptions:
                raise TaxonomyError(f"row {lineno}: duplicate code {digits} ({lang})")
            descriptions[lang] = desc
        parent = next(iter(explicit)) if explicit else derive_parent(digits)
        nodes[digits] = TaxonomyNode(
            code=LabelCode(digits, next(iter(checks)) if checks else None),
            descriptions=descriptions,
            parent=parent,
        )

    for digits, node in nodes.items():
        if node.parent is not None and node.parent not in nodes:
            raise TaxonomyError(
                f"row {first_lineno[digits]}: dangling parent {node.parent} for {digits}"
            )

    roots = sorted(d for d, n in nodes.items() if n.parent is None)
    if not roots:
        raise TaxonomyError("taxonomy has no root nodes")
    for digits, node in nodes.items():
        if node.parent is not None:
            nodes[node.parent].children.append(digits)
    for node in nodes.values():
        node.children.sort()

    seen = 0
    queue = deque((r, 0) for r in roots)
    while queue:
        key, depth = queue.popleft()
        nodes[key].depth = depth
        seen += 1
        for child in nodes[key].children:
            queue.append((child, depth + 1))
    if seen != len(nodes):
        orphan = next(d for d in nodes if d not in
                      {k for k in nodes if _reaches_root(nodes, k)})
        raise TaxonomyError(
            f"row {first_lineno[orphan]}: cycle in explicit parents involving {orphan}"
        )
    return Taxonomy(nodes, roots, default_lang=default_lang)


def _reaches_root(nodes: dict[str, TaxonomyNode], key: str) -> bool:
    hops = 0
    cur: str | None = key
    while cur is not None:
        cur = nodes[cur].parent
        hops += 1
        if hops > len(nodes):
            return False
    return True
