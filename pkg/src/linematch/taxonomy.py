"""Hierarchical line-item matching against a product taxonomy and catalog.

One invoice line can cover several purchase-order lines (an "edible oil"
invoice against coconut + sunflower + mustard oil PO entries). This
module resolves product mentions to taxonomy nodes, merges PO lines the
invoice item generalizes, and scores item pairs with a token-level
Jaccard that credits catalog-backed tokens related through the
hierarchy as well as literally shared tokens.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .textprep import Description, Lexicon, tokenize


def _canon_name(name: str) -> str:
    return " ".join(tokenize(name))


class TaxonomyError(ValueError):
    """Malformed taxonomy or catalog input."""


@dataclass
class Taxonomy:
    """Concept DAG: child -> parent (is-a) edges, names unique, no cycles."""

    parents: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        for node, ps in self.parents.items():
            for p in ps:
                if p not in self.parents:
                    raise TaxonomyError(f"node {node!r} has unknown parent {p!r}")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        WHITE, GRAY, BLACK = 0, 1, 2
        color = dict.fromkeys(self.parents, WHITE)
        for start in self.parents:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(self.parents[start]))]
            color[start] = GRAY
            while stack:
                node, it = stack[-1]
                for nxt in it:
                    if color[nxt] == GRAY:
                        raise TaxonomyError(f"cycle through {nxt!r}")
                    if color[nxt] == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(self.parents[nxt])))
                        break
                else:
                    color[node] = BLACK
                    stack.pop()

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(self.parents)

    def __contains__(self, name: str) -> bool:
        return _canon_name(name) in self.parents

    def roots(self) -> frozenset[str]:
        return frozenset(n for n, ps in self.parents.items() if not ps)

    def is_generalization(self, general: str, specific: str) -> bool:
        """True iff general is reachable from specific via parent edges.

        Reflexive: every node generalizes itself. Unknown names raise.
        """
        g, s = _canon_name(general), _canon_name(specific)
        for name in (g, s):
            if name not in self.parents:
                raise KeyError(f"unknown taxonomy node {name!r}")
        if g == s:
            return True
        seen = {s}
        frontier = [s]
        while frontier:
            node = frontier.pop()
            for parent in self.parents[node]:
                if parent == g:
                    return True
                if parent not in seen:
                    seen.add(parent)
                    frontier.append(parent)
        return False

    @classmethod
    def from_dict(cls, data: Mapping) -> "Taxonomy":
        nodes = data.get("nodes")
        if not isinstance(nodes, list):
            raise TaxonomyError("taxonomy JSON needs a 'nodes' list")
        parents: dict[str, frozenset[str]] = {}
        for row in nodes:
            name = _canon_name(row["name"])
            if not name:
                raise TaxonomyError("empty node name")
            if name in parents:
                raise TaxonomyError(f"duplicate node name {name!r}")
            parents[name] = frozenset(_canon_name(p) for p in row.get("parents", []))
        return cls(parents)

    @classmethod
    def load(cls, path: str | Path) -> "Taxonomy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class CatalogEntry:
    product: str  # canonical node name
    attributes: Mapping[str, str] = field(default_factory=dict)

    def reference_tokens(self) -> frozenset[str]:
        """Every token this entry vouches for: product name + attributes."""
        toks = set(tokenize(self.product))
        for key, value in self.attributes.items():
            toks.update(tokenize(key))
            toks.update(tokenize(str(value)))
        return frozenset(toks)


@dataclass
class Catalog:
    entries: list[CatalogEntry]

    def __post_init__(self) -> None:
        self._by_product = {}
        for entry in self.entries:
            self._by_product.setdefault(entry.product, entry)

    def entry_for(self, product: str) -> CatalogEntry | None:
        return self._by_product.get(_canon_name(product))

    def reference_tokens(self) -> frozenset[str]:
        toks: set[str] = set()
        for entry in self.entries:
            toks.update(entry.reference_tokens())
        return frozenset(toks)

    @classmethod
    def from_dict(cls, data: Mapping, taxonomy: Taxonomy | None = None) -> "Catalog":
        rows = data.get("entries")
        if not isinstance(rows, list):
            raise TaxonomyError("catalog JSON needs an 'entries' list")
        entries = []
        for row in rows:
            product = _canon_name(row["product"])
            if taxonomy is not None and product not in taxonomy.parents:
                raise TaxonomyError(f"catalog product {product!r} not in taxonomy")
            attrs = {str(k): str(v) for k, v in row.get("attributes", {}).items()}
            entries.append(CatalogEntry(product, attrs))
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path, taxonomy: Taxonomy | None = None) -> "Catalog":
        return cls.from_dict(
            json.loads(Path(path).read_text(encoding="utf-8")), taxonomy
        )


def reference_lexicon(taxonomy: Taxonomy, catalog: Catalog) -> Lexicon:
    """Spell-correction lexicon from every taxonomy and catalog word."""
    words = Counter()
    for node in taxonomy.parents:
        words.update(t for t in tokenize(node) if t.isalpha())
    for entry in catalog.entries:
        words.update(t for t in entry.reference_tokens() if t.isalpha())
    if not words:
        raise TaxonomyError("no alphabetic words in taxonomy or catalog")
    return Lexicon(dict(words))


@dataclass(frozen=True)
class LineItem:
    description: Description
    products: frozenset[str]  # resolved taxonomy node names
    attribute_tokens: frozenset[str]

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.description.tokens


def extract_products(
    item: Description, catalog: Catalog, taxonomy: Taxonomy
) -> frozenset[str]:
    """Longest-match lookup of node and catalog product names in the tokens."""
    lookup: dict[tuple[str, ...], str] = {}
    for node in taxonomy.parents:
        lookup[tuple(tokenize(node))] = node
    for entry in catalog.entries:
        lookup.setdefault(tuple(tokenize(entry.product)), entry.product)
    if not lookup:
        return frozenset()
    max_len = max(len(k) for k in lookup)
    tokens = item.tokens
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        for n in range(min(max_len, len(tokens) - i), 0, -1):
            name = lookup.get(tuple(tokens[i : i + n]))
            if name is not None:
                found.add(name)
                i += n
                break
        else:
            i += 1
    return frozenset(found)


def make_line_item(
    desc: Description, catalog: Catalog, taxonomy: Taxonomy
) -> LineItem:
    products = extract_products(desc, catalog, taxonomy)
    attr_tokens: set[str] = set()
    for product in products:
        entry = catalog.entry_for(product)
        if entry is None:
            continue
        ref = entry.reference_tokens() - set(tokenize(product))
        attr_tokens.update(t for t in desc.tokens if t in ref)
    return LineItem(desc, products, frozenset(attr_tokens))


def combine_po_items(
    po_items: list[LineItem], invoice_item: LineItem, taxonomy: Taxonomy
) -> list[LineItem]:
    """Merge PO lines whose product the invoice item generalizes.

    The qualifying group collapses into one synthetic line item (token
    concatenation, quantity concatenation); everything else passes
    through untouched. No PO item is ever dropped.
    """
    mergeable: list[LineItem] = []
    passthrough: list[LineItem] = []
    for po in po_items:
        covered = any(
            inv_p != po_p and taxonomy.is_generalization(inv_p, po_p)
            for inv_p in invoice_item.products
            for po_p in po.products
        ) or any(
            inv_p == po_p
            for inv_p in invoice_item.products
            for po_p in po.products
        )
        (mergeable if covered else passthrough).append(po)
    if len(mergeable) <= 1:
        return po_items
    first = mergeable[0].description
    merged_desc = replace(
        first,
        id="+".join(item.description.id for item in mergeable),
        original_text=" | ".join(i.description.original_text for i in mergeable),
        normalized_text=" ".join(i.description.normalized_text for i in mergeable),
        tokens=tuple(t for i in mergeable for t in i.description.tokens),
        noun_phrases=frozenset().union(
            *(i.description.noun_phrases for i in mergeable)
        ),
        quantities=tuple(q for i in mergeable for q in i.description.quantities),
        corrections=tuple(c for i in mergeable for c in i.description.corrections),
    )
    merged = LineItem(
        merged_desc,
        frozenset().union(*(i.products for i in mergeable)),
        frozenset().union(*(i.attribute_tokens for i in mergeable)),
    )
    return [merged] + passthrough


def _trigrams(token: str) -> Counter:
    return Counter(token[i : i + 3] for i in range(len(token) - 2))


def _trigram_cosine(a: str, b: str) -> float:
    ta, tb = _trigrams(a), _trigrams(b)
    if not ta or not tb:
        return 0.0
    num = sum(ta[g] * tb[g] for g in ta.keys() & tb.keys())
    if num == 0:
        return 0.0
    den = (
        sum(v * v for v in ta.values()) * sum(v * v for v in tb.values())
    ) ** 0.5
    return num / den


def fuzzy_token_match(token: str, reference: Iterable[str], threshold: float) -> bool:
    """Trigram-cosine match; tokens too short for trigrams must be exact."""
    for ref in reference:
        if len(token) < 3 or len(ref) < 3:
            if token == ref:
                return True
        elif _trigram_cosine(token, ref) >= threshold:
            return True
    return False


@dataclass(frozen=True)
class MatchBreakdown:
    """Every set behind a taxonomy-Jaccard score, for reports and audits."""

    invoice_matched: frozenset[str]  # invoice tokens backed by the catalog
    po_matched: frozenset[str]  # PO tokens backed by the catalog
    related: frozenset[str]  # tokens in cross-item hierarchy-related pairs
    shared: frozenset[str]  # tokens literally common to both items
    credited: frozenset[str]  # related | shared: the numerator
    unmatched: frozenset[str]  # tokens no catalog entry vouches for
    score: float
    degenerate: bool = False


def _reference_tokens(
    item: LineItem, catalog: Catalog, taxonomy: Taxonomy
) -> frozenset[str]:
    """Tokens the catalog/taxonomy vouches for, scoped to the item's products.

    Items that resolve to no product fall back to the full catalog and
    taxonomy vocabulary, so bare attribute tokens can still match.
    """
    if not item.products:
        full = set(catalog.reference_tokens())
        for node in taxonomy.parents:
            full.update(tokenize(node))
        return frozenset(full)
    ref: set[str] = set()
    for product in item.products:
        ref.update(tokenize(product))
        entry = catalog.entry_for(product)
        if entry is not None:
            ref.update(entry.reference_tokens())
    return frozenset(ref)


def taxonomy_jaccard_breakdown(
    invoice_item: LineItem,
    po_item: LineItem,
    catalog: Catalog,
    taxonomy: Taxonomy,
    fuzzy_threshold: float = 0.8,
) -> MatchBreakdown:
    """Token-level Jaccard with hierarchy credit.

    Catalog-backed tokens on each side are found by fuzzy match against
    that side's product-scoped reference vocabulary. A cross pair of
    distinct backed tokens is "related" when the two sides' products
    stand in a (strict) generalization relationship; related tokens and
    literally shared tokens together form the numerator. The denominator
    is every distinct token either item carries.
    """
    if not 0.0 < fuzzy_threshold <= 1.0:
        raise ValueError("fuzzy_threshold must be in (0, 1]")
    inv_tokens = frozenset(invoice_item.tokens)
    po_tokens = frozenset(po_item.tokens)
    all_tokens = inv_tokens | po_tokens
    if not all_tokens:
        return MatchBreakdown(
            frozenset(), frozenset(), frozenset(), frozenset(), frozenset(),
            frozenset(), 0.0, degenerate=True,
        )

    inv_ref = _reference_tokens(invoice_item, catalog, taxonomy)
    po_ref = _reference_tokens(po_item, catalog, taxonomy)
    k1 = frozenset(
        t for t in inv_tokens if fuzzy_token_match(t, inv_ref, fuzzy_threshold)
    )
    k2 = frozenset(
        t for t in po_tokens if fuzzy_token_match(t, po_ref, fuzzy_threshold)
    )

    # Hierarchy credit: tokens of product names on opposite sides whose
    # products are strictly related (one generalizes the other).
    related: set[str] = set()
    for inv_p in invoice_item.products:
        for po_p in po_item.products:
            if inv_p == po_p:
                continue
            if not (
                taxonomy.is_generalization(inv_p, po_p)
                or taxonomy.is_generalization(po_p, inv_p)
            ):
                continue
            inv_name = set(tokenize(inv_p)) & k1
            po_name = set(tokenize(po_p)) & k2
            for t1 in inv_name:
                for t2 in po_name:
                    if t1 != t2:
                        related.add(t1)
                        related.add(t2)

    shared = inv_tokens & po_tokens
    credited = frozenset(related) | shared
    unmatched = all_tokens - (k1 | k2)
    score = len(credited) / len(all_tokens)
    return MatchBreakdown(
        invoice_matched=k1,
        po_matched=k2,
        related=frozenset(related),
        shared=shared,
        credited=credited,
        unmatched=unmatched,
        score=score,
    )


def taxonomy_jaccard(
    invoice_item: LineItem,
    po_item: LineItem,
    catalog: Catalog,
    taxonomy: Taxonomy,
    fuzzy_threshold: float = 0.8,
) -> float:
    return taxonomy_jaccard_breakdown(
        invoice_item, po_item, catalog, taxonomy, fuzzy_threshold
    ).score
