"""Tests for hierarchy-aware line item matching.

The headline behavior: a generic invoice line ("Edible oil 5 lt") must
cover several specific PO lines (coconut + sunflower + mustard oil), so
the PO side merges into one synthetic item and the Jaccard credits
hierarchy-related tokens, not just literal overlap.

The scoring oracle below recomputes the token sets from scratch with
plain dicts and sets; it shares no code with the engine.
"""

import math
import random

import pytest

from linematch.taxonomy import (
    Catalog,
    CatalogEntry,
    LineItem,
    Taxonomy,
    TaxonomyError,
    combine_po_items,
    extract_products,
    fuzzy_token_match,
    make_line_item,
    reference_lexicon,
    taxonomy_jaccard,
    taxonomy_jaccard_breakdown,
)
from linematch.textprep import Description, RawDescription, prepare

# One taxonomy/catalog pair reused everywhere. Raw dicts are kept so the
# oracle can read them without going through the classes under test.
RAW_NODES = {
    "oil": [],
    "edible oil": ["oil"],
    "coconut oil": ["edible oil"],
    "sunflower oil": ["edible oil"],
    "mustard oil": ["edible oil"],
    "diesel oil": ["oil"],
    "battery": [],
    "aa battery": ["battery"],
}
RAW_ENTRIES = [
    ("edible oil", {}),
    ("coconut oil", {"grade": "premium"}),
    ("sunflower oil", {"process": "refined"}),
    ("mustard oil", {}),
    ("diesel oil", {}),
    ("aa battery", {"count": "4"}),
]


def build_world():
    tax = Taxonomy.from_dict(
        {"nodes": [{"name": n, "parents": ps} for n, ps in RAW_NODES.items()]}
    )
    cat = Catalog.from_dict(
        {
            "entries": [
                {"product": name, "attributes": attrs}
                for name, attrs in RAW_ENTRIES
            ]
        },
        tax,
    )
    return tax, cat, reference_lexicon(tax, cat)


TAX, CAT, LEX = build_world()


def item(text, id="x", source="invoice"):
    desc = prepare(RawDescription(id, text, source), LEX)
    return make_line_item(desc, CAT, TAX)


# --- independent scoring oracle ---------------------------------------


def _grams(word):
    return [word[i : i + 3] for i in range(len(word) - 2)]


def _cosine(a, b):
    ca, cb = {}, {}
    for g in _grams(a):
        ca[g] = ca.get(g, 0) + 1
    for g in _grams(b):
        cb[g] = cb.get(g, 0) + 1
    if not ca or not cb:
        return 0.0
    dot = sum(n * cb.get(g, 0) for g, n in ca.items())
    if not dot:
        return 0.0
    na = sum(n * n for n in ca.values())
    nb = sum(n * n for n in cb.values())
    return dot / math.sqrt(na * nb)


def _backed(token, refs, threshold):
    for ref in refs:
        if len(token) < 3 or len(ref) < 3:
            if token == ref:
                return True
        elif _cosine(token, ref) >= threshold:
            return True
    return False


def _ancestors(name, parents):
    seen, frontier = set(), [name]
    while frontier:
        for p in parents[frontier.pop()]:
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return seen


def _oracle_refs(products):
    """Reference vocabulary for one side, from the raw fixture data."""
    refs = set()
    if not products:
        for name, attrs in RAW_ENTRIES:
            refs.update(name.split())
            for k, v in attrs.items():
                refs.update(k.split())
                refs.update(v.split())
        for node in RAW_NODES:
            refs.update(node.split())
        return refs
    for prod in products:
        refs.update(prod.split())
        for name, attrs in RAW_ENTRIES:
            if name == prod:
                for k, v in attrs.items():
                    refs.update(k.split())
                    refs.update(v.split())
    return refs


def oracle_score(inv, po, threshold=0.8):
    inv_tokens, po_tokens = set(inv.tokens), set(po.tokens)
    all_tokens = inv_tokens | po_tokens
    if not all_tokens:
        return 0.0
    k1 = {t for t in inv_tokens if _backed(t, _oracle_refs(inv.products), threshold)}
    k2 = {t for t in po_tokens if _backed(t, _oracle_refs(po.products), threshold)}
    related = set()
    for a in inv.products:
        for b in po.products:
            if a == b:
                continue
            if a not in _ancestors(b, RAW_NODES) and b not in _ancestors(a, RAW_NODES):
                continue
            for t1 in set(a.split()) & k1:
                for t2 in set(b.split()) & k2:
                    if t1 != t2:
                        related.add(t1)
                        related.add(t2)
    credited = related | (inv_tokens & po_tokens)
    return len(credited) / len(all_tokens)


def random_item(rng):
    products = [name for name, _ in RAW_ENTRIES]
    extras = [
        "premium", "refined", "cold", "pressed", "fresh", "pack",
        "bottle", "crate", "qx", "1", "2", "5", "750",
    ]
    words = []
    if rng.random() < 0.7:
        words.extend(rng.choice(products).split())
    for _ in range(rng.randrange(4)):
        words.append(rng.choice(extras))
    if not words:
        words.append(rng.choice(extras))
    rng.shuffle(words)
    return item(" ".join(words[:10]), id=f"r{rng.randrange(10 ** 6)}")


# --- taxonomy structure ------------------------------------------------


class TestTaxonomy:
    def test_duplicate_node_rejected(self):
        with pytest.raises(TaxonomyError):
            Taxonomy.from_dict({"nodes": [{"name": "oil"}, {"name": "Oil"}]})

    def test_unknown_parent_rejected(self):
        with pytest.raises(TaxonomyError):
            Taxonomy({"a": frozenset({"ghost"})})

    def test_cycle_rejected(self):
        with pytest.raises(TaxonomyError):
            Taxonomy({"a": frozenset({"b"}), "b": frozenset({"a"})})

    def test_self_loop_rejected(self):
        with pytest.raises(TaxonomyError):
            Taxonomy({"a": frozenset({"a"})})

    def test_roots(self):
        assert TAX.roots() == frozenset({"oil", "battery"})

    def test_contains_canonicalizes(self):
        assert "Edible  OIL" in TAX
        assert "olive oil" not in TAX

    def test_generalization_is_reflexive(self):
        for node in RAW_NODES:
            assert TAX.is_generalization(node, node)

    def test_generalization_spans_levels(self):
        assert TAX.is_generalization("edible oil", "coconut oil")
        assert TAX.is_generalization("oil", "coconut oil")

    def test_generalization_is_directional(self):
        assert not TAX.is_generalization("coconut oil", "edible oil")
        assert not TAX.is_generalization("coconut oil", "oil")

    def test_siblings_are_unrelated(self):
        assert not TAX.is_generalization("diesel oil", "coconut oil")
        assert not TAX.is_generalization("coconut oil", "diesel oil")

    def test_unknown_node_raises(self):
        with pytest.raises(KeyError):
            TAX.is_generalization("oil", "olive oil")


class TestCatalog:
    def test_product_must_be_a_taxonomy_node(self):
        with pytest.raises(TaxonomyError):
            Catalog.from_dict({"entries": [{"product": "olive oil"}]}, TAX)

    def test_reference_tokens_include_attributes(self):
        entry = CatalogEntry("coconut oil", {"grade": "premium"})
        assert entry.reference_tokens() == frozenset(
            {"coconut", "oil", "grade", "premium"}
        )

    def test_lexicon_corrects_toward_reference_words(self):
        desc = prepare(RawDescription("p", "Musterd oil 1 lt", "po"), LEX)
        assert desc.tokens == ("mustard", "oil", "1", "lt")
        assert ("musterd", "mustard") in desc.corrections

    def test_lexicon_keeps_only_alphabetic_words(self):
        assert "premium" in LEX
        assert "4" not in LEX

    def test_lexicon_needs_at_least_one_word(self):
        with pytest.raises(TaxonomyError):
            reference_lexicon(Taxonomy({}), Catalog([]))


# --- product extraction and line items ---------------------------------


class TestExtractProducts:
    def test_longest_name_wins(self):
        desc = prepare(RawDescription("i", "Edible oil 5 lt"), LEX)
        assert extract_products(desc, CAT, TAX) == frozenset({"edible oil"})

    def test_multiple_products_found(self):
        desc = prepare(RawDescription("i", "coconut oil and edible oil"), LEX)
        assert extract_products(desc, CAT, TAX) == frozenset(
            {"coconut oil", "edible oil"}
        )

    def test_plain_words_resolve_to_nothing(self):
        desc = prepare(RawDescription("i", "fresh bread pack"), LEX)
        assert extract_products(desc, CAT, TAX) == frozenset()

    def test_attribute_tokens_come_from_the_description(self):
        rich = item("premium coconut oil")
        assert rich.attribute_tokens == frozenset({"premium"})
        plain = item("coconut oil 2 lt")
        assert plain.attribute_tokens == frozenset()


class TestCombinePoItems:
    def test_generalizing_invoice_merges_covered_lines(self):
        inv = item("Edible oil 5 lt")
        pos = [
            item("Coconut oil 2 lt", id="po0", source="po"),
            item("Sunflower oil 2 lt", id="po1", source="po"),
            item("Musterd oil 1 lt", id="po2", source="po"),
        ]
        merged = combine_po_items(pos, inv, TAX)
        assert len(merged) == 1
        assert merged[0].description.id == "po0+po1+po2"
        assert merged[0].products == frozenset(
            {"coconut oil", "sunflower oil", "mustard oil"}
        )
        assert merged[0].tokens == (
            "coconut", "oil", "2", "lt",
            "sunflower", "oil", "2", "lt",
            "mustard", "oil", "1", "lt",
        )
        assert " | " in merged[0].description.original_text

    def test_quantities_concatenate_in_order(self):
        inv = item("Edible oil 5 lt")
        pos = [
            item("Coconut oil 2 lt", id="a", source="po"),
            item("Sunflower oil 1 lt", id="b", source="po"),
        ]
        merged = combine_po_items(pos, inv, TAX)[0]
        expected = pos[0].description.quantities + pos[1].description.quantities
        assert merged.description.quantities == expected

    def test_single_covered_line_passes_through(self):
        inv = item("Edible oil 5 lt")
        pos = [item("Coconut oil 2 lt", id="a", source="po")]
        assert combine_po_items(pos, inv, TAX) is pos

    def test_uncovered_lines_pass_through_untouched(self):
        inv = item("Edible oil 5 lt")
        battery = item("aa battery 4 pack", id="b", source="po")
        pos = [
            item("Coconut oil 2 lt", id="a0", source="po"),
            battery,
            item("Sunflower oil 2 lt", id="a1", source="po"),
        ]
        merged = combine_po_items(pos, inv, TAX)
        assert len(merged) == 2
        assert merged[0].description.id == "a0+a1"
        assert merged[1] is battery

    def test_equal_products_also_merge(self):
        inv = item("Coconut oil 5 lt")
        pos = [
            item("Coconut oil 2 lt", id="a", source="po"),
            item("Coconut oil 3 lt", id="b", source="po"),
        ]
        merged = combine_po_items(pos, inv, TAX)
        assert len(merged) == 1
        assert merged[0].description.id == "a+b"

    def test_invoice_without_products_merges_nothing(self):
        inv = item("fresh bread pack")
        pos = [
            item("Coconut oil 2 lt", id="a", source="po"),
            item("Sunflower oil 2 lt", id="b", source="po"),
        ]
        assert combine_po_items(pos, inv, TAX) is pos


# --- fuzzy token matching ----------------------------------------------


class TestFuzzyTokenMatch:
    def test_identical_token_matches(self):
        assert fuzzy_token_match("coconut", ["coconut"], 0.8)

    def test_near_variant_matches(self):
        # sunflowers vs sunflower: 7 shared trigrams of 7 and 8,
        # cosine 7 / sqrt(56) ~ 0.935.
        assert fuzzy_token_match("sunflowers", ["sunflower"], 0.8)

    def test_distant_variant_fails(self):
        # musterd vs mustard share only {mus, ust}: cosine 0.4. The
        # lexicon has to fix this one upstream.
        assert not fuzzy_token_match("musterd", ["mustard"], 0.8)

    def test_short_tokens_must_be_exact(self):
        assert fuzzy_token_match("lt", ["lt"], 0.8)
        assert not fuzzy_token_match("lt", ["ltr"], 0.8)
        assert not fuzzy_token_match("5", ["50"], 0.8)


# --- scoring ------------------------------------------------------------


class TestJaccard:
    def test_generalizing_invoice_credits_merged_po(self):
        """Worked by hand, the oils example end to end.

        Invoice "edible oil 5 lt" vs the merged PO line carries nine
        distinct tokens. Credited: oil + lt (shared) plus edible,
        coconut, sunflower, mustard (hierarchy pairs), so 6/9.
        """
        inv = item("Edible oil 5 lt")
        pos = [
            item("Coconut oil 2 lt", id="po0", source="po"),
            item("Sunflower oil 2 lt", id="po1", source="po"),
            item("Musterd oil 1 lt", id="po2", source="po"),
        ]
        merged = combine_po_items(pos, inv, TAX)[0]
        b = taxonomy_jaccard_breakdown(inv, merged, CAT, TAX)
        assert b.score == pytest.approx(6 / 9)
        assert b.shared == frozenset({"oil", "lt"})
        assert b.related == frozenset(
            {"edible", "oil", "coconut", "sunflower", "mustard"}
        )
        assert b.credited == frozenset(
            {"edible", "oil", "lt", "coconut", "sunflower", "mustard"}
        )
        assert b.unmatched == frozenset({"1", "2", "5", "lt"})
        assert not b.degenerate
        assert oracle_score(inv, merged) == b.score

    def test_identical_items_score_one(self):
        a = item("Diesel oil 5 lt")
        b = item("Diesel oil 5 lt", id="y", source="po")
        assert taxonomy_jaccard(a, b, CAT, TAX) == 1.0

    def test_disjoint_items_score_zero(self):
        a = item("fresh bread pack")
        b = item("Diesel oil 5 lt", id="y", source="po")
        assert taxonomy_jaccard(a, b, CAT, TAX) == 0.0

    def test_sibling_products_get_no_hierarchy_credit(self):
        a = item("Coconut oil 2 lt")
        b = item("Diesel oil 5 lt", id="y", source="po")
        breakdown = taxonomy_jaccard_breakdown(a, b, CAT, TAX)
        assert breakdown.related == frozenset()
        assert breakdown.credited == frozenset({"oil", "lt"})
        assert breakdown.score == pytest.approx(2 / 6)

    def test_score_is_symmetric(self):
        rng = random.Random(11)
        for _ in range(40):
            a, b = random_item(rng), random_item(rng)
            assert taxonomy_jaccard(a, b, CAT, TAX) == taxonomy_jaccard(
                b, a, CAT, TAX
            )

    def test_self_score_is_one(self):
        rng = random.Random(12)
        for _ in range(20):
            a = random_item(rng)
            assert taxonomy_jaccard(a, a, CAT, TAX) == 1.0

    def test_breakdown_sets_are_consistent(self):
        rng = random.Random(13)
        for _ in range(40):
            a, b = random_item(rng), random_item(rng)
            br = taxonomy_jaccard_breakdown(a, b, CAT, TAX)
            every = frozenset(a.tokens) | frozenset(b.tokens)
            assert br.credited == br.related | br.shared
            assert br.credited <= every
            assert br.unmatched <= every
            assert not br.unmatched & (br.invoice_matched | br.po_matched)
            assert 0.0 <= br.score <= 1.0

    def test_threshold_must_be_in_unit_interval(self):
        a = item("Coconut oil 2 lt")
        b = item("Diesel oil 5 lt", id="y", source="po")
        for bad in (0.0, -0.2, 1.0001):
            with pytest.raises(ValueError):
                taxonomy_jaccard_breakdown(a, b, CAT, TAX, fuzzy_threshold=bad)
        taxonomy_jaccard_breakdown(a, b, CAT, TAX, fuzzy_threshold=1.0)

    def test_empty_items_are_degenerate(self):
        empty = LineItem(
            Description(id="e", original_text="", normalized_text="", tokens=()),
            frozenset(),
            frozenset(),
        )
        br = taxonomy_jaccard_breakdown(empty, empty, CAT, TAX)
        assert br.degenerate
        assert br.score == 0.0

    def test_engine_matches_set_algebra_oracle(self):
        rng = random.Random(7)
        for _ in range(60):
            a, b = random_item(rng), random_item(rng)
            assert len(a.tokens) <= 12 and len(b.tokens) <= 12
            assert taxonomy_jaccard(a, b, CAT, TAX) == oracle_score(a, b)

    def test_oracle_agrees_on_merged_po_lines(self):
        rng = random.Random(8)
        inv = item("Edible oil 5 lt")
        for _ in range(20):
            pos = [
                random_item(rng) for _ in range(rng.randrange(2, 5))
            ]
            for po in combine_po_items(pos, inv, TAX):
                assert taxonomy_jaccard(inv, po, CAT, TAX) == oracle_score(inv, po)
