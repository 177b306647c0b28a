"""Corpus ingestion and synthetic training-triple generation.

Real invoice data rarely ships with labeled "worse" alternatives, so
training triples are manufactured: the preferred string stays close to
the source (small numeric drift, a typo or two) while the rejected
string is damaged harder (large numeric change, antonym flips, brand or
product swaps, heavier edits). Every generator is a pure function of
(input, config, seed); per-item RNGs are seeded from strings so output
does not depend on processing order.

Rule numbering used throughout (and recorded per triple):
  1 antonym swap, 2 small numeric drift, 3 large numeric change,
  4 brand swap, 5 product swap, 6 character edits / word shuffle.
"""

from __future__ import annotations

import csv
import json
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .textprep import Description, Lexicon, prepare_corpus


class CorpusError(ValueError):
    """Unusable corpus input (empty, unparseable, or all records bad)."""


# -- ingestion ------------------------------------------------------------


@dataclass
class Corpus:
    descriptions: list[Description]
    pairs: list[tuple[str, str, int]] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    duplicates: list[str] = field(default_factory=list)
    lexicon: Lexicon | None = None

    def __len__(self) -> int:
        return len(self.descriptions)


def _records_from_jsonl(path: Path) -> Iterable[tuple[int, dict | str]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, f"invalid JSON: {exc.msg}"


def _records_from_csv(path: Path, delimiter: str) -> Iterable[tuple[int, dict | str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if reader.fieldnames is None or "text" not in reader.fieldnames:
            yield 1, "missing header with a 'text' column"
            return
        for lineno, row in enumerate(reader, start=2):
            yield lineno, {k: v for k, v in row.items() if v is not None}


def ingest(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load descriptions, normalize them, and deduplicate.

    Malformed records are reported per line and skipped; only a file
    yielding zero usable records is an error. Records sharing one
    normalized text collapse to the first occurrence.
    """
    path = Path(path)
    if format == "jsonl":
        records = _records_from_jsonl(path)
    elif format == "csv":
        records = _records_from_csv(path, ",")
    elif format == "tsv":
        records = _records_from_csv(path, "\t")
    else:
        raise CorpusError(f"unknown corpus format {format!r}")

    raws = []
    pairs: list[tuple[str, str, int]] = []
    errors: list[str] = []
    seen_ids: set[str] = set()
    for lineno, rec in records:
        if isinstance(rec, str):
            errors.append(f"line {lineno}: {rec}")
            continue
        text = str(rec.get("text") or "").strip()
        if not text:
            errors.append(f"line {lineno}: missing or empty 'text'")
            continue
        rec_id = str(rec.get("id") or f"r{lineno}")
        if rec_id in seen_ids:
            errors.append(f"line {lineno}: duplicate id {rec_id!r}")
            continue
        seen_ids.add(rec_id)
        source = str(rec.get("source") or "invoice")
        if source not in ("invoice", "po", "catalog"):
            errors.append(f"line {lineno}: unknown source {source!r}")
            continue
        from .textprep import RawDescription

        raws.append(RawDescription(id=rec_id, text=text, source=source))
        pair_text = str(rec.get("pair_text") or "").strip()
        if pair_text:
            try:
                label = int(rec.get("pair_label", 1))
            except (TypeError, ValueError):
                errors.append(f"line {lineno}: bad pair_label")
                continue
            if label not in (-1, 1):
                errors.append(f"line {lineno}: pair_label must be +1 or -1")
                continue
            pairs.append((text, pair_text, label))

    if not raws:
        raise CorpusError(f"no usable records in {path} ({len(errors)} errors)")

    descriptions, lexicon = prepare_corpus(raws)
    deduped: list[Description] = []
    duplicates: list[str] = []
    by_norm: dict[str, str] = {}
    for desc in descriptions:
        kept = by_norm.get(desc.normalized_text)
        if kept is None:
            by_norm[desc.normalized_text] = desc.id
            deduped.append(desc)
        else:
            duplicates.append(f"{desc.id} duplicates {kept}: {desc.normalized_text!r}")
    return Corpus(deduped, pairs, errors, duplicates, lexicon)


def split_corpus(items: Sequence, seed: int) -> tuple[list, list]:
    """Shuffled 2:1 train/test split; sizes exact up to rounding."""
    if not items:
        raise CorpusError("cannot split an empty corpus")
    order = list(items)
    random.Random(seed).shuffle(order)
    n_train = round(2 * len(order) / 3)
    return order[:n_train], order[n_train:]


# -- generation rules ------------------------------------------------------

DEFAULT_ANTONYMS: dict[str, str] = {
    "men": "women",
    "women": "men",
    "mens": "womens",
    "womens": "mens",
    "boys": "girls",
    "girls": "boys",
    "black": "white",
    "white": "black",
    "dark": "light",
    "light": "dark",
    "hot": "cold",
    "cold": "hot",
    "big": "small",
    "small": "big",
    "large": "mini",
    "mini": "large",
    "left": "right",
    "right": "left",
    "analog": "digital",
    "digital": "analog",
    "wired": "wireless",
    "wireless": "wired",
    "indoor": "outdoor",
    "outdoor": "indoor",
}

# Surfaces by measurement class, for the unit-swap flavor of rule 3.
_UNIT_SURFACES: dict[str, tuple[str, ...]] = {
    "volume": ("ml", "l", "oz"),
    "mass": ("g", "kg"),
    "length": ("mm", "cm"),
    "count": ("pcs", "x"),
}

_INSERTABLE_NUMERALS = ("2", "6", "12", "250ml", "500g", "1kg", "330ml", "24")

_NUM_TOKEN = re.compile(r"^(\d+(?:\.\d+)?)([A-Za-z%]*)$")


@dataclass(frozen=True)
class RuleConfig:
    """Knobs for the six perturbation rules."""

    antonyms: Mapping[str, str] = field(default_factory=lambda: DEFAULT_ANTONYMS)
    brands: tuple[str, ...] = ()
    products: tuple[str, ...] = ()
    small_delta: float = 0.10  # rule 2: at most this fraction, at least 1 unit
    light_edits: tuple[int, int] = (1, 2)  # rule 6 budget for preferred strings
    heavy_edits: tuple[int, int] = (3, 5)  # rule 6 budget for rejected strings
    shuffle_chance: float = 0.5  # adjacent word swap alongside light edits
    min_rejected_distance: int = 3  # sentence recipe: edits guaranteed at least this


def load_antonyms(path: str | Path) -> dict[str, str]:
    """Antonym table from JSON {"word": "opposite", ...}; closed under reversal."""
    table = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for a, b in table.items():
        out[a.lower()] = b.lower()
        out.setdefault(b.lower(), a.lower())
    return out


def _numeric_positions(tokens: Sequence[str]) -> list[int]:
    return [i for i, t in enumerate(tokens) if _NUM_TOKEN.match(t)]


def _format_decimal(value: Decimal, exponent: int) -> str:
    q = value.quantize(Decimal(1).scaleb(exponent))
    text = format(q, "f")
    return text


def rule_antonym(tokens: list[str], rng: random.Random, config: RuleConfig) -> bool:
    hits = [i for i, t in enumerate(tokens) if t.lower() in config.antonyms]
    if not hits:
        return False
    i = rng.choice(hits)
    tokens[i] = config.antonyms[tokens[i].lower()]
    return True


def rule_small_numeric(
    tokens: list[str], rng: random.Random, config: RuleConfig
) -> bool:
    """Nudge one numeral by at most small_delta of its value (at least 1 unit
    in its own last decimal place), e.g. 12z -> 11z."""
    positions = _numeric_positions(tokens)
    if not positions:
        return False
    i = rng.choice(positions)
    num, suffix = _NUM_TOKEN.match(tokens[i]).groups()
    value = Decimal(num)
    exponent = value.as_tuple().exponent
    unit = Decimal(1).scaleb(exponent)
    max_units = int((value * Decimal(str(config.small_delta))) / unit)
    n_units = rng.randint(1, max_units) if max_units >= 1 else 1
    delta = unit * n_units
    new = value - delta if rng.random() < 0.5 else value + delta
    if new <= 0:
        new = value + delta
    tokens[i] = _format_decimal(new, exponent) + suffix
    return True


def rule_large_numeric(
    tokens: list[str], rng: random.Random, config: RuleConfig
) -> bool:
    """Change the numeric story outright: scale a value by half or more,
    swap its unit to a different measurement class, drop the numeral, or
    (when the string has none) plant one."""
    positions = _numeric_positions(tokens)
    if not positions:
        tokens.insert(
            rng.randrange(len(tokens) + 1), rng.choice(_INSERTABLE_NUMERALS)
        )
        return True
    i = rng.choice(positions)
    num, suffix = _NUM_TOKEN.match(tokens[i]).groups()
    value = Decimal(num)
    exponent = value.as_tuple().exponent

    options = ["scale"]
    unit_class = _unit_class(suffix)
    if unit_class in _UNIT_SURFACES:
        options.append("swap_unit")
    if len(tokens) > 1:
        options.append("delete")
    choice = rng.choice(options)

    if choice == "delete":
        del tokens[i]
        return True
    if choice == "swap_unit":
        other_classes = [c for c in _UNIT_SURFACES if c != unit_class]
        new_class = rng.choice(sorted(other_classes))
        tokens[i] = num + rng.choice(_UNIT_SURFACES[new_class])
        return True
    factor = Decimal(rng.choice(("2", "3", "0.4")))
    new = value * factor
    q = new.quantize(Decimal(1).scaleb(exponent))
    if q <= 0 or abs(q - value) * 2 < value:
        q = (value * 2).quantize(Decimal(1).scaleb(exponent))
    tokens[i] = _format_decimal(q, exponent) + suffix
    return True


def _unit_class(suffix: str) -> str | None:
    from .textprep import UNIT_TABLE, COUNT_WORDS

    s = suffix.lower()
    if s in COUNT_WORDS:
        return "count"
    entry = UNIT_TABLE.get(s)
    if entry is None:
        return None
    canonical = entry[0]
    return {
        "milliliter": "volume",
        "gram": "mass",
        "millimeter": "length",
        "percent": "percent",
        "count": "count",
    }.get(canonical)


def rule_brand_swap(
    tokens: list[str], rng: random.Random, config: RuleConfig
) -> tuple[bool, bool]:
    """Swap a known brand token for a different one. Returns (applied,
    fallback_used): with no brand detected, a random brand is prepended
    instead so the recipe can still run."""
    if not config.brands:
        raise CorpusError("rule 4 needs a non-empty brand lexicon")
    brand_set = {b.lower() for b in config.brands}
    hits = [i for i, t in enumerate(tokens) if t.lower() in brand_set]
    if hits:
        i = rng.choice(hits)
        others = sorted(b for b in brand_set if b != tokens[i].lower())
        if others:
            tokens[i] = rng.choice(others)
            return True, False
    tokens.insert(0, rng.choice(sorted(brand_set)))
    return True, True


def rule_product_swap(
    tokens: list[str], rng: random.Random, config: RuleConfig
) -> tuple[bool, bool]:
    """Swap a known product word (converter adapter -> converter TV).
    Fallback: replace the last alphabetic token."""
    if not config.products:
        raise CorpusError("rule 5 needs a non-empty product lexicon")
    product_set = {p.lower() for p in config.products}
    hits = [i for i, t in enumerate(tokens) if t.lower() in product_set]
    if hits:
        i = rng.choice(hits)
        others = sorted(p for p in product_set if p != tokens[i].lower())
        if others:
            tokens[i] = rng.choice(others)
            return True, False
    alpha = [i for i, t in enumerate(tokens) if t.isalpha()]
    if not alpha:
        return False, False
    tokens[alpha[-1]] = rng.choice(sorted(product_set))
    return True, True


_LETTERS = string.ascii_lowercase


def _edit_token(token: str, rng: random.Random) -> str:
    ops = ["substitute", "insert", "flipcase"]
    if len(token) > 1:
        ops.append("delete")
    op = rng.choice(ops)
    pos = rng.randrange(len(token))
    if op == "substitute":
        return token[:pos] + rng.choice(_LETTERS) + token[pos + 1 :]
    if op == "insert":
        return token[:pos] + rng.choice(_LETTERS) + token[pos:]
    if op == "flipcase":
        return token[:pos] + token[pos].swapcase() + token[pos + 1 :]
    return token[:pos] + token[pos + 1 :]


def rule_char_edits(
    tokens: list[str],
    rng: random.Random,
    n_edits: tuple[int, int],
    shuffle_chance: float = 0.0,
) -> bool:
    """Random character-level damage, optionally swapping one adjacent
    word pair. Longer tokens absorb proportionally more edits."""
    if not tokens:
        return False
    for _ in range(rng.randint(*n_edits)):
        weights = [len(t) for t in tokens]
        i = rng.choices(range(len(tokens)), weights=weights)[0]
        edited = _edit_token(tokens[i], rng)
        if edited:
            tokens[i] = edited
        elif len(tokens) > 1:
            del tokens[i]
    if len(tokens) > 1 and rng.random() < shuffle_chance:
        i = rng.randrange(len(tokens) - 1)
        tokens[i], tokens[i + 1] = tokens[i + 1], tokens[i]
    return True


# -- triples ---------------------------------------------------------------


@dataclass(frozen=True)
class TripleStrings:
    """A raw-text training triple: preferred should end up closer to query."""

    query: str
    preferred: str
    rejected: str
    rules: tuple[int, ...] = ()
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "s": self.query,
            "s_j": self.preferred,
            "s_i": self.rejected,
            "rules": list(self.rules),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TripleStrings":
        return cls(
            query=data["s"],
            preferred=data["s_j"],
            rejected=data["s_i"],
            rules=tuple(int(r) for r in data.get("rules", ())),
            seed=int(data.get("seed", 0)),
        )


def write_triples(path: str | Path, triples: Iterable[TripleStrings]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps(t.to_dict(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_triples(path: str | Path) -> list[TripleStrings]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(TripleStrings.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad triple record: {exc}")
    return out


def _item_rng(seed: int, text: str) -> random.Random:
    # String seeds hash via sha512 inside Random: stable across runs,
    # platforms, and processing order.
    return random.Random(f"{seed}:{text}")


def derive_second_third(
    invoice_text: str,
    config: RuleConfig = RuleConfig(),
    seed: int = 0,
) -> TripleStrings | None:
    """Invoice recipe: nearby preferred (small numeric drift and/or a
    couple of typos), clearly-worse rejected (large numeric change plus
    one of antonym/product-swap/heavy edits).

    Returns None when the text offers nothing to perturb (no tokens).
    """
    tokens = invoice_text.split()
    if not tokens:
        return None
    rng = _item_rng(seed, invoice_text)
    rules: list[int] = []

    second = list(tokens)
    if rule_small_numeric(second, rng, config):
        rules.append(2)
        if rng.random() < 0.5:
            rule_char_edits(second, rng, config.light_edits, config.shuffle_chance)
            rules.append(6)
    else:
        rule_char_edits(second, rng, config.light_edits, config.shuffle_chance)
        rules.append(6)

    third = list(second)
    rule_large_numeric(third, rng, config)
    rules.append(3)
    extra = rng.choice([1, 5, 6])
    if extra == 1 and rule_antonym(third, rng, config):
        rules.append(1)
    elif extra == 5 and config.products:
        applied, _ = rule_product_swap(third, rng, config)
        if applied:
            rules.append(5)
    else:
        rule_char_edits(third, rng, config.heavy_edits)
        rules.append(6)

    return TripleStrings(
        query=invoice_text,
        preferred=" ".join(second),
        rejected=" ".join(third),
        rules=tuple(dict.fromkeys(rules)),
        seed=seed,
    )


def derive_product_triples(
    product_text: str,
    config: RuleConfig,
    seed: int = 0,
) -> TripleStrings | None:
    """Catalog recipe: preferred swaps the brand but keeps the product;
    rejected keeps the brand but changes the product and its numbers."""
    if not config.brands:
        raise CorpusError("product recipe needs a brand lexicon")
    if not config.products:
        raise CorpusError("product recipe needs a product lexicon")
    tokens = product_text.split()
    if not tokens:
        return None
    rng = _item_rng(seed, product_text)
    rules: list[int] = []

    second = list(tokens)
    _, fallback = rule_brand_swap(second, rng, config)
    rules.append(4)
    if rng.random() < 0.5 and rule_small_numeric(second, rng, config):
        rules.append(2)
    # light edits are rarer on the preferred string: its brand swap is
    # already a sizable move away from the query
    if rng.random() < 0.3:
        rule_char_edits(second, rng, config.light_edits, config.shuffle_chance)
        rules.append(6)

    third = list(tokens)
    rule_large_numeric(third, rng, config)
    rules.append(3)
    fired = False
    if rng.random() < 0.5 and rule_antonym(third, rng, config):
        rules.append(1)
        fired = True
    # Product swap and heavy edits carry most of the damage budget. The
    # rejected string has to end up visibly farther from the query than
    # a brand swap alone moves the preferred one, or the generated
    # ordering stops holding.
    if rng.random() < 0.9:
        applied, _ = rule_product_swap(third, rng, config)
        if applied:
            rules.append(5)
            fired = True
    if rng.random() < 0.9 or not fired:
        rule_char_edits(third, rng, config.heavy_edits)
        rules.append(6)

    return TripleStrings(
        query=product_text,
        preferred=" ".join(second),
        rejected=" ".join(third),
        rules=tuple(dict.fromkeys(rules)),
        seed=seed,
    )


def derive_sentence_triples(
    pair_corpus: Sequence[tuple[str, str, int]],
    config: RuleConfig = RuleConfig(),
    seed: int = 0,
) -> list[TripleStrings]:
    """Sentence-pair recipe: similar pairs become (a, b, corrupted b);
    the corruption is heavy character edits plus a concatenated fragment
    of some other sentence. Dissimilar pairs are skipped."""
    from .textprep import damerau_levenshtein

    similar = [(a, b) for a, b, label in pair_corpus if label == 1]
    out: list[TripleStrings] = []
    for a, b in similar:
        rng = _item_rng(seed, a + "\x1f" + b)
        tokens = b.split()
        if not tokens:
            continue
        budget = (
            max(config.heavy_edits[0], config.min_rejected_distance),
            max(config.heavy_edits[1], config.min_rejected_distance),
        )
        rule_char_edits(tokens, rng, budget)
        donor_pool = [x for pair in similar for x in pair if x != b]
        if donor_pool:
            donor = rng.choice(donor_pool).split()
            if donor:
                take = rng.randint(1, min(3, len(donor)))
                start = rng.randrange(len(donor) - take + 1)
                tokens.extend(donor[start : start + take])
        # random edits can cancel each other out; top up until the
        # configured floor actually holds
        floor = config.min_rejected_distance
        for _ in range(16):
            if damerau_levenshtein(" ".join(tokens), b, cap=floor) >= floor:
                break
            rule_char_edits(tokens, rng, (1, 1))
        out.append(
            TripleStrings(
                query=a,
                preferred=b,
                rejected=" ".join(tokens),
                rules=(6,),
                seed=seed,
            )
        )
    return out


def generate_invoice_triples(
    texts: Sequence[str],
    config: RuleConfig = RuleConfig(),
    seed: int = 0,
) -> tuple[list[TripleStrings], list[str]]:
    """Invoice recipe over a corpus; skip reports keep input order."""
    triples, reports = [], []
    for text in texts:
        t = derive_second_third(text, config, seed)
        if t is None:
            reports.append(f"skipped (nothing to perturb): {text!r}")
        else:
            triples.append(t)
    return triples, reports


def generate_product_triples(
    texts: Sequence[str],
    config: RuleConfig,
    seed: int = 0,
) -> tuple[list[TripleStrings], list[str]]:
    triples, reports = [], []
    for text in texts:
        t = derive_product_triples(text, config, seed)
        if t is None:
            reports.append(f"skipped (nothing to perturb): {text!r}")
        else:
            triples.append(t)
    return triples, reports


# -- generation sanity -----------------------------------------------------


def _char_gram_counts(text: str) -> Counter:
    t = text.lower()
    grams: Counter = Counter()
    for n in (2, 3):
        for i in range(len(t) - n + 1):
            grams[t[i : i + n]] += 1
    return grams


def _char_cosine(a: str, b: str) -> float:
    ca, cb = _char_gram_counts(a), _char_gram_counts(b)
    if not ca or not cb:
        return 0.0
    num = sum(ca[g] * cb[g] for g in ca.keys() & cb.keys())
    if num == 0:
        return 0.0
    den = (
        sum(v * v for v in ca.values()) * sum(v * v for v in cb.values())
    ) ** 0.5
    return num / den


def ordering_fraction(
    triples: Sequence[TripleStrings],
) -> tuple[float, list[TripleStrings]]:
    """Fraction of triples where the preferred string is at least as
    close to the query as the rejected one, by plain character-gram
    cosine. Violations are returned for logging, never dropped."""
    if not triples:
        raise CorpusError("no triples to check")
    violations = [
        t
        for t in triples
        if _char_cosine(t.query, t.preferred) < _char_cosine(t.query, t.rejected)
    ]
    return 1.0 - len(violations) / len(triples), violations


# -- synthetic corpus ------------------------------------------------------


def _make_brand_pool(count: int, seed: int) -> tuple[str, ...]:
    """Pronounceable one-off brand names, consonant-vowel syllables."""
    rng = random.Random(seed)
    consonants = "bcdfgklmnprstvz"
    vowels = "aeiou"
    pool: list[str] = []
    seen: set[str] = set()
    while len(pool) < count:
        name = "".join(
            rng.choice(consonants) + rng.choice(vowels)
            for _ in range(rng.randint(2, 3))
        )
        if name not in seen:
            seen.add(name)
            pool.append(name)
    return tuple(pool)


# Many one-off brands against a handful of well-worn product words: a
# surface matcher weights the rare brand grams heavily, so a brand swap
# on the preferred string is exactly the bias preference training has
# to unlearn (brands change across suppliers; products don't).
_SYNTH_BRANDS = _make_brand_pool(64, seed=99)
_SYNTH_PRODUCTS = (
    "shampoo", "detergent", "soap", "lotion", "adapter", "charger",
    "speaker", "router", "rice", "oil", "juice", "coffee",
)
_SYNTH_QUALIFIERS = (
    "premium", "classic", "ultra", "natural", "herbal", "compact",
    "portable", "organic", "instant", "smooth", "strong", "fresh",
    "men", "women", "black", "white", "analog", "digital",
)
_SYNTH_SIZES = ("100ml", "200ml", "250ml", "500ml", "1l", "100g", "250g",
                "500g", "1kg", "6x", "12x", "24x")


def synthesize_product_corpus(
    n: int, seed: int = 0
) -> tuple[list[str], tuple[str, ...], tuple[str, ...]]:
    """Deterministic catalog-style corpus plus its brand/product lexicons."""
    if n < 1:
        raise CorpusError("n must be >= 1")
    rng = random.Random(seed)
    texts: list[str] = []
    seen: set[str] = set()
    while len(texts) < n:
        brand = rng.choice(_SYNTH_BRANDS)
        product = rng.choice(_SYNTH_PRODUCTS)
        quals = rng.sample(_SYNTH_QUALIFIERS, k=rng.randint(2, 3))
        size = rng.choice(_SYNTH_SIZES)
        parts = [brand, *quals, product, size]
        if rng.random() < 0.3:
            parts.append(rng.choice(("pack", "combo", "value", "edition")))
        text = " ".join(parts)
        if text in seen:
            continue
        seen.add(text)
        texts.append(text)
    return texts, _SYNTH_BRANDS, _SYNTH_PRODUCTS
