"""Line-item text preparation.

Raw invoice/PO descriptions are short, ill-formed strings: OCR typos,
acronyms, attached quantities ("739mL"), inconsistent units. This module
normalizes them into a stable token form, corrects out-of-vocabulary
words against a lexicon, canonicalizes quantities, and extracts the
noun phrases used by the downstream match gate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence


class EmptyDescriptionError(ValueError):
    """Raised when a description has no usable tokens after normalization."""


# Words never part of a noun phrase. Deliberately small: descriptions are
# not sentences, so a full English stopword list would eat product tokens.
DEFAULT_STOPWORDS = frozenset(
    """a an the and or of for with in on at to by from per via vs plus
    new set incl excl each""".split()
)

# Surface unit -> (canonical unit, scale factor). Volume reduces to
# milliliter, mass to gram, length to millimeter; counts and percents
# keep their magnitude.
_FLOZ_ML = Decimal("29.5735295625")
UNIT_TABLE: dict[str, tuple[str, Decimal]] = {
    "ml": ("milliliter", Decimal(1)),
    "l": ("milliliter", Decimal(1000)),
    "lt": ("milliliter", Decimal(1000)),
    "ltr": ("milliliter", Decimal(1000)),
    "oz": ("milliliter", _FLOZ_ML),
    "z": ("milliliter", _FLOZ_ML),
    "g": ("gram", Decimal(1)),
    "gm": ("gram", Decimal(1)),
    "kg": ("gram", Decimal(1000)),
    "mm": ("millimeter", Decimal(1)),
    "cm": ("millimeter", Decimal(10)),
    "m": ("millimeter", Decimal(1000)),
    "%": ("percent", Decimal(1)),
}

# Count-ish words: treated as units both for quantity parsing and for
# exclusion from noun phrases.
COUNT_WORDS = frozenset(
    "x pcs pc pieces piece boxes box pack packs pk ct count units unit".split()
)

UNIT_WORDS = frozenset(UNIT_TABLE) | COUNT_WORDS


@dataclass(frozen=True)
class RawDescription:
    """An unprocessed line-item string as it arrives from invoice/PO/catalog."""

    id: str
    text: str
    source: str = "invoice"  # invoice | po | catalog

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"description {self.id!r} is empty")
        if self.source not in ("invoice", "po", "catalog"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class Quantity:
    """A canonicalized magnitude/unit pair found in a description.

    `magnitude` is already rescaled to the canonical unit, so "0.739L"
    and "739mL" both carry (739, milliliter). `raw_span` is the character
    range in the original text the quantity was parsed from.
    """

    magnitude: Decimal
    unit: str
    raw_span: tuple[int, int] = (-1, -1)


@dataclass(frozen=True)
class Description:
    """A normalized line-item description.

    `tokens` joined by single spaces reconstruct `normalized_text`.
    `corrections` records every OOV replacement for audit.
    """

    id: str
    original_text: str
    normalized_text: str
    tokens: tuple[str, ...]
    noun_phrases: frozenset[tuple[str, ...]] = frozenset()
    quantities: tuple[Quantity, ...] = ()
    corrections: tuple[tuple[str, str], ...] = ()
    source: str = "invoice"


_TOKEN_SPLIT = re.compile(r"[^a-z0-9%.]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into tokens, keeping %, digits and interior dots."""
    tokens = []
    for chunk in _TOKEN_SPLIT.split(text.lower()):
        tok = chunk.strip(".")
        if tok:
            tokens.append(tok)
    return tokens


def load_wordlist(path: str | Path) -> list[str]:
    """Read a newline-delimited UTF-8 word list, skipping blanks and #-comments."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.append(word)
    return words


def damerau_levenshtein(a: str, b: str, cap: int | None = None) -> int:
    """Damerau-Levenshtein distance (optimal string alignment variant).

    If `cap` is given and the true distance exceeds it, any value > cap
    may be returned; callers only compare against the cap.
    """
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if cap is not None and abs(la - lb) > cap:
        return cap + 1
    if la == 0 or lb == 0:
        return max(la, lb)
    prev2: list[int] | None = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if (
                prev2 is not None
                and i > 1
                and j > 1
                and a[i - 1] == b[j - 2]
                and a[i - 2] == b[j - 1]
            ):
                best = min(best, prev2[j - 2] + cost)
            cur[j] = best
        if cap is not None and min(cur) > cap:
            return cap + 1
        prev2, prev = prev, cur
    return prev[lb]


@dataclass
class Lexicon:
    """Known in-vocabulary words with corpus frequencies.

    Built once (from the corpus and/or a supplied word list), then
    read-only: all correction lookups are pure.
    """

    frequency: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for word, count in self.frequency.items():
            if word != word.lower():
                raise ValueError(f"lexicon entry {word!r} is not lowercase")
            if count <= 0:
                raise ValueError(f"lexicon entry {word!r} has count {count}")

    def __contains__(self, word: str) -> bool:
        return word in self.frequency

    def __len__(self) -> int:
        return len(self.frequency)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Lexicon":
        freq: dict[str, int] = {}
        for w in words:
            w = w.lower()
            freq[w] = freq.get(w, 0) + 1
        return cls(freq)

    @classmethod
    def from_corpus(
        cls,
        texts: Iterable[str],
        min_count: int = 2,
        extra_words: Iterable[str] = (),
    ) -> "Lexicon":
        """Lexicon from corpus tokens seen >= min_count times, plus extras.

        Only fully alphabetic tokens enter the lexicon; quantities and
        alphanumeric codes are not correction targets.
        """
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                if tok.isalpha():
                    counts[tok] = counts.get(tok, 0) + 1
        freq = {w: c for w, c in counts.items() if c >= min_count}
        for w in extra_words:
            w = w.lower()
            if w.isalpha():
                freq[w] = max(freq.get(w, 0), 1)
        return cls(freq)

    def closest(self, token: str, max_edit: int) -> str | None:
        """Best correction for `token` within `max_edit`, or None.

        Minimal edit distance wins; ties break by corpus frequency
        (descending) then lexicographic order, so corrections are
        deterministic.
        """
        best_word: str | None = None
        best_key: tuple[int, int, str] | None = None
        for word, freq in self.frequency.items():
            if abs(len(word) - len(token)) > max_edit:
                continue
            dist = damerau_levenshtein(token, word, cap=max_edit)
            if dist > max_edit:
                continue
            key = (dist, -freq, word)
            if best_key is None or key < best_key:
                best_key = key
                best_word = word
        return best_word


def _edit_budget(token_len: int, max_edit: int) -> int:
    # Short tokens are often acronyms ("CD", "KER"); never rewrite them.
    if token_len < 3:
        return 0
    if token_len <= 4:
        return min(max_edit, 1)
    return max_edit


def normalize_lexical(
    raw: RawDescription, lex: Lexicon, max_edit: int = 2
) -> Description:
    """Normalize a raw description, correcting ill-formed OOV tokens.

    Each fully alphabetic token absent from the lexicon is replaced by
    its closest lexicon entry within the edit budget; tokens with no
    candidate pass through unchanged. Every replacement is recorded.
    """
    if not lex.frequency:
        raise ValueError("lexicon is empty")
    if max_edit < 1:
        raise ValueError("max_edit must be >= 1")
    tokens = tokenize(raw.text)
    if not tokens:
        raise EmptyDescriptionError(
            f"description {raw.id!r} has no tokens after normalization"
        )
    out: list[str] = []
    corrections: list[tuple[str, str]] = []
    for tok in tokens:
        if tok.isalpha() and tok not in lex:
            budget = _edit_budget(len(tok), max_edit)
            if budget > 0:
                repl = lex.closest(tok, budget)
                if repl is not None and repl != tok:
                    corrections.append((tok, repl))
                    tok = repl
        out.append(tok)
    return Description(
        id=raw.id,
        original_text=raw.text,
        normalized_text=" ".join(out),
        tokens=tuple(out),
        corrections=tuple(corrections),
        source=raw.source,
    )


_NUM_UNIT = re.compile(r"^(\d+(?:\.\d+)?)([a-z%]+)?$")
_MULTIPLIER = re.compile(r"^(\d+)x(\d+(?:\.\d+)?)([a-z%]+)?$")


def _canonical_magnitude(mag: Decimal) -> Decimal:
    mag = mag.normalize()
    if mag == mag.to_integral_value():
        mag = mag.quantize(Decimal(1))
    return mag


def _find_span(original: str, number: str, unit: str | None, cursor: int) -> tuple[tuple[int, int], int]:
    pattern = rf"(?<![0-9.]){re.escape(number)}"
    if unit:
        pattern += rf"\s*{re.escape(unit)}"
    m = re.compile(pattern, re.IGNORECASE).search(original, cursor)
    if m is None:
        return (-1, -1), cursor
    return (m.start(), m.end()), m.end()


def extract_quantities(desc: Description) -> Description:
    """Parse number+unit patterns into canonical quantities.

    Handles attached units ("739ml"), space-separated units ("5 lt"),
    multiplier packs ("5x200ml") and bare counts. Unparseable numeric
    tokens stay as plain tokens with no quantity emitted.
    """
    quantities: list[Quantity] = []
    cursor = 0

    def emit(num_str: str, surface_unit: str | None) -> None:
        nonlocal cursor
        if surface_unit is None:
            canonical, factor = "count", Decimal(1)
        else:
            canonical, factor = UNIT_TABLE.get(
                surface_unit, ("count" if surface_unit in COUNT_WORDS else "", Decimal(1))
            )
            if not canonical:
                return
        magnitude = _canonical_magnitude(Decimal(num_str) * factor)
        if magnitude <= 0:
            return
        span, cursor = _find_span(desc.original_text, num_str, surface_unit, cursor)
        quantities.append(Quantity(magnitude=magnitude, unit=canonical, raw_span=span))

    tokens = desc.tokens
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        m = _MULTIPLIER.match(tok)
        if m:
            count_str, num_str, unit = m.group(1), m.group(2), m.group(3)
            emit(count_str, "x")
            if unit is None and i + 1 < len(tokens) and tokens[i + 1] in UNIT_WORDS:
                emit(num_str, tokens[i + 1])
                i += 2
                continue
            emit(num_str, unit)
            i += 1
            continue
        m = _NUM_UNIT.match(tok)
        if m:
            num_str, unit = m.group(1), m.group(2)
            if unit is not None:
                emit(num_str, unit)
            elif i + 1 < len(tokens) and tokens[i + 1] in UNIT_WORDS:
                emit(num_str, tokens[i + 1])
                i += 1
            else:
                emit(num_str, None)
        i += 1
    return replace(desc, quantities=tuple(quantities))


def _is_numeric(token: str) -> bool:
    return any(ch.isdigit() for ch in token)


def extract_noun_phrases(
    desc: Description, stopwords: frozenset[str] = DEFAULT_STOPWORDS
) -> frozenset[tuple[str, ...]]:
    """Maximal runs of non-stopword, non-numeric, non-unit tokens.

    Line items name the product first and qualify it afterwards
    ("glycerine white distilled"), so the head noun of each run is its
    leading token.
    """
    phrases: list[tuple[str, ...]] = []
    run: list[str] = []
    for tok in desc.tokens:
        if tok in stopwords or tok in UNIT_WORDS or _is_numeric(tok):
            if run:
                phrases.append(tuple(run))
                run = []
        else:
            run.append(tok)
    if run:
        phrases.append(tuple(run))
    return frozenset(phrases)


def head_nouns(desc: Description) -> frozenset[str]:
    """Head noun of each extracted phrase (its leading token)."""
    return frozenset(p[0] for p in desc.noun_phrases)


def noun_phrase_gate(a: Description, b: Description) -> bool:
    """True iff the two descriptions share at least one head noun.

    A False outcome forces the fuzzy match score to 0 downstream.
    """
    return bool(head_nouns(a) & head_nouns(b))


def prepare(
    raw: RawDescription,
    lex: Lexicon,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    max_edit: int = 2,
) -> Description:
    """Full preparation pipeline: normalize, quantities, noun phrases."""
    desc = normalize_lexical(raw, lex, max_edit=max_edit)
    desc = extract_quantities(desc)
    return replace(desc, noun_phrases=extract_noun_phrases(desc, stopwords))


def prepare_corpus(
    raws: Sequence[RawDescription],
    extra_words: Iterable[str] = (),
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    min_count: int = 2,
    max_edit: int = 2,
) -> tuple[list[Description], Lexicon]:
    """Prepare a whole corpus against a lexicon built from that corpus."""
    lex = Lexicon.from_corpus(
        (r.text for r in raws), min_count=min_count, extra_words=extra_words
    )
    if not lex.frequency:
        # Degenerate corpora (every token unique): fall back to accepting
        # all corpus tokens so preparation stays total.
        lex = Lexicon.from_corpus((r.text for r in raws), min_count=1)
    return [prepare(r, lex, stopwords=stopwords, max_edit=max_edit) for r in raws], lex
