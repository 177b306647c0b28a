"""Acceptance gate: one test per release criterion.

Run with `pytest -v tests/test_acceptance.py` to get a pass/fail line
per criterion. Each test also prints an `acceptance pass:` line on
success so `-s` runs read as a checklist. These are the behaviors the
package must keep; tolerances and budgets are part of the contract.

This suite needs no UI and no network: the scripted agent in the
service module stands in for a human reviewer.
"""

import math
import random
import time

import numpy as np
import pytest

from linematch.corpus import (
    RuleConfig,
    derive_second_third,
    generate_invoice_triples,
    generate_product_triples,
    ordering_fraction,
    synthesize_product_corpus,
    write_triples,
)
from linematch.evaluate import (
    cosine_scorer,
    encode_triples,
    exact_tfidf_encoder,
    hashed_tfidf_encoder,
    learning_curve,
    precision,
)
from linematch.fuzzy import build_pool
from linematch.ranker import BilinearRanker, Triple
from linematch.service import EventLog, MatchService, SimulatedAgent
from linematch.textprep import RawDescription, prepare_corpus
from linematch.vectorize import SparseVector

from test_taxonomy import (
    CAT,
    TAX,
    combine_po_items,
    item,
    oracle_score,
    random_item,
    taxonomy_jaccard,
    taxonomy_jaccard_breakdown,
)


def sv(dense, dim=None):
    dense = list(dense)
    return SparseVector.from_pairs(
        {i: float(v) for i, v in enumerate(dense) if v}, dim or len(dense)
    )


def random_unit(rng, dim, nnz=4):
    idx = rng.choice(dim, size=min(nnz, dim), replace=False)
    vals = rng.normal(size=len(idx))
    vec = SparseVector.from_pairs(
        {int(i): float(v) for i, v in zip(idx, vals)}, dim
    )
    return vec.scaled(1.0 / vec.norm())


def random_triple(rng, dim):
    return Triple(
        random_unit(rng, dim), random_unit(rng, dim), random_unit(rng, dim)
    )


def product_split(n, seed):
    texts, brands, products = synthesize_product_corpus(n, seed=seed)
    config = RuleConfig(brands=brands, products=products)
    triples, _ = generate_product_triples(texts, config, seed=seed)
    cut = 2 * len(triples) // 3
    return triples[:cut], triples[cut:]


def test_active_updates_land_margin_one_within_tolerance_quickly():
    """Every uncapped active update must leave the triple at margin 1
    (tolerance 1e-9); capped updates must use exactly the cap. The full
    sweep, 1,000 triples per (dimension, backend) combination, has to
    finish inside 5 seconds."""
    cap = 0.5  # random unit triples put step sizes on both sides of this
    started = time.perf_counter()
    checked_uncapped = 0
    checked_capped = 0
    for dim in (8, 64):
        for backend in ("dense", "implicit"):
            rng = np.random.default_rng(dim)
            model = BilinearRanker(dim, aggressiveness=cap, backend=backend)
            for _ in range(1000):
                t = random_triple(rng, dim)
                record = model.update(t)
                if record.skipped or record.loss == 0.0:
                    continue
                if record.tau < cap:
                    assert model.margin(t) == pytest.approx(1.0, abs=1e-9)
                    checked_uncapped += 1
                else:
                    assert record.tau == cap
                    checked_capped += 1
    elapsed = time.perf_counter() - started
    assert checked_uncapped > 1000
    assert checked_capped > 1000
    assert elapsed < 5.0
    print(f"acceptance pass: margin property ({elapsed:.2f}s)")


def test_dense_and_implicit_backends_agree_over_interleavings():
    """Dense and implicit weight representations must produce the same
    scores, within 1e-9, across 10,000 random update/score steps at
    dimension 64."""
    dim = 64
    rng = np.random.default_rng(7)
    dense = BilinearRanker(dim, aggressiveness=1.0, backend="dense")
    implicit = BilinearRanker(dim, aggressiveness=1.0, backend="implicit")
    scores_compared = 0
    for step in range(10_000):
        if rng.random() < 0.4:
            t = random_triple(rng, dim)
            r1 = dense.update(t)
            r2 = implicit.update(t)
            assert r1.tau == pytest.approx(r2.tau, abs=1e-12)
        else:
            a, b = random_unit(rng, dim), random_unit(rng, dim)
            assert dense.score(a, b) == pytest.approx(
                implicit.score(a, b), abs=1e-9
            )
            scores_compared += 1
    assert scores_compared > 5000
    print(f"acceptance pass: backend equivalence ({scores_compared} scores)")


def test_untrained_ranker_precision_equals_cosine_baseline_exactly():
    """With the identity weights a ranker scores by dot product, so on
    unit-length vectors its triple precision and the cosine baseline
    are the same number. Exact equality, any triple set."""
    train, test = product_split(300, seed=13)
    enc = exact_tfidf_encoder()(
        sorted({s for t in train for s in (t.query, t.preferred, t.rejected)})
    )
    for triples in (encode_triples(train, enc), encode_triples(test, enc)):
        fresh = BilinearRanker(enc.dim)
        model_report = precision(fresh.score, triples)
        cosine_report = precision(cosine_scorer, triples)
        assert model_report.precision == cosine_report.precision
        assert model_report.n_correct == cosine_report.n_correct
    print("acceptance pass: checkpoint-0 equals cosine baseline")


def test_two_dimensional_worked_update_is_exact():
    """Hand-checked step, both backends. query=(1,0), preferred=(0,1),
    rejected=(1,0), cap 10: loss = 1 - 0 + 1 = 2, direction norm
    |s|^2 * |pref-rej|^2 = 2, step = min(10, 2/2) = 1, and the dense
    weights must land exactly on [[0,1],[0,1]] with the margin at 1."""
    for backend in ("dense", "implicit"):
        model = BilinearRanker(2, aggressiveness=10.0, backend=backend)
        t = Triple(sv((1, 0)), sv((0, 1)), sv((1, 0)))
        record = model.update(t)
        assert record.loss == 2.0
        assert record.tau == 1.0
        assert model.margin(t) == 1.0
        if backend == "dense":
            assert model._backend.W.tolist() == [[0.0, 1.0], [0.0, 1.0]]
    print("acceptance pass: worked d=2 update exact")


def test_online_training_beats_cosine_by_at_least_five_points():
    """On a 2,000-item synthetic catalog with brand-swap preference
    triples, mean test precision after one training pass (20 stream
    permutations, hashed 4,096-dim encoder) must beat the untrained
    cosine baseline by at least 0.05 absolute, inside 10 minutes."""
    started = time.perf_counter()
    train, test = product_split(2000, seed=0)
    enc = hashed_tfidf_encoder(4096)(
        sorted({s for t in train for s in (t.query, t.preferred, t.rejected)})
    )
    curve = learning_curve(
        lambda: BilinearRanker(enc.dim, aggressiveness=1.0),
        encode_triples(train, enc),
        encode_triples(test, enc),
        n_permutations=20,
        checkpoints=(0, len(train)),
        seed=0,
    )
    elapsed = time.perf_counter() - started
    gap = curve.means[-1] - curve.cosine_baseline
    assert curve.means[0] == curve.cosine_baseline
    assert gap >= 0.05, (
        f"trained {curve.means[-1]:.4f} vs cosine {curve.cosine_baseline:.4f}"
    )
    assert elapsed < 600.0
    print(
        "acceptance pass: learning dominance "
        f"(+{gap:.3f} over cosine, {elapsed:.0f}s)"
    )


def test_tie_scores_count_as_misses_matching_brute_force_recount():
    """Engineered exact ties must be counted as misses, and the counts
    must match a from-scratch recount of the score comparisons."""
    tie = sv((0.6, 0.8, 0))
    triples = [
        Triple(sv((1, 0, 0)), sv((1, 0, 0)), sv((0, 1, 0))),  # win
        Triple(sv((0, 1, 0)), sv((0, 1, 0)), sv((0, 0, 1))),  # win
        Triple(sv((0, 0, 1)), sv((0, 0, 1)), sv((1, 0, 0))),  # win
        Triple(sv((1, 0, 0)), tie, tie),                      # exact tie
        Triple(sv((1, 0, 0)), sv((0.6, 0.8, 0)), sv((0.6, 0.8, 0))),  # tie, distinct objects
        Triple(sv((1, 0, 0)), sv((0, 1, 0)), sv((1, 0, 0))),  # loss
    ]
    scorer = BilinearRanker(3).score
    report = precision(scorer, triples)

    wins = ties = 0
    for t in triples:  # independent recount, no shared code
        left = scorer(t.query, t.preferred)
        right = scorer(t.query, t.rejected)
        if left > right:
            wins += 1
        elif left == right:
            ties += 1
    assert wins == 3 and ties == 2
    assert report.n_correct == wins
    assert report.precision == wins / len(triples)
    assert report.recount() == wins
    assert sum(1 for m in report.margins if m == 0.0) == ties
    print("acceptance pass: strict-inequality tie handling")


def test_hierarchy_jaccard_equals_set_algebra_oracle_and_merges():
    """200 randomized item pairs (at most 12 tokens each): the engine
    score must equal an independent set-algebra oracle exactly. The
    generic-invoice example must merge all three covered PO lines and
    score 6/9; an identical pair must score exactly 1."""
    rng = random.Random(2024)
    for _ in range(200):
        a, b = random_item(rng), random_item(rng)
        assert len(a.tokens) <= 12 and len(b.tokens) <= 12
        assert taxonomy_jaccard(a, b, CAT, TAX) == oracle_score(a, b)

    inv = item("Edible oil 5 lt")
    pos = [
        item("Coconut oil 2 lt", id="po0", source="po"),
        item("Sunflower oil 2 lt", id="po1", source="po"),
        item("Musterd oil 1 lt", id="po2", source="po"),
    ]
    merged = combine_po_items(pos, inv, TAX)
    assert len(merged) == 1
    breakdown = taxonomy_jaccard_breakdown(inv, merged[0], CAT, TAX)
    assert breakdown.score == pytest.approx(6 / 9)
    assert breakdown.score == oracle_score(inv, merged[0])

    same_a = item("Diesel oil 5 lt")
    same_b = item("Diesel oil 5 lt", id="again", source="po")
    assert taxonomy_jaccard(same_a, same_b, CAT, TAX) == 1.0
    print("acceptance pass: hierarchy jaccard oracle equivalence")


def test_snapshot_plus_tail_replay_is_byte_identical_for_500_events(tmp_path):
    """500 scripted-agent events: replaying the first half, then the
    tail, must land on the same serialized models, byte for byte, as a
    live service and as a full replay."""
    texts, _, _ = synthesize_product_corpus(80, seed=41)

    def world():
        raws = [
            RawDescription(id=f"p{i}", text=t, source="po")
            for i, t in enumerate(texts)
        ]
        descs, lexicon = prepare_corpus(raws)
        return build_pool(descs), lexicon

    pool, lexicon = world()
    log_path = tmp_path / "events.jsonl"
    live = MatchService(pool, lexicon, log_path=log_path)
    agent = SimulatedAgent(live)
    for i in range(500):
        target = i % len(texts)
        # a near-miss of the target item stands in for a real query
        query = derive_second_third(texts[target], seed=i).preferred
        agent.decide(query, f"p{target}")
    live.close()

    events = EventLog.read_all(log_path)
    assert len(events) == 500

    pool2, lexicon2 = world()
    full = MatchService.replay(pool2, lexicon2, events)
    assert full.snapshot_bytes() == live.snapshot_bytes()

    pool3, lexicon3 = world()
    resumed = MatchService.replay(pool3, lexicon3, events[:250])
    resumed.replay_tail(events[250:])
    assert resumed.snapshot_bytes() == live.snapshot_bytes()
    assert resumed.metrics_dict() == live.metrics_dict()
    print(
        "acceptance pass: event-log determinism "
        f"(version {live.snapshot_version} after 500 events)"
    )


def test_generated_triples_mostly_ordered_and_bit_reproducible(tmp_path):
    """Under default perturbation parameters at least 90% of generated
    triples must keep the preferred string closer to the query than the
    rejected one, and generation must be byte-stable under a seed."""
    texts, brands, products = synthesize_product_corpus(1000, seed=31)
    config = RuleConfig(brands=brands, products=products)
    for name, recipe in (
        ("invoice", generate_invoice_triples),
        ("product", generate_product_triples),
    ):
        triples, skipped = recipe(texts, config, seed=31)
        assert not skipped
        fraction, _ = ordering_fraction(triples)
        assert fraction >= 0.90, f"{name}: {fraction:.3f}"

        again, _ = recipe(texts, config, seed=31)
        p1, p2 = tmp_path / f"{name}-1.jsonl", tmp_path / f"{name}-2.jsonl"
        write_triples(p1, triples)
        write_triples(p2, again)
        assert p1.read_bytes() == p2.read_bytes()
    print("acceptance pass: triple generation sanity")
