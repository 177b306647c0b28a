"""Command line frontend.

Subcommands: ingest, gen-triples, train-eval, taxmatch, serve. Every
command echoes its full run configuration into a JSON report so any
result can be reproduced from the report alone.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal.

A config file (--config, JSON or TOML) supplies defaults; explicit
flags always win. Positional arguments never come from the config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import (
    CorpusError,
    RuleConfig,
    generate_invoice_triples,
    generate_product_triples,
    derive_sentence_triples,
    ingest,
    load_antonyms,
    read_triples,
    split_corpus,
    write_triples,
)
from .evaluate import (
    EvalError,
    encode_triples,
    exact_tfidf_encoder,
    hashed_tfidf_encoder,
    learning_curve,
)
from .fuzzy import build_pool
from .ranker import BilinearRanker
from .service import CorruptLogError, EventLog, FeedbackError, MatchService
from .taxonomy import (
    Catalog,
    Taxonomy,
    TaxonomyError,
    combine_po_items,
    make_line_item,
    reference_lexicon,
    taxonomy_jaccard_breakdown,
)
from .textprep import RawDescription, prepare

DATA_ERRORS = (
    CorpusError,
    TaxonomyError,
    EvalError,
    FeedbackError,
    CorruptLogError,
    OSError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)


class UsageError(Exception):
    """Bad invocation; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the documented contract is 1
    def error(self, message: str) -> None:  # type: ignore[override]
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to re-run a command, echoed into each report."""

    command: str
    paths: dict = field(default_factory=dict)
    seed: int = 0
    aggressiveness: float = 0.1
    k: int = 5
    encoder: str = "exact"  # exact | hashed
    hash_dim: int = 4096
    small_delta: float = 0.10
    light_edits: tuple[int, int] = (1, 2)
    heavy_edits: tuple[int, int] = (3, 5)
    checkpoints: tuple[int, ...] | None = None
    n_permutations: int = 20

    def __post_init__(self) -> None:
        if self.aggressiveness <= 0:
            raise UsageError("aggressiveness must be positive")
        if self.k < 1:
            raise UsageError("k must be at least 1")
        if self.encoder not in ("exact", "hashed"):
            raise UsageError(f"unknown encoder {self.encoder!r}")
        if self.encoder == "hashed" and (
            self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1)
        ):
            raise UsageError("hash dim must be a power of two >= 2")
        if not 0 < self.small_delta < 1:
            raise UsageError("small-delta must be in (0, 1)")
        for name, (lo, hi) in (
            ("light-edits", self.light_edits),
            ("heavy-edits", self.heavy_edits),
        ):
            if not 1 <= lo <= hi:
                raise UsageError(f"{name} range must satisfy 1 <= lo <= hi")
        if self.n_permutations < 1:
            raise UsageError("n-permutations must be at least 1")

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "paths": dict(self.paths),
            "seed": self.seed,
            "aggressiveness": self.aggressiveness,
            "k": self.k,
            "encoder": self.encoder,
            "hash_dim": self.hash_dim,
            "small_delta": self.small_delta,
            "light_edits": list(self.light_edits),
            "heavy_edits": list(self.heavy_edits),
            "checkpoints": (
                None if self.checkpoints is None else list(self.checkpoints)
            ),
            "n_permutations": self.n_permutations,
        }


def _int_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return int(parts[0]), int(parts[1])


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _load_config_file(path: str) -> dict:
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix.lower() == ".json":
        data = json.loads(raw.decode("utf-8"))
    else:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ImportError:
            try:
                import tomli as tomllib  # type: ignore[no-redef]
            except ImportError:
                raise UsageError(
                    "TOML config needs Python 3.11+ or the tomli package; "
                    "use a .json config instead"
                )
        data = tomllib.loads(raw.decode("utf-8"))
    if not isinstance(data, dict):
        raise UsageError("config file must hold a table/object at top level")
    return data


# Option dests a config file may set, per subcommand.
_CONFIG_DESTS = {
    "ingest": {"format", "out", "seed", "report"},
    "gen-triples": {
        "format",
        "recipe",
        "out",
        "seed",
        "antonyms",
        "brands",
        "products",
        "small_delta",
        "light_edits",
        "heavy_edits",
        "report",
    },
    "train-eval": {
        "encoder",
        "hash_dim",
        "aggressiveness",
        "n_permutations",
        "seed",
        "checkpoints",
        "report",
    },
    "taxmatch": {"report", "no_merge"},
    "serve": {
        "host",
        "port",
        "log",
        "k",
        "aggressiveness",
        "format",
        "accept_trains_classifier",
    },
}

_TUPLE_DESTS = {"light_edits": _int_pair, "heavy_edits": _int_pair,
                "checkpoints": _int_list}


def _apply_config(args: argparse.Namespace, explicit: set[str], cfg: dict) -> None:
    allowed = _CONFIG_DESTS.get(args.command, set())
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in allowed:
            raise UsageError(
                f"config key {key!r} not valid for {args.command!r}"
            )
        if dest in explicit:
            continue  # flags beat config
        if dest in _TUPLE_DESTS and isinstance(value, str):
            value = _TUPLE_DESTS[dest](value)
        elif dest in _TUPLE_DESTS and isinstance(value, (list, tuple)):
            value = tuple(int(v) for v in value)
        setattr(args, dest, value)


def _explicit_dests(
    argv: Sequence[str], parsers: Sequence[argparse.ArgumentParser]
) -> set[str]:
    """Dests the user set on the command line (vs defaults/config)."""
    given = set()
    flags = {}
    for parser in parsers:
        for action in parser._actions:  # noqa: SLF001 - argparse has no public map
            for opt in action.option_strings:
                flags[opt] = action.dest
    for token in argv:
        if token == "--":
            break
        if token.startswith("--"):
            name = token.split("=", 1)[0]
            if name in flags:
                given.add(flags[name])
    return given


def _write_report(report: dict, path: str | None) -> None:
    if not path:
        return
    Path(path).write_text(
        json.dumps(report, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def _read_rule_config(args: argparse.Namespace) -> RuleConfig:
    antonyms = (
        load_antonyms(args.antonyms) if args.antonyms else RuleConfig().antonyms
    )
    brands = _read_lines(args.brands) if args.brands else ()
    products = _read_lines(args.products) if args.products else ()
    return RuleConfig(
        antonyms=antonyms,
        brands=tuple(brands),
        products=tuple(products),
        small_delta=args.small_delta,
        light_edits=tuple(args.light_edits),
        heavy_edits=tuple(args.heavy_edits),
    )


def _read_lines(path: str) -> list[str]:
    return [
        line.strip()
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


# -- commands ----------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    corpus = ingest(args.path, format=args.format)
    train, test = split_corpus(corpus.descriptions, seed=args.seed)
    config = RunConfig(
        command="ingest",
        paths={"input": str(args.path), "out": args.out or ""},
        seed=args.seed,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for d in corpus.descriptions:
                fh.write(
                    json.dumps(
                        {
                            "id": d.id,
                            "text": d.original_text,
                            "source": d.source,
                            "normalized": d.normalized_text,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    for line in corpus.errors:
        print(f"error: {line}", file=sys.stderr)
    for line in corpus.duplicates:
        print(f"duplicate: {line}", file=sys.stderr)
    print(f"descriptions {len(corpus.descriptions)}")
    print(f"pairs        {len(corpus.pairs)}")
    print(f"errors       {len(corpus.errors)}")
    print(f"duplicates   {len(corpus.duplicates)}")
    print(f"split        {len(train)} train / {len(test)} test (seed {args.seed})")
    _write_report(
        {
            "v": 1,
            "kind": "ingest_report",
            "config": config.to_dict(),
            "descriptions": len(corpus.descriptions),
            "pairs": len(corpus.pairs),
            "errors": corpus.errors,
            "duplicates": corpus.duplicates,
            "split": {"train": len(train), "test": len(test)},
        },
        args.report,
    )
    return 0


def cmd_gen_triples(args: argparse.Namespace) -> int:
    rule_config = _read_rule_config(args)
    if args.recipe == "product" and not (rule_config.brands and rule_config.products):
        raise UsageError("product recipe needs --brands and --products files")
    corpus = ingest(args.path, format=args.format)
    texts = [d.original_text for d in corpus.descriptions]
    skipped: list[str] = []
    if args.recipe == "invoice":
        triples, skipped = generate_invoice_triples(texts, rule_config, args.seed)
    elif args.recipe == "product":
        triples, skipped = generate_product_triples(texts, rule_config, args.seed)
    else:  # sentence
        if not corpus.pairs:
            raise CorpusError("sentence recipe needs pair_text/pair_label records")
        triples = derive_sentence_triples(corpus.pairs, rule_config, args.seed)
    write_triples(args.out, triples)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    for line in skipped:
        print(f"skip: {line}", file=sys.stderr)
    print(f"triples {len(triples)}")
    print(f"skipped {len(skipped)}")
    print(f"sha256  {digest}")
    config = RunConfig(
        command="gen-triples",
        paths={
            "input": str(args.path),
            "out": str(args.out),
            "antonyms": args.antonyms or "",
            "brands": args.brands or "",
            "products": args.products or "",
        },
        seed=args.seed,
        small_delta=args.small_delta,
        light_edits=tuple(args.light_edits),
        heavy_edits=tuple(args.heavy_edits),
    )
    _write_report(
        {
            "v": 1,
            "kind": "gen_triples_report",
            "config": config.to_dict(),
            "recipe": args.recipe,
            "triples": len(triples),
            "skipped": skipped,
            "sha256": digest,
        },
        args.report,
    )
    return 0


def cmd_train_eval(args: argparse.Namespace) -> int:
    config = RunConfig(
        command="train-eval",
        paths={"triples": str(args.path)},
        seed=args.seed,
        aggressiveness=args.aggressiveness,
        encoder=args.encoder,
        hash_dim=args.hash_dim,
        checkpoints=args.checkpoints,
        n_permutations=args.n_permutations,
    )
    triples = read_triples(args.path)
    if len(triples) < 3:
        raise EvalError(f"need at least 3 triples, got {len(triples)}")
    train, test = split_corpus(triples, seed=args.seed)
    if args.encoder == "exact":
        factory = exact_tfidf_encoder()
    else:
        factory = hashed_tfidf_encoder(args.hash_dim)
    fit_texts = sorted(
        {s for t in train for s in (t.query, t.preferred, t.rejected)}
    )
    encoder = factory(fit_texts)
    train_vecs = encode_triples(train, encoder)
    test_vecs = encode_triples(test, encoder)
    curve = learning_curve(
        lambda: BilinearRanker(encoder.dim, args.aggressiveness),
        train_vecs,
        test_vecs,
        n_permutations=args.n_permutations,
        checkpoints=args.checkpoints,
        seed=args.seed,
    )
    print(f"encoder {encoder.name} (dim {encoder.dim})")
    print(f"triples {len(train)} train / {len(test)} test")
    print(curve.to_text())
    _write_report(
        {
            "v": 1,
            "kind": "train_eval_report",
            "config": config.to_dict(),
            "encoder": encoder.name,
            "dim": encoder.dim,
            "n_train": len(train),
            "n_test": len(test),
            "curve": curve.to_dict(),
        },
        args.report,
    )
    return 0


def cmd_taxmatch(args: argparse.Namespace) -> int:
    taxonomy = Taxonomy.load(args.taxonomy)
    catalog = Catalog.load(args.catalog, taxonomy)
    lexicon = reference_lexicon(taxonomy, catalog)
    config = RunConfig(
        command="taxmatch",
        paths={"taxonomy": str(args.taxonomy), "catalog": str(args.catalog)},
    )

    def item(text: str, idx: int, source: str):
        raw = RawDescription(id=f"{source}{idx}", text=text, source=source)
        return make_line_item(prepare(raw, lexicon), catalog, taxonomy)

    invoice_item = item(args.invoice, 0, "invoice")
    po_items = [item(text, i, "po") for i, text in enumerate(args.po)]
    if not args.no_merge:
        po_items = combine_po_items(po_items, invoice_item, taxonomy)
    rows = []
    for po in po_items:
        b = taxonomy_jaccard_breakdown(invoice_item, po, catalog, taxonomy)
        rows.append(
            {
                "po_id": po.description.id,
                "po_text": po.description.original_text,
                "score": b.score,
                "credited": sorted(b.credited),
                "unmatched": sorted(b.unmatched),
                "degenerate": b.degenerate,
            }
        )
    print(f"invoice: {args.invoice}")
    for row in rows:
        print(f"  {row['score']:.4f}  {row['po_id']}  {row['po_text']}")
    merged = len(args.po) - len(po_items)
    if merged > 0:
        print(f"merged {merged + 1} po lines into one")
    _write_report(
        {
            "v": 1,
            "kind": "taxmatch_report",
            "config": config.to_dict(),
            "invoice": args.invoice,
            "rows": rows,
            "po_lines_in": len(args.po),
            "po_lines_scored": len(po_items),
        },
        args.report,
    )
    return 0


def build_service(args: argparse.Namespace) -> MatchService:
    """Pool + models for `serve`, replaying any existing event log."""
    corpus = ingest(args.path, format=args.format)
    pool = build_pool(corpus.descriptions)
    if corpus.lexicon is None:
        raise CorpusError("corpus carries no lexicon")
    log_path = Path(args.log) if args.log else None
    events = EventLog.read_all(log_path) if log_path else []
    if events:
        service = MatchService.replay(
            pool,
            corpus.lexicon,
            events,
            aggressiveness=args.aggressiveness,
            k=args.k,
            log_path=log_path,
            accept_trains_classifier=args.accept_trains_classifier,
        )
    else:
        service = MatchService(
            pool,
            corpus.lexicon,
            aggressiveness=args.aggressiveness,
            k=args.k,
            log_path=log_path,
            accept_trains_classifier=args.accept_trains_classifier,
        )
    return service


def cmd_serve(args: argparse.Namespace) -> int:
    service = build_service(args)
    config = RunConfig(
        command="serve",
        paths={"candidates": str(args.path), "log": args.log or ""},
        aggressiveness=args.aggressiveness,
        k=args.k,
    )
    print(f"pool {len(service.pool)} candidates, version {service.pool_version}")
    print(f"snapshot version {service.snapshot_version} "
          f"({len(service._seen_ids)} events replayed)")
    print(f"listening on {args.host}:{args.port}")
    _write_report(
        {
            "v": 1,
            "kind": "serve_report",
            "config": config.to_dict(),
            "pool_version": service.pool_version,
            "snapshot_version": service.snapshot_version,
            "host": args.host,
            "port": args.port,
        },
        args.report,
    )
    if args.dry_run:
        service.close()
        return 0
    import uvicorn

    from .api import create_app

    try:
        uvicorn.run(create_app(service), host=args.host, port=args.port)
    finally:
        service.close()
    return 0


# -- argument plumbing ---------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="linematch", description=__doc__)
    parser.add_argument("--config", help="JSON or TOML defaults file")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load, normalize, and dedup a corpus")
    p.add_argument("path")
    p.add_argument("--format", choices=("jsonl", "csv", "tsv"), default="jsonl")
    p.add_argument("--out", help="write cleaned records here (JSONL)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-triples", help="derive training triples")
    p.add_argument("path")
    p.add_argument("--format", choices=("jsonl", "csv", "tsv"), default="jsonl")
    p.add_argument(
        "--recipe", choices=("invoice", "product", "sentence"), default="invoice"
    )
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--antonyms", help="JSON antonym table")
    p.add_argument("--brands", help="one brand per line")
    p.add_argument("--products", help="one product per line")
    p.add_argument("--small-delta", type=float, default=0.10)
    p.add_argument("--light-edits", type=_int_pair, default=(1, 2))
    p.add_argument("--heavy-edits", type=_int_pair, default=(3, 5))
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_gen_triples)

    p = sub.add_parser("train-eval", help="learning curve on a triples file")
    p.add_argument("path")
    p.add_argument("--encoder", choices=("exact", "hashed"), default="exact")
    p.add_argument("--hash-dim", type=int, default=4096)
    p.add_argument("--aggressiveness", type=float, default=0.1)
    p.add_argument("--n-permutations", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoints", type=_int_list, default=None)
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("taxmatch", help="taxonomy-aware line item scores")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--invoice", required=True)
    p.add_argument("--po", action="append", required=True)
    p.add_argument("--no-merge", action="store_true")
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_taxmatch)

    p = sub.add_parser("serve", help="run the feedback service over HTTP")
    p.add_argument("path", help="candidate corpus file")
    p.add_argument("--format", choices=("jsonl", "csv", "tsv"), default="jsonl")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--log", help="event log path (replayed on start)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--aggressiveness", type=float, default=0.1)
    p.add_argument("--accept-trains-classifier", action="store_true")
    p.add_argument("--dry-run", action="store_true",
                   help="build everything, print the plan, do not bind")
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            cfg = _load_config_file(args.config)
            subparsers = [
                a.choices[args.command]
                for a in parser._actions  # noqa: SLF001
                if isinstance(a, argparse._SubParsersAction)
            ]
            explicit = _explicit_dests(argv, [parser, *subparsers])
            _apply_config(args, explicit, cfg)
        return args.func(args)
    except SystemExit as exc:  # argparse help/usage paths
        code = exc.code
        return code if isinstance(code, int) else 1
    except UsageError as exc:
        print(f"linematch: error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"linematch: data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort contract
        print(f"linematch: internal error: {exc!r}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
