"""``conceptbench`` command line.

Settings merge as command-line flags > ``--config`` TOML file > built-in
defaults. A TOML file may hold top-level keys or one table per subcommand
(``[build-index]``). Every run writes a JSON manifest next to its output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .corpus import read_corpus, read_predictions, write_corpus
from .embeddings import EmbeddingError, load_embeddings, match_names, read_vectors
from .graph import GraphConfig, IndexKind
from .indexing import build_index, config_fingerprint, save_index
from .metrics import evaluate
from .ontology import OntologyError, filter_descendants, load_ontology, name_table
from .partition import PartitionConfig
from .retrieval import build_bm25, pool_candidates, pool_recall, write_pools
from .splits import SplitSpec, exponential_sizes, make_split, write_manifest
from .tree import TreeFileError, load_tree

log = logging.getLogger("conceptbench")

DEFAULTS: dict[str, dict] = {
    "build-index": {"kind": "ossi", "max_children": 10, "resolution": 1.0, "neighbors": 10,
                    "semantic_factor": 0.5, "root": None, "vectors": None, "names": None,
                    "keep_obsolete": False},
    "evaluate": {"out": None},
    "split": {"sizes": ",".join(map(str, exponential_sizes())), "min_unseen": 0.30,
              "core": 100, "test_fraction": 0.2, "dev_fraction": 0.1, "nested": True},
    "autolabel": {"stages": "1,2,3,4,5", "cache_mode": "replay", "threshold": 0.6,
                  "min_tier": 3, "max_concurrency": 4, "model": "gpt-4o-mini",
                  "guideline": None, "name_vectors": None, "name_texts": None,
                  "embed_url": None, "max_failure_ratio": 0.1, "log": None,
                  "base_url": None, "ontology_label": "ontology"},
    "fetch": {"per_term": 10},
    "match-names": {"threshold": 0.6},
    "pool-candidates": {"k": 41, "gold": None},
    "stats": {"corpus": None},
}

REQUIRED = {
    "build-index": ["ontology", "out", "seed"],
    "evaluate": ["tree", "gold", "preds", "seen"],
    "split": ["corpus", "out", "seed"],
    "autolabel": ["corpus", "vectors", "names", "cache", "out"],
    "fetch": ["terms", "out"],
    "match-names": ["vectors", "names", "query_vectors", "query_texts", "out"],
    "pool-candidates": ["tree", "ontology", "preds", "out"],
    "stats": ["ontology"],
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conceptbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def cmd(name: str, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help, argument_default=None)
        sp.add_argument("--config", help="TOML settings file")
        return sp

    sp = cmd("build-index", "build an OSI/SSI/OSSI label tree")
    sp.add_argument("--ontology")
    sp.add_argument("--vectors")
    sp.add_argument("--names")
    sp.add_argument("--kind", choices=[k.value for k in IndexKind])
    sp.add_argument("--root", help="restrict to descendants of this concept")
    sp.add_argument("--keep-obsolete", action="store_const", const=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-children", type=int)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--neighbors", type=int)
    sp.add_argument("--semantic-factor", type=float)
    sp.add_argument("--out", help="output directory")

    sp = cmd("evaluate", "score recognizer predictions")
    sp.add_argument("--tree")
    sp.add_argument("--gold")
    sp.add_argument("--preds")
    sp.add_argument("--seen", help="file with one seen concept id per line")
    sp.add_argument("--out", help="report JSON path (default: stdout only)")

    sp = cmd("split", "make train/dev/test splits with unseen concepts")
    sp.add_argument("--corpus")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sizes", help="comma-separated training sizes")
    sp.add_argument("--min-unseen", type=float)
    sp.add_argument("--core", type=int)
    sp.add_argument("--test-fraction", type=float)
    sp.add_argument("--dev-fraction", type=float)
    sp.add_argument("--no-nested", dest="nested", action="store_const", const=False)
    sp.add_argument("--out")

    sp = cmd("autolabel", "run the LLM labeling pipeline")
    sp.add_argument("--corpus")
    sp.add_argument("--vectors", help="ontology name vectors (EMB1)")
    sp.add_argument("--names", help="ontology names TSV")
    sp.add_argument("--name-vectors", help="vectors for generated names (EMB1)")
    sp.add_argument("--name-texts", help="generated names, one per line, aligned with --name-vectors")
    sp.add_argument("--embed-url", help="embedding service for generated names")
    sp.add_argument("--cache")
    sp.add_argument("--cache-mode", choices=["record", "replay", "live"])
    sp.add_argument("--stages", help="comma-separated stage numbers, e.g. 1,2,3,5")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--min-tier", type=int)
    sp.add_argument("--max-concurrency", type=int)
    sp.add_argument("--max-failure-ratio", type=float)
    sp.add_argument("--guideline", help="file holding the guideline summary")
    sp.add_argument("--model")
    sp.add_argument("--base-url")
    sp.add_argument("--ontology-label")
    sp.add_argument("--out")
    sp.add_argument("--log", help="per-stage log JSONL (default: <out>.stages.jsonl)")

    sp = cmd("fetch", "collect PubMed abstracts for ontology terms")
    sp.add_argument("--terms", help="file with one search term per line")
    sp.add_argument("--per-term", type=int)
    sp.add_argument("--out")

    sp = cmd("match-names", "map name vectors to ontology concepts")
    sp.add_argument("--vectors")
    sp.add_argument("--names")
    sp.add_argument("--query-vectors")
    sp.add_argument("--query-texts")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--out")

    sp = cmd("pool-candidates", "BM25 candidate pools seeded by predictions")
    sp.add_argument("--tree")
    sp.add_argument("--ontology")
    sp.add_argument("--preds")
    sp.add_argument("--k", type=int)
    sp.add_argument("--gold", help="corpus JSONL; adds pool recall to the manifest")
    sp.add_argument("--out")

    sp = cmd("stats", "ontology and corpus summary counts")
    sp.add_argument("--ontology")
    sp.add_argument("--corpus", action="append")
    return p


def _settings(command: str, args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS[command])
    if args.config:
        doc = tomllib.loads(Path(args.config).read_text(encoding="utf-8"))
        table = {k: v for k, v in doc.items() if not isinstance(v, dict)}
        table.update(doc.get(command, {}))
        merged.update({k.replace("-", "_"): v for k, v in table.items()})
    merged.update({k: v for k, v in vars(args).items()
                   if v is not None and k not in ("command", "config", "verbose")})
    missing = [k for k in REQUIRED[command] if merged.get(k) is None]
    if missing:
        raise UsageError(f"{command}: missing required setting(s): "
                         + ", ".join("--" + m.replace("_", "-") for m in missing))
    return merged


def _file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: Path, command: str, settings: dict, inputs: list[str],
                    started: float, extra: dict | None = None) -> None:
    cfg = json.dumps(settings, sort_keys=True, default=str)
    doc = {
        "command": command,
        "config": settings,
        "config_digest": hashlib.sha256(cfg.encode()).hexdigest(),
        "inputs": {p: _file_digest(p) for p in inputs if p and Path(p).is_file()},
        "seed": settings.get("seed"),
        "tool_version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _manifest_for(out: str) -> Path:
    p = Path(out)
    return p / "manifest.json" if p.suffix == "" else p.with_name(p.name + ".manifest.json")


def _build_index(s: dict) -> tuple[list[str], dict]:
    o = load_ontology(s["ontology"])
    if s["root"]:
        o = filter_descendants(o, s["root"], drop_obsolete=not s["keep_obsolete"])
    store = load_embeddings(s["vectors"], s["names"]) if s["vectors"] else None
    kind = IndexKind(s["kind"])
    gcfg = GraphConfig(kind=kind, neighbors=s["neighbors"], semantic_factor=s["semantic_factor"])
    pcfg = PartitionConfig(max_children=s["max_children"], resolution=s["resolution"], seed=s["seed"])
    tree, indices, _ = build_index(o, store, kind, gcfg, pcfg)
    fp = config_fingerprint(gcfg, pcfg)
    tree_path, tsv_path = save_index(tree, indices, s["out"], kind.value, fp)
    mean, deepest = tree.depth_stats()
    print(f"{kind.value}: {tree.size} concepts, mean depth {mean:.2f}, max depth {deepest} -> {tree_path}")
    return [s["ontology"], s["vectors"], s["names"]], {
        "outputs": [str(tree_path), str(tsv_path)], "config_fingerprint": fp}


def _evaluate(s: dict) -> tuple[list[str], dict]:
    tree, _ = load_tree(s["tree"])
    gold = read_corpus(s["gold"])
    preds = read_predictions(s["preds"])
    seen = {line.strip() for line in Path(s["seen"]).read_text(encoding="utf-8").splitlines() if line.strip()}
    report = evaluate(gold, preds, tree, seen)
    text = report.to_json(_file_digest(s["tree"])[:16])
    print(text)
    if s["out"]:
        Path(s["out"]).write_text(text + "\n", encoding="utf-8")
    return [s["tree"], s["gold"], s["preds"], s["seen"]], {}


def _split(s: dict) -> tuple[list[str], dict]:
    corpus = read_corpus(s["corpus"])
    sizes = tuple(int(x) for x in str(s["sizes"]).split(",") if x.strip())
    spec = SplitSpec(sizes=sizes, min_unseen_ratio=s["min_unseen"], core_count=s["core"],
                     seed=s["seed"], nested=s["nested"])
    split = make_split(corpus, spec, test_fraction=s["test_fraction"], dev_fraction=s["dev_fraction"])
    write_manifest(split, s["out"])
    print(f"split: {len(split.test_ids)} test, {len(split.dev_ids)} dev, "
          f"{len(split.unseen_concepts)} unseen concepts, sizes {list(split.schedule)}")
    return [s["corpus"]], {}


def _autolabel(s: dict) -> tuple[list[str], dict]:
    from .autolabel import (
        CachedClient,
        HttpEmbedder,
        OpenAIChatClient,
        PipelineConfig,
        PrecomputedNameVectors,
        run_pipeline,
        write_outputs,
    )

    corpus = read_corpus(s["corpus"])
    store = load_embeddings(s["vectors"], s["names"])
    if s["name_vectors"] and s["name_texts"]:
        embedder = PrecomputedNameVectors.from_files(s["name_vectors"], s["name_texts"])
    elif s["embed_url"]:
        embedder = HttpEmbedder(s["embed_url"])
    else:
        raise UsageError("autolabel needs --name-vectors/--name-texts or --embed-url")
    guideline = Path(s["guideline"]).read_text(encoding="utf-8") if s["guideline"] else ""
    stages = {int(x) for x in str(s["stages"]).split(",") if x.strip()}
    if not guideline:
        stages.discard(4)
    cfg = PipelineConfig(stages=stages, threshold=s["threshold"], min_tier=s["min_tier"],
                         max_concurrency=s["max_concurrency"],
                         max_failure_ratio=s["max_failure_ratio"], model_id=s["model"],
                         guideline_summary=guideline, ontology_label=s["ontology_label"])
    inner = None if s["cache_mode"] == "replay" else OpenAIChatClient(s["base_url"])
    client = CachedClient(s["cache"], s["cache_mode"], inner)
    records = run_pipeline(corpus, cfg, client, store, embedder)
    log_path = s["log"] or str(s["out"]) + ".stages.jsonl"
    write_outputs(records, s["out"], log_path)
    kept = sum(1 for r in records if r.keep and not r.error)
    print(f"autolabel: {kept}/{len(records)} passages kept; cache hits {client.hits}, misses {client.misses}")
    return [s["corpus"], s["vectors"], s["names"], s["name_vectors"], s["name_texts"], s["guideline"]], {
        "outputs": [str(s["out"]), log_path], "stages": sorted(stages)}


def _fetch(s: dict) -> tuple[list[str], dict]:
    from .autolabel import fetch_pubmed

    terms = [t.strip() for t in Path(s["terms"]).read_text(encoding="utf-8").splitlines() if t.strip()]
    passages, run = fetch_pubmed(terms, s["per_term"])
    write_corpus(passages, s["out"])
    print(f"fetch: {len(passages)} passages from {len(terms)} terms; "
          f"{len(run.empty_terms)} terms without hits")
    return [s["terms"]], {"empty_terms": run.empty_terms, "duplicate_ids": run.duplicate_ids,
                          "duplicate_texts": run.duplicate_texts}


def _match_names(s: dict) -> tuple[list[str], dict]:
    store = load_embeddings(s["vectors"], s["names"])
    vecs = read_vectors(s["query_vectors"])
    texts = Path(s["query_texts"]).read_text(encoding="utf-8").splitlines()
    if len(texts) != len(vecs):
        raise EmbeddingError(f"{len(texts)} query texts but {len(vecs)} query vectors")
    results = match_names(store, zip(texts, vecs), s["threshold"])
    with open(s["out"], "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(json.dumps({"query_text": r.query_text, "concept": r.concept,
                                 "similarity": r.similarity,
                                 "matched_name_row": r.matched_name_row}) + "\n")
    matched = sum(1 for r in results if r.concept)
    print(f"match-names: {matched}/{len(results)} matched at threshold {s['threshold']}")
    return [s["vectors"], s["names"], s["query_vectors"], s["query_texts"]], {}


def _pool_candidates(s: dict) -> tuple[list[str], dict]:
    tree, _ = load_tree(s["tree"])
    o = load_ontology(s["ontology"])
    preds = {r.passage_id: r.predicted for r in read_predictions(s["preds"])}
    pools = pool_candidates(preds, tree, o, build_bm25(o), s["k"])
    write_pools(pools, s["out"])
    extra = {}
    if s["gold"]:
        recall, _ = pool_recall(pools, read_corpus(s["gold"]))
        extra["pool_recall"] = recall
        print(f"pool recall: {recall:.4f}")
    print(f"pool-candidates: {len(pools)} pools, mean size "
          f"{sum(len(p) for p in pools) / max(1, len(pools)):.1f}")
    return [s["tree"], s["ontology"], s["preds"], s["gold"]], extra


def _stats(s: dict) -> tuple[list[str], dict]:
    o = load_ontology(s["ontology"])
    active = o.active_ids()
    names = [r for r in name_table(o, include_obsolete=False)]
    summary = {"ontology": {"concepts": len(o), "active_concepts": len(active),
                            "names": len(names), "roots": sorted(o.roots)[:10]}}
    print(f"ontology: {len(active)} concepts ({len(o) - len(active)} obsolete), {len(names)} names")
    active_set = set(active)
    for path in s["corpus"] or []:
        corpus = read_corpus(path)
        counts = Counter(c for p in corpus for c in p.gold)
        covered = len(set(counts) & active_set)
        row = {"passages": len(corpus), "concept_occurrences": sum(counts.values()),
               "unique_concepts": len(counts),
               "coverage_pct": round(100.0 * covered / len(active), 2) if active else 0.0}
        summary[path] = row
        print(f"{path}: {row['passages']} passages, {row['concept_occurrences']} concepts, "
              f"{row['unique_concepts']} unique ({row['coverage_pct']:.2f}% coverage)")
    return [s["ontology"], *(s["corpus"] or [])], {"summary": summary}


HANDLERS = {
    "build-index": _build_index,
    "evaluate": _evaluate,
    "split": _split,
    "autolabel": _autolabel,
    "fetch": _fetch,
    "match-names": _match_names,
    "pool-candidates": _pool_candidates,
    "stats": _stats,
}

DOMAIN_ERRORS = (OntologyError, EmbeddingError, TreeFileError, ValueError, KeyError,
                 FileNotFoundError, RuntimeError)


def dispatch(argv: list[str] | None = None) -> int:
    """Run one subcommand; 0 on success, 1 on domain errors, 2 on usage errors."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    started = time.time()
    try:
        settings = _settings(args.command, args)
        inputs, extra = HANDLERS[args.command](settings)
        if args.command not in ("stats", "evaluate") or settings.get("out"):
            target = settings.get("out")
            manifest = _manifest_for(target) if target else Path(f"{args.command}.manifest.json")
            _write_manifest(manifest, args.command, settings, inputs, started, extra)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
