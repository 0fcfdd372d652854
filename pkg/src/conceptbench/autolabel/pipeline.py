"""Five-stage LLM auto-labeling of passages with ontology concepts.

1. claims -> concept names -> embedding match (the "PCC" candidate list)
2. four-way relevance classification; "not relevant" is dropped
3. relabeling critique; unsupported concepts removed, missing ones added
4. guideline filter (optional per corpus)
5. passage-level quality rating; passages below ``min_tier`` are dropped

Every model call goes through a :class:`ChatClient`, normally a
:class:`~conceptbench.autolabel.llm.CachedClient` so runs can be replayed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
import requests

from ..corpus import AnnotatedPassage, write_corpus
from ..embeddings import EmbeddingStore, decode_vectors, match_names, read_vectors
from .llm import ChatClient, LlmRequest
from .parsing import (
    ParseError,
    Relevance,
    extract_list,
    extract_numbered,
    parse_critique,
    parse_relabel,
    parse_relevance,
    parse_tier,
    parse_valid,
)

__all__ = [
    "CandidateEntry",
    "ConfigurationError",
    "HttpEmbedder",
    "PipelineConfig",
    "PipelineError",
    "PipelineRecord",
    "PrecomputedNameVectors",
    "classify_candidates",
    "claims_to_candidates",
    "generate_claims",
    "guideline_filter",
    "quality_select",
    "relabel",
    "run_pipeline",
    "verify_stage_log",
    "write_outputs",
]

log = logging.getLogger(__name__)

STAGE_NAMES = {1: "pcc", 2: "classify", 3: "relabel", 4: "guideline", 5: "quality"}


class ConfigurationError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, message: str, failures: dict[str, str]):
        super().__init__(message)
        self.failures = failures


class MissingNameVector(KeyError):
    pass


# -- generated-name embeddings -------------------------------------------------

class NameEmbedder(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _norm_name(text: str) -> str:
    return " ".join(text.casefold().split())


class PrecomputedNameVectors:
    """Lookup table of vectors for generated names (exact, then case/space-folded)."""

    def __init__(self, vectors: np.ndarray, texts: Sequence[str]):
        if len(vectors) != len(texts):
            raise ValueError("vector and text counts differ")
        self.vectors = np.asarray(vectors, dtype=np.float32)
        self.exact = {t: i for i, t in enumerate(texts)}
        self.folded = {}
        for i, t in enumerate(texts):
            self.folded.setdefault(_norm_name(t), i)

    @classmethod
    def from_files(cls, vectors_path: str | Path, texts_path: str | Path) -> "PrecomputedNameVectors":
        texts = Path(texts_path).read_text(encoding="utf-8").splitlines()
        return cls(read_vectors(vectors_path), texts)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows, missing = [], []
        for t in texts:
            i = self.exact.get(t, self.folded.get(_norm_name(t)))
            if i is None:
                missing.append(t)
            rows.append(i)
        if missing:
            raise MissingNameVector(f"no vector for generated names: {missing[:5]}")
        return self.vectors[rows] if rows else np.zeros((0, self.vectors.shape[1]), np.float32)


class HttpEmbedder:
    """Embedding service that answers ``{"texts": [...]}`` with an EMB1 payload."""

    def __init__(self, url: str | None = None, timeout: float = 60.0):
        self.url = url or os.environ.get("CONCEPTBENCH_EMBED_URL", "")
        if not self.url:
            raise ConfigurationError("no embedding endpoint configured (CONCEPTBENCH_EMBED_URL)")
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        resp = requests.post(self.url, json={"texts": list(texts)}, timeout=self.timeout)
        resp.raise_for_status()
        m = decode_vectors(resp.content, self.url)
        if m.shape[0] != len(texts):
            raise ValueError(f"embedding service returned {m.shape[0]} rows for {len(texts)} texts")
        return m


# -- records -------------------------------------------------------------------

@dataclass
class CandidateEntry:
    concept: str
    name: str
    source_name: str
    similarity: float
    relevance: Relevance = Relevance.UNCLASSIFIED
    guideline_valid: bool | None = None

    def to_json(self) -> dict:
        return {"concept": self.concept, "name": self.name, "source_name": self.source_name,
                "similarity": round(self.similarity, 6), "relevance": self.relevance.value,
                "guideline_valid": self.guideline_valid}


@dataclass
class StageLogEntry:
    stage: str
    input_hash: str
    output_hash: str
    output: object


@dataclass
class PipelineRecord:
    passage: AnnotatedPassage
    claims: list[str] = field(default_factory=list)
    candidates: list[CandidateEntry] = field(default_factory=list)
    quality: int | None = None
    keep: bool = True
    stage_log: list[StageLogEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def concepts(self) -> list[str]:
        return sorted(c.concept for c in self.candidates)

    def log_stage(self, stage: str, output: object) -> None:
        prev = self.stage_log[-1].output_hash if self.stage_log else _digest(self.passage.to_json())
        self.stage_log.append(StageLogEntry(stage, prev, _chain(prev, stage, output), output))


def _digest(obj: object) -> str:
    raw = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def _chain(prev: str, stage: str, output: object) -> str:
    return _digest({"prev": prev, "stage": stage, "output": output})


def verify_stage_log(record: PipelineRecord) -> bool:
    """True when every stage entry links to its predecessor and its recorded output."""
    prev = _digest(record.passage.to_json())
    for entry in record.stage_log:
        if entry.input_hash != prev or entry.output_hash != _chain(prev, entry.stage, entry.output):
            return False
        prev = entry.output_hash
    return True


# -- configuration and prompting -----------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    stages: frozenset[int] = frozenset({1, 2, 3, 4, 5})
    threshold: float = 0.6
    min_tier: int = 3
    max_concurrency: int = 4
    max_failure_ratio: float = 0.1
    model_id: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_tokens: int = 1024
    guideline_summary: str = ""
    ontology_label: str = "ontology"
    prompt_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "stages", frozenset(self.stages))
        # trailing newlines from a guideline file must not change the prompt
        object.__setattr__(self, "guideline_summary", self.guideline_summary.strip())
        if 1 not in self.stages:
            raise ConfigurationError("stage 1 produces the candidates and cannot be disabled")
        if not self.stages <= set(STAGE_NAMES):
            raise ConfigurationError(f"unknown stages {sorted(self.stages - set(STAGE_NAMES))}")
        if 4 in self.stages and not self.guideline_summary.strip():
            raise ConfigurationError("guideline filtering needs a guideline summary; disable stage 4 instead")
        if not 1 <= self.min_tier <= 5:
            raise ConfigurationError("min_tier must be 1..5")


@lru_cache(maxsize=None)
def _template(prompt_dir: str | None, name: str) -> string.Template:
    if prompt_dir:
        text = (Path(prompt_dir) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return string.Template(text)


def _render(cfg: PipelineConfig, name: str, **fields) -> str:
    return _template(cfg.prompt_dir, name).substitute(ontology=cfg.ontology_label, **fields)


def _request(cfg: PipelineConfig, user: str) -> LlmRequest:
    return LlmRequest(cfg.model_id, _render(cfg, "system").strip(), user,
                      cfg.temperature, cfg.max_tokens)


_FORMATS = {
    "list": "a JSON array of strings",
    "numbered": 'one line per item in the form "<number>: <label>"',
    "relabel": 'one line "<number>: <label>" per concept, then "ADDITIONAL: name; name"',
    "quality": 'a single line "Quality: <rating>"',
}


def _ask(client: ChatClient, cfg: PipelineConfig, template: str, parser: Callable,
         fmt: str, **fields):
    """Call the model and parse; on failure ask once for a reformatted answer."""
    raw = client.complete(_request(cfg, _render(cfg, template, **fields))).text
    try:
        return parser(raw)
    except ParseError:
        fixed = client.complete(_request(cfg, _render(cfg, "reformat", format=_FORMATS[fmt], raw=raw))).text
        try:
            return parser(fixed)
        except ParseError:
            raise ParseError(f"{template}: unparseable model output", raw) from None


def _candidate_block(candidates: Sequence[CandidateEntry]) -> str:
    return "\n".join(f"{i}. {c.name} ({c.concept})" for i, c in enumerate(candidates, start=1))


# -- stages --------------------------------------------------------------------

def generate_claims(passage: AnnotatedPassage, client: ChatClient,
                    cfg: PipelineConfig = PipelineConfig(stages={1})) -> list[str]:
    if not passage.text.strip():
        raise ValueError(f"passage {passage.id} has no text")
    return _ask(client, cfg, "claims", extract_list, "list", passage=passage.text)


def _match(names: Sequence[str], store: EmbeddingStore, embedder: NameEmbedder,
           threshold: float) -> tuple[dict[str, CandidateEntry], list[str]]:
    """Best entry per concept for the names that clear ``threshold``, plus the rejects."""
    found: dict[str, CandidateEntry] = {}
    rejected = []
    names = list(dict.fromkeys(n for n in names if n.strip()))
    if not names:
        return found, rejected
    vectors = embedder.embed(names)
    for m in match_names(store, zip(names, vectors), threshold):
        if m.concept is None:
            rejected.append(f"{m.query_text} ({m.similarity:.3f})")
            continue
        prev = found.get(m.concept)
        if prev is None or m.similarity > prev.similarity:
            found[m.concept] = CandidateEntry(m.concept, store.records[m.matched_name_row].text,
                                              m.query_text, m.similarity)
    return found, rejected


def claims_to_candidates(claims: Sequence[str], client: ChatClient, store: EmbeddingStore,
                         threshold: float = 0.6, embedder: NameEmbedder | None = None,
                         cfg: PipelineConfig = PipelineConfig(stages={1}),
                         notes: list[str] | None = None) -> list[CandidateEntry]:
    if embedder is None:
        raise ConfigurationError("matching generated names needs a name embedder")
    names: list[str] = []
    for claim in claims:
        names.extend(_ask(client, cfg, "names", extract_list, "list", claim=claim))
    found, rejected = _match(names, store, embedder, threshold)
    if rejected and notes is not None:
        notes.append("below threshold: " + "; ".join(rejected))
    return [found[c] for c in sorted(found)]


def classify_candidates(passage: AnnotatedPassage, candidates: Sequence[CandidateEntry],
                        client: ChatClient, cfg: PipelineConfig = PipelineConfig(stages={1}),
                        notes: list[str] | None = None) -> list[CandidateEntry]:
    """Label each candidate with a relevance class and drop the not-relevant ones."""
    if not candidates:
        return []
    notes = notes if notes is not None else []
    try:
        labels = _ask(client, cfg, "classify", extract_numbered, "numbered",
                      passage=passage.text, candidates=_candidate_block(candidates))
    except ParseError as exc:
        notes.append(f"{exc}; all candidates kept unclassified")
        labels = {}
    out = []
    for i, c in enumerate(candidates, start=1):
        rel = parse_relevance(labels[i]) if i in labels else None
        if rel is None:
            notes.append(f"classify: no usable label for {c.concept}")
            rel = Relevance.UNCLASSIFIED
        if rel is not Relevance.NOT_RELEVANT:
            out.append(replace(c, relevance=rel))
    return out


def relabel(passage: AnnotatedPassage, candidates: Sequence[CandidateEntry], client: ChatClient,
            store: EmbeddingStore, threshold: float = 0.6, embedder: NameEmbedder | None = None,
            cfg: PipelineConfig = PipelineConfig(stages={1}),
            notes: list[str] | None = None) -> list[CandidateEntry]:
    """Remove candidates the critique calls missing/incorrect; add matched extras."""
    notes = notes if notes is not None else []
    try:
        labels, additional = _ask(client, cfg, "relabel", parse_relabel, "relabel",
                                  passage=passage.text, candidates=_candidate_block(candidates))
    except ParseError as exc:
        notes.append(f"{exc}; candidates unchanged")
        return list(candidates)
    out = []
    for i, c in enumerate(candidates, start=1):
        verdict = parse_critique(labels[i]) if i in labels else None
        if verdict is None:
            notes.append(f"relabel: no usable label for {c.concept}")
        if verdict not in ("missing", "incorrect"):
            out.append(c)
    if additional:
        if embedder is None:
            raise ConfigurationError("matching added names needs a name embedder")
        found, rejected = _match(additional, store, embedder, threshold)
        present = {c.concept for c in out}
        out.extend(found[c] for c in sorted(found) if c not in present)
        if rejected:
            notes.append("relabel below threshold: " + "; ".join(rejected))
    return out


def guideline_filter(passage: AnnotatedPassage, candidates: Sequence[CandidateEntry],
                     guideline_summary: str, client: ChatClient,
                     cfg: PipelineConfig = PipelineConfig(stages={1}),
                     notes: list[str] | None = None) -> list[CandidateEntry]:
    if not guideline_summary.strip():
        raise ConfigurationError("empty guideline summary; disable the guideline stage instead")
    if not candidates:
        return []
    notes = notes if notes is not None else []
    try:
        labels = _ask(client, cfg, "guideline", extract_numbered, "numbered",
                      guideline=guideline_summary, passage=passage.text,
                      candidates=_candidate_block(candidates))
    except ParseError as exc:
        notes.append(f"{exc}; candidates kept")
        labels = {}
    out = []
    for i, c in enumerate(candidates, start=1):
        valid = parse_valid(labels[i]) if i in labels else None
        if valid is None:
            notes.append(f"guideline: no usable verdict for {c.concept}")
        if valid is not False:
            out.append(replace(c, guideline_valid=valid))
    return out


def quality_select(record: PipelineRecord, client: ChatClient, min_tier: int = 3,
                   cfg: PipelineConfig = PipelineConfig(stages={1})) -> bool:
    """Rate the annotated passage; unparseable ratings drop it."""
    try:
        tier = _ask(client, cfg, "quality", _tier_or_raise, "quality",
                    passage=record.passage.text, candidates=_candidate_block(record.candidates))
    except ParseError as exc:
        record.warnings.append(f"{exc}; passage dropped")
        record.quality, record.keep = None, False
        return False
    record.quality = tier
    record.keep = tier >= min_tier
    return record.keep


def _tier_or_raise(text: str) -> int:
    tier = parse_tier(text)
    if tier is None:
        raise ParseError("no quality rating found", text)
    return tier


# -- orchestration -------------------------------------------------------------

def _process(passage: AnnotatedPassage, cfg: PipelineConfig, client: ChatClient,
             store: EmbeddingStore, embedder: NameEmbedder) -> PipelineRecord:
    rec = PipelineRecord(passage)
    rec.claims = generate_claims(passage, client, cfg)
    rec.candidates = claims_to_candidates(rec.claims, client, store, cfg.threshold,
                                          embedder, cfg, rec.warnings)
    rec.log_stage(STAGE_NAMES[1], rec.concepts())
    if 2 in cfg.stages:
        rec.candidates = classify_candidates(passage, rec.candidates, client, cfg, rec.warnings)
        rec.log_stage(STAGE_NAMES[2], rec.concepts())
    if 3 in cfg.stages:
        rec.candidates = relabel(passage, rec.candidates, client, store, cfg.threshold,
                                 embedder, cfg, rec.warnings)
        rec.log_stage(STAGE_NAMES[3], rec.concepts())
    if 4 in cfg.stages:
        rec.candidates = guideline_filter(passage, rec.candidates, cfg.guideline_summary,
                                          client, cfg, rec.warnings)
        rec.log_stage(STAGE_NAMES[4], rec.concepts())
    if 5 in cfg.stages:
        quality_select(rec, client, cfg.min_tier, cfg)
        rec.log_stage(STAGE_NAMES[5], {"tier": rec.quality, "keep": rec.keep})
    return rec


def run_pipeline(corpus: Iterable[AnnotatedPassage], cfg: PipelineConfig, client: ChatClient,
                 store: EmbeddingStore, embedder: NameEmbedder | None) -> list[PipelineRecord]:
    """Annotate every passage; per-passage stages run in order, passages in parallel.

    Failed passages are returned with ``error`` set. The run raises
    :class:`PipelineError` when the failure share exceeds
    ``cfg.max_failure_ratio``.
    """
    if embedder is None:
        raise ConfigurationError("stage 1 needs a name embedder (precomputed vectors or endpoint)")
    passages = list(corpus)

    def work(p: AnnotatedPassage) -> PipelineRecord:
        try:
            return _process(p, cfg, client, store, embedder)
        except Exception as exc:  # noqa: BLE001 - aggregated below
            log.warning("passage %s failed: %s", p.id, exc)
            return PipelineRecord(p, keep=False, error=f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_concurrency)) as pool:
        records = list(pool.map(work, passages))
    failures = {r.passage.id: r.error for r in records if r.error}
    if passages and len(failures) / len(passages) > cfg.max_failure_ratio:
        raise PipelineError(
            f"{len(failures)}/{len(passages)} passages failed "
            f"(allowed ratio {cfg.max_failure_ratio})", failures)
    return records


def final_dataset(records: Iterable[PipelineRecord]) -> list[AnnotatedPassage]:
    return [AnnotatedPassage(r.passage.id, r.passage.text, frozenset(r.concepts()))
            for r in records if r.keep and r.error is None]


def write_outputs(records: Sequence[PipelineRecord], dataset_path: str | Path,
                  log_path: str | Path) -> None:
    """Dataset JSONL (corpus schema) plus a sidecar JSONL of per-stage diffs."""
    write_corpus(final_dataset(records), dataset_path)
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            prev: list[str] = []
            for e in r.stage_log:
                row = {"passage_id": r.passage.id, "stage": e.stage,
                       "input_hash": e.input_hash, "output_hash": e.output_hash,
                       "output": e.output}
                if isinstance(e.output, list):
                    row["added"] = sorted(set(e.output) - set(prev))
                    row["removed"] = sorted(set(prev) - set(e.output))
                    prev = e.output
                fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
            if r.error or r.warnings:
                fh.write(json.dumps({"passage_id": r.passage.id, "stage": "notes",
                                     "error": r.error, "warnings": r.warnings},
                                    sort_keys=True, ensure_ascii=False) + "\n")
