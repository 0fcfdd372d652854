"""Annotated passages and recognizer prediction files (both JSONL)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .tree import Index, format_index, parse_index

__all__ = [
    "AnnotatedPassage",
    "PredictionRecord",
    "read_corpus",
    "read_predictions",
    "restrict_gold",
    "write_corpus",
    "write_predictions",
]


@dataclass(frozen=True)
class AnnotatedPassage:
    id: str
    text: str
    gold: frozenset[str] = field(default_factory=frozenset)

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "gold": sorted(self.gold)}


@dataclass(frozen=True)
class PredictionRecord:
    passage_id: str
    predicted: tuple[Index, ...] = ()

    def to_json(self) -> dict:
        return {"passage_id": self.passage_id,
                "predicted_indices": [format_index(p) for p in self.predicted]}


def _read_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc.msg}") from None


def read_corpus(path: str | Path) -> list[AnnotatedPassage]:
    passages, seen = [], set()
    for lineno, obj in _read_jsonl(path):
        pid = str(obj["id"])
        if pid in seen:
            raise ValueError(f"{path}:{lineno}: duplicate passage id {pid}")
        seen.add(pid)
        passages.append(AnnotatedPassage(pid, obj.get("text", ""), frozenset(obj.get("gold", []))))
    return passages


def write_corpus(passages: Iterable[AnnotatedPassage], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in passages:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    for lineno, obj in _read_jsonl(path):
        try:
            preds = tuple(parse_index(s) for s in obj.get("predicted_indices", []))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        records.append(PredictionRecord(str(obj["passage_id"]), preds))
    return records


def write_predictions(records: Iterable[PredictionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


def restrict_gold(passages: Iterable[AnnotatedPassage],
                  concepts: Iterable[str]) -> tuple[list[AnnotatedPassage], int]:
    """Drop gold concepts outside ``concepts`` (e.g. a filtered subtree).

    Passages keep their place even when their gold set empties; the second
    value counts the dropped annotations.
    """
    keep = set(concepts)
    out, dropped = [], 0
    for p in passages:
        inside = p.gold & keep
        dropped += len(p.gold) - len(inside)
        out.append(p if len(inside) == len(p.gold) else AnnotatedPassage(p.id, p.text, inside))
    return out, dropped
