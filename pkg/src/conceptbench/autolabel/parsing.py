"""Tolerant extraction of lists and labels from free-form model output."""

from __future__ import annotations

import json
import re
from enum import Enum

__all__ = [
    "ParseError",
    "Relevance",
    "extract_list",
    "extract_numbered",
    "parse_relevance",
    "parse_tier",
]


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class Relevance(str, Enum):
    EXPLICIT = "Explicit"
    LOGICALLY_IMPLICIT = "LogicallyImplicit"
    PRAGMATICALLY_IMPLICIT = "PragmaticallyImplicit"
    NOT_RELEVANT = "NotRelevant"
    UNCLASSIFIED = "Unclassified"


_FENCE = re.compile(r"```(?:json|text)?\s*\n(.*?)```", re.S)
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_NUMBERED = re.compile(r"^\s*\[?(\d+)\]?\s*[:.)\-]\s*(.*\S)\s*$")
_EMPTY = {"none", "n/a", "no claims", "no concepts", "[]"}


def _json_array(text: str):
    for block in [*_FENCE.findall(text), text]:
        start, end = block.find("["), block.rfind("]")
        if start < 0 or end <= start:
            continue
        try:
            value = json.loads(block[start:end + 1])
        except json.JSONDecodeError:
            continue
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return [v.strip() for v in value if v.strip()]
    return None


def extract_list(text: str) -> list[str]:
    """Items of a JSON string array or a bulleted/numbered list.

    An explicit "none" answer yields ``[]``; anything else without list
    structure raises :class:`ParseError`.
    """
    stripped = text.strip()
    if stripped.lower().rstrip(".") in _EMPTY:
        return []
    items = _json_array(text)
    if items is not None:
        return items
    items = [m.group(1).strip() for line in text.splitlines() if (m := _BULLET.match(line))]
    if items:
        return items
    raise ParseError("no list found in model output", text)


def extract_numbered(text: str) -> dict[int, str]:
    """``{n: label}`` from lines like ``1: Explicit`` or ``[2] - invalid``."""
    out = {}
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m:
            out.setdefault(int(m.group(1)), m.group(2).strip())
    if not out:
        raise ParseError("no numbered labels found in model output", text)
    return out


def _norm(label: str) -> str:
    return re.sub(r"[^a-z]", "", label.lower())


_RELEVANCE = {
    "explicit": Relevance.EXPLICIT,
    "logicallyimplicit": Relevance.LOGICALLY_IMPLICIT,
    "logical": Relevance.LOGICALLY_IMPLICIT,
    "pragmaticallyimplicit": Relevance.PRAGMATICALLY_IMPLICIT,
    "pragmatic": Relevance.PRAGMATICALLY_IMPLICIT,
    "notrelevant": Relevance.NOT_RELEVANT,
    "irrelevant": Relevance.NOT_RELEVANT,
}


def parse_relevance(label: str) -> Relevance | None:
    key = _norm(label.split("(")[0].split(" because")[0])
    if key in _RELEVANCE:
        return _RELEVANCE[key]
    for name, value in sorted(_RELEVANCE.items(), key=lambda kv: -len(kv[0])):
        if key.startswith(name):
            return value
    return None


_TIERS = {"verypoor": 1, "poor": 2, "average": 3, "good": 4, "excellent": 5}
_TIER_LINE = re.compile(r"quality\s*[:=\-]\s*(.+)", re.I)


def parse_tier(text: str) -> int | None:
    """Five-level quality rating from ``Quality: Good`` / ``Quality: 4`` style text."""
    m = _TIER_LINE.search(text)
    candidates = [m.group(1)] if m else [text.strip()]
    for cand in candidates:
        cand = cand.strip().splitlines()[0] if cand.strip() else ""
        digit = re.match(r"\(?([1-5])\)?(?!\d)", cand)
        if digit:
            return int(digit.group(1))
        key = _norm(cand)
        for name in sorted(_TIERS, key=len, reverse=True):
            if key.startswith(name):
                return _TIERS[name]
    return None


def parse_valid(label: str) -> bool | None:
    key = _norm(label)
    if key.startswith("invalid") or key.startswith("notvalid"):
        return False
    if key.startswith("valid"):
        return True
    return None


_CRITIQUE = {"explicit": "explicit", "implicit": "implicit", "missing": "missing",
             "incorrect": "incorrect", "absent": "missing", "wrong": "incorrect"}


def parse_critique(label: str) -> str | None:
    key = _norm(label)
    for name, value in _CRITIQUE.items():
        if key.startswith(name):
            return value
    return None


_ADDITIONAL = re.compile(r"^\s*additional(?:\s+concepts?)?\s*[:\-]\s*(.*)$", re.I)


def parse_relabel(text: str) -> tuple[dict[int, str], list[str]]:
    """Per-candidate critique labels and the list of additional concept names."""
    additional: list[str] = []
    lines = text.splitlines()
    body = []
    for i, line in enumerate(lines):
        m = _ADDITIONAL.match(line)
        if m:
            rest = m.group(1).strip()
            if rest and rest.lower().rstrip(".") not in _EMPTY:
                additional.extend(s.strip() for s in re.split(r"[;|]", rest) if s.strip())
            for tail in lines[i + 1:]:
                b = _BULLET.match(tail)
                if b:
                    additional.append(b.group(1).strip())
            break
        body.append(line)
    body_text = "\n".join(body)
    labels = extract_numbered(body_text) if body_text.strip() else {}
    return labels, additional
