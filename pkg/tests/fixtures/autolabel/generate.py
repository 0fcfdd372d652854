"""Regenerate the recorded auto-labeling fixture in this directory.

A scripted stand-in for the chat model answers every pipeline prompt with
decisions derived from the passage's gold set, plus a seeded amount of
noise, and the pipeline runs once in ``record`` mode so its responses land
in ``cache/``. Tests then replay that cache without any model.

Run from the repository root:  python tests/fixtures/autolabel/generate.py
Rerun it whenever a prompt template changes, because cache keys cover the
rendered prompts.
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
import sys
from pathlib import Path

import numpy as np

from conceptbench.autolabel import (
    CachedClient,
    LlmRequest,
    LlmResponse,
    PipelineConfig,
    PrecomputedNameVectors,
    run_pipeline,
    write_outputs,
)
from conceptbench.corpus import AnnotatedPassage, write_corpus
from conceptbench.embeddings import write_names, write_vectors
from conceptbench.ontology import write_ontology
from conceptbench.synthetic import random_ontology, random_store

HERE = Path(__file__).resolve().parent
N_PASSAGES = 20
GUIDELINE = (
    "Annotate phenotypes that the passage attributes to the studied subjects. "
    "Do not annotate findings that are only mentioned as background, excluded "
    "by a test, or reported for a comparison group."
)
_CAND = re.compile(r"^(\d+)\. .* \((\S+)\)$")


def _u(*parts: object) -> float:
    """Deterministic uniform draw keyed by its arguments (thread-order independent)."""
    h = hashlib.sha256("|".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


class ScriptedModel:
    """Answers pipeline prompts from a per-passage script."""

    def __init__(self, scripts: dict[str, dict], names_of: dict[str, str]):
        self.scripts = scripts
        self.by_text = {s["text"]: pid for pid, s in scripts.items()}
        self.by_claim = {c: (pid, i) for pid, s in scripts.items() for i, c in enumerate(s["claims"])}
        self.names_of = names_of
        self.repairs: dict[str, str] = {}
        self.calls = 0

    def _passage(self, prompt: str) -> str:
        for text, pid in self.by_text.items():
            if text in prompt:
                return pid
        raise KeyError("prompt mentions no known passage")

    @staticmethod
    def _candidates(prompt: str) -> list[str]:
        return [m.group(2) for line in prompt.splitlines() if (m := _CAND.match(line.strip()))]

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.calls += 1
        prompt = request.user_prompt
        if prompt.startswith("The text below was meant to follow"):
            raw = prompt.split("Text:\n", 1)[1].strip()
            return LlmResponse(self.repairs.get(raw, raw))
        if "List the" in prompt and "Claim:" in prompt:
            claim = prompt.split("Claim:\n", 1)[1].split("\n\n", 1)[0].strip()
            pid, i = self.by_claim[claim]
            return LlmResponse(json.dumps(self.scripts[pid]["names"][i]))
        if "Read the passage below" in prompt:
            pid = self._passage(prompt)
            return LlmResponse(json.dumps(self.scripts[pid]["claims"]))
        pid = self._passage(prompt)
        s = self.scripts[pid]
        gold = set(s["gold"])
        cands = self._candidates(prompt)
        if "how it relates to the passage" in prompt:
            lines = []
            for n, c in enumerate(cands, 1):
                u = _u(pid, c, "classify")
                if c in gold:
                    label = "Not Relevant" if u < 0.15 else ("Explicit" if u < 0.7 else "Logically Implicit")
                else:
                    label = "Not Relevant" if u < 0.65 else "Pragmatically Implicit"
                lines.append(f"{n}: {label}")
            text = "\n".join(lines)
            if s.get("garbled_classify"):
                # prose first; the pipeline has to ask for a reformat
                prose = "Going through them in order: " + ", ".join(
                    f"candidate {n} looks {line.split(': ')[1].lower()}" for n, line in enumerate(lines, 1))
                self.repairs[prose] = text
                return LlmResponse(prose)
            return LlmResponse(text)
        if "Review the annotation" in prompt:
            lines = []
            for n, c in enumerate(cands, 1):
                u = _u(pid, c, "relabel")
                if c in gold:
                    label = "explicit" if u < 0.8 else "implicit"
                else:
                    label = "incorrect" if u < 0.5 else "implicit"
                lines.append(f"{n}: {label}")
            extra = [self.names_of[g] for g in sorted(gold - set(cands)) if _u(pid, g, "add") < 0.6]
            extra += s.get("unmatched_additions", [])
            lines.append("ADDITIONAL: " + ("; ".join(extra) if extra else "none"))
            return LlmResponse("\n".join(lines))
        if "Annotation guideline summary" in prompt:
            lines = []
            for n, c in enumerate(cands, 1):
                u = _u(pid, c, "guideline")
                valid = u >= 0.05 if c in gold else u >= 0.6
                lines.append(f"{n}: {'valid' if valid else 'invalid'}")
            return LlmResponse("\n".join(lines))
        if "Rate how well the annotation" in prompt:
            return LlmResponse(s["quality"])
        raise KeyError("unrecognized prompt")


def build_inputs(out: Path) -> tuple[dict[str, dict], dict]:
    o = random_ontology(60, seed=7, multi_parent=0.15)
    store = random_store(o, dim=16, seed=7)
    write_ontology(o, out / "ontology.jsonl")
    write_vectors(out / "vectors.bin", store.matrix)
    write_names(out / "names.tsv", store.records)
    (out / "guideline.txt").write_text(GUIDELINE + "\n", encoding="utf-8")

    rng = np.random.default_rng(7)
    ids = o.active_ids()[1:]  # the root is too generic to annotate
    name_texts: list[str] = []
    name_vecs: list[np.ndarray] = []

    def add_name(text: str, vec: np.ndarray) -> None:
        if text not in name_texts:
            name_texts.append(text)
            name_vecs.append(vec.astype(np.float32))

    def near(row: int, scale: float = 0.02) -> np.ndarray:
        return store.matrix[row] + scale * rng.normal(size=store.dim)

    def far() -> np.ndarray:
        while True:
            v = rng.normal(size=store.dim)
            if (store.unit @ (v / np.linalg.norm(v))).max() < 0.45:
                return v

    rows = store.preferred_rows()
    synonym_rows = {}
    for r in store.records:
        if not r.preferred:
            synonym_rows.setdefault(r.concept, []).append(r)
    names_of = {c: o[c].preferred_name for c in ids}
    for c in ids:
        add_name(names_of[c], near(rows[c]))

    scripts: dict[str, dict] = {}
    passages = []
    for i in range(N_PASSAGES):
        pid = f"fx{i:02d}"
        gold = sorted(rng.choice(ids, size=int(rng.integers(2, 5)), replace=False).tolist())
        text = (f"Case series {pid}. The patients presented with "
                + ", ".join(o[g].preferred_name for g in gold)
                + ". Background review also discussed related disorders.")
        # names generated per claim: most gold concepts, some distractors, one unmatched name
        said = []
        for g in gold:
            if _u(pid, g, "pcc") < 0.85:
                syns = synonym_rows.get(g)
                if syns and _u(pid, g, "syn") < 0.35:
                    said.append(syns[0].text)
                    add_name(syns[0].text, store.matrix[syns[0].row])
                else:
                    said.append(names_of[g])
        pool = [c for c in ids if c not in gold]
        for d in rng.choice(pool, size=int(rng.integers(3, 6)), replace=False).tolist():
            said.append(names_of[d])
        vague = f"nonspecific finding {pid}"
        add_name(vague, far())
        said.append(vague)
        half = (len(said) + 1) // 2
        claims = [f"{pid}: the reported subjects show the first group of findings.",
                  f"{pid}: further findings are reported alongside."]
        script = {
            "text": text, "gold": gold, "claims": claims,
            "names": [said[:half], said[half:]],
            "quality": "Quality: Good" if i % 7 != 3 else "Quality: Poor",
        }
        if i == 5:
            script["garbled_classify"] = True
        if i == 11:
            script["quality"] = "The annotation looks reasonable overall."
        if i in (2, 9):
            extra = f"unlisted phenotype {pid}"
            add_name(extra, far())
            script["unmatched_additions"] = [extra]
        scripts[pid] = script
        passages.append(AnnotatedPassage(pid, text, frozenset(gold)))

    write_corpus(passages, out / "passages.jsonl")
    write_vectors(out / "name_vectors.bin", np.asarray(name_vecs))
    (out / "name_texts.txt").write_text("\n".join(name_texts) + "\n", encoding="utf-8")
    return scripts, names_of


def generate(out: Path = HERE) -> None:
    from conceptbench.corpus import read_corpus
    from conceptbench.embeddings import load_embeddings

    out.mkdir(parents=True, exist_ok=True)
    scripts, names_of = build_inputs(out)
    cache = out / "cache"
    if cache.exists():
        shutil.rmtree(cache)
    model = ScriptedModel(scripts, names_of)
    client = CachedClient(cache, "record", model)
    cfg = PipelineConfig(guideline_summary=GUIDELINE, max_concurrency=1)
    store = load_embeddings(out / "vectors.bin", out / "names.tsv")
    embedder = PrecomputedNameVectors.from_files(out / "name_vectors.bin", out / "name_texts.txt")
    records = run_pipeline(read_corpus(out / "passages.jsonl"), cfg, client, store, embedder)
    write_outputs(records, out / "expected_dataset.jsonl", out / "expected_stages.jsonl")
    print(f"recorded {model.calls} responses into {cache}", file=sys.stderr)


if __name__ == "__main__":
    generate(Path(sys.argv[1]) if len(sys.argv) > 1 else HERE)
