"""Train/dev/test splits with a guaranteed share of unseen test concepts.

Training sets follow an exponential size schedule (``200 * 2**k``) that
always contains a fixed core of passages whose concept distribution is
closest to the dev set. By default the schedule is nested, so each larger
training set extends the smaller ones.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import AnnotatedPassage

__all__ = [
    "InfeasibleSplitError",
    "Split",
    "SplitSpec",
    "enforce_unseen",
    "exponential_sizes",
    "make_split",
    "read_manifest",
    "sample_schedule",
    "select_core",
    "write_manifest",
]


class InfeasibleSplitError(ValueError):
    def __init__(self, message: str, achievable: int):
        super().__init__(message)
        self.achievable = achievable


def exponential_sizes(k_max: int = 7, base: int = 200) -> list[int]:
    return [base * 2**k for k in range(k_max + 1)]


@dataclass(frozen=True)
class SplitSpec:
    sizes: tuple[int, ...] = tuple(exponential_sizes())
    min_unseen_ratio: float = 0.30
    core_count: int = 100
    seed: int = 0
    nested: bool = True

    def __post_init__(self):
        sizes = tuple(self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] <= 0:
            raise ValueError("sizes must be positive and strictly increasing")
        if not 0.0 <= self.min_unseen_ratio <= 1.0:
            raise ValueError("min_unseen_ratio must lie in [0, 1]")
        if not 0 <= self.core_count <= sizes[0]:
            raise ValueError("core_count must not exceed the smallest size")


@dataclass
class Split:
    schedule: dict[int, list[str]]
    dev_ids: list[str]
    test_ids: list[str]
    unseen_concepts: set[str]
    core_ids: list[str] = field(default_factory=list)
    spec: SplitSpec = field(default_factory=SplitSpec)

    @property
    def train_ids(self) -> list[str]:
        return self.schedule[max(self.schedule)]


def _concepts(passages: Iterable[AnnotatedPassage]) -> set[str]:
    out: set[str] = set()
    for p in passages:
        out |= p.gold
    return out


def _unseen_ratio(pool: Sequence[AnnotatedPassage], test_concepts: set[str]) -> tuple[set[str], float]:
    unseen = test_concepts - _concepts(pool)
    return unseen, len(unseen) / len(test_concepts)


def enforce_unseen(pool: Sequence[AnnotatedPassage], test: Sequence[AnnotatedPassage],
                   spec: SplitSpec) -> tuple[list[AnnotatedPassage], set[str]]:
    """Drop pool passages until enough test concept types are unseen.

    Target concepts are taken rarest-first (by pool frequency; ties shuffled
    with the spec seed), and every pool passage mentioning a target goes.
    """
    test_concepts = _concepts(test)
    if not test_concepts:
        raise ValueError("test set has no gold concepts")
    needed = math.ceil(spec.min_unseen_ratio * len(test_concepts) - 1e-12)
    freq = Counter(c for p in pool for c in p.gold)
    candidates = sorted(c for c in test_concepts if freq[c])
    random.Random(spec.seed).shuffle(candidates)
    candidates.sort(key=lambda c: freq[c])

    kept = list(pool)
    unseen, _ = _unseen_ratio(kept, test_concepts)
    for c in candidates:
        if len(unseen) >= needed:
            break
        if c in unseen:
            continue
        kept = [p for p in kept if c not in p.gold]
        unseen, _ = _unseen_ratio(kept, test_concepts)
    if len(kept) < spec.sizes[-1]:
        raise InfeasibleSplitError(
            f"only {len(kept)} training passages remain after holding out "
            f"{len(unseen)}/{len(test_concepts)} test concepts; largest size is {spec.sizes[-1]}",
            achievable=len(kept))
    return kept, unseen


def select_core(pool: Sequence[AnnotatedPassage], dev: Sequence[AnnotatedPassage],
                k: int) -> list[str]:
    """Ids of the ``k`` pool passages most similar to the dev concept distribution.

    Similarity is the cosine between a passage's concept indicator vector
    and the dev concept frequency vector.
    """
    if k > len(pool):
        raise ValueError(f"cannot pick {k} core passages from a pool of {len(pool)}")
    freq = Counter(c for p in dev for c in p.gold)
    norm = math.sqrt(sum(v * v for v in freq.values()))

    def score(p: AnnotatedPassage) -> float:
        if not p.gold or not norm:
            return 0.0
        return sum(freq[c] for c in p.gold) / (math.sqrt(len(p.gold)) * norm)

    ranked = sorted(pool, key=lambda p: (-score(p), p.id))
    return [p.id for p in ranked[:k]]


def sample_schedule(pool: Sequence[AnnotatedPassage], core_ids: Sequence[str],
                    spec: SplitSpec) -> dict[int, list[str]]:
    """Training ids per size: the core plus seeded uniform samples of the rest."""
    if spec.sizes[-1] > len(pool):
        raise ValueError(f"size {spec.sizes[-1]} exceeds pool of {len(pool)} passages")
    core = list(core_ids)
    core_set = set(core)
    rest = sorted(p.id for p in pool if p.id not in core_set)
    rng = random.Random(spec.seed)
    schedule = {}
    if spec.nested:
        rng.shuffle(rest)
        for m in spec.sizes:
            schedule[m] = core + rest[:m - len(core)]
    else:
        for m in spec.sizes:
            schedule[m] = core + rng.sample(rest, m - len(core))
    return schedule


def make_split(corpus: Sequence[AnnotatedPassage], spec: SplitSpec,
               test_ids: Sequence[str] | None = None, dev_ids: Sequence[str] | None = None,
               test_fraction: float = 0.2, dev_fraction: float = 0.1) -> Split:
    """Carve dev/test (unless given), hold out unseen concepts, pick the core, sample sizes."""
    by_id = {p.id: p for p in corpus}
    ids = sorted(by_id)
    if test_ids is None or dev_ids is None:
        shuffled = ids[:]
        random.Random(spec.seed).shuffle(shuffled)
        n_test = max(1, round(test_fraction * len(ids)))
        n_dev = max(1, round(dev_fraction * len(ids)))
        test_ids = sorted(shuffled[:n_test]) if test_ids is None else list(test_ids)
        taken = set(test_ids)
        rest = [i for i in shuffled if i not in taken]
        dev_ids = sorted(rest[:n_dev]) if dev_ids is None else list(dev_ids)
    held = set(test_ids) | set(dev_ids)
    if set(test_ids) & set(dev_ids):
        raise ValueError("dev and test overlap")
    test = [by_id[i] for i in test_ids]
    dev = [by_id[i] for i in dev_ids]
    pool = [by_id[i] for i in ids if i not in held]
    pool, unseen = enforce_unseen(pool, test, spec)
    core = select_core(pool, dev, spec.core_count)
    schedule = sample_schedule(pool, core, spec)
    return Split(schedule, sorted(dev_ids), sorted(test_ids), unseen, core, spec)


def write_manifest(split: Split, path: str | Path) -> None:
    spec = asdict(split.spec)
    spec["sizes"] = list(spec["sizes"])
    doc = {
        "spec": spec,
        "unseen_concepts": sorted(split.unseen_concepts),
        "core": list(split.core_ids),
        "schedule": {str(m): ids for m, ids in sorted(split.schedule.items())},
        "dev": split.dev_ids,
        "test": split.test_ids,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> Split:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = SplitSpec(**{**doc["spec"], "sizes": tuple(doc["spec"]["sizes"])})
    return Split(
        schedule={int(m): ids for m, ids in doc["schedule"].items()},
        dev_ids=doc["dev"], test_ids=doc["test"],
        unseen_concepts=set(doc["unseen_concepts"]),
        core_ids=doc.get("core", []), spec=spec)
