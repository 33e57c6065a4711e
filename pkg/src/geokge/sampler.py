"""Query-answer pair sampling, negative generation, and SSL triple sets.

Queries are sampled by reverse navigation: pick an answer entity, then walk
the DAG shape backwards through the 1-degree neighborhood, binding one edge
at a time. Training examples must be answerable on the training graph; eval
examples must be unanswerable on the training graph but answerable on the
full one. Hard negatives are entities matching at least one but not all
basic graph patterns, computed exactly with the brute-force evaluator.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyNegativePool, SamplingExhausted, UnknownEntity
from .kg import GeoKG, KGSplit, Triple
from .query import (
    DAG_TYPES,
    TARGET,
    ConjunctiveQuery,
    answerable,
    base_shape,
    bruteforce_answers,
    is_hard,
    read_query_file,
    write_query_file,
)

DEFAULT_NEGATIVE_SIZE = 10
DEFAULT_MAX_ATTEMPTS = 100

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class QAExample:
    query: ConjunctiveQuery
    answer: str
    negatives: tuple[str, ...]
    hard_negatives: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return self.query.to_json(
            answer=self.answer,
            negatives=self.negatives,
            hard_negatives=self.hard_negatives,
        )

    @staticmethod
    def from_record(rec: dict) -> "QAExample":
        return QAExample(
            query=ConjunctiveQuery.from_json(rec),
            answer=rec["answer"],
            negatives=tuple(rec.get("negatives", ())),
            hard_negatives=tuple(rec.get("hard_negatives", ())),
        )

    @property
    def eval_negatives(self) -> tuple[str, ...]:
        """The list this example is ranked against: hard when present."""
        return self.hard_negatives if self.hard_negatives else self.negatives


@dataclass(frozen=True)
class SSLDataset:
    """Triples usable for coordinate-to-entity training, by direction."""

    forward: tuple[Triple, ...]   # geographic head
    backward: tuple[Triple, ...]  # geographic tail
    relations: tuple[str, ...]    # relations of triples geographic on both ends

    def to_json(self) -> dict:
        return {
            "forward": [list(t) for t in self.forward],
            "backward": [list(t) for t in self.backward],
            "relations": list(self.relations),
        }

    @staticmethod
    def from_json(obj: dict) -> "SSLDataset":
        return SSLDataset(
            forward=tuple(tuple(t) for t in obj["forward"]),
            backward=tuple(tuple(t) for t in obj["backward"]),
            relations=tuple(obj["relations"]),
        )


def sample_neighborhood(
    kg: GeoKG, e: str, n: int, rng: np.random.Generator
) -> list[tuple[str, str, str]]:
    """Uniform sample without replacement; everything if fewer than n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nbrs = sorted(kg.neighborhood(e))
    if len(nbrs) <= n:
        return nbrs
    idx = rng.choice(len(nbrs), size=n, replace=False)
    return [nbrs[i] for i in sorted(idx)]


def _sample_shape(
    kg: GeoKG,
    dag_type: str,
    answer: str,
    rng: np.random.Generator,
) -> ConjunctiveQuery | None:
    """Bind one DAG shape by reverse navigation from the answer entity."""
    shape = base_shape(dag_type)
    binding: dict[str, str] = {TARGET: answer}
    in_edges: dict[str, list[str]] = {}
    for s, o in shape:
        in_edges.setdefault(o, []).append(s)

    edges: list[tuple[str, str, str, str]] = []
    pending = set(in_edges)
    while pending:
        # reverse-topological: an object node is processed once it is bound
        ready = sorted(n for n in pending if n in binding)
        if not ready:
            raise ValueError(f"shape for {dag_type} is not target-connected")
        obj = ready[0]
        pending.remove(obj)
        subs = in_edges[obj]
        nbrs = sorted(kg.neighborhood(binding[obj]))
        if len(nbrs) < len(subs):
            return None
        picks = rng.choice(len(nbrs), size=len(subs), replace=False)
        for sub, pick in zip(subs, picks):
            r, d, neighbor = nbrs[pick]
            binding[sub] = neighbor
            edges.append((sub, r, d, obj))
    anchors = {n: binding[n] for n in binding if not n.startswith("?")}
    var_types = {
        n: kg.entity_type(binding[n])
        for n in binding
        if n.startswith("?") and n != TARGET
    }
    ordered = sorted(edges, key=lambda e: (e[3], e[0]))
    return ConjunctiveQuery(
        dag_type=dag_type,
        target_type=kg.entity_type(answer),
        edges=tuple(ordered),
        anchors=anchors,
        var_types=var_types,
    )


def sample_query(
    kg_train: GeoKG,
    kg_full: GeoKG,
    dag_type: str,
    geo_only: bool,
    split: str,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[ConjunctiveQuery, str]:
    """One query-answer pair honoring the split answerability contract."""
    if split not in ("train", "eval"):
        raise ValueError("split must be 'train' or 'eval'")
    nav = kg_train if split == "train" else kg_full
    if geo_only:
        pool = sorted(set(nav.footprints) & {e for e, _ in _ent_with_edges(nav)})
    else:
        pool = sorted(e for e, _ in _ent_with_edges(nav))
    if not pool:
        raise SamplingExhausted(f"no candidate answers for {dag_type} ({split})")
    for _ in range(max_attempts):
        answer = pool[rng.integers(len(pool))]
        q = _sample_shape(nav, dag_type, answer, rng)
        if q is None:
            continue
        if split == "train":
            if answerable(kg_train, q):
                return q, answer
        else:
            if not answerable(kg_train, q) and answerable(kg_full, q):
                return q, answer
    raise SamplingExhausted(f"no {split} query found for {dag_type}")


def _ent_with_edges(kg: GeoKG) -> Iterable[tuple[str, int]]:
    seen: dict[str, int] = {}
    for h, _, t in kg.triples:
        seen[h] = seen.get(h, 0) + 1
        seen[t] = seen.get(t, 0) + 1
    return seen.items()


# ---------------------------------------------------------------------------
# negatives
# ---------------------------------------------------------------------------

def hard_negative_pool(kg: GeoKG, q: ConjunctiveQuery) -> set[str]:
    """Entities matching >= 1 but not all basic graph patterns.

    Enumerates every proper nonempty pattern subset, restricted to the
    connected sub-query that still reaches the target, and unions their
    exact answer sets before removing full answers.
    """
    full = bruteforce_answers(kg, q)
    edges = list(q.edges)
    n = len(edges)
    pool: set[str] = set()
    seen_components: set[frozenset] = set()
    for mask in range(1, 2**n - 1):
        subset = [edges[i] for i in range(n) if mask & (1 << i)]
        component = _target_component(subset)
        if not component:
            continue
        key = frozenset(component)
        if key in seen_components:
            continue
        seen_components.add(key)
        sub_q = ConjunctiveQuery(
            dag_type=q.dag_type,
            target_type=q.target_type,
            edges=tuple(component),
            anchors={s: q.anchors[s] for s, _, _, _ in component if s in q.anchors},
            var_types=dict(q.var_types),
        )
        pool |= bruteforce_answers(kg, sub_q)
    return pool - full


def _target_component(
    edges: Sequence[tuple[str, str, str, str]]
) -> list[tuple[str, str, str, str]]:
    """Edges with a directed path into the target within this subset."""
    reach = {TARGET}
    component: list = []
    changed = True
    remaining = list(edges)
    while changed:
        changed = False
        for e in list(remaining):
            if e[3] in reach:
                reach.add(e[0])
                component.append(e)
                remaining.remove(e)
                changed = True
    return component


def sample_negatives(
    kg_full: GeoKG,
    query: ConjunctiveQuery,
    answer: str,
    mode: str,
    size: int,
    rng: np.random.Generator,
) -> list[str]:
    """Type-matched or hard negatives; whole pool if smaller than size."""
    if answer not in kg_full.entities:
        raise UnknownEntity(answer)
    if mode == "type-matched":
        c = kg_full.entity_type(answer)
        pool = sorted(e for e in kg_full.entities_of_type(c) if e != answer)
    elif mode == "hard":
        pool = sorted(hard_negative_pool(kg_full, query))
    else:
        raise ValueError(f"unknown negative mode {mode!r}")
    if not pool:
        raise EmptyNegativePool(f"no {mode} negatives for answer {answer!r}")
    if len(pool) <= size:
        return pool
    idx = rng.choice(len(pool), size=size, replace=False)
    return [pool[i] for i in idx]


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

def sample_example(
    kg_train: GeoKG,
    kg_full: GeoKG,
    dag_type: str,
    geo_only: bool,
    split: str,
    rng: np.random.Generator,
    neg_size: int = DEFAULT_NEGATIVE_SIZE,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> QAExample:
    """Query plus negatives, retrying until the negative pools are usable."""
    for _ in range(max_attempts):
        q, answer = sample_query(
            kg_train, kg_full, dag_type, geo_only, split, rng, max_attempts
        )
        try:
            negatives = sample_negatives(
                kg_full, q, answer, "type-matched", neg_size, rng
            )
            hard: list[str] = []
            if is_hard(dag_type):
                hard = sample_negatives(kg_full, q, answer, "hard", neg_size, rng)
        except EmptyNegativePool:
            continue
        return QAExample(
            query=q,
            answer=answer,
            negatives=tuple(negatives),
            hard_negatives=tuple(hard),
        )
    raise SamplingExhausted(f"negative pools kept collapsing for {dag_type} ({split})")


@dataclass(frozen=True)
class QADatasetConfig:
    per_dag: dict[str, int] = field(
        default_factory=lambda: {"train": 10, "valid": 2, "test": 2}
    )
    dag_types: tuple[str, ...] = DAG_TYPES
    geo_only: bool = True
    neg_size: int = DEFAULT_NEGATIVE_SIZE
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def to_json(self) -> dict:
        return {
            "per_dag": dict(self.per_dag),
            "dag_types": list(self.dag_types),
            "geo_only": self.geo_only,
            "neg_size": self.neg_size,
            "max_attempts": self.max_attempts,
        }


def config_hash(obj: dict) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def build_qa_dataset(
    split: KGSplit,
    config: QADatasetConfig,
    seed: int,
) -> dict[str, list[QAExample]]:
    """Per-split example lists; deterministic given (kg, config, seed)."""
    kg_train = split.train
    kg_full = split.full
    out: dict[str, list[QAExample]] = {s: [] for s in SPLITS}
    for split_idx, split_name in enumerate(SPLITS):
        count = config.per_dag.get(split_name, 0)
        contract = "train" if split_name == "train" else "eval"
        for dag_idx, dag_type in enumerate(config.dag_types):
            rng = np.random.default_rng([seed, split_idx, dag_idx])
            for _ in range(count):
                try:
                    out[split_name].append(
                        sample_example(
                            kg_train,
                            kg_full,
                            dag_type,
                            config.geo_only,
                            contract,
                            rng,
                            config.neg_size,
                            config.max_attempts,
                        )
                    )
                except SamplingExhausted as exc:
                    raise SamplingExhausted(
                        f"{dag_type} ({split_name}): {exc}"
                    ) from None
    return out


def write_qa_dataset(
    datasets: dict[str, list[QAExample]],
    config: QADatasetConfig,
    seed: int,
    out_dir: str | Path,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts: dict[str, dict[str, int]] = {}
    for split_name, examples in datasets.items():
        write_query_file(
            out / f"{split_name}.jsonl", (ex.to_record() for ex in examples)
        )
        per_dag: dict[str, int] = {}
        for ex in examples:
            per_dag[ex.query.dag_type] = per_dag.get(ex.query.dag_type, 0) + 1
        counts[split_name] = per_dag
    manifest = {
        "seed": seed,
        "config": config.to_json(),
        "config_hash": config_hash(config.to_json()),
        "counts": counts,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_qa_dataset(qa_dir: str | Path) -> dict[str, list[QAExample]]:
    out: dict[str, list[QAExample]] = {}
    for split_name in SPLITS:
        path = Path(qa_dir) / f"{split_name}.jsonl"
        if path.exists():
            out[split_name] = [
                QAExample.from_record(rec) for rec in read_query_file(path)
            ]
    return out


# ---------------------------------------------------------------------------
# spatial-semantic-lifting triples
# ---------------------------------------------------------------------------

def build_ssl_dataset(triples: Sequence[Triple], kg: GeoKG) -> SSLDataset:
    geo = kg.geo_entities
    forward = tuple(t for t in triples if t[0] in geo)
    backward = tuple(t for t in triples if t[2] in geo)
    relations = tuple(sorted({r for h, r, t in triples if h in geo and t in geo}))
    return SSLDataset(forward=forward, backward=backward, relations=relations)


def build_ssl_datasets(split: KGSplit) -> dict[str, SSLDataset]:
    kg = split.train
    return {
        "train": build_ssl_dataset(split.train.triples, kg),
        "valid": build_ssl_dataset(split.valid_triples, kg),
        "test": build_ssl_dataset(split.test_triples, kg),
    }


def write_ssl_datasets(datasets: dict[str, SSLDataset], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split_name, ds in datasets.items():
        (out / f"ssl_{split_name}.json").write_text(json.dumps(ds.to_json()))


def read_ssl_datasets(ssl_dir: str | Path) -> dict[str, SSLDataset]:
    out = {}
    for split_name in SPLITS:
        path = Path(ssl_dir) / f"ssl_{split_name}.json"
        if path.exists():
            out[split_name] = SSLDataset.from_json(json.loads(path.read_text()))
    return out
