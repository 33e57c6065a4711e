"""Conjunctive graph queries: representation, embedding, and answering.

A query is a DAG of basic graph patterns from anchor entities to one target
variable. Embedding walks the DAG in topological order, projecting source
embeddings along each pattern and pooling multiple predictions for the same
variable with the intersection operator. Answers are retrieved by cosine
nearest-neighbor search in entity-embedding space. `bruteforce_answers` is
the exact symbolic evaluator used as the correctness oracle.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch

from .errors import CyclicQuery, MultipleSinks, QueryError, UnknownAnchor
from .kg import FWD, INV, GeoKG
from .model import Model
from .operators import cosine_scores, intersect, project_entity, project_location

TARGET = "?target"

# edge skeletons per DAG label: (subject node, object node)
DAG_SHAPES: dict[str, tuple[tuple[str, str], ...]] = {
    "2-chain": (("a1", "?v1"), ("?v1", TARGET)),
    "2-inter": (("a1", TARGET), ("a2", TARGET)),
    "3-chain": (("a1", "?v1"), ("?v1", "?v2"), ("?v2", TARGET)),
    "3-inter": (("a1", TARGET), ("a2", TARGET), ("a3", TARGET)),
    "3-inter_chain": (("a1", "?v1"), ("?v1", TARGET), ("a2", TARGET)),
    "3-chain_inter": (("a1", "?v1"), ("a2", "?v1"), ("?v1", TARGET)),
}

HARD_DAG_TYPES = (
    "Hard-2-inter",
    "Hard-3-inter",
    "Hard-3-inter_chain",
    "Hard-3-chain_inter",
)

DAG_TYPES = (
    "2-chain",
    "2-inter",
    "Hard-2-inter",
    "3-chain",
    "3-inter",
    "Hard-3-inter",
    "3-inter_chain",
    "Hard-3-inter_chain",
    "3-chain_inter",
    "Hard-3-chain_inter",
)


def base_shape(dag_type: str) -> tuple[tuple[str, str], ...]:
    name = dag_type.removeprefix("Hard-")
    if name not in DAG_SHAPES:
        raise QueryError(f"unknown DAG type {dag_type!r}")
    return DAG_SHAPES[name]


def is_hard(dag_type: str) -> bool:
    return dag_type.startswith("Hard-")


RankedAnswers = list[tuple[str, float]]


@dataclass(frozen=True)
class ConjunctiveQuery:
    """DAG of basic graph patterns (subject, relation, direction, object).

    Objects are always variables (`?...`); subjects are anchor labels
    (`a1`, ...) resolved through `anchors` or variables. `var_types` may
    type bound variables for intersection pooling; the target's type is
    `target_type`.
    """

    dag_type: str
    target_type: str
    edges: tuple[tuple[str, str, str, str], ...]
    anchors: dict[str, str]
    var_types: dict[str, str] = field(default_factory=dict)

    @property
    def variables(self) -> set[str]:
        return {o for _, _, _, o in self.edges} | {
            s for s, _, _, _ in self.edges if s.startswith("?")
        }

    def var_type(self, node: str) -> str:
        if node == TARGET:
            return self.target_type
        return self.var_types.get(node, self.target_type)

    def validate(self) -> None:
        if not self.edges:
            raise QueryError("query has no basic graph patterns")
        nodes_out: dict[str, int] = {}
        nodes_in: dict[str, list[tuple[str, str, str]]] = {}
        for s, r, d, o in self.edges:
            if d not in (FWD, INV):
                raise QueryError(f"bad direction {d!r}")
            if not o.startswith("?"):
                raise QueryError(f"pattern object {o!r} must be a variable")
            if not s.startswith("?") and s not in self.anchors:
                raise UnknownAnchor(f"anchor label {s!r} has no bound entity")
            nodes_out[s] = nodes_out.get(s, 0) + 1
            nodes_out.setdefault(o, 0)
            nodes_in.setdefault(o, []).append((s, r, d))
        if TARGET not in nodes_out:
            raise QueryError("query has no ?target variable")
        sinks = {
            n for n, cnt in nodes_out.items() if cnt == 0 and n.startswith("?")
        }
        if sinks != {TARGET}:
            raise MultipleSinks(f"sink variables {sorted(sinks)} != ['?target']")
        self.topological_order()

    def topological_order(self) -> list[str]:
        """Kahn topological order over all nodes; raises CyclicQuery."""
        nodes = {s for s, _, _, _ in self.edges} | {o for _, _, _, o in self.edges}
        indeg = {n: 0 for n in nodes}
        succ: dict[str, list[str]] = {n: [] for n in nodes}
        for s, _, _, o in self.edges:
            indeg[o] += 1
            succ[s].append(o)
        queue = sorted(n for n, k in indeg.items() if k == 0)
        order = []
        while queue:
            n = queue.pop(0)
            order.append(n)
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
            queue.sort()
        if len(order) != len(nodes):
            raise CyclicQuery("query dependency graph has a cycle")
        return order

    # -- wire format --

    def to_json(
        self,
        answer: str | None = None,
        negatives: Sequence[str] = (),
        hard_negatives: Sequence[str] = (),
    ) -> dict:
        obj = {
            "dag": self.dag_type,
            "target_type": self.target_type,
            "edges": [list(e) for e in self.edges],
            "anchors": dict(self.anchors),
            "answer": answer,
            "negatives": list(negatives),
            "hard_negatives": list(hard_negatives),
        }
        if self.var_types:
            obj["var_types"] = dict(self.var_types)
        return obj

    @staticmethod
    def from_json(obj: dict) -> "ConjunctiveQuery":
        for key in ("dag", "target_type", "edges", "anchors"):
            if key not in obj:
                raise QueryError(f"query object missing field {key!r}")
        q = ConjunctiveQuery(
            dag_type=obj["dag"],
            target_type=obj["target_type"],
            edges=tuple(tuple(e) for e in obj["edges"]),
            anchors=dict(obj["anchors"]),
            var_types=dict(obj.get("var_types", {})),
        )
        q.validate()
        return q


def read_query_file(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_query_file(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# embedding-space inference
# ---------------------------------------------------------------------------

def embed_query(
    model: Model,
    q: ConjunctiveQuery,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> torch.Tensor:
    """Query embedding: DAG-ordered projection and intersection."""
    q.validate()
    for label, entity in q.anchors.items():
        if entity not in model.vocab.entity_types:
            raise UnknownAnchor(f"anchor {label}={entity!r} not in vocabulary")
    node_emb: dict[str, torch.Tensor] = {}
    in_edges: dict[str, list[tuple[str, str, str]]] = {}
    for s, r, d, o in q.edges:
        in_edges.setdefault(o, []).append((s, r, d))
    for node in q.topological_order():
        if not node.startswith("?"):
            node_emb[node] = model.encode_entity(
                q.anchors[node], rng, deterministic
            )
            continue
        preds = [
            project_entity(model, node_emb[s], r, d) for s, r, d in in_edges[node]
        ]
        if len(preds) == 1:
            node_emb[node] = preds[0]
        else:
            node_emb[node] = intersect(model, preds, q.var_type(node))
    return node_emb[TARGET]


def rank_entities(
    model: Model,
    target_emb: torch.Tensor,
    k: int,
    candidates: Iterable[str] | None = None,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> RankedAnswers:
    ids, embs = model.all_entity_embeddings(rng, deterministic, candidates)
    with torch.no_grad():
        scores = cosine_scores(target_emb.detach(), embs).cpu().numpy()
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[: max(k, 0)]]


def resolve_candidates(
    model: Model, candidate_filter: str | Iterable[str] | None
) -> list[str] | None:
    """None -> all entities; "geo" -> footprinted; a type id -> that type."""
    if candidate_filter is None:
        return None
    if isinstance(candidate_filter, str):
        if candidate_filter == "geo":
            return sorted(model.vocab.footprints)
        return [
            e
            for e in model.vocab.entities
            if model.vocab.entity_types[e] == candidate_filter
        ]
    return list(candidate_filter)


def answer_query(
    model: Model,
    q: ConjunctiveQuery,
    k: int,
    candidate_filter: str | Iterable[str] | None = None,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> RankedAnswers:
    """Top-k entities by cosine against the query embedding."""
    if k < 1:
        raise ValueError("k must be >= 1")
    emb = embed_query(model, q, rng, deterministic)
    return rank_entities(
        model, emb, k, resolve_candidates(model, candidate_filter), rng, deterministic
    )


def lift(
    model: Model,
    x: Sequence[float],
    rel: str,
    direction: str,
    k: int,
    candidate_filter: str | Iterable[str] | None = None,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> RankedAnswers:
    """Link a bare coordinate to entities through a relation."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not model.vocab.study_area.contains(x):
        warnings.warn(f"location {tuple(x)} outside the study area", stacklevel=2)
    emb = project_location(model, np.asarray(x, dtype=np.float64), rel, direction)
    return rank_entities(
        model, emb, k, resolve_candidates(model, candidate_filter), rng, deterministic
    )


# ---------------------------------------------------------------------------
# exact symbolic evaluation (the oracle)
# ---------------------------------------------------------------------------

def bruteforce_answers(
    kg: GeoKG, q: ConjunctiveQuery, first_only: bool = False
) -> set[str]:
    """Exact answer set by backtracking over basic graph patterns."""
    q.validate()
    assignment: dict[str, str] = dict(q.anchors)
    answers: set[str] = set()
    edges = list(q.edges)

    def backtrack(remaining: list[tuple[str, str, str, str]]) -> bool:
        if not remaining:
            answers.add(assignment[TARGET])
            return first_only
        # prefer a pattern whose subject is already bound; otherwise pick one
        # and enumerate its possible subjects (free-source sub-queries)
        for idx, (s, r, d, o) in enumerate(remaining):
            if s in assignment:
                break
        else:
            s, r, d, o = remaining[0]
            rest = remaining[1:]
            for subj in sorted(kg.subjects(r, d)):
                assignment[s] = subj
                if backtrack([(s, r, d, o)] + rest):
                    return True
                del assignment[s]
            return False
        rest = remaining[:idx] + remaining[idx + 1 :]
        subj = assignment[s]
        candidates = kg.objects(subj, r, d)
        if o in assignment:
            if assignment[o] in candidates:
                return backtrack(rest)
            return False
        for cand in sorted(candidates):
            assignment[o] = cand
            if backtrack(rest):
                return True
            del assignment[o]
        return False

    backtrack(edges)
    return answers


def answerable(kg: GeoKG, q: ConjunctiveQuery) -> bool:
    return bool(bruteforce_answers(kg, q, first_only=True))
