"""Max-margin losses for KG-structure, query-answer, link-prediction, and
coordinate-to-entity training.

Every loss has the same hinge shape: sum over items and negatives of
max(0, margin - cos(pred, positive) + cos(pred, negative)). Items carry
their negatives; all stochastic footprint draws come from the caller's rng
so a loss value is reproducible given (parameters, batch, rng state).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .errors import DimensionMismatch
from .kg import FWD, INV
from .model import Model
from .operators import cosine_scores, project_entity, project_location
from .query import ConjunctiveQuery, TARGET, embed_query
from .sampler import QAExample


@dataclass(frozen=True)
class KGItem:
    """An entity, a sampled slice of its neighborhood, and its negatives."""

    entity: str
    neighbors: tuple[tuple[str, str, str], ...]  # (relation, direction, neighbor)
    negatives: tuple[str, ...]


@dataclass(frozen=True)
class LPItem:
    head: str
    rel: str
    tail: str
    neg_tails: tuple[str, ...]
    neg_heads: tuple[str, ...]


@dataclass(frozen=True)
class SSLItem:
    """One directed coordinate-to-entity prediction task."""

    subject: str  # geographic entity whose footprint is the input
    rel: str
    direction: str  # fwd: predict tail from head location; inv: the reverse
    target: str
    negatives: tuple[str, ...]


def _hinge(
    model: Model,
    pred: torch.Tensor,
    positive: str,
    negatives: Sequence[str],
    margin: float,
    rng: np.random.Generator | None,
    deterministic: bool,
) -> torch.Tensor:
    if not negatives:
        raise ValueError("hinge needs at least one negative")
    embs = model.encode_entities([positive, *negatives], rng, deterministic)
    scores = cosine_scores(pred, embs)
    return torch.clamp(margin - scores[0] + scores[1:], min=0).sum()


def neighborhood_query(model: Model, item: KGItem) -> ConjunctiveQuery:
    """The sampled neighborhood viewed as a star-shaped query on the entity."""
    anchors = {}
    edges = []
    for i, (r, d, n) in enumerate(item.neighbors):
        label = f"a{i + 1}"
        anchors[label] = n
        edges.append((label, r, d, TARGET))
    return ConjunctiveQuery(
        dag_type=f"{len(edges)}-inter" if len(edges) > 1 else "1-edge",
        target_type=model.vocab.type_of(item.entity),
        edges=tuple(edges),
        anchors=anchors,
    )


def loss_kg(
    model: Model,
    batch: Sequence[KGItem],
    margin: float,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> torch.Tensor:
    """Reconstruct each entity from its sampled neighborhood, max-margin."""
    total = torch.zeros((), dtype=model.dtype)
    for item in batch:
        if not item.neighbors:
            raise ValueError(f"entity {item.entity} has an empty neighborhood slice")
        pred = embed_query(model, neighborhood_query(model, item), rng, deterministic)
        total = total + _hinge(
            model, pred, item.entity, item.negatives, margin, rng, deterministic
        )
    return total


def loss_qa(
    model: Model,
    batch: Sequence[QAExample],
    margin: float,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> torch.Tensor:
    """Rank the recorded answer above the example's negatives."""
    total = torch.zeros((), dtype=model.dtype)
    for ex in batch:
        pred = embed_query(model, ex.query, rng, deterministic)
        if pred.shape[-1] != model.d:
            raise DimensionMismatch(f"query embedding dim {pred.shape[-1]}")
        total = total + _hinge(
            model, pred, ex.answer, ex.eval_negatives, margin, rng, deterministic
        )
    return total


def loss_lp(
    model: Model,
    batch: Sequence[LPItem],
    margin: float,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> torch.Tensor:
    """Both-direction link prediction with type-matched negatives."""
    total = torch.zeros((), dtype=model.dtype)
    for item in batch:
        h_emb = model.encode_entity(item.head, rng, deterministic)
        pred_t = project_entity(model, h_emb, item.rel, FWD)
        total = total + _hinge(
            model, pred_t, item.tail, item.neg_tails, margin, rng, deterministic
        )
        t_emb = model.encode_entity(item.tail, rng, deterministic)
        pred_h = project_entity(model, t_emb, item.rel, INV)
        total = total + _hinge(
            model, pred_h, item.head, item.neg_heads, margin, rng, deterministic
        )
    return total


def loss_ssl(
    model: Model,
    batch: Sequence[SSLItem],
    margin: float,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> torch.Tensor:
    """Predict the linked entity from a bare footprint coordinate."""
    total = torch.zeros((), dtype=model.dtype)
    for item in batch:
        x = model.footprint_point(item.subject, rng, centroid=deterministic)
        pred = project_location(model, x, item.rel, item.direction)
        total = total + _hinge(
            model, pred, item.target, item.negatives, margin, rng, deterministic
        )
    return total


LOSSES = {
    "kg": loss_kg,
    "qa": loss_qa,
    "lp": loss_lp,
    "ssl": loss_ssl,
}
