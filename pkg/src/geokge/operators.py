"""Relation projection, set intersection, and cosine scoring.

Projections are relation- and direction-specific linear maps. The block
variant acts separately on the feature and space halves of an entity
embedding; projecting a bare coordinate routes the space embedding into both
halves through a cross block. Intersection pools several candidate
embeddings for one variable into a single one, either by dot-product
attention against a per-type context vector or by elementwise minimum, each
followed by a per-type dense layer.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .errors import (
    DimensionMismatch,
    EmptyInput,
    UnsupportedMode,
    ZeroVector,
)
from .locenc import ACTIVATIONS, encode_location
from .model import (
    INTER_ATTENTION,
    PROJ_BILINEAR,
    PROJ_BLOCK,
    PROJ_DIAGONAL,
    Model,
)


def project_entity(
    model: Model, v: torch.Tensor, rel: str, direction: str
) -> torch.Tensor:
    """Predict the object embedding of pattern rel_direction(subject=v, ?)."""
    row = model.rel_row(rel, direction)
    if v.shape[-1] != model.d:
        raise DimensionMismatch(f"expected dim {model.d}, got {v.shape[-1]}")
    cfg = model.config
    if cfg.projection == PROJ_BILINEAR:
        return v @ model.params["proj/w"][row].T
    if cfg.projection == PROJ_DIAGONAL:
        return v * model.params["proj/diag"][row]
    if cfg.has_feature:
        dc = cfg.d_feat
        feat = v[..., :dc] @ model.params["proj/rc"][row].T
        space = v[..., dc:] @ model.params["proj/rx"][row].T
        return torch.cat([feat, space], dim=-1)
    return v @ model.params["proj/rx"][row].T


def project_location(
    model: Model, x: np.ndarray, rel: str, direction: str
) -> torch.Tensor:
    """Predict the object embedding of pattern rel_direction(location x, ?)."""
    row = model.rel_row(rel, direction)
    cfg = model.config
    if cfg.projection != PROJ_BLOCK:
        raise UnsupportedMode(
            f"mode {cfg.mode!r} has no location projection (needs block projections)"
        )
    s = encode_location(np.asarray(x, dtype=np.float64), model.locenc_params())
    space = s @ model.params["proj/rx"][row].T
    if not cfg.has_feature:
        return space
    feat = s @ model.params["proj/rxc"][row].T
    return torch.cat([feat, space], dim=-1)


def intersect(
    model: Model, embs: Sequence[torch.Tensor] | torch.Tensor, var_type: str
) -> torch.Tensor:
    """Pool candidate embeddings of one variable into a single embedding."""
    if isinstance(embs, torch.Tensor):
        stacked = embs if embs.dim() == 2 else embs.unsqueeze(0)
    else:
        if len(embs) == 0:
            raise EmptyInput("intersect needs at least one embedding")
        stacked = torch.stack(list(embs))
    if stacked.shape[0] == 0:
        raise EmptyInput("intersect needs at least one embedding")
    if stacked.shape[-1] != model.d:
        raise DimensionMismatch(f"expected dim {model.d}, got {stacked.shape[-1]}")
    ti = model.type_index[var_type]
    if model.config.intersection == INTER_ATTENTION:
        scores = stacked @ model.params["inter/u"][ti]
        alpha = torch.softmax(scores - scores.max(), dim=0)
        pooled = alpha @ stacked
        act = ACTIVATIONS[model.config.activation]
        return act(model.params["inter/w"][ti] @ pooled + model.params["inter/b"][ti])
    pooled = stacked.min(dim=0).values
    return model.params["inter/w"][ti] @ pooled + model.params["inter/b"][ti]


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of two vectors (scalar tensor)."""
    na, nb = a.norm(), b.norm()
    if na.item() == 0.0 or nb.item() == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return (a @ b) / (na * nb)


def cosine_scores(q: torch.Tensor, embs: torch.Tensor) -> torch.Tensor:
    """Cosine of one query vector against rows of an (n, d) matrix."""
    qn = q.norm()
    if qn.item() == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    norms = embs.norm(dim=-1)
    if (norms == 0).any().item():
        raise ZeroVector("cosine of a zero vector is undefined")
    return (embs @ q) / (norms * qn)
