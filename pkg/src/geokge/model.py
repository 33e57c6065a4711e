"""Model parameters and entity encoding.

An entity embedding is the concatenation of a type-specific feature embedding
(L2-normalized column lookup) and a space embedding: the location encoder
applied to the entity's footprint for geographic entities (a fresh uniform
draw inside the bounding box for large features), or a learned normalized
lookup for non-geographic ones.

Ablation modes drop one half or swap operator variants:

    gqe-diag / gqe   feature encoder only, single bilinear (diagonal / dense)
                     projection over d = d_feat, min-ffn intersection
    cga              feature encoder only, dense projection, attention
    se-kge-direct    feature + space, single-scale direct location encoder,
                     points only
    se-kge-pt        feature + space, multi-scale encoder, points only
    se-kge-space     space half only (no feature parameters), box sampling
    se-kge-full      feature + space, multi-scale encoder, box sampling
    se-kge-ssl       identical structure to se-kge-full (training differs)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import torch

from .errors import NotGeographic, UnknownEntity, UnknownRelation
from .kg import FWD, INV, Footprint, GeoKG, StudyArea
from .locenc import (
    DIRECT,
    MULTISCALE,
    LocEncParams,
    direction_vectors,
    encode_location,
    init_locenc_weights,
    make_schedule,
    pe_dim,
)

MODES = (
    "gqe-diag",
    "gqe",
    "cga",
    "se-kge-direct",
    "se-kge-pt",
    "se-kge-space",
    "se-kge-full",
    "se-kge-ssl",
)

PROJ_BLOCK = "se-kge-block"
PROJ_BILINEAR = "gqe-bilinear"
PROJ_DIAGONAL = "gqe-diagonal"

INTER_ATTENTION = "attention"
INTER_MIN_FFN = "min-ffn"


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "se-kge-full"
    d_feat: int = 64
    d_space: int = 64
    n_scales: int = 16
    lambda_min: float = 50.0
    lambda_max: float = 5_400_000.0
    n_directions: int = 3
    # None: per-mode defaults (space-only models favor leaky-relu with an
    # L2-normalized location embedding; full models sigmoid, unnormalized)
    activation: str | None = None
    normalize_location: bool | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.d_feat <= 0 or self.d_space <= 0:
            raise ValueError("embedding dims must be positive")
        space_only = self.mode == "se-kge-space"
        if self.activation is None:
            object.__setattr__(
                self, "activation", "leaky-relu" if space_only else "sigmoid"
            )
        if self.normalize_location is None:
            object.__setattr__(self, "normalize_location", space_only)

    @property
    def has_feature(self) -> bool:
        return self.mode != "se-kge-space"

    @property
    def has_space(self) -> bool:
        return self.mode not in ("gqe", "gqe-diag", "cga")

    @property
    def d(self) -> int:
        return (self.d_feat if self.has_feature else 0) + (
            self.d_space if self.has_space else 0
        )

    @property
    def locenc_kind(self) -> str:
        return DIRECT if self.mode == "se-kge-direct" else MULTISCALE

    @property
    def box_sampling(self) -> bool:
        return self.mode in ("se-kge-full", "se-kge-ssl", "se-kge-space")

    @property
    def projection(self) -> str:
        if self.mode == "gqe-diag":
            return PROJ_DIAGONAL
        if self.mode in ("gqe", "cga"):
            return PROJ_BILINEAR
        return PROJ_BLOCK

    @property
    def intersection(self) -> str:
        return INTER_MIN_FFN if self.mode in ("gqe", "gqe-diag") else INTER_ATTENTION

    @property
    def uses_kg_objective(self) -> bool:
        return self.mode not in ("gqe", "gqe-diag")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "d_feat": self.d_feat,
            "d_space": self.d_space,
            "n_scales": self.n_scales,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "n_directions": self.n_directions,
            "activation": self.activation,
            "normalize_location": self.normalize_location,
        }

    @staticmethod
    def from_json(obj: dict) -> "ModelConfig":
        return ModelConfig(**obj)


@dataclass(frozen=True)
class Vocabulary:
    """Frozen entity/relation/type inventory plus footprints and study area."""

    entities: tuple[str, ...]
    entity_types: dict[str, str]
    footprints: dict[str, Footprint]
    relations: tuple[str, ...]
    types: tuple[str, ...]
    study_area: StudyArea

    @staticmethod
    def from_kg(kg: GeoKG) -> "Vocabulary":
        return Vocabulary(
            entities=tuple(sorted(kg.entities)),
            entity_types=dict(kg.entities),
            footprints=dict(kg.footprints),
            relations=tuple(sorted(kg.relations)),
            types=tuple(sorted(set(kg.entities.values()))),
            study_area=kg.study_area,
        )

    def type_of(self, e: str) -> str:
        try:
            return self.entity_types[e]
        except KeyError:
            raise UnknownEntity(e) from None


class Model:
    """All trainable tensors plus the vocabulary they are indexed by.

    Parameters live in an ordered name -> tensor dict (`params`); every
    tensor has requires_grad=True. Construction is deterministic given the
    seed; all stochastic encoding draws come from caller-supplied numpy
    generators.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        config: ModelConfig,
        params: dict[str, torch.Tensor],
        dtype: torch.dtype = torch.float32,
        seed: int = 0,
        config_hash: str = "",
        liftable_relations: tuple[str, ...] | None = None,
    ):
        self.vocab = vocab
        self.config = config
        self.params = params
        self.dtype = dtype
        self.seed = seed
        self.config_hash = config_hash
        self.liftable_relations = liftable_relations
        self._build_indexes()
        self._locenc_cache: LocEncParams | None = None

    # -- construction --

    @staticmethod
    def create(
        kg_or_vocab: GeoKG | Vocabulary,
        config: ModelConfig,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> "Model":
        vocab = (
            kg_or_vocab
            if isinstance(kg_or_vocab, Vocabulary)
            else Vocabulary.from_kg(kg_or_vocab)
        )
        rng = np.random.default_rng(seed)
        params: dict[str, torch.Tensor] = {}

        def uniform(shape, scale):
            return torch.tensor(rng.uniform(-scale, scale, size=shape), dtype=dtype)

        d, dc, dx = config.d, config.d_feat, config.d_space
        type_members = {
            c: [e for e in vocab.entities if vocab.entity_types[e] == c]
            for c in vocab.types
        }
        if config.has_feature:
            for c in vocab.types:
                params[f"feat/{c}"] = uniform(
                    (dc, len(type_members[c])), 1.0 / np.sqrt(dc)
                )
        if config.has_space:
            nongeo = [e for e in vocab.entities if e not in vocab.footprints]
            if nongeo:
                params["space/nongeo"] = uniform(
                    (dx, len(nongeo)), 1.0 / np.sqrt(dx)
                )
            if config.locenc_kind == DIRECT:
                in_dim = 2
            else:
                in_dim = pe_dim(
                    make_schedule(config.n_scales, config.lambda_min, config.lambda_max),
                    config.n_directions,
                )
            for name, w in init_locenc_weights(in_dim, dx, rng, dtype).items():
                params[f"locenc/{name}"] = w

        two_r = 2 * len(vocab.relations)
        if config.projection == PROJ_BLOCK:
            if config.has_feature:
                params["proj/rc"] = uniform((two_r, dc, dc), 1.0 / np.sqrt(dc))
            params["proj/rx"] = uniform((two_r, dx, dx), 1.0 / np.sqrt(dx))
            if config.has_feature:
                params["proj/rxc"] = uniform((two_r, dc, dx), 1.0 / np.sqrt(dx))
        elif config.projection == PROJ_BILINEAR:
            params["proj/w"] = uniform((two_r, d, d), 1.0 / np.sqrt(d))
        else:
            params["proj/diag"] = uniform((two_r, d), 1.0)

        n_types = len(vocab.types)
        if config.intersection == INTER_ATTENTION:
            params["inter/u"] = uniform((n_types, d), 1.0 / np.sqrt(d))
        params["inter/w"] = uniform((n_types, d, d), 1.0 / np.sqrt(d))
        params["inter/b"] = torch.zeros((n_types, d), dtype=dtype)

        for t in params.values():
            t.requires_grad_(True)
        return Model(vocab, config, params, dtype=dtype, seed=seed)

    def _build_indexes(self):
        vocab = self.vocab
        self.ent_index = {e: i for i, e in enumerate(vocab.entities)}
        self.rel_index = {r: i for i, r in enumerate(vocab.relations)}
        self.type_index = {c: i for i, c in enumerate(vocab.types)}
        self.feat_col: dict[str, int] = {}
        counters: dict[str, int] = {c: 0 for c in vocab.types}
        for e in vocab.entities:
            c = vocab.entity_types[e]
            self.feat_col[e] = counters[c]
            counters[c] += 1
        self.nongeo_col = {}
        for e in vocab.entities:
            if e not in vocab.footprints:
                self.nongeo_col[e] = len(self.nongeo_col)

    # -- bookkeeping --

    @property
    def d(self) -> int:
        return self.config.d

    def parameters(self) -> list[torch.Tensor]:
        return list(self.params.values())

    def rel_row(self, rel: str, direction: str) -> int:
        if rel not in self.rel_index or direction not in (FWD, INV):
            raise UnknownRelation(f"{rel} ({direction})")
        return 2 * self.rel_index[rel] + (0 if direction == FWD else 1)

    def astype(self, dtype: torch.dtype) -> "Model":
        params = {
            k: v.detach().to(dtype).requires_grad_(True) for k, v in self.params.items()
        }
        return Model(
            self.vocab,
            self.config,
            params,
            dtype=dtype,
            seed=self.seed,
            config_hash=self.config_hash,
            liftable_relations=self.liftable_relations,
        )

    def locenc_params(self) -> LocEncParams:
        if self._locenc_cache is None or any(
            self._locenc_cache.weights[k] is not self.params[f"locenc/{k}"]
            for k in ("w1", "b1", "w2", "b2")
        ):
            cfg = self.config
            area = self.vocab.study_area
            self._locenc_cache = LocEncParams(
                schedule=make_schedule(cfg.n_scales, cfg.lambda_min, cfg.lambda_max),
                directions=direction_vectors(cfg.n_directions),
                activation=cfg.activation,
                l2_normalize=cfg.normalize_location,
                weights={k: self.params[f"locenc/{k}"] for k in ("w1", "b1", "w2", "b2")},
                kind=cfg.locenc_kind,
                center=area.center,
                half_extent=area.half_extent,
            )
        return self._locenc_cache

    # -- footprint access --

    def footprint_point(
        self, e: str, rng: np.random.Generator | None = None, centroid: bool = False
    ) -> np.ndarray:
        """Representative coordinate: the point, or a fresh uniform draw
        (centroid in deterministic mode) for box-footprint entities."""
        fp = self.vocab.footprints.get(e)
        if fp is None:
            if e not in self.vocab.entity_types:
                raise UnknownEntity(e)
            raise NotGeographic(e)
        if fp.box is None:
            return np.asarray(fp.point, dtype=np.float64)
        if centroid:
            return np.asarray(fp.centroid(), dtype=np.float64)
        if rng is None:
            raise ValueError("box-footprint entities need an rng (or centroid=True)")
        lo = np.asarray(fp.box[0], dtype=np.float64)
        hi = np.asarray(fp.box[1], dtype=np.float64)
        return lo + rng.uniform(size=2) * (hi - lo)

    def _entity_coords(
        self, ids: Sequence[str], rng: np.random.Generator | None, deterministic: bool
    ) -> np.ndarray:
        """Coordinates for geographic ids, honoring the mode's box policy."""
        use_boxes = self.config.box_sampling
        coords = np.empty((len(ids), 2))
        box_rows, box_lo, box_hi = [], [], []
        for i, e in enumerate(ids):
            fp = self.vocab.footprints[e]
            if fp.box is not None and use_boxes:
                if deterministic:
                    coords[i] = fp.centroid()
                else:
                    box_rows.append(i)
                    box_lo.append(fp.box[0])
                    box_hi.append(fp.box[1])
            else:
                coords[i] = fp.point
        if box_rows:
            if rng is None:
                raise ValueError("box sampling needs an rng")
            lo = np.asarray(box_lo)
            hi = np.asarray(box_hi)
            coords[box_rows] = lo + rng.uniform(size=lo.shape) * (hi - lo)
        return coords

    # -- encoders --

    @staticmethod
    def _unpermute(pieces: list[tuple[list[int], torch.Tensor]]) -> torch.Tensor:
        """Reassemble grouped row blocks into original row order."""
        order = [i for rows, _ in pieces for i in rows]
        stacked = torch.cat([block for _, block in pieces])
        if order == list(range(len(order))):
            return stacked
        inv = torch.empty(len(order), dtype=torch.long)
        inv[torch.as_tensor(order)] = torch.arange(len(order))
        return stacked[inv]

    def encode_feature(self, ids: str | Sequence[str]) -> torch.Tensor:
        """L2-normalized columns of the type-specific embedding matrices."""
        single = isinstance(ids, str)
        id_list = [ids] if single else list(ids)
        by_type: dict[str, tuple[list[int], list[int]]] = {}
        for i, e in enumerate(id_list):
            c = self.vocab.type_of(e)
            rows, cols = by_type.setdefault(c, ([], []))
            rows.append(i)
            cols.append(self.feat_col[e])
        pieces = []
        for c, (rows, cols) in by_type.items():
            block = self.params[f"feat/{c}"][:, cols].T
            pieces.append((rows, block / block.norm(dim=-1, keepdim=True)))
        out = self._unpermute(pieces)
        return out[0] if single else out

    def encode_space(
        self,
        ids: str | Sequence[str],
        rng: np.random.Generator | None = None,
        deterministic: bool = False,
    ) -> torch.Tensor:
        single = isinstance(ids, str)
        id_list = [ids] if single else list(ids)
        geo_rows, geo_ids = [], []
        nongeo_rows, nongeo_cols = [], []
        for i, e in enumerate(id_list):
            if e not in self.vocab.entity_types:
                raise UnknownEntity(e)
            if e in self.vocab.footprints:
                geo_rows.append(i)
                geo_ids.append(e)
            else:
                nongeo_rows.append(i)
                nongeo_cols.append(self.nongeo_col[e])
        pieces = []
        if geo_ids:
            coords = self._entity_coords(geo_ids, rng, deterministic)
            pieces.append((geo_rows, encode_location(coords, self.locenc_params())))
        if nongeo_rows:
            block = self.params["space/nongeo"][:, nongeo_cols].T
            pieces.append((nongeo_rows, block / block.norm(dim=-1, keepdim=True)))
        out = self._unpermute(pieces)
        return out[0] if single else out

    def encode_entities(
        self,
        ids: str | Sequence[str],
        rng: np.random.Generator | None = None,
        deterministic: bool = False,
    ) -> torch.Tensor:
        """Entity embeddings per the active mode (feature, space, or both)."""
        cfg = self.config
        if cfg.has_feature and cfg.has_space:
            feat = self.encode_feature(ids)
            space = self.encode_space(ids, rng, deterministic)
            return torch.cat([feat, space], dim=-1)
        if cfg.has_feature:
            return self.encode_feature(ids)
        return self.encode_space(ids, rng, deterministic)

    def encode_entity(
        self,
        e: str,
        rng: np.random.Generator | None = None,
        deterministic: bool = False,
    ) -> torch.Tensor:
        return self.encode_entities(e, rng, deterministic)

    def all_entity_embeddings(
        self,
        rng: np.random.Generator | None = None,
        deterministic: bool = True,
        candidates: Iterable[str] | None = None,
    ) -> tuple[list[str], torch.Tensor]:
        ids = list(candidates) if candidates is not None else list(self.vocab.entities)
        return ids, self.encode_entities(ids, rng, deterministic)


def clone_config(config: ModelConfig, **changes) -> ModelConfig:
    return replace(config, **changes)
