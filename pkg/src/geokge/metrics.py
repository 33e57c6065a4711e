"""Ranking metrics (percentile rank, APR, AUC), evaluation reports, and the
grid-embedding clustering export.

APR averages, per query, the percentile rank of the correct answer among its
stored negatives (ties credited 0.5). AUC pools one (positive, sampled
negative) score pair per query and computes the Mann-Whitney statistic,
which equals trapezoidal ROC AUC under the same tie handling. The sampled
negative is the first stored negative, fixed at dataset build time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.stats import rankdata

from .errors import EmptyInput, EmptyNegatives, NoLocationEncoder
from .kg import FWD, INV
from .locenc import encode_location
from .model import Model
from .operators import cosine_scores, project_location
from .sampler import QAExample, SSLDataset
from .query import embed_query


@dataclass(frozen=True)
class RankObservation:
    positive: float
    negatives: tuple[float, ...]

    def __post_init__(self):
        if not self.negatives:
            raise EmptyNegatives("an observation needs at least one negative score")


def percentile_rank(obs: RankObservation) -> float:
    """100 * (negatives below + half of ties) / negatives."""
    negs = np.asarray(obs.negatives)
    below = float(np.sum(negs < obs.positive))
    ties = float(np.sum(negs == obs.positive))
    return 100.0 * (below + 0.5 * ties) / len(negs)


def apr(observations: Sequence[RankObservation]) -> float:
    if len(observations) == 0:
        raise EmptyInput("APR over zero observations")
    return float(np.mean([percentile_rank(o) for o in observations]))


def auc(pairs: Sequence[tuple[float, float]]) -> float:
    """Mann-Whitney AUC over pooled (positive, negative) score pairs."""
    if len(pairs) == 0:
        raise EmptyInput("AUC over zero pairs")
    pos = np.asarray([p for p, _ in pairs], dtype=float)
    neg = np.asarray([n for _, n in pairs], dtype=float)
    ranks = rankdata(np.concatenate([pos, neg]))  # average ranks on ties
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


@dataclass
class EvalReport:
    groups: dict[str, dict] = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"groups": self.groups, "overall": self.overall, "meta": self.meta}

    def to_text(self) -> str:
        rows = [("group", "n", "AUC", "APR")]
        for name in sorted(self.groups):
            g = self.groups[name]
            rows.append((name, str(g["n"]), f"{g['auc']:.4f}", f"{g['apr']:.2f}"))
        o = self.overall
        rows.append(("overall", str(o["n"]), f"{o['auc']:.4f}", f"{o['apr']:.2f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
            for row in rows
        ]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)

    def write(self, path) -> None:
        text = json.dumps(self.to_json(), indent=2)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")


def _grouped_report(
    observations: dict[str, list[RankObservation]], meta: dict
) -> EvalReport:
    report = EvalReport(meta=meta)
    all_obs: list[RankObservation] = []
    all_pairs: list[tuple[float, float]] = []
    for group in sorted(observations):
        obs = observations[group]
        pairs = [(o.positive, o.negatives[0]) for o in obs]
        report.groups[group] = {
            "n": len(obs),
            "auc": auc(pairs),
            "apr": apr(obs),
        }
        all_obs.extend(obs)
        all_pairs.extend(pairs)
    report.overall = {
        "n": len(all_obs),
        "auc": auc(all_pairs),
        "apr": apr(all_obs),
    }
    return report


def score_example(
    model: Model,
    ex: QAExample,
    rng: np.random.Generator | None = None,
    deterministic: bool = True,
) -> RankObservation:
    with torch.no_grad():
        pred = embed_query(model, ex.query, rng, deterministic)
        embs = model.encode_entities(
            [ex.answer, *ex.eval_negatives], rng, deterministic
        )
        scores = cosine_scores(pred, embs).cpu().numpy()
    return RankObservation(float(scores[0]), tuple(float(s) for s in scores[1:]))


def eval_qa(
    model: Model,
    examples: Sequence[QAExample],
    seed: int = 0,
    deterministic: bool = True,
) -> EvalReport:
    """Per-DAG-type AUC/APR; hard-negative queries score against hard lists."""
    if len(examples) == 0:
        raise EmptyInput("no examples to evaluate")
    rng = np.random.default_rng(seed)
    grouped: dict[str, list[RankObservation]] = {}
    for ex in examples:
        grouped.setdefault(ex.query.dag_type, []).append(
            score_example(model, ex, rng, deterministic)
        )
    return _grouped_report(
        grouped,
        meta={
            "task": "qa",
            "seed": seed,
            "deterministic_footprints": deterministic,
            "config_hash": model.config_hash,
            "mode": model.config.mode,
        },
    )


def eval_ssl(
    model: Model,
    dataset: SSLDataset,
    neg_size: int = 10,
    seed: int = 0,
    deterministic: bool = True,
    intersection_only: bool = True,
) -> EvalReport:
    """Coordinate-to-entity ranking per relation signature.

    By default only triples geographic on both ends are scored, each in
    both directions; training still uses the full forward/backward sets.
    """
    rng = np.random.default_rng(seed)
    by_type: dict[str, list[str]] = {}
    for e in model.vocab.entities:
        by_type.setdefault(model.vocab.entity_types[e], []).append(e)

    def type_negs(positive: str) -> list[str]:
        pool = [
            e for e in by_type[model.vocab.entity_types[positive]] if e != positive
        ]
        if not pool:
            return []
        if len(pool) <= neg_size:
            return pool
        idx = rng.choice(len(pool), size=neg_size, replace=False)
        return [pool[i] for i in idx]

    grouped: dict[str, list[RankObservation]] = {}

    def add(subject: str, rel: str, direction: str, target: str):
        negatives = type_negs(target)
        if not negatives:
            return
        x = model.footprint_point(subject, rng, centroid=deterministic)
        with torch.no_grad():
            pred = project_location(model, x, rel, direction)
            embs = model.encode_entities([target, *negatives], rng, deterministic)
            scores = cosine_scores(pred, embs).cpu().numpy()
        label = f"{rel}(x, ?e)" if direction == FWD else f"{rel}^-1(x, ?e)"
        grouped.setdefault(label, []).append(
            RankObservation(float(scores[0]), tuple(float(s) for s in scores[1:]))
        )

    if intersection_only:
        both = sorted(set(dataset.forward) & set(dataset.backward))
        forward_list = both
        backward_list = both
    else:
        forward_list = dataset.forward
        backward_list = dataset.backward
    for h, r, t in forward_list:
        add(h, r, FWD, t)
    for h, r, t in backward_list:
        add(t, r, INV, h)
    if not grouped:
        raise EmptyInput("SSL dataset produced no scorable observations")
    return _grouped_report(
        grouped,
        meta={
            "task": "ssl",
            "seed": seed,
            "neg_size": neg_size,
            "deterministic_footprints": deterministic,
            "config_hash": model.config_hash,
            "mode": model.config.mode,
        },
    )


# ---------------------------------------------------------------------------
# grid-embedding clustering export
# ---------------------------------------------------------------------------

def grid_cluster_export(
    model: Model, cell_m: float = 20_000.0, k: int = 8
) -> tuple[list[dict], dict]:
    """Cluster location embeddings of a regular grid over the study area.

    Average-linkage agglomerative clustering over cosine distance; returns
    (cells, meta) where each cell is {"center", "cell_m", "cluster"}.
    """
    if "locenc/w1" not in model.params:
        raise NoLocationEncoder(f"mode {model.config.mode!r} has no location encoder")
    if k < 2:
        raise ValueError("k must be >= 2")
    area = model.vocab.study_area
    nx = max(1, int(np.ceil((area.max[0] - area.min[0]) / cell_m)))
    ny = max(1, int(np.ceil((area.max[1] - area.min[1]) / cell_m)))
    centers = np.array(
        [
            (area.min[0] + (i + 0.5) * cell_m, area.min[1] + (j + 0.5) * cell_m)
            for j in range(ny)
            for i in range(nx)
            if area.contains(
                (area.min[0] + (i + 0.5) * cell_m, area.min[1] + (j + 0.5) * cell_m)
            )
        ]
    )
    with torch.no_grad():
        embs = encode_location(centers, model.locenc_params()).cpu().numpy()
    k_eff = min(k, len(centers))
    z = linkage(embs, method="average", metric="cosine")
    labels = fcluster(z, t=k_eff, criterion="maxclust") - 1
    cells = [
        {"center": [float(c[0]), float(c[1])], "cell_m": float(cell_m), "cluster": int(l)}
        for c, l in zip(centers, labels)
    ]
    meta = {
        "k": k_eff,
        "linkage": "average",
        "metric": "cosine",
        "n_cells": len(cells),
        "mode": model.config.mode,
    }
    return cells, meta
