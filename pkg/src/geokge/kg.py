"""Geographic knowledge graph: domain model, ingestion, filtering, splitting.

Entities carry an optional spatial footprint (a point, possibly with a
bounding box for large features). The graph is immutable after construction
and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateEntityId,
    EmptyKG,
    FootprintOutsideStudyArea,
    InfeasibleSplit,
    UnknownEntity,
    UnknownEntityInTriple,
)

Triple = tuple[str, str, str]

FWD = "fwd"
INV = "inv"


@dataclass(frozen=True)
class StudyArea:
    """Axis-aligned planar rectangle (meters) containing all footprints."""

    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self):
        if not (self.min[0] < self.max[0] and self.min[1] < self.max[1]):
            raise ValueError(f"study area min must be < max componentwise: {self}")

    def contains(self, x: Sequence[float]) -> bool:
        return (
            self.min[0] <= x[0] <= self.max[0]
            and self.min[1] <= x[1] <= self.max[1]
        )

    @property
    def center(self) -> tuple[float, float]:
        return ((self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0)

    @property
    def half_extent(self) -> tuple[float, float]:
        return ((self.max[0] - self.min[0]) / 2.0, (self.max[1] - self.min[1]) / 2.0)

    def to_json(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @staticmethod
    def from_json(obj: dict) -> "StudyArea":
        return StudyArea(min=tuple(obj["min"]), max=tuple(obj["max"]))


@dataclass(frozen=True)
class Footprint:
    """Spatial footprint: a representative point, plus a box for large features.

    Entities whose extent matters carry `box = (min, max)`; the point is
    always present (metadata guarantees point non-null whenever bbox is).
    """

    point: tuple[float, float]
    box: tuple[tuple[float, float], tuple[float, float]] | None = None

    @property
    def is_box(self) -> bool:
        return self.box is not None

    def centroid(self) -> tuple[float, float]:
        if self.box is None:
            return self.point
        (x0, y0), (x1, y1) = self.box
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def validate(self, area: StudyArea, entity_id: str) -> None:
        if not area.contains(self.point):
            raise FootprintOutsideStudyArea(
                f"{entity_id}: point {self.point} outside study area"
            )
        if self.box is not None:
            (x0, y0), (x1, y1) = self.box
            if x0 > x1 or y0 > y1:
                raise FootprintOutsideStudyArea(
                    f"{entity_id}: box min {self.box[0]} exceeds max {self.box[1]}"
                )
            if not (area.contains((x0, y0)) and area.contains((x1, y1))):
                raise FootprintOutsideStudyArea(
                    f"{entity_id}: box {self.box} outside study area"
                )


@dataclass(frozen=True)
class GeoKG:
    """Immutable directed labeled multigraph with spatial footprints.

    `entities` maps id -> type id; `footprints` maps geographic entity id ->
    Footprint. Triples are kept in input order (a multiset: duplicates allowed).
    """

    entities: dict[str, str]
    footprints: dict[str, Footprint]
    relations: frozenset[str]
    triples: tuple[Triple, ...]
    study_area: StudyArea
    _out: dict[str, list[tuple[str, str]]] = field(repr=False, default_factory=dict)
    _in: dict[str, list[tuple[str, str]]] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        out: dict[str, list[tuple[str, str]]] = {}
        inn: dict[str, list[tuple[str, str]]] = {}
        for h, r, t in self.triples:
            out.setdefault(h, []).append((r, t))
            inn.setdefault(t, []).append((r, h))
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inn)

    # -- derived sets --

    @property
    def geo_entities(self) -> set[str]:
        return set(self.footprints)

    @property
    def box_entities(self) -> set[str]:
        return {e for e, fp in self.footprints.items() if fp.is_box}

    @property
    def types(self) -> set[str]:
        return set(self.entities.values())

    def entity_type(self, e: str) -> str:
        try:
            return self.entities[e]
        except KeyError:
            raise UnknownEntity(e) from None

    def entities_of_type(self, c: str) -> list[str]:
        return sorted(e for e, t in self.entities.items() if t == c)

    def stats(self) -> dict:
        return {
            "n_triples": len(self.triples),
            "n_relations": len(self.relations),
            "n_entities": len(self.entities),
            "n_geo_entities": len(self.footprints),
            "n_box_entities": len(self.box_entities),
        }

    # -- navigation --

    def neighborhood(self, e: str) -> set[tuple[str, str, str]]:
        """1-degree neighborhood of `e` as (relation, direction, neighbor).

        Direction `fwd` means a triple r(neighbor, e) exists; `inv` means
        r(e, neighbor) exists, i.e. the tuple reads as an edge pointing at `e`
        through r or its inverse.
        """
        if e not in self.entities:
            raise UnknownEntity(e)
        result: set[tuple[str, str, str]] = set()
        for r, h in self._in.get(e, ()):
            result.add((r, FWD, h))
        for r, t in self._out.get(e, ()):
            result.add((r, INV, t))
        return result

    def objects(self, subj: str, rel: str, direction: str) -> set[str]:
        """Entities o such that rel_direction(subj, o) holds."""
        if direction == FWD:
            return {t for r, t in self._out.get(subj, ()) if r == rel}
        return {h for r, h in self._in.get(subj, ()) if r == rel}

    def subjects(self, rel: str, direction: str) -> set[str]:
        """Entities that appear as subject of rel in the given direction."""
        if direction == FWD:
            return {h for h, r, _ in self.triples if r == rel}
        return {t for _, r, t in self.triples if r == rel}

    def with_triples(self, triples: Iterable[Triple]) -> "GeoKG":
        """Same vocabulary and footprints, different triple set."""
        return GeoKG(
            entities=self.entities,
            footprints=self.footprints,
            relations=self.relations,
            triples=tuple(triples),
            study_area=self.study_area,
        )


@dataclass(frozen=True)
class KGSplit:
    train: GeoKG
    valid_triples: tuple[Triple, ...]
    test_triples: tuple[Triple, ...]

    @property
    def full(self) -> GeoKG:
        return self.train.with_triples(
            self.train.triples + self.valid_triples + self.test_triples
        )


def build_kg(
    entity_records: Iterable[tuple[str, str, Footprint | None]],
    relations: Iterable[str],
    triples: Iterable[Triple],
    area: StudyArea,
) -> GeoKG:
    """Assemble and validate a GeoKG from in-memory records."""
    entities: dict[str, str] = {}
    footprints: dict[str, Footprint] = {}
    for eid, etype, fp in entity_records:
        if eid in entities:
            raise DuplicateEntityId(eid)
        entities[eid] = etype
        if fp is not None:
            fp.validate(area, eid)
            footprints[eid] = fp
    if not entities:
        raise EmptyKG("no entities")
    triples = tuple(triples)
    rel_set = frozenset(relations) | {r for _, r, _ in triples}
    for h, r, t in triples:
        if h not in entities:
            raise UnknownEntityInTriple(f"head {h!r} of ({h},{r},{t})")
        if t not in entities:
            raise UnknownEntityInTriple(f"tail {t!r} of ({h},{r},{t})")
    return GeoKG(
        entities=entities,
        footprints=footprints,
        relations=rel_set,
        triples=triples,
        study_area=area,
    )


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_triples(path: str | Path) -> list[Triple]:
    """Tab-separated `head<TAB>relation<TAB>tail`, `#` comments ignored."""
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def write_triples(path: str | Path, triples: Iterable[Triple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in triples:
            f.write(f"{h}\t{r}\t{t}\n")


def read_entity_meta(path: str | Path) -> Iterator[tuple[str, str, Footprint | None]]:
    """One JSON object per line: {"id", "type", "point", "bbox"}."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            point = obj.get("point")
            bbox = obj.get("bbox")
            if bbox is not None and point is None:
                raise ValueError(f"{path}:{lineno}: bbox without point")
            fp = None
            if point is not None:
                box = None
                if bbox is not None:
                    box = ((bbox[0], bbox[1]), (bbox[2], bbox[3]))
                fp = Footprint(point=(point[0], point[1]), box=box)
            yield obj["id"], obj["type"], fp


def write_entity_meta(
    path: str | Path, records: Iterable[tuple[str, str, Footprint | None]]
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for eid, etype, fp in records:
            obj: dict = {"id": eid, "type": etype, "point": None, "bbox": None}
            if fp is not None:
                obj["point"] = list(fp.point)
                if fp.box is not None:
                    (x0, y0), (x1, y1) = fp.box
                    obj["bbox"] = [x0, y0, x1, y1]
            f.write(json.dumps(obj) + "\n")


def load_kg(
    triples_path: str | Path,
    meta_path: str | Path,
    area: StudyArea | str | Path,
) -> GeoKG:
    """Load and validate a GeoKG from the on-disk formats."""
    if not isinstance(area, StudyArea):
        with open(area, encoding="utf-8") as f:
            area = StudyArea.from_json(json.load(f))
    triples = read_triples(triples_path)
    records = list(read_entity_meta(meta_path))
    if not records:
        raise EmptyKG(f"no entity records in {meta_path}")
    return build_kg(records, (), triples, area)


def write_split(split: KGSplit, out_dir: str | Path) -> None:
    """train/valid/test triple files plus a stats manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_triples(out / "train.tsv", split.train.triples)
    write_triples(out / "valid.tsv", split.valid_triples)
    write_triples(out / "test.tsv", split.test_triples)
    full = split.full
    stats = {
        "train": {"n_triples": len(split.train.triples)},
        "valid": {"n_triples": len(split.valid_triples)},
        "test": {"n_triples": len(split.test_triples)},
        **full.stats(),
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2))


def load_split(kg_dir: str | Path) -> KGSplit:
    """Load a split directory written by `write_split` (+ entities/area files)."""
    d = Path(kg_dir)
    train_kg = load_kg(d / "train.tsv", d / "entities.jsonl", d / "area.json")
    valid = tuple(read_triples(d / "valid.tsv"))
    test = tuple(read_triples(d / "test.tsv"))
    return KGSplit(train=train_kg, valid_triples=valid, test_triples=test)


# ---------------------------------------------------------------------------
# degree filtering and splitting
# ---------------------------------------------------------------------------

def degree_filter(
    triples: Sequence[Triple],
    geo_entities: set[str],
    eta_geo: int,
    eta_nongeo: int,
) -> list[Triple]:
    """Drop low-degree entities and their incident triples in a single pass.

    Degree is in+out over the input multiset; an entity survives iff its
    degree >= its threshold (geographic entities use `eta_geo`). Entities
    exposed as low-degree by the removal are not re-filtered.
    """
    if eta_geo < 1 or eta_nongeo < 1:
        raise ValueError("thresholds must be >= 1")
    degree: dict[str, int] = {}
    for h, _, t in triples:
        degree[h] = degree.get(h, 0) + 1
        degree[t] = degree.get(t, 0) + 1
    keep = {
        e
        for e, d in degree.items()
        if d >= (eta_geo if e in geo_entities else eta_nongeo)
    }
    return [(h, r, t) for h, r, t in triples if h in keep and t in keep]


def split_kg(
    kg: GeoKG,
    ratio: tuple[float, float, float],
    seed: int,
) -> KGSplit:
    """Random train/valid/test triple split with training-coverage repair.

    Counts follow `ratio` by largest remainder; any triple whose removal from
    train would leave an entity or relation uncovered is pulled back into
    train, and the deficit is refilled with movable train triples.
    """
    if any(p <= 0 for p in ratio):
        raise ValueError("ratio parts must be positive")
    triples = list(kg.triples)
    if not triples:
        raise EmptyKG("cannot split a KG with no triples")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(triples))
    triples = [triples[i] for i in order]

    total = len(triples)
    weights = [p / sum(ratio) for p in ratio]
    counts = [int(w * total) for w in weights]
    remainders = [w * total - c for w, c in zip(weights, counts)]
    while sum(counts) < total:
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    n_train, n_valid, n_test = counts

    train = triples[:n_train]
    valid = triples[n_train : n_train + n_valid]
    test = triples[n_train + n_valid :]

    def coverage(ts: list[Triple]) -> tuple[dict[str, int], dict[str, int]]:
        ents: dict[str, int] = {}
        rels: dict[str, int] = {}
        for h, r, t in ts:
            ents[h] = ents.get(h, 0) + 1
            ents[t] = ents.get(t, 0) + 1
            rels[r] = rels.get(r, 0) + 1
        return ents, rels

    ent_cov, rel_cov = coverage(train)

    def needs_repair(triple: Triple) -> bool:
        h, r, t = triple
        return h not in ent_cov or t not in ent_cov or r not in rel_cov

    # pull uncovered-coverage triples back into train
    moved_from: list[int] = []  # 0 = valid, 1 = test
    for src_idx, bucket in ((0, valid), (1, test)):
        i = 0
        while i < len(bucket):
            if needs_repair(bucket[i]):
                tr = bucket.pop(i)
                train.append(tr)
                h, r, t = tr
                ent_cov[h] = ent_cov.get(h, 0) + 1
                ent_cov[t] = ent_cov.get(t, 0) + 1
                rel_cov[r] = rel_cov.get(r, 0) + 1
                moved_from.append(src_idx)
            else:
                i += 1

    # refill valid/test from train with triples that stay covered without them
    for src_idx in moved_from:
        bucket = valid if src_idx == 0 else test
        found = False
        for j in range(len(train) - 1, -1, -1):
            h, r, t = train[j]
            if ent_cov[h] > 1 and ent_cov[t] > 1 and rel_cov[r] > 1:
                bucket.append(train.pop(j))
                ent_cov[h] -= 1
                ent_cov[t] -= 1
                rel_cov[r] -= 1
                found = True
                break
        if not found:
            raise InfeasibleSplit(
                "cannot rebalance split: no train triple is movable without "
                "orphaning an entity or relation"
            )

    # entities that occur in any triple must be covered by train
    mentioned = {e for h, _, t in kg.triples for e in (h, t)}
    missing = mentioned - set(ent_cov)
    if missing:
        raise InfeasibleSplit(f"entities not coverable in train: {sorted(missing)[:5]}")

    return KGSplit(
        train=kg.with_triples(train),
        valid_triples=tuple(valid),
        test_triples=tuple(test),
    )


def neighborhood(kg: GeoKG, e: str) -> set[tuple[str, str, str]]:
    """Module-level alias of GeoKG.neighborhood."""
    return kg.neighborhood(e)
