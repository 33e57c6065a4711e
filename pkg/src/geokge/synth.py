"""Deterministic synthetic geographic KG for desk-scale experiments.

Regions tile the study area with box footprints, places are points placed
inside regions, and non-geographic agents attach to places. Geometry-derived
relations (containment, nearest place) are exact by construction so tests can
re-verify them with brute-force scans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kg import Footprint, GeoKG, StudyArea, build_kg

REL_PART_OF = "isPartOf"
REL_NEAREST = "nearestCity"
REL_CLOSE = "closeTo"
REL_TOUCHES = "touches"
REL_HOMETOWN = "hometown"
REL_RESIDENCE = "residence"
REL_KNOWS = "knows"
REL_VISITED = "visited"
INSTITUTION_ROLES = ("council", "court", "registry", "archive", "assembly", "museum")
INSTITUTION_RELS = (
    "governedBy",
    "judgedBy",
    "registeredAt",
    "archivedAt",
    "assembledAt",
    "curatedBy",
)
REL_GOVERNED = INSTITUTION_RELS[0]
REL_JUDGED = INSTITUTION_RELS[1]

TYPE_REGION = "Region"
TYPE_PLACE = "Place"
TYPE_AGENT = "Agent"
TYPE_INSTITUTION = "Institution"


@dataclass(frozen=True)
class SynthConfig:
    n_regions: int = 16
    n_places: int = 120
    n_agents: int = 60
    area: StudyArea = field(
        default_factory=lambda: StudyArea(min=(0.0, 0.0), max=(1_000_000.0, 1_000_000.0))
    )
    place_box_fraction: float = 0.3  # share of places that get a small box
    close_ranks: int = 2  # closeTo edges per place beyond the nearest
    visits_per_agent: int = 2
    institutions: bool = True  # co-located per-region council/court entities
    regional_agents: bool = True  # agents live within a single home region

    def __post_init__(self):
        if min(self.n_regions, self.n_places, self.n_agents) < 1:
            raise ValueError("counts must be >= 1")


def synth_geokg(config: SynthConfig, seed: int) -> GeoKG:
    rng = np.random.default_rng(seed)
    area = config.area
    lo = np.asarray(area.min, dtype=float)
    hi = np.asarray(area.max, dtype=float)
    span = hi - lo

    # regions: g x g grid truncated to n_regions tiles
    g = int(np.ceil(np.sqrt(config.n_regions)))
    tile = span / g
    entities: list[tuple[str, str, Footprint | None]] = []
    region_boxes: list[tuple[np.ndarray, np.ndarray]] = []
    region_cells: list[tuple[int, int]] = []
    for k in range(config.n_regions):
        i, j = k % g, k // g
        bmin = lo + tile * np.array([i, j])
        bmax = bmin + tile
        region_boxes.append((bmin, bmax))
        region_cells.append((i, j))
        entities.append(
            (
                f"region{k}",
                TYPE_REGION,
                Footprint(
                    point=tuple((bmin + bmax) / 2.0),
                    box=(tuple(bmin), tuple(bmax)),
                ),
            )
        )

    # places: uniform point inside a random region tile
    place_pts = np.empty((config.n_places, 2))
    place_region = rng.integers(0, config.n_regions, size=config.n_places)
    for p in range(config.n_places):
        bmin, bmax = region_boxes[place_region[p]]
        place_pts[p] = rng.uniform(bmin, bmax)
    has_box = rng.random(config.n_places) < config.place_box_fraction
    for p in range(config.n_places):
        box = None
        if has_box[p]:
            half = rng.uniform(0.01, 0.05, size=2) * span
            bmin = np.maximum(place_pts[p] - half, lo)
            bmax = np.minimum(place_pts[p] + half, hi)
            box = (tuple(bmin), tuple(bmax))
        entities.append(
            (f"place{p}", TYPE_PLACE, Footprint(point=tuple(place_pts[p]), box=box))
        )

    for a in range(config.n_agents):
        entities.append((f"agent{a}", TYPE_AGENT, None))

    # co-located institutions at each region center: the role (council vs
    # court vs ...) is visible only through relations, never geometry
    if config.institutions:
        for k in range(config.n_regions):
            bmin, bmax = region_boxes[k]
            center = tuple((bmin + bmax) / 2.0)
            for role in INSTITUTION_ROLES:
                entities.append(
                    (f"{role}{k}", TYPE_INSTITUTION, Footprint(point=center))
                )

    triples: list[tuple[str, str, str]] = []
    for p in range(config.n_places):
        triples.append((f"place{p}", REL_PART_OF, f"region{place_region[p]}"))
        if config.institutions:
            for role, rel in zip(INSTITUTION_ROLES, INSTITUTION_RELS):
                triples.append((f"place{p}", rel, f"{role}{place_region[p]}"))

    # nearest / closeTo by exact pairwise distance, ties broken by index
    diff = place_pts[:, None, :] - place_pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    for p in range(config.n_places):
        triples.append((f"place{p}", REL_NEAREST, f"place{order[p, 0]}"))
        for rank in range(1, min(config.close_ranks + 1, config.n_places - 1)):
            triples.append((f"place{p}", REL_CLOSE, f"place{order[p, rank]}"))

    # region grid adjacency (each pair once)
    cell_to_region = {c: k for k, c in enumerate(region_cells)}
    for k, (i, j) in enumerate(region_cells):
        for ni, nj in ((i + 1, j), (i, j + 1)):
            nb = cell_to_region.get((ni, nj))
            if nb is not None:
                triples.append((f"region{k}", REL_TOUCHES, f"region{nb}"))

    places_in_region: dict[int, list[int]] = {}
    for p in range(config.n_places):
        places_in_region.setdefault(int(place_region[p]), []).append(p)

    def agent_place(home_region: int) -> str:
        if config.regional_agents and home_region in places_in_region:
            pool = places_in_region[home_region]
            return f"place{pool[rng.integers(len(pool))]}"
        return f"place{rng.integers(config.n_places)}"

    for a in range(config.n_agents):
        home = int(rng.integers(config.n_regions))
        triples.append((f"agent{a}", REL_HOMETOWN, agent_place(home)))
        triples.append((f"agent{a}", REL_RESIDENCE, agent_place(home)))
        if config.n_agents > 1:
            other = int(rng.integers(config.n_agents - 1))
            if other >= a:
                other += 1
            triples.append((f"agent{a}", REL_KNOWS, f"agent{other}"))
        for _ in range(config.visits_per_agent):
            triples.append((f"agent{a}", REL_VISITED, agent_place(home)))

    return build_kg(entities, (), triples, area)
