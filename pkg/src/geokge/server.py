"""HTTP service over an immutable model snapshot.

Exposes query answering and coordinate lifting for the map explorer.
Requests never mutate the model; footprints are resolved in deterministic
centroid mode so concurrent and repeated calls return identical rankings.
Malformed requests come back as 400 with a structured, field-level error
body: {"error": {"message": ..., "fields": {name: problem}}}.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import GeoKGEError, QueryError, UnknownAnchor, UnknownRelation
from .kg import FWD, INV
from .model import Model
from .query import ConjunctiveQuery, answer_query, lift


class LiftBody(BaseModel):
    x: tuple[float, float]
    relation: str
    dir: str = FWD
    k: int = Field(default=10, ge=1)


class AnswerBody(BaseModel):
    dag: str
    target_type: str
    edges: list[list[str]]
    anchors: dict[str, str]
    answer: str | None = None
    negatives: list[str] = []
    hard_negatives: list[str] = []
    var_types: dict[str, str] = {}
    k: int = Field(default=10, ge=1)


def _error_body(message: str, fields: dict | None = None) -> dict:
    return {"error": {"message": message, "fields": fields or {}}}


def create_app(model: Model, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="geokge")
    app.state.model = model

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = {}
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"] if p != "body")
            fields[loc or "body"] = err["msg"]
        return JSONResponse(
            status_code=400, content=_error_body("invalid request", fields)
        )

    @app.exception_handler(GeoKGEError)
    async def domain_handler(request: Request, exc: GeoKGEError):
        return JSONResponse(
            status_code=400,
            content=_error_body(f"{type(exc).__name__}: {exc}"),
        )

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.get("/meta")
    async def meta():
        m: Model = app.state.model
        cfg = m.config
        return {
            "mode": cfg.mode,
            "dims": {"d": cfg.d, "d_feat": cfg.d_feat, "d_space": cfg.d_space},
            "counts": {
                "entities": len(m.vocab.entities),
                "relations": len(m.vocab.relations),
                "types": len(m.vocab.types),
                "geo_entities": len(m.vocab.footprints),
            },
            "study_area": m.vocab.study_area.to_json(),
            "config_hash": m.config_hash,
        }

    @app.get("/relations")
    async def relations():
        m: Model = app.state.model
        rels = (
            list(m.liftable_relations)
            if m.liftable_relations is not None
            else list(m.vocab.relations)
        )
        return {
            "relations": [{"relation": r, "dirs": [FWD, INV]} for r in sorted(rels)]
        }

    @app.get("/entities")
    async def entities(
        bbox: str = Query(..., description="xmin,ymin,xmax,ymax"),
        limit: int = Query(default=500, ge=1),
    ):
        try:
            xmin, ymin, xmax, ymax = (float(v) for v in bbox.split(","))
        except ValueError:
            return JSONResponse(
                status_code=400,
                content=_error_body(
                    "invalid request", {"bbox": "expected xmin,ymin,xmax,ymax"}
                ),
            )
        m: Model = app.state.model
        out = []
        for e in m.vocab.entities:
            fp = m.vocab.footprints.get(e)
            if fp is None:
                continue
            px, py = fp.point
            inside = xmin <= px <= xmax and ymin <= py <= ymax
            if not inside and fp.box is not None:
                (bx0, by0), (bx1, by1) = fp.box
                inside = bx0 <= xmax and bx1 >= xmin and by0 <= ymax and by1 >= ymin
            if inside:
                box = None
                if fp.box is not None:
                    box = [fp.box[0][0], fp.box[0][1], fp.box[1][0], fp.box[1][1]]
                out.append(
                    {
                        "id": e,
                        "type": m.vocab.entity_types[e],
                        "point": [px, py],
                        "bbox": box,
                    }
                )
                if len(out) >= limit:
                    break
        return {"entities": out}

    @app.post("/answer")
    async def answer(body: AnswerBody):
        m: Model = app.state.model
        try:
            q = ConjunctiveQuery.from_json(body.model_dump())
        except (QueryError, UnknownAnchor) as exc:
            return JSONResponse(
                status_code=400,
                content=_error_body("invalid query", {"edges": str(exc)}),
            )
        ranked = answer_query(m, q, body.k, deterministic=True)
        return {"ranked": [{"entity": e, "score": s} for e, s in ranked]}

    @app.post("/lift")
    async def do_lift(body: LiftBody):
        m: Model = app.state.model
        if body.dir not in (FWD, INV):
            return JSONResponse(
                status_code=400,
                content=_error_body("invalid request", {"dir": "must be fwd or inv"}),
            )
        try:
            ranked = lift(m, body.x, body.relation, body.dir, body.k, deterministic=True)
        except UnknownRelation as exc:
            return JSONResponse(
                status_code=400,
                content=_error_body("invalid request", {"relation": str(exc)}),
            )
        return {"ranked": [{"entity": e, "score": s} for e, s in ranked]}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(model: Model, addr: str, static_dir: str | Path | None = None) -> None:
    """Blocking uvicorn server on HOST:PORT."""
    import uvicorn

    host, _, port = addr.rpartition(":")
    uvicorn.run(
        create_app(model, static_dir), host=host or "127.0.0.1", port=int(port)
    )
