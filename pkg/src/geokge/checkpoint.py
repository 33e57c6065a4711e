"""Checkpoint persistence: JSON manifest plus a float32 parameter blob.

Layout: a 4-byte little-endian manifest length, the UTF-8 JSON manifest,
then the concatenated parameter arrays (32-bit little-endian floats, offsets
recorded in the manifest, one 64-bit checksum per array). Vocabularies and
footprints travel in the manifest so a checkpoint is self-contained for
inference and serving.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptBlob, IoFailure, VersionMismatch
from .kg import Footprint, StudyArea
from .model import Model, ModelConfig, Vocabulary

FORMAT_VERSION = "sekge-ckpt-v1"


def _checksum(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def _vocab_to_json(vocab: Vocabulary) -> dict:
    entities = []
    for e in vocab.entities:
        fp = vocab.footprints.get(e)
        point = list(fp.point) if fp else None
        box = None
        if fp and fp.box:
            (x0, y0), (x1, y1) = fp.box
            box = [x0, y0, x1, y1]
        entities.append([e, vocab.entity_types[e], point, box])
    return {
        "entities": entities,
        "relations": list(vocab.relations),
        "types": list(vocab.types),
        "study_area": vocab.study_area.to_json(),
    }


def _vocab_from_json(obj: dict) -> Vocabulary:
    entity_types = {}
    footprints = {}
    ids = []
    for e, etype, point, box in obj["entities"]:
        ids.append(e)
        entity_types[e] = etype
        if point is not None:
            fp_box = ((box[0], box[1]), (box[2], box[3])) if box else None
            footprints[e] = Footprint(point=tuple(point), box=fp_box)
    return Vocabulary(
        entities=tuple(ids),
        entity_types=entity_types,
        footprints=footprints,
        relations=tuple(obj["relations"]),
        types=tuple(obj["types"]),
        study_area=StudyArea.from_json(obj["study_area"]),
    )


def save_checkpoint(model: Model, path: str | Path) -> None:
    blobs: list[bytes] = []
    arrays: dict[str, dict] = {}
    offset = 0
    for name, tensor in model.params.items():
        data = (
            tensor.detach().to(torch.float32).cpu().numpy().astype("<f4").tobytes()
        )
        arrays[name] = {
            "shape": list(tensor.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": len(data),
            "checksum": _checksum(data),
        }
        blobs.append(data)
        offset += len(data)
    manifest = {
        "format": FORMAT_VERSION,
        "model_config": model.config.to_json(),
        "seed": model.seed,
        "config_hash": model.config_hash,
        "liftable_relations": (
            list(model.liftable_relations)
            if model.liftable_relations is not None
            else None
        ),
        "vocab": _vocab_to_json(model.vocab),
        "arrays": arrays,
    }
    payload = json.dumps(manifest).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(struct.pack("<I", len(payload)))
            f.write(payload)
            for b in blobs:
                f.write(b)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_manifest(path: str | Path) -> dict:
    try:
        with open(path, "rb") as f:
            header = f.read(4)
            if len(header) < 4:
                raise CorruptBlob("file too short for a manifest header")
            (length,) = struct.unpack("<I", header)
            payload = f.read(length)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(payload) < length:
        raise CorruptBlob("truncated manifest")
    try:
        manifest = json.loads(payload.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptBlob(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise VersionMismatch(
            f"expected {FORMAT_VERSION!r}, found {manifest.get('format')!r}"
        )
    return manifest


def load_checkpoint(
    path: str | Path, dtype: torch.dtype = torch.float32
) -> Model:
    manifest = read_manifest(path)
    try:
        with open(path, "rb") as f:
            (length,) = struct.unpack("<I", f.read(4))
            f.seek(4 + length)
            blob = f.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    params: dict[str, torch.Tensor] = {}
    for name, spec in manifest["arrays"].items():
        start, nbytes = spec["offset"], spec["nbytes"]
        data = blob[start : start + nbytes]
        if len(data) < nbytes:
            raise CorruptBlob(f"array {name!r}: blob truncated")
        if _checksum(data) != spec["checksum"]:
            raise CorruptBlob(f"array {name!r}: checksum mismatch")
        arr = np.frombuffer(data, dtype="<f4").reshape(spec["shape"]).copy()
        params[name] = torch.tensor(arr, dtype=dtype, requires_grad=True)

    liftable = manifest.get("liftable_relations")
    return Model(
        vocab=_vocab_from_json(manifest["vocab"]),
        config=ModelConfig.from_json(manifest["model_config"]),
        params=params,
        dtype=dtype,
        seed=manifest.get("seed", 0),
        config_hash=manifest.get("config_hash", ""),
        liftable_relations=tuple(liftable) if liftable is not None else None,
    )
