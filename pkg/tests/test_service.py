from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from geokge.kg import split_kg
from geokge.model import Model, ModelConfig
from geokge.sampler import QADatasetConfig, build_qa_dataset, build_ssl_datasets
from geokge.server import create_app
from geokge.synth import SynthConfig, synth_geokg
from geokge.train import TrainConfig, train_ssl


@pytest.fixture(scope="module")
def served():
    kg = synth_geokg(SynthConfig(n_regions=4, n_places=18, n_agents=8), seed=2)
    split = split_kg(kg, (90, 1, 9), seed=2)
    cfg = ModelConfig(
        mode="se-kge-ssl", d_feat=4, d_space=4,
        n_scales=3, lambda_min=100.0, lambda_max=2e6,
    )
    model = Model.create(split.train, cfg, seed=4)
    ssl = build_ssl_datasets(split)
    train_ssl(model, split, ssl["train"], TrainConfig(steps=8, batch_size=4, seed=0))
    qa = build_qa_dataset(
        split,
        QADatasetConfig(per_dag={"train": 1, "valid": 0, "test": 1},
                        dag_types=("2-inter",), neg_size=3),
        seed=3,
    )
    client = TestClient(create_app(model))
    return client, model, qa


def test_health(served):
    client, _, _ = served
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_meta(served):
    client, model, _ = served
    r = client.get("/meta")
    assert r.status_code == 200
    body = r.json()
    assert body["mode"] == "se-kge-ssl"
    assert body["dims"]["d"] == 8
    assert body["counts"]["entities"] == len(model.vocab.entities)
    assert body["study_area"] == model.vocab.study_area.to_json()


def test_relations_liftable(served):
    client, model, _ = served
    r = client.get("/relations")
    assert r.status_code == 200
    rels = r.json()["relations"]
    assert {x["relation"] for x in rels} == set(model.liftable_relations)
    assert all(x["dirs"] == ["fwd", "inv"] for x in rels)


def test_entities_bbox(served):
    client, model, _ = served
    area = model.vocab.study_area
    bbox = f"{area.min[0]},{area.min[1]},{area.max[0]},{area.max[1]}"
    r = client.get("/entities", params={"bbox": bbox, "limit": 1000})
    assert r.status_code == 200
    ents = r.json()["entities"]
    assert len(ents) == len(model.vocab.footprints)
    r = client.get("/entities", params={"bbox": bbox, "limit": 3})
    assert len(r.json()["entities"]) == 3


def test_entities_malformed_bbox(served):
    client, _, _ = served
    r = client.get("/entities", params={"bbox": "1,2,3"})
    assert r.status_code == 400
    assert "bbox" in r.json()["error"]["fields"]


def test_lift_contract(served):
    client, _, _ = served
    r = client.post(
        "/lift",
        json={"x": [300000.0, 500000.0], "relation": "isPartOf", "dir": "fwd", "k": 5},
    )
    assert r.status_code == 200
    ranked = r.json()["ranked"]
    assert len(ranked) == 5
    scores = [x["score"] for x in ranked]
    assert scores == sorted(scores, reverse=True)


def test_lift_missing_relation_field(served):
    client, _, _ = served
    r = client.post("/lift", json={"x": [1.0, 2.0], "k": 5})
    assert r.status_code == 400
    body = r.json()
    assert "relation" in body["error"]["fields"]


def test_lift_unknown_relation(served):
    client, _, _ = served
    r = client.post(
        "/lift", json={"x": [1.0, 2.0], "relation": "noSuchRel", "k": 3}
    )
    assert r.status_code == 400
    assert "relation" in r.json()["error"]["fields"]


def test_lift_bad_direction(served):
    client, _, _ = served
    r = client.post(
        "/lift",
        json={"x": [1.0, 2.0], "relation": "isPartOf", "dir": "up", "k": 3},
    )
    assert r.status_code == 400


def test_answer_roundtrip(served):
    client, _, qa = served
    record = qa["test"][0].to_record()
    record["k"] = 4
    r = client.post("/answer", json=record)
    assert r.status_code == 200
    ranked = r.json()["ranked"]
    assert len(ranked) == 4
    scores = [x["score"] for x in ranked]
    assert scores == sorted(scores, reverse=True)


def test_answer_invalid_query(served):
    client, _, _ = served
    r = client.post(
        "/answer",
        json={
            "dag": "bad",
            "target_type": "Place",
            "edges": [["a1", "isPartOf", "fwd", "notavar"]],
            "anchors": {"a1": "place0"},
            "k": 3,
        },
    )
    assert r.status_code == 400


def test_concurrent_equals_sequential(served):
    client, _, _ = served
    body = {"x": [250000.0, 250000.0], "relation": "nearestCity", "dir": "fwd", "k": 8}
    sequential = client.post("/lift", json=body).json()
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(
            pool.map(lambda _: client.post("/lift", json=body).json(), range(24))
        )
    assert all(r == sequential for r in results)


def test_service_does_not_mutate_model(served):
    client, model, _ = served
    before = {k: v.detach().clone() for k, v in model.params.items()}
    client.post(
        "/lift", json={"x": [1.0, 2.0], "relation": "isPartOf", "dir": "fwd", "k": 3}
    )
    client.get("/meta")
    for k, v in model.params.items():
        assert (v.detach() == before[k]).all()
