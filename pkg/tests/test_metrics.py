import json

import numpy as np
import pytest
import torch

from geokge.errors import EmptyInput, EmptyNegatives, NoLocationEncoder
from geokge.kg import split_kg
from geokge.metrics import (
    RankObservation,
    apr,
    auc,
    eval_qa,
    eval_ssl,
    grid_cluster_export,
    percentile_rank,
)
from geokge.model import Model, ModelConfig
from geokge.sampler import QADatasetConfig, build_qa_dataset, build_ssl_datasets
from geokge.synth import SynthConfig, synth_geokg

from oracles import mann_whitney_auc


def test_percentile_rank_extremes():
    assert percentile_rank(RankObservation(0.9, (0.1, 0.2, 0.3, 0.4))) == 100.0
    assert percentile_rank(RankObservation(0.0, (0.1, 0.2, 0.3, 0.4))) == 0.0
    assert percentile_rank(RankObservation(0.5, (0.5, 0.5, 0.5, 0.5))) == 50.0


def test_rank_observation_needs_negatives():
    with pytest.raises(EmptyNegatives):
        RankObservation(0.5, ())


def test_apr_basic():
    obs = [RankObservation(1.0, (0.0,)), RankObservation(0.0, (1.0,))]
    assert apr(obs) == 50.0
    assert apr([RankObservation(1.0, (0.0,))] * 3) == 100.0
    with pytest.raises(EmptyInput):
        apr([])


def test_apr_null_distribution():
    rng = np.random.default_rng(0)
    obs = [
        RankObservation(float(rng.random()), tuple(rng.random(10)))
        for _ in range(1000)
    ]
    # percentile of a uniform draw among 10 uniforms: mean 50, var 1000
    sigma = np.sqrt(1000.0 / 1000.0)
    assert abs(apr(obs) - 50.0) <= 3 * sigma


def test_apr_mean_linearity():
    rng = np.random.default_rng(1)
    obs = [
        RankObservation(float(rng.random()), tuple(rng.random(5)))
        for _ in range(101)
    ]
    left, right = obs[:40], obs[40:]
    pooled = apr(obs)
    weighted = (len(left) * apr(left) + len(right) * apr(right)) / len(obs)
    assert pooled == pytest.approx(weighted, rel=1e-12)


def test_auc_extremes_and_ties():
    assert auc([(0.9, 0.1), (0.8, 0.2)]) == 1.0
    assert auc([(0.1, 0.9), (0.2, 0.8)]) == 0.0
    assert auc([(0.5, 0.5), (0.5, 0.5)]) == 0.5
    with pytest.raises(EmptyInput):
        auc([])


def test_auc_matches_quadratic_oracle():
    rng = np.random.default_rng(2)
    # scores with deliberate ties (quantized)
    pos = np.round(rng.random(90), 2)
    neg = np.round(rng.random(110), 2)
    pairs = list(zip(pos, np.resize(neg, 90)))
    got = auc(pairs)
    expected = mann_whitney_auc([p for p, _ in pairs], [n for _, n in pairs])
    assert got == pytest.approx(expected, abs=1e-12)


def test_grouped_report_hand_fixture():
    from geokge.metrics import _grouped_report

    observations = {
        "g1": [
            RankObservation(0.9, (0.1, 0.5)),   # PR 100
            RankObservation(0.3, (0.4, 0.2)),   # PR 50
        ],
        "g2": [RankObservation(0.2, (0.6, 0.8))],  # PR 0
    }
    rep = _grouped_report(observations, meta={})
    assert rep.groups["g1"]["apr"] == pytest.approx(75.0)
    assert rep.groups["g2"]["apr"] == pytest.approx(0.0)
    assert rep.overall["apr"] == pytest.approx(50.0)
    assert rep.overall["n"] == 3
    # AUC pairs: (0.9, 0.1), (0.3, 0.4), (0.2, 0.6) -> wins 1 of 3... pooled:
    expected = mann_whitney_auc([0.9, 0.3, 0.2], [0.1, 0.4, 0.6])
    assert rep.overall["auc"] == pytest.approx(expected)


@pytest.fixture(scope="module")
def trained_world():
    kg = synth_geokg(SynthConfig(n_regions=4, n_places=20, n_agents=10), seed=5)
    split = split_kg(kg, (90, 1, 9), seed=5)
    qa = build_qa_dataset(
        split,
        QADatasetConfig(
            per_dag={"train": 2, "valid": 0, "test": 2},
            dag_types=("2-chain", "2-inter", "Hard-2-inter"),
            neg_size=4,
        ),
        seed=2,
    )
    cfg = ModelConfig(
        mode="se-kge-full", d_feat=4, d_space=4,
        n_scales=3, lambda_min=100.0, lambda_max=2e6,
    )
    model = Model.create(split.train, cfg, seed=1)
    return split, qa, model


def test_eval_qa_groups_and_counts(trained_world):
    split, qa, model = trained_world
    rep = eval_qa(model, qa["test"], seed=0)
    assert set(rep.groups) == {"2-chain", "2-inter", "Hard-2-inter"}
    assert sum(g["n"] for g in rep.groups.values()) == rep.overall["n"] == 6
    for g in rep.groups.values():
        assert 0.0 <= g["auc"] <= 1.0
        assert 0.0 <= g["apr"] <= 100.0


def test_eval_qa_deterministic(trained_world):
    split, qa, model = trained_world
    a = eval_qa(model, qa["test"], seed=3).to_json()
    b = eval_qa(model, qa["test"], seed=3).to_json()
    assert a == b


def test_eval_ssl_structure(trained_world):
    split, qa, model = trained_world
    ssl = build_ssl_datasets(split)
    rep = eval_ssl(model, ssl["train"], neg_size=5, seed=0)
    both = set(ssl["train"].forward) & set(ssl["train"].backward)
    rels = {r for _, r, _ in both}
    expected_groups = {f"{r}(x, ?e)" for r in rels} | {f"{r}^-1(x, ?e)" for r in rels}
    assert set(rep.groups) == expected_groups
    assert rep.overall["n"] == sum(g["n"] for g in rep.groups.values())
    assert rep.overall["n"] == 2 * len(both)


def test_report_text_and_write(tmp_path, trained_world):
    split, qa, model = trained_world
    rep = eval_qa(model, qa["test"], seed=0)
    text = rep.to_text()
    assert "overall" in text and "2-chain" in text
    rep.write(tmp_path / "r.json")
    loaded = json.loads((tmp_path / "r.json").read_text())
    assert loaded["overall"]["n"] == 6


def test_grid_export_default_cell_and_labels(trained_world):
    _, _, model = trained_world
    cells, meta = grid_cluster_export(model, cell_m=20_000.0, k=4)
    area = model.vocab.study_area
    nx = int(np.ceil((area.max[0] - area.min[0]) / 20_000.0))
    ny = int(np.ceil((area.max[1] - area.min[1]) / 20_000.0))
    assert meta["n_cells"] == len(cells) == nx * ny
    assert meta["linkage"] == "average" and meta["metric"] == "cosine"
    labels = {c["cluster"] for c in cells}
    assert labels <= set(range(4))
    assert all(c["cell_m"] == 20_000.0 for c in cells)


def test_grid_export_k1_rejected(trained_world):
    _, _, model = trained_world
    with pytest.raises(ValueError):
        grid_cluster_export(model, cell_m=20_000.0, k=1)


def test_grid_export_identical_embeddings_share_cluster(trained_world):
    split, _, _ = trained_world
    cfg = ModelConfig(
        mode="se-kge-full", d_feat=4, d_space=4,
        n_scales=3, lambda_min=100.0, lambda_max=2e6,
    )
    model = Model.create(split.train, cfg, seed=1)
    with torch.no_grad():
        model.params["locenc/w2"].zero_()
        model.params["locenc/b2"][:] = torch.tensor([1.0, 2.0, 3.0, 4.0])
    cells, _ = grid_cluster_export(model, cell_m=100_000.0, k=3)
    assert len({c["cluster"] for c in cells}) == 1


def test_grid_export_requires_location_encoder(trained_world):
    split, _, _ = trained_world
    gqe = Model.create(
        split.train,
        ModelConfig(mode="gqe", d_feat=4, d_space=4, n_scales=3,
                    lambda_min=100.0, lambda_max=2e6),
        seed=0,
    )
    with pytest.raises(NoLocationEncoder):
        grid_cluster_export(gqe, cell_m=20_000.0, k=4)
