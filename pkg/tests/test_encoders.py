import numpy as np
import pytest
import torch
from scipy import stats

from geokge.errors import NotGeographic, UnknownEntity
from geokge.kg import Footprint, StudyArea, build_kg
from geokge.locenc import encode_location
from geokge.model import Model, ModelConfig

AREA = StudyArea(min=(0.0, 0.0), max=(1000.0, 1000.0))


def toy_kg():
    records = [
        ("pt1", "Place", Footprint(point=(100.0, 200.0))),
        ("pt2", "Place", Footprint(point=(400.0, 900.0))),
        ("box1", "Region", Footprint(point=(500.0, 500.0), box=((400.0, 450.0), (600.0, 620.0)))),
        ("degen", "Region", Footprint(point=(50.0, 60.0), box=((50.0, 60.0), (50.0, 60.0)))),
        ("agent1", "Agent", None),
        ("agent2", "Agent", None),
    ]
    triples = [("pt1", "in", "box1"), ("agent1", "likes", "pt2"), ("agent2", "likes", "pt1"), ("pt2", "in", "degen")]
    return build_kg(records, (), triples, AREA)


def toy_model(mode="se-kge-full", d_feat=6, d_space=6, dtype=torch.float64):
    cfg = ModelConfig(
        mode=mode, d_feat=d_feat, d_space=d_space,
        n_scales=4, lambda_min=10.0, lambda_max=2000.0,
    )
    return Model.create(toy_kg(), cfg, seed=0, dtype=dtype)


def test_feature_unit_norm():
    m = toy_model()
    for e in m.vocab.entities:
        assert m.encode_feature(e).norm().item() == pytest.approx(1.0, abs=1e-6)


def test_feature_distinct_columns():
    m = toy_model()
    a = m.encode_feature("pt1")
    b = m.encode_feature("pt2")
    assert not torch.allclose(a, b)


def test_feature_unknown_entity():
    with pytest.raises(UnknownEntity):
        toy_model().encode_feature("ghost")


def test_space_point_entity_matches_location_encoder():
    m = toy_model()
    out = m.encode_space("pt1")
    direct = encode_location(np.array([100.0, 200.0]), m.locenc_params())
    assert torch.equal(out, direct)


def test_space_degenerate_box_equals_point():
    m = toy_model()
    rng = np.random.default_rng(0)
    out = m.encode_space("degen", rng)
    direct = encode_location(np.array([50.0, 60.0]), m.locenc_params())
    assert torch.allclose(out, direct)


def test_space_nongeo_normalized_lookup():
    m = toy_model()
    out = m.encode_space("agent1")
    assert out.norm().item() == pytest.approx(1.0, abs=1e-6)


def test_box_draws_inside_and_uniform_mean():
    m = toy_model()
    rng = np.random.default_rng(42)
    draws = np.stack([m.footprint_point("box1", rng) for _ in range(1000)])
    assert np.all(draws[:, 0] >= 400.0) and np.all(draws[:, 0] <= 600.0)
    assert np.all(draws[:, 1] >= 450.0) and np.all(draws[:, 1] <= 620.0)
    # per-axis means within 3 standard errors of the centroid
    for axis, (lo, hi) in enumerate(((400.0, 600.0), (450.0, 620.0))):
        se = (hi - lo) / np.sqrt(12) / np.sqrt(len(draws))
        assert abs(draws[:, axis].mean() - (lo + hi) / 2) < 3 * se


def test_entity_concat_dims_paper_scale():
    cfg = ModelConfig(mode="se-kge-full", d_feat=64, d_space=64, n_scales=4,
                      lambda_min=10.0, lambda_max=2000.0)
    m = Model.create(toy_kg(), cfg, seed=0)
    emb = m.encode_entity("pt1")
    assert emb.shape == (128,)


def test_entity_feature_half_bitwise():
    m = toy_model()
    emb = m.encode_entity("pt1")
    feat = m.encode_feature("pt1")
    assert torch.equal(emb[:6], feat)


def test_nongeo_entity_consumes_no_rng():
    m = toy_model()
    rng = np.random.default_rng(5)
    before = rng.bit_generator.state
    a = m.encode_entity("agent1", rng)
    assert rng.bit_generator.state == before
    b = m.encode_entity("agent1", rng)
    assert torch.equal(a, b)


def test_box_entity_only_space_half_varies():
    m = toy_model()
    rng = np.random.default_rng(1)
    a = m.encode_entity("box1", rng)
    b = m.encode_entity("box1", rng)
    assert torch.equal(a[:6], b[:6])
    assert not torch.allclose(a[6:], b[6:])


def test_entity_dim_constant_across_entities():
    m = toy_model()
    rng = np.random.default_rng(2)
    dims = {tuple(m.encode_entity(e, rng).shape) for e in m.vocab.entities}
    assert dims == {(12,)}


def test_footprint_point_point_entity_constant():
    m = toy_model()
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert np.array_equal(m.footprint_point("pt1", rng), [100.0, 200.0])


def test_footprint_point_nongeo_raises():
    with pytest.raises(NotGeographic):
        toy_model().footprint_point("agent1", np.random.default_rng(0))


def test_footprint_point_unknown_entity():
    with pytest.raises(UnknownEntity):
        toy_model().footprint_point("ghost", np.random.default_rng(0))


def test_footprint_point_centroid_mode():
    m = toy_model()
    assert np.array_equal(m.footprint_point("box1", centroid=True), [500.0, 535.0])


def test_box_sampling_ks_uniform():
    m = toy_model()
    rng = np.random.default_rng(7)
    draws = np.stack([m.footprint_point("box1", rng) for _ in range(2000)])
    for axis, (lo, hi) in enumerate(((400.0, 600.0), (450.0, 620.0))):
        u = (draws[:, axis] - lo) / (hi - lo)
        result = stats.kstest(u, "uniform")
        # statistic below the 1% critical value <=> p-value above 0.01
        assert result.pvalue > 0.01


def test_point_only_modes_ignore_boxes():
    m = toy_model(mode="se-kge-pt")
    a = m.encode_space("box1", np.random.default_rng(0))
    b = encode_location(np.array([500.0, 500.0]), m.locenc_params())
    assert torch.equal(a, b)


def test_space_only_mode_has_no_feature_params():
    m = toy_model(mode="se-kge-space")
    assert not any(name.startswith("feat/") for name in m.params)
    assert m.d == 6
    assert m.encode_entity("pt1").shape == (6,)


def test_gqe_mode_has_no_space_params():
    m = toy_model(mode="gqe")
    assert not any(name.startswith("space/") for name in m.params)
    assert not any(name.startswith("locenc/") for name in m.params)
    assert m.d == 6


def test_lookup_gradients_through_normalization():
    m = toy_model(dtype=torch.float64)
    probe = torch.tensor(np.random.default_rng(0).normal(size=12), dtype=torch.float64)

    def value():
        return m.encode_entities(["pt1", "agent1"], deterministic=True).sum(0) @ probe

    value().backward()
    eps = 1e-6
    worst = 0.0
    for name in ("feat/Place", "feat/Agent", "space/nongeo"):
        p = m.params[name]
        grad = p.grad.reshape(-1).clone()
        flat = p.detach().reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + eps
            f1 = value().item()
            with torch.no_grad():
                flat[i] = orig - eps
            f2 = value().item()
            with torch.no_grad():
                flat[i] = orig
            numeric = (f1 - f2) / (2 * eps)
            denom = abs(grad[i].item()) + abs(numeric)
            if denom > 1e-8:
                worst = max(worst, abs(grad[i].item() - numeric) / denom)
    assert worst < 1e-4
