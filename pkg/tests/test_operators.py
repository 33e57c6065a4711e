import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from geokge.errors import (
    DimensionMismatch,
    EmptyInput,
    UnknownRelation,
    UnsupportedMode,
    ZeroVector,
)
from geokge.kg import Footprint, StudyArea, build_kg
from geokge.locenc import ACTIVATIONS, encode_location
from geokge.model import Model, ModelConfig
from geokge.operators import (
    cosine,
    cosine_scores,
    intersect,
    project_entity,
    project_location,
)

AREA = StudyArea(min=(0.0, 0.0), max=(1000.0, 1000.0))


def tiny_kg():
    records = [
        ("p", "Place", Footprint(point=(10.0, 20.0))),
        ("q", "Place", Footprint(point=(600.0, 700.0))),
        ("n", "Agent", None),
    ]
    triples = [("p", "r1", "q"), ("n", "r2", "p")]
    return build_kg(records, (), triples, AREA)


def make_model(mode="se-kge-full", d_feat=3, d_space=3, dtype=torch.float64):
    cfg = ModelConfig(
        mode=mode, d_feat=d_feat, d_space=d_space,
        n_scales=3, lambda_min=10.0, lambda_max=2000.0,
    )
    return Model.create(tiny_kg(), cfg, seed=1, dtype=dtype)


def set_identity_projection(m, rel="r1", direction="fwd"):
    row = m.rel_row(rel, direction)
    with torch.no_grad():
        if "proj/rc" in m.params:
            m.params["proj/rc"][row] = torch.eye(m.config.d_feat, dtype=m.dtype)
        m.params["proj/rx"][row] = torch.eye(m.config.d_space, dtype=m.dtype)


def test_identity_blocks_identity_output():
    m = make_model()
    set_identity_projection(m)
    v = torch.tensor(np.random.default_rng(0).normal(size=6), dtype=torch.float64)
    out = project_entity(m, v, "r1", "fwd")
    assert torch.allclose(out, v)


def test_scalar_blocks_dense_oracle():
    m = make_model(d_feat=1, d_space=1)
    row = m.rel_row("r1", "fwd")
    with torch.no_grad():
        m.params["proj/rc"][row] = torch.tensor([[2.0]], dtype=torch.float64)
        m.params["proj/rx"][row] = torch.tensor([[3.0]], dtype=torch.float64)
    v = torch.tensor([1.0, 1.0], dtype=torch.float64)
    out = project_entity(m, v, "r1", "fwd")
    # oracle: dense block-diagonal matrix multiply
    dense = np.array([[2.0, 0.0], [0.0, 3.0]])
    assert np.allclose(out.detach().numpy(), dense @ np.array([1.0, 1.0]))


def test_block_diagonality():
    m = make_model()
    v = torch.tensor(np.random.default_rng(1).normal(size=6), dtype=torch.float64)
    w = v.clone()
    w[3:] += torch.tensor([0.5, -0.2, 0.9], dtype=torch.float64)
    a = project_entity(m, v, "r1", "fwd")
    b = project_entity(m, w, "r1", "fwd")
    assert torch.allclose(a[:3], b[:3])
    assert not torch.allclose(a[3:], b[3:])


def test_projection_linearity():
    m = make_model()
    rng = np.random.default_rng(2)
    u = torch.tensor(rng.normal(size=6), dtype=torch.float64)
    v = torch.tensor(rng.normal(size=6), dtype=torch.float64)
    left = project_entity(m, 2.0 * u + 3.0 * v, "r1", "fwd")
    right = 2.0 * project_entity(m, u, "r1", "fwd") + 3.0 * project_entity(
        m, v, "r1", "fwd"
    )
    assert torch.allclose(left, right, atol=1e-6)


def test_projection_unknown_relation_and_dims():
    m = make_model()
    with pytest.raises(UnknownRelation):
        project_entity(m, torch.zeros(6, dtype=torch.float64), "nope", "fwd")
    with pytest.raises(UnknownRelation):
        project_entity(m, torch.zeros(6, dtype=torch.float64), "r1", "sideways")
    with pytest.raises(DimensionMismatch):
        project_entity(m, torch.zeros(5, dtype=torch.float64), "r1", "fwd")


def test_inverse_direction_independent_parameters():
    m = make_model()
    v = torch.tensor(np.random.default_rng(3).normal(size=6), dtype=torch.float64)
    fwd = project_entity(m, v, "r1", "fwd")
    inv = project_entity(m, v, "r1", "inv")
    assert not torch.allclose(fwd, inv)


def test_project_location_shape_and_zero_cross_block():
    m = make_model()
    out = project_location(m, np.array([100.0, 150.0]), "r1", "fwd")
    assert out.shape == (6,)
    row = m.rel_row("r1", "fwd")
    with torch.no_grad():
        m.params["proj/rxc"][row] = torch.zeros(3, 3, dtype=torch.float64)
    out = project_location(m, np.array([100.0, 150.0]), "r1", "fwd")
    assert torch.allclose(out[:3], torch.zeros(3, dtype=torch.float64))


def test_project_location_matches_composition_oracle():
    m = make_model()
    x = np.array([321.0, 77.0])
    out = project_location(m, x, "r1", "fwd").detach().numpy()
    s = encode_location(x, m.locenc_params()).detach().numpy()
    row = m.rel_row("r1", "fwd")
    rxc = m.params["proj/rxc"][row].detach().numpy()
    rx = m.params["proj/rx"][row].detach().numpy()
    expected = np.concatenate([rxc @ s, rx @ s])
    assert np.allclose(out, expected, atol=1e-9)


def test_project_location_unsupported_in_gqe_modes():
    m = make_model(mode="gqe")
    with pytest.raises(UnsupportedMode):
        project_location(m, np.array([1.0, 2.0]), "r1", "fwd")


def test_gqe_diag_action():
    m = make_model(mode="gqe-diag")
    row = m.rel_row("r1", "fwd")
    v = torch.tensor(np.random.default_rng(4).normal(size=3), dtype=torch.float64)
    out = project_entity(m, v, "r1", "fwd")
    assert torch.allclose(out, v * m.params["proj/diag"][row])


# ---------------------------------------------------------------------------
# intersection
# ---------------------------------------------------------------------------

def test_intersect_permutation_invariant():
    m = make_model()
    rng = np.random.default_rng(5)
    embs = [torch.tensor(rng.normal(size=6), dtype=torch.float64) for _ in range(4)]
    base = intersect(m, embs, "Place")
    for perm in ([3, 1, 0, 2], [2, 3, 1, 0], [1, 0, 3, 2]):
        out = intersect(m, [embs[i] for i in perm], "Place")
        assert torch.allclose(out, base, atol=1e-6)


def test_intersect_identical_inputs_attention():
    m = make_model()
    ti = m.type_index["Place"]
    with torch.no_grad():
        m.params["inter/w"][ti] = torch.eye(6, dtype=torch.float64)
        m.params["inter/b"][ti] = torch.zeros(6, dtype=torch.float64)
    v = torch.tensor(np.random.default_rng(6).normal(size=6), dtype=torch.float64)
    out = intersect(m, [v, v, v], "Place")
    # softmax weights sum to 1, so pooling n copies is exactly v
    act = ACTIVATIONS[m.config.activation]
    assert torch.allclose(out, act(v))
    assert torch.allclose(out, intersect(m, [v], "Place"))


def test_intersect_min_variant_pre_transform():
    m = make_model(mode="gqe")
    ti = m.type_index["Place"]
    with torch.no_grad():
        m.params["inter/w"][ti] = torch.eye(3, dtype=torch.float64)
        m.params["inter/b"][ti] = torch.zeros(3, dtype=torch.float64)
    a = torch.tensor([1.0, 4.0, 0.0], dtype=torch.float64)
    b = torch.tensor([3.0, 2.0, 0.0], dtype=torch.float64)
    out = intersect(m, [a, b], "Place")
    assert torch.allclose(out, torch.tensor([1.0, 2.0, 0.0], dtype=torch.float64))


def test_intersect_empty_and_dims():
    m = make_model()
    with pytest.raises(EmptyInput):
        intersect(m, [], "Place")
    with pytest.raises(DimensionMismatch):
        intersect(m, [torch.zeros(5, dtype=torch.float64)], "Place")


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.lists(
            st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=6, max_size=6
        ),
        min_size=1,
        max_size=5,
    ),
    st.randoms(),
)
def test_intersect_permutation_property(rows, rnd):
    m = make_model()
    embs = [torch.tensor(r, dtype=torch.float64) for r in rows]
    base = intersect(m, embs, "Agent")
    shuffled = list(embs)
    rnd.shuffle(shuffled)
    assert torch.allclose(intersect(m, shuffled, "Agent"), base, atol=1e-6)


# ---------------------------------------------------------------------------
# cosine
# ---------------------------------------------------------------------------

def test_cosine_basic_cases():
    a = torch.tensor([1.0, 2.0, -3.0], dtype=torch.float64)
    assert cosine(a, a).item() == pytest.approx(1.0)
    assert cosine(a, -a).item() == pytest.approx(-1.0)
    e1 = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    e2 = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    assert cosine(e1, e2).item() == pytest.approx(0.0)


def test_cosine_symmetric_scale_invariant():
    rng = np.random.default_rng(7)
    a = torch.tensor(rng.normal(size=5), dtype=torch.float64)
    b = torch.tensor(rng.normal(size=5), dtype=torch.float64)
    assert cosine(a, b).item() == pytest.approx(cosine(b, a).item())
    assert cosine(3.7 * a, b).item() == pytest.approx(cosine(a, b).item())


def test_cosine_zero_vector():
    a = torch.tensor([1.0, 0.0], dtype=torch.float64)
    with pytest.raises(ZeroVector):
        cosine(a, torch.zeros(2, dtype=torch.float64))
    with pytest.raises(ZeroVector):
        cosine_scores(torch.zeros(2, dtype=torch.float64), a.unsqueeze(0))


def test_cosine_scores_matches_pairwise():
    rng = np.random.default_rng(8)
    q = torch.tensor(rng.normal(size=4), dtype=torch.float64)
    embs = torch.tensor(rng.normal(size=(6, 4)), dtype=torch.float64)
    scores = cosine_scores(q, embs)
    for i in range(6):
        assert scores[i].item() == pytest.approx(cosine(q, embs[i]).item())


def test_operator_gradients_match_finite_differences():
    m = make_model()
    x = np.array([40.0, 80.0])
    probe = torch.tensor(np.random.default_rng(9).normal(size=6), dtype=torch.float64)

    def value():
        a = project_location(m, x, "r1", "fwd")
        b = project_entity(m, m.encode_entity("p", deterministic=True), "r2", "inv")
        return intersect(m, [a, b], "Place") @ probe

    value().backward()
    eps = 1e-6
    worst = 0.0
    for name in ("proj/rx", "proj/rxc", "inter/u", "inter/w"):
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
