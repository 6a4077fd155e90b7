import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hirpf import numerics as nx
from hirpf.backbone import Backbone, ModelConfig
from hirpf.identity import (
    PERSONALITY,
    PROFESSION,
    AdapterConfig,
    CoverageError,
    ExclusivityError,
    HIRPFModel,
    IdentityLookupError,
    IdentityRegistry,
    ModeError,
    activate,
    assign_categories,
    dense_mode,
    effective_delta,
    gate_features,
    normalize_name,
    perturbed_toy_model,
    pooling_weights,
    route,
)
from hirpf.numerics import Tensor

TOY = dict(d_model=16, n_heads=2, n_blocks=4, d_ff=32, max_len=32)
REG = IdentityRegistry()


def make(mode="hirp", n_blocks=4, rank=4, **kw):
    return HIRPFModel(Backbone.init(ModelConfig(**dict(TOY, n_blocks=n_blocks, **kw))), IdentityRegistry(),
                      AdapterConfig(rank=rank, alpha=rank, mode=mode))


# --- registry ----------------------------------------------------------------

def test_default_registry_layout():
    assert REG.categories == (PERSONALITY, PROFESSION)
    assert REG.size(PERSONALITY) == 10 and REG.size(PROFESSION) == 3
    assert REG.keys()[:2] == ["high-agreeableness", "low-agreeableness"]
    assert REG.lookup("doctor").index == 1
    assert IdentityRegistry.from_dict(REG.to_dict()) == REG


@pytest.mark.parametrize("raw,key", [("High Openness", "high-openness"), ("low_EMS", "low-emotional-stability"),
                                     ("high neu", "high-emotional-stability"), (" Doctor ", "doctor")])
def test_normalize_name(raw, key):
    assert normalize_name(raw) == key
    assert raw in REG


def test_lookup_unknown():
    with pytest.raises(IdentityLookupError):
        REG.lookup("astronaut")


def test_registry_rejects_bad_input():
    with pytest.raises(ValueError):
        IdentityRegistry(traits=("a", "a"))
    with pytest.raises(ValueError):
        IdentityRegistry(traits=(), professions=())
    with pytest.raises(ValueError):
        IdentityRegistry.from_dict({"skills": []})


def test_profession_only_registry():
    reg = IdentityRegistry(traits=())
    assert reg.categories == (PROFESSION,)


# --- activation sets -----------------------------------------------------------

def test_activate_orders_and_masks():
    act = activate(REG, ["doctor", "high-openness"])
    assert act.keys == ["high-openness", "doctor"]
    assert act.signature == "high-openness+doctor"
    assert act.mask(PROFESSION).tolist() == [False, True, False]
    assert act.mask(PERSONALITY).sum() == 1
    assert activate(REG, []).signature == "*none*"
    assert activate(REG, ["doctor", "Doctor"]).keys == ["doctor"]


def test_exclusivity():
    with pytest.raises(ExclusivityError):
        activate(REG, ["high-openness", "low-openness"])
    with pytest.raises(ExclusivityError):
        activate(REG, ["doctor", "artist"])
    assert len(activate(REG, ["doctor", "artist"], allow_multi_profession=True)) == 2


def test_dense_mode_is_everything():
    act = dense_mode(REG)
    assert act.dense and act.signature == "*dense*"
    assert act.mask(PERSONALITY).all() and act.mask(PROFESSION).all()


def test_pass_through_blocks():
    act = activate(REG, ["doctor"])
    asg = assign_categories(4, REG.categories)
    assert act.pass_through_blocks(asg) == [0, 2]


# --- alternation ----------------------------------------------------------------

@given(st.integers(2, 12))
def test_alternation(L):
    asg = assign_categories(L, REG.categories)
    assert all(asg[j] == (PERSONALITY if j % 2 == 0 else PROFESSION) for j in range(L))


def test_coverage_error():
    with pytest.raises(CoverageError):
        assign_categories(1, REG.categories)
    with pytest.raises(CoverageError):
        assign_categories(3, ())
    with pytest.raises(CoverageError):
        make(n_blocks=1)


def test_inventory_shapes():
    m = make(rank=3)
    rows = m.inventory()
    assert {r["role"] for r in rows} == {"q", "v"}
    assert len(rows) == 2 * (10 + 3 + 10 + 3)
    assert all(r["A"] == (3, 16) and r["B"] == (16, 3) for r in rows)
    assert m.routers[1].gate.shape == (3, 16)


# --- routing ---------------------------------------------------------------------

def test_pooling_weights():
    w = pooling_weights(5, [2, 7], 2, np.float64)
    np.testing.assert_allclose(w[0, 0], [0.5, 0.5, 0, 0, 0])
    np.testing.assert_allclose(w[1, 0], [0.2] * 5)
    with pytest.raises(ValueError):
        pooling_weights(5, [0], 1, np.float64)


def test_gate_features_prefix_vs_mean(rng):
    h = Tensor(rng.normal(size=(2, 6, 4)), dtype=np.float64)
    f = gate_features(h, np.array([3, 6])).data
    np.testing.assert_allclose(f[0], h.data[0, :3].mean(0))
    np.testing.assert_allclose(f[1], h.data[1].mean(0))
    np.testing.assert_allclose(gate_features(h, 2, mode="mean").data, h.data.mean(1))
    assert gate_features(Tensor(h.data[0], dtype=np.float64), 3).shape == (4,)
    with pytest.raises(ValueError):
        gate_features(h, 2, mode="max")


@given(st.integers(0, 2 ** 32 - 1))
def test_route_normalised_and_masked(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    mask = rng.random(n) < 0.5
    feats = Tensor(rng.normal(size=(3, 5)), dtype=np.float64)
    gate = Tensor(rng.normal(size=(n, 5)) * 3, dtype=np.float64)
    w = route(feats, gate, mask).data
    assert np.all(w[:, ~mask] == 0.0)
    if mask.any():
        np.testing.assert_allclose(w.sum(1), 1.0, atol=1e-12)
    else:
        assert not w.any()


def test_route_uniform_when_gate_is_zero():
    w = route(Tensor(np.ones(4)), Tensor(np.zeros((5, 4))), [1, 0, 1, 1, 0]).data
    assert w[0] == w[2] == w[3] and w[1] == w[4] == 0.0
    assert w[0] == pytest.approx(1 / 3)


# --- model -----------------------------------------------------------------------

def test_backbone_frozen_adapters_trainable():
    m = make()
    assert not any(t.requires_grad for t in m.backbone.named_parameters().values())
    assert all(t.requires_grad for t in m.adapter_parameters().values())
    assert set(m.named_parameters()) >= {"backbone.head", "blocks.0.router.gate"}


def test_init_equals_base_bitwise(rng, backend):
    m = make()
    ids = rng.integers(0, 256, size=(2, 9))
    base = m.base_forward(ids).data
    for names in (["high-openness", "doctor"], ["artist"], []):
        np.testing.assert_array_equal(m.forward(ids, activate(m.registry, names), prefix_len=4).data, base)


def test_empty_activation_is_base():
    m = perturbed_toy_model(0, n_blocks=4)
    ids = np.arange(10)[None, :]
    np.testing.assert_array_equal(m.forward(ids, activate(m.registry, [])).data, m.base_forward(ids).data)


def test_trained_adapters_move_output():
    m = perturbed_toy_model(0, n_blocks=4)
    ids = np.arange(10)[None, :]
    assert not np.array_equal(m.forward(ids, activate(m.registry, ["doctor"])).data, m.base_forward(ids).data)


def test_routing_record_and_fixed_routing(rng):
    m = perturbed_toy_model(1, n_blocks=4)
    act = activate(m.registry, ["high-openness", "doctor"])
    ids = rng.integers(0, 256, size=(1, 12))
    out, rec = m.forward(ids, act, prefix_len=5, return_routing=True)
    assert set(rec) == {0, 1, 2, 3}
    assert rec[1][0, 1] == 1.0 and rec[1][0].sum() == 1.0                 # singleton -> weight 1
    again = m.forward(ids, act, routing=rec).data
    np.testing.assert_allclose(again, out.data, atol=1e-6)


def test_routing_uses_prefix_only(rng):
    m = perturbed_toy_model(2, n_blocks=4)
    act = dense_mode(m.registry)
    ids = rng.integers(0, 256, size=(1, 12))
    alt = ids.copy()
    alt[0, 6:] = (alt[0, 6:] + 1) % 256
    _, r1 = m.forward(ids, act, prefix_len=6, return_routing=True)
    _, r2 = m.forward(alt, act, prefix_len=6, return_routing=True)
    for j in r1:
        np.testing.assert_array_equal(r1[j], r2[j])


def test_generation_holds_routing_fixed(rng):
    m = perturbed_toy_model(3, n_blocks=4)
    act = dense_mode(m.registry)
    prompt = rng.integers(0, 256, size=8).tolist()
    out = m.generate(prompt, act, 5, prefix_len=4)
    rec = m.prefill_routing(prompt, act, prefix_len=4)
    ids = list(prompt)
    for tok in out:
        logits = m.forward(np.array([ids]), act, routing=rec).data[0, -1]
        assert int(np.argmax(logits)) == tok
        ids.append(tok)


def test_bypass_equals_merge(rng):
    m = perturbed_toy_model(4, n_blocks=4)
    ids = rng.integers(0, 256, size=(2, 10))
    act = activate(m.registry, ["low-extraversion", "programmer"])
    a = m.forward(ids, act, prefix_len=[3, 7]).data
    b = m.forward(ids, act, prefix_len=[3, 7], path="merge").data
    np.testing.assert_allclose(a, b, atol=1e-5)
    with pytest.raises(ValueError):
        effective_delta([], [], path="sideways")


def test_effective_delta_pass_through(rng):
    h = Tensor(rng.normal(size=(2, 3, 4)), dtype=np.float64)
    W0 = Tensor(rng.normal(size=(4, 4)), dtype=np.float64)
    for path in ("bypass", "merge"):
        np.testing.assert_allclose(effective_delta([], [], path)(h, W0).data, h.data @ W0.data.T, atol=1e-12)


def test_trainable_for():
    m = make()
    t = m.trainable_for(activate(m.registry, ["low-openness", "artist"]))
    assert "blocks.0.q.low-openness.A" in t and "blocks.2.v.low-openness.B" in t
    assert "blocks.1.q.artist.B" in t and "blocks.1.q.doctor.B" not in t
    assert t["blocks.1.router.gate"].tolist() == [True, False, False]
    assert m.trainable_for(activate(m.registry, [])) == {}


def test_modes():
    m = make(mode="dense")
    ids = np.arange(8)[None, :]
    act = activate(m.registry, ["doctor"])
    assert m.block_mask(0, act).all()
    mono = make(mode="monolithic", rank=4)
    assert mono.adapter_parameter_count() == 2 * 4 * 2 * 16 * 4
    assert mono.trainable_for(act).keys() == mono.adapter_parameters().keys()
    np.testing.assert_array_equal(mono.forward(ids, act).data, mono.base_forward(ids).data)
    with pytest.raises(ValueError):
        AdapterConfig(mode="sparse")


def test_set_mode_rebuilds_and_refuses_after_training():
    m = make()
    m.set_mode("monolithic")
    assert m.routers == {} and m.shared
    m.set_mode("hirp")
    assert m.routers
    m.trained_steps = 1
    with pytest.raises(ModeError):
        m.set_mode("dense")


def test_float64_model():
    with nx.precision("float64"):
        m = make(precision="float64")
    assert all(t.dtype == np.float64 for t in m.named_parameters().values())
