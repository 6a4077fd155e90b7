import json

import numpy as np
import pytest

from hirpf import numerics as nx
from hirpf.backbone import EOS, SPK_A, SPK_B, SYS, Backbone, ModelConfig, SequenceLengthError
from hirpf.identity import AdapterConfig, ExclusivityError, HIRPFModel, IdentityRegistry, activate
from hirpf.numerics import EmptyLossError, Tensor
from hirpf.trainer import (
    AdamW,
    Checkpoint,
    CheckpointError,
    DatasetValidationError,
    DialogueSample,
    NonFiniteLossError,
    TrainConfig,
    Trainer,
    Turn,
    build_training_example,
    load_checkpoint,
    load_dataset,
    micro_batches,
    overfit_fixture,
    read_dataset,
    role_prompt,
    save_checkpoint,
    train,
    write_dataset,
)

REG = IdentityRegistry()
TOY = dict(d_model=16, n_heads=2, n_blocks=2, d_ff=32, max_len=256)


def make_model(**kw):
    return HIRPFModel(Backbone.init(ModelConfig(**dict(TOY, **kw))), IdentityRegistry(), AdapterConfig(rank=2, alpha=2))


def sample_dict(**over):
    d = {"id": "s1", "active_identities": ["doctor"],
         "turns": [{"speaker": "B", "text": "hi"}, {"speaker": "A", "text": "hello"}]}
    d.update(over)
    return d


# --- schema -----------------------------------------------------------------

def test_sample_round_trip():
    s = DialogueSample.from_dict(sample_dict(source="fixture", annotation={"x": 1}), REG)
    assert DialogueSample.from_dict(json.loads(s.to_json())) == s


@pytest.mark.parametrize("over", [
    {"extra": 1}, {"id": ""}, {"active_identities": "doctor"}, {"turns": [{"speaker": "A", "text": "x"}]},
    {"turns": [{"speaker": "C", "text": "x"}, {"speaker": "A", "text": "y"}]},
    {"turns": [{"speaker": "B", "text": " "}, {"speaker": "A", "text": "y"}]},
    {"annotation": [1]},
])
def test_sample_validation(over):
    with pytest.raises(ValueError):
        DialogueSample.from_dict(sample_dict(**over))


def test_sample_identity_validation():
    with pytest.raises(ExclusivityError):
        DialogueSample.from_dict(sample_dict(active_identities=["doctor", "artist"]), REG)
    with pytest.raises(KeyError):
        DialogueSample.from_dict(sample_dict(active_identities=["pilot"]), REG)


def test_dataset_io(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(overfit_fixture(4), path)
    assert [s.id for s in load_dataset(path)] == [f"overfit-{i:03d}" for i in range(4)]
    with open(path, "a") as fh:
        fh.write("{not json\n\n")
        fh.write(json.dumps(sample_dict(active_identities=["pilot"])) + "\n")
    samples, errors = read_dataset(path, REG)
    assert len(samples) == 4 and [n for n, _ in errors] == [5, 7]
    with pytest.raises(DatasetValidationError) as exc:
        load_dataset(path)
    assert len(exc.value.errors) == 2
    assert len(load_dataset(path, strict=False)) == 4


# --- examples ----------------------------------------------------------------

def test_role_prompt():
    text = role_prompt(activate(REG, ["low-openness", "artist"]))
    assert "Personality: low openness." in text and "Profession: artist." in text
    assert "Personality: unspecified." in role_prompt(activate(REG, ["doctor"]))


def test_training_example_masks_only_speaker_a():
    s = DialogueSample.from_dict(sample_dict(), REG)
    ex = build_training_example(s, REG, 512)
    ids, lm = ex.ids.tolist(), ex.loss_mask
    assert ids[0] == SYS and ex.prefix_len == ids.index(SPK_B)
    a = ids.index(SPK_A)
    assert ids[a + 1:] == list(b"hello") + [EOS]
    assert lm[a + 1:].all() and not lm[:a + 1].any()


def test_training_example_truncates_oldest_turns():
    turns = [{"speaker": "B" if i % 2 == 0 else "A", "text": "x" * 30} for i in range(8)]
    s = DialogueSample.from_dict(sample_dict(turns=turns), REG)
    prefix = build_training_example(s, REG, 512).prefix_len
    ex = build_training_example(s, REG, prefix + 70)
    assert ex.dropped_turns == 6 and len(ex.ids) <= prefix + 70
    with pytest.raises(SequenceLengthError):
        build_training_example(s, REG, prefix + 10)


def test_training_example_needs_a_text():
    turns = [{"speaker": "A", "text": "hi"}, {"speaker": "B", "text": "ok"}]
    s = DialogueSample.from_dict(sample_dict(turns=turns), REG)
    ex = build_training_example(s, REG, 512)
    assert ex.loss_mask.any()
    long_b = [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b" * 40}]
    s2 = DialogueSample.from_dict(sample_dict(turns=long_b), REG)
    with pytest.raises(EmptyLossError):
        build_training_example(s2, REG, build_training_example(s2, REG, 512).prefix_len + 42)


def test_micro_batches_group_by_signature():
    exs = [build_training_example(s, REG, 512) for s in overfit_fixture(32)]
    batches = micro_batches(exs, 3, np.random.default_rng(0))
    assert all(len({e.signature for e in b}) == 1 for b in batches)
    assert sorted(e.sample_id for b in batches for e in b) == sorted(e.sample_id for e in exs)
    again = micro_batches(exs, 3, np.random.default_rng(0))
    assert [[e.sample_id for e in b] for b in batches] == [[e.sample_id for e in b] for b in again]


# --- optimizer ---------------------------------------------------------------

def reference_adamw(p, grads, lr, b1, b2, eps, wd):
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh, vh = m / (1 - b1 ** t), v / (1 - b2 ** t)
        p = p - lr * (mh / (np.sqrt(vh) + eps) + wd * p)
    return p


def test_adamw_matches_reference(rng):
    p0 = rng.normal(size=(3, 4))
    grads = [rng.normal(size=(3, 4)) for _ in range(5)]
    p = Tensor(p0.copy(), requires_grad=True, dtype=np.float64)
    opt = AdamW(lr=0.01, weight_decay=0.1)
    for g in grads:
        p.grad = g
        opt.step({"p": p}, {"p": None})
    np.testing.assert_allclose(p.data, reference_adamw(p0, grads, 0.01, 0.9, 0.999, 1e-8, 0.1), rtol=1e-12)


def test_adamw_row_mask_and_row_step_counts(rng):
    p0 = rng.normal(size=(3, 4))
    grads = [rng.normal(size=(3, 4)) for _ in range(4)]
    p = Tensor(p0.copy(), requires_grad=True, dtype=np.float64)
    opt = AdamW(lr=0.01, weight_decay=0.0)
    masks = [[1, 0, 0], [1, 0, 1], [1, 0, 1], [0, 0, 1]]
    for g, m in zip(grads, masks):
        p.grad = g
        opt.step({"p": p}, {"p": np.array(m, dtype=bool)})
    np.testing.assert_array_equal(p.data[1], p0[1])
    assert opt.state["p"].t.tolist() == [3, 0, 3]
    np.testing.assert_allclose(p.data[0], reference_adamw(p0[0], [g[0] for g in grads[:3]], 0.01, 0.9, 0.999, 1e-8, 0),
                               rtol=1e-12)
    np.testing.assert_allclose(p.data[2], reference_adamw(p0[2], [g[2] for g in grads[1:]], 0.01, 0.9, 0.999, 1e-8, 0),
                               rtol=1e-12)


# --- training ------------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="cosine")
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"momentum": 0.9})
    assert TrainConfig.from_dict(TrainConfig(lr=0.5).to_dict()).lr == 0.5


def test_step_rejects_mixed_signatures():
    m = make_model()
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(2)]
    with pytest.raises(ValueError):
        Trainer(m).train_step([exs])


def test_selective_step_leaves_the_rest_alone(backend):
    m = make_model()
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(8)]
    batch = [e for e in exs if e.signature == "low-extraversion+doctor"]
    before = {k: v.data.copy() for k, v in m.named_parameters().items()}
    tr = Trainer(m, TrainConfig(lr=1e-2, grad_accum=1))
    rep = tr.train_step([batch])
    reach = m.trainable_for(batch[0].activation)
    for name, arr in before.items():
        now = m.named_parameters()[name].data
        if name not in reach:
            np.testing.assert_array_equal(now, arr, err_msg=name)
    assert rep.changed and all(c.split("[")[0] in reach for c in rep.changed)
    assert "blocks.1.router.gate[doctor]" in rep.updated
    assert rep.n_tokens == int(sum(e.loss_mask[1:].sum() for e in batch))
    assert m.trained_steps == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_without_update():
    m = make_model()
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(4)]
    name = "blocks.1.q.doctor.B"
    m.adapter_parameters()[name].data[...] = np.inf
    before = {k: v.data.copy() for k, v in m.adapter_parameters().items()}
    with pytest.raises(NonFiniteLossError):
        Trainer(m, TrainConfig(lr=1e-2)).train_step([[exs[1]]])
    for k, v in m.adapter_parameters().items():
        np.testing.assert_array_equal(v.data, before[k])
    assert m.trained_steps == 0


def test_train_is_deterministic_and_writes_metrics(tmp_path):
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(8)]
    cfg = TrainConfig(lr=1e-2, batch_size=2, grad_accum=2, epochs=2, checkpoint_every=2)
    r1 = train(make_model(), exs, cfg, metrics_path=tmp_path / "m.jsonl", checkpoint_dir=tmp_path / "ck")
    r2 = train(make_model(), exs, cfg)
    assert r1.metrics == r2.metrics and r1.steps == 4
    assert r1.checkpoint.blob == r2.checkpoint.blob
    rows = [json.loads(l) for l in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert [r["step"] for r in rows] == [1, 2, 3, 4] and rows[-1]["epoch"] == 1
    assert sorted(p.name for p in (tmp_path / "ck").iterdir()) == ["final", "step-000002", "step-000004"]
    assert train(make_model(), exs, TrainConfig(max_steps=1, batch_size=2, grad_accum=1)).steps == 1
    with pytest.raises(ValueError):
        train(make_model(), [], cfg)


def test_ablation_modes_in_trainer():
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(1)]
    m = make_model()
    rep = Trainer(m, TrainConfig(mode="dense", lr=1e-2)).train_step([exs])
    assert m.mode == "dense"
    assert any(".low-agreeableness." in c for c in rep.changed)
    mono = make_model()
    rep = Trainer(mono, TrainConfig(mode="monolithic", lr=1e-2)).train_step([exs])
    assert all(".shared." in c for c in rep.changed)


# --- checkpoints ------------------------------------------------------------------

def trained_model():
    m = make_model()
    exs = [build_training_example(s, REG, 256) for s in overfit_fixture(4)]
    train(m, exs, TrainConfig(lr=1e-2, batch_size=1, grad_accum=1, epochs=1))
    return m


def test_checkpoint_round_trip(tmp_path):
    m = trained_model()
    save_checkpoint(m, tmp_path / "a", TrainConfig(lr=1e-2))
    m2 = load_checkpoint(tmp_path / "a")
    save_checkpoint(m2, tmp_path / "b", TrainConfig(lr=1e-2))
    for f in ("manifest.json", "tensors.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert m2.trained_steps == m.trained_steps == 4
    assert Checkpoint.read(tmp_path / "a").train_config.lr == 1e-2
    ids = np.arange(20)[None, :]
    act = activate(REG, ["doctor"])
    np.testing.assert_array_equal(m.forward(ids, act).data, m2.forward(ids, act).data)


def test_checkpoint_float64(tmp_path):
    with nx.precision("float64"):
        m = make_model(precision="float64")
    save_checkpoint(m, tmp_path / "c")
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["dtype"] == "float64"
    assert load_checkpoint(tmp_path / "c").dtype == np.float64


def test_checkpoint_integrity(tmp_path):
    save_checkpoint(make_model(), tmp_path / "c")
    blob = bytearray((tmp_path / "c" / "tensors.bin").read_bytes())
    blob[10] ^= 0xFF
    (tmp_path / "c" / "tensors.bin").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="hash"):
        load_checkpoint(tmp_path / "c")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")
    save_checkpoint(make_model(), tmp_path / "v")
    man = json.loads((tmp_path / "v" / "manifest.json").read_text())
    man["version"] = 99
    (tmp_path / "v" / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v")


def test_checkpoint_tensor_set_mismatch(tmp_path):
    ck = Checkpoint.from_model(make_model())
    ck.manifest["tensors"] = ck.manifest["tensors"][1:]
    with pytest.raises(CheckpointError, match="mismatch"):
        ck.build_model()
