import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hirpf.backbone import (
    EOS,
    PAD,
    SPK_A,
    VOCAB_SIZE,
    Backbone,
    ByteTokenizer,
    DecodeError,
    ModelConfig,
    Sampling,
    SequenceLengthError,
    detokenize,
    generate,
    pad_batch,
    tokenize,
)

TINY = dict(d_model=16, n_heads=2, n_blocks=2, d_ff=32, max_len=24)


@pytest.fixture(scope="module")
def tiny():
    return Backbone.init(ModelConfig(**TINY))


@given(st.text(max_size=200))
def test_tokenizer_round_trip(text):
    ids = tokenize(text)
    assert all(0 <= i < 256 for i in ids)
    assert detokenize(ids) == text


def test_detokenize_drops_specials_and_validates():
    assert detokenize([SPK_A] + tokenize("hi") + [EOS, PAD]) == "hi"
    with pytest.raises(DecodeError):
        detokenize([VOCAB_SIZE])
    with pytest.raises(DecodeError):
        detokenize([0xC3])
    assert detokenize([0xC3], errors="replace") == "�"


def test_tokenizer_spec_round_trip():
    tok = ByteTokenizer()
    assert ByteTokenizer.from_dict(tok.to_dict()) == tok
    with pytest.raises(ValueError):
        ByteTokenizer.from_dict({"kind": "bpe"})


@pytest.mark.parametrize("bad", [dict(d_model=10, n_heads=4), dict(n_blocks=0), dict(adapt_roles=("z",))])
def test_model_config_validation(bad):
    with pytest.raises(ValueError):
        ModelConfig(**bad)


def test_model_config_round_trip():
    cfg = ModelConfig(**TINY)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"width": 3})


def test_forward_shapes_and_dtype(tiny, backend):
    ids = np.array([[1, 2, 3, 4], [5, 6, 7, 8]])
    assert tiny.forward(ids).shape == (2, 4, VOCAB_SIZE)
    assert tiny.forward(ids[0]).shape == (4, VOCAB_SIZE)
    assert tiny.forward(ids).dtype == np.float32
    m64 = Backbone.init(ModelConfig(**TINY, precision="float64"))
    assert m64.forward(ids).dtype == np.float64


def test_causal(tiny, rng):
    ids = rng.integers(0, 256, size=(1, 12))
    alt = ids.copy()
    alt[0, 7:] = rng.integers(0, 256, size=5)
    a, b = tiny.forward(ids).data, tiny.forward(alt).data
    np.testing.assert_array_equal(a[0, :7], b[0, :7])
    assert not np.array_equal(a[0, 7:], b[0, 7:])


def test_right_padding_does_not_leak(tiny):
    short = [10, 20, 30]
    ids, lengths = pad_batch([short, [1, 2, 3, 4, 5, 6]])
    assert ids[0, 3:].tolist() == [PAD] * 3 and lengths.tolist() == [3, 6]
    np.testing.assert_allclose(tiny.forward(ids).data[0, :3], tiny.forward(np.array([short])).data[0], atol=1e-5)


def test_length_limits(tiny):
    with pytest.raises(SequenceLengthError):
        tiny.forward(np.zeros((1, TINY["max_len"] + 1), dtype=np.int64))
    with pytest.raises(SequenceLengthError):
        tiny.forward(np.zeros((1, 0), dtype=np.int64))


def test_init_is_seeded():
    a = Backbone.init(ModelConfig(**TINY, seed=3)).named_parameters()
    b = Backbone.init(ModelConfig(**TINY, seed=3)).named_parameters()
    c = Backbone.init(ModelConfig(**TINY, seed=4)).named_parameters()
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["head"].data, c["head"].data)


def test_generate_greedy_is_deterministic(tiny):
    fn = lambda ids: tiny.forward(ids).data[-1]
    a = generate(fn, [1, 2, 3], 8, max_len=TINY["max_len"])
    b = generate(fn, [1, 2, 3], 8, max_len=TINY["max_len"])
    assert a == b and 0 < len(a) <= 8


def test_generate_sampling_follows_seed(tiny):
    fn = lambda ids: tiny.forward(ids).data[-1]
    s1 = generate(fn, [1, 2], 10, Sampling(greedy=False, temperature=2.0, seed=1), max_len=24, stop_ids=())
    s1b = generate(fn, [1, 2], 10, Sampling(greedy=False, temperature=2.0, seed=1), max_len=24, stop_ids=())
    s2 = generate(fn, [1, 2], 10, Sampling(greedy=False, temperature=2.0, seed=2), max_len=24, stop_ids=())
    assert s1 == s1b and s1 != s2


def test_generate_stops_at_eos_and_max_len():
    eos_logits = np.zeros(VOCAB_SIZE)
    eos_logits[EOS] = 5.0
    assert generate(lambda ids: eos_logits, [1], 10) == [EOS]
    assert len(generate(lambda ids: np.arange(VOCAB_SIZE) * 0.0 + (np.arange(VOCAB_SIZE) == 7), [1, 2], 10,
                        max_len=5)) == 3
    assert generate(lambda ids: eos_logits, [1], 0) == []
    with pytest.raises(ValueError):
        generate(lambda ids: eos_logits, [], 3)
    with pytest.raises(ValueError):
        Sampling(greedy=False, temperature=0.0)
