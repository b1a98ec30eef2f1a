import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from mtpnet import tensor as T
from mtpnet.embedding import patch
from mtpnet.pyramid import (
    MTPNet,
    PyramidConfig,
    build_decoder_input,
    crop_future,
    from_tokens,
    inter_scale_fuse,
    repatch,
    to_tokens,
)
from mtpnet.tensor import Tensor

TINY = dict(lookback=16, horizon=8, decoder_history=8, n_vars=2, patch_sizes=(2, 3), channels=2, heads=2,
            dropout=0.0)


def tiny(**kw):
    return PyramidConfig(**{**TINY, **kw})


def test_build_decoder_input_examples():
    rows = np.arange(1, 9, dtype=float).reshape(4, 2)
    out = build_decoder_input(rows, 2, 1)
    assert out.tolist() == [[5, 6], [7, 8], [0, 0]]
    assert np.array_equal(build_decoder_input(rows, 4, 0), rows)
    full = build_decoder_input(rows, 4, 3)
    assert np.array_equal(full[:4], rows) and np.all(full[4:] == 0)
    batched = build_decoder_input(Tensor(np.stack([rows, -rows])), 2, 1)
    assert batched.data[1].tolist() == [[-5, -6], [-7, -8], [0, 0]]
    with pytest.raises(ValueError):
        build_decoder_input(rows, 5, 1)


def test_inter_scale_fuse_examples():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(1, 2, 3, 4, 2)))
    assert inter_scale_fuse(x, None, Tensor(np.zeros((2, 4, 1, 1)))) is x
    select = np.zeros((2, 4, 1, 1))
    select[0, 0] = select[1, 1] = 1.0
    out = inter_scale_fuse(x, Tensor(rng.normal(size=(1, 2, 3, 4, 2))), Tensor(select))
    np.testing.assert_array_equal(out.data, x.data)
    avg = Tensor(np.full((1, 2, 1, 1), 0.5))
    out = inter_scale_fuse(Tensor(np.full((1, 1, 2, 3, 2), 2.0)), Tensor(np.full((1, 1, 2, 3, 2), 4.0)), avg)
    assert np.all(out.data == 3.0)
    with pytest.raises(ValueError):
        inter_scale_fuse(x, Tensor(np.zeros((1, 2, 2, 4, 2))), Tensor(select))


def test_repatch_aligns_latest_steps():
    seq = np.arange(1, 13, dtype=float).reshape(1, 1, 12, 1)
    h = patch(Tensor(seq), 4).values  # (1, 1, 3, 4, 1)
    cropped = repatch(h, 2, 3).data.reshape(-1)
    assert cropped.tolist() == [7, 8, 9, 10, 11, 12]
    extended = repatch(h, 3, 5).data.reshape(-1)
    assert extended.tolist() == [0, 0, 0] + list(range(1, 13))


def test_token_round_trip():
    x = np.random.default_rng(1).normal(size=(2, 3, 4, 5, 2))
    tok = to_tokens(Tensor(x))
    assert tok.shape == (2, 2, 4, 15)
    # token n of variable d lists channel 0's p steps, then channel 1's, ...
    np.testing.assert_array_equal(tok.data[1, 0, 2, 5:10], x[1, 1, 2, :, 0])
    np.testing.assert_array_equal(from_tokens(tok, 3, 5).data, x)


def test_crop_keeps_exactly_the_future_positions():
    # marker = position in the decoder input; L = 5, H = 7, p = 3
    hist, horizon, p = 5, 7, 3
    markers = np.arange(hist + horizon, dtype=float).reshape(1, 1, -1, 1)
    h = patch(Tensor(markers), p).values
    assert h.shape[-3] == math.ceil((hist + horizon) / p)
    out = crop_future(h, horizon).data.reshape(-1)
    assert out.tolist() == list(range(hist, hist + horizon))


@pytest.mark.parametrize(
    "flags",
    [{}, {"no_inter_scale": True}, {"no_all_scale": True}, {"bottom_up_decoder": True},
     {"single_scale_index": 0}, {"single_scale_index": -1}, {"patch_sizes": (2, 3, 5)},
     {"patch_sizes": (2, 3, 5), "no_all_scale": True, "bottom_up_decoder": True}],
)
def test_forward_matches_straight_line_reference(flags):
    cfg = tiny(**flags)
    model = MTPNet(cfg, 1)
    x = np.random.default_rng(2).normal(size=(16, 2))
    got = model(x).data
    ref = reference.forward(reference.params_of(model), cfg, x)
    assert got.shape == (8, 2)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_tiny_forward_pinned():
    model = MTPNet(tiny(), 1)
    x = np.sin(np.arange(32, dtype=float)).reshape(16, 2)
    out = model(x).data
    np.testing.assert_allclose(out[0], PINNED_ROW0, atol=1e-10)
    np.testing.assert_allclose(out.sum(), PINNED_SUM, atol=1e-10)


PINNED_ROW0 = [0.15981661059811542, 0.2663578551469459]
PINNED_SUM = 8.55353861372837


def test_batched_forward_equals_per_sample():
    model = MTPNet(tiny(), 3)
    x = np.random.default_rng(3).normal(size=(4, 16, 2))
    batched = model(x).data
    for b in range(4):
        np.testing.assert_allclose(batched[b], model(x[b]).data, atol=1e-13)


def test_states_follow_ceiling_formulas():
    cfg = tiny(lookback=17, horizon=7, decoder_history=6, patch_sizes=(2, 4, 5))
    _, states = MTPNet(cfg, 0).forward(np.zeros((1, 17, 2)), return_states=True)
    for s, p in zip(states, (2, 4, 5)):
        assert s.n_enc == math.ceil(17 / p) and s.n_dec == math.ceil(13 / p) and s.n_pred == math.ceil(7 / p)
        assert s.encoder.shape == (1, 2, s.n_enc, p, 2)
        assert s.decoder.shape == (1, 2, s.n_dec, p, 2)


def test_level_decode_returns_prediction_patches():
    cfg = tiny(horizon=3, patch_sizes=(3, 5))
    model = MTPNet(cfg, 0)
    x = Tensor(np.random.default_rng(4).normal(size=(1, 16, 2)))
    x_dec = build_decoder_input(x, cfg.decoder_history, cfg.horizon)
    mem = model.level_encode(1, x)
    out = model.level_decode(1, x_dec, None, mem)
    assert out.shape[-3] == 1  # ceil(3/5)
    mem0 = model.level_encode(0, x, mem)
    out0 = model.level_decode(0, x_dec, out, mem0)
    assert out0.shape[-3] == 1  # H == p
    assert model.level_encode(0, x).shape == (1, 2, math.ceil(16 / 3), 3, 2)


@pytest.mark.parametrize("var", [0, 1])
def test_channel_independence_of_encoders(var):
    cfg = tiny()
    model = MTPNet(cfg, 5)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 16, 2))
    bumped = x.copy()
    bumped[..., var] += rng.normal(size=16)
    other = 1 - var
    a = model.level_encode(0, Tensor(x)).data
    b = model.level_encode(0, Tensor(bumped)).data
    np.testing.assert_array_equal(a[..., other], b[..., other])
    np.testing.assert_array_equal(model(x).data[..., other], model(bumped).data[..., other])
    assert not np.allclose(model(x).data[..., var], model(bumped).data[..., var])


def test_single_level_model_is_a_single_scale_transformer():
    coarse = tiny(single_scale_index=-1)
    direct = tiny(patch_sizes=(3,))
    a, b = MTPNet(coarse, 7), MTPNet(direct, 7)
    assert list(a.parameters()) == list(b.parameters())
    x = np.random.default_rng(6).normal(size=(16, 2))
    np.testing.assert_array_equal(a(x).data, b(x).data)


def test_ablation_structure():
    names = set(MTPNet(tiny(), 0).parameters())
    assert "level.1.encoder.fuse_kernel" in names and "level.0.decoder.fuse_kernel" in names
    assert "level.0.encoder.fuse_kernel" not in names and "level.1.decoder.fuse_kernel" not in names
    no_inter = set(MTPNet(tiny(no_inter_scale=True), 0).parameters())
    assert not any("fuse" in n for n in no_inter)
    no_all = set(MTPNet(tiny(no_all_scale=True), 0).parameters())
    assert "level.1.encoder.embed.kernel" not in no_all and "level.0.decoder.embed.kernel" not in no_all
    assert "level.0.encoder.embed.kernel" in no_all and "level.1.decoder.embed.kernel" in no_all
    bottom = set(MTPNet(tiny(bottom_up_decoder=True), 0).parameters())
    assert "level.1.decoder.fuse_kernel" in bottom and "level.0.decoder.fuse_kernel" not in bottom


@pytest.mark.parametrize("mode", ["spatial", "temporal"])
def test_other_embeddings_keep_output_contract(mode):
    cfg = tiny(embedding=mode)
    model = MTPNet(cfg, 0)
    out = model(np.random.default_rng(7).normal(size=(3, 16, 2)))
    assert out.shape == (3, 8, 2)
    if mode == "spatial":
        assert model.head_kernel.shape == (2, 4, 1, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(patch_sizes=(3, 2))
    with pytest.raises(ValueError):
        tiny(patch_sizes=(2, 2))
    with pytest.raises(ValueError):
        tiny(heads=3)
    with pytest.raises(ValueError):
        tiny(decoder_history=17)
    with pytest.raises(ValueError):
        tiny(single_scale_index=2)
    with pytest.raises(ValueError):
        tiny(no_inter_scale=True, no_all_scale=True)
    with pytest.raises(ValueError):
        tiny(embedding="fourier")
    assert PyramidConfig(lookback=96, horizon=24, n_vars=1).decoder_history == 48
    with pytest.raises(ValueError):
        MTPNet(tiny(), 0)(np.zeros((15, 2)))


@settings(max_examples=25, deadline=None)
@given(
    sizes=st.lists(st.integers(1, 7), min_size=1, max_size=3, unique=True),
    lookback=st.integers(4, 20),
    horizon=st.integers(1, 9),
    seed=st.integers(0, 999),
)
def test_output_shape_for_unconstrained_scales(sizes, lookback, horizon, seed):
    cfg = PyramidConfig(lookback=lookback, horizon=horizon, n_vars=2, patch_sizes=tuple(sorted(sizes)),
                        channels=2, heads=2, encoder_layers=1, dropout=0.0)
    out = MTPNet(cfg, seed)(np.random.default_rng(seed).normal(size=(2, lookback, 2)))
    assert out.shape == (2, horizon, 2)
    assert np.all(np.isfinite(out.data))


def test_non_power_of_two_scales():
    cfg = PyramidConfig(lookback=30, horizon=10, n_vars=1, patch_sizes=(4, 6, 12), channels=2, heads=2)
    assert MTPNet(cfg, 0)(np.zeros((30, 1))).shape == (10, 1)


def test_sampled_gradient_check_through_every_parameter_group():
    cfg = tiny()
    model = MTPNet(cfg, 1)
    x = np.random.default_rng(8).normal(size=(2, 16, 2))
    y = np.random.default_rng(9).normal(size=(2, 8, 2))
    errors = T.grad_check_params(lambda: T.mean(T.mul(model(x) - y, model(x) - y)), model.parameters(),
                                 max_entries=3, rng=np.random.default_rng(0))
    assert max(errors.values()) <= 1e-4


def test_dropout_only_in_training_mode():
    model = MTPNet(tiny(dropout=0.5), 0)
    x = np.random.default_rng(10).normal(size=(16, 2))
    model.set_training(False)
    assert np.array_equal(model(x).data, model(x).data)
    model.set_training(True)
    assert not np.array_equal(model(x).data, model(x).data)
