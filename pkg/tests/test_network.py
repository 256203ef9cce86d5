"""Context-conditioned UNet: forward contract, loss, gradients, checkpoints."""

from __future__ import annotations

import hashlib
import struct

import numpy as np
import pytest
import torch

from retinalizer.config import ModelConfig
from retinalizer.errors import CheckpointError, ContextError, NumericError, ShapeError
from retinalizer.network import (
    CHECKPOINT_MAGIC,
    PairwiseConvAvg,
    batch_loss,
    batch_tensors,
    gradients,
    init_model,
    load_checkpoint,
    mse_loss,
    predict,
    save_checkpoint,
)

TOY = ModelConfig(levels=2, base_channels=8, image_size=16)


def _model(seed=0):
    return init_model(TOY, seed=seed)


def _inputs(n, batch=1, size=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    q = torch.rand(batch, 3, size, size, generator=g)
    ci = torch.rand(batch, n, 3, size, size, generator=g)
    co = torch.rand(batch, n, 3, size, size, generator=g)
    return q, ci, co


# ---------------------------------------------------------------------------
# construction and initialization


def test_init_deterministic_per_seed():
    a, b, c = _model(3), _model(3), _model(4)
    for (name, pa), (_, pb), (_, pc) in zip(
        a.named_parameters(), b.named_parameters(), c.named_parameters()
    ):
        assert torch.equal(pa, pb), name
        if not name.endswith("bias"):
            assert not torch.equal(pa, pc), name


def test_init_zero_biases_finite_weights():
    model = _model(1)
    for name, p in model.named_parameters():
        assert torch.isfinite(p).all(), name
        if name.endswith("bias"):
            assert torch.count_nonzero(p) == 0, name


def test_parameter_count_closed_form():
    # hand count for levels=2, base=8, kernel=3:
    #   conv params = out*in*k*k + out
    def conv(cin, cout, k=3):
        return cout * cin * k * k + cout

    def pairwise(ch):
        return conv(2 * ch, ch) + conv(2 * ch, ch)  # shared + fuse

    expected = (
        conv(6, 8)  # stem
        + pairwise(8) + conv(8, 16)  # level 0 block + downsample
        + pairwise(16) + conv(16, 32)  # level 1 block + downsample
        + pairwise(32)  # bottleneck
        + conv(32, 16) + conv(32, 16)  # decoder level: up + skip fuse
        + conv(16, 8) + conv(16, 8)
        + conv(8, 3, k=1)  # head
    )
    assert expected == 66339
    assert _model().parameter_count == expected


# ---------------------------------------------------------------------------
# forward contract


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_forward_shape_independent_of_context_size(n):
    model = _model()
    q, ci, co = _inputs(n, batch=2)
    out = model(q, ci, co)
    assert out.shape == (2, 3, 16, 16)


def test_forward_output_clamped():
    model = _model(7)
    q, ci, co = _inputs(4, seed=9)
    out = model(q * 100.0, ci * 100.0, co * 100.0)
    assert out.min() >= 0.0
    assert out.max() <= 1.0


def test_forward_context_permutation_near_invariant():
    model = _model(2)
    q, ci, co = _inputs(6, seed=4)
    base = model(q, ci, co)
    perm = torch.tensor([3, 0, 5, 1, 4, 2])
    swapped = model(q, ci[:, perm], co[:, perm])
    assert (base - swapped).abs().max().item() <= 1e-5


def test_forward_context_duplication_invariant():
    # averaging two identical context streams is mathematically an identity;
    # residual error comes only from batch-size-dependent conv kernels
    model = _model(5)
    q, ci, co = _inputs(1, seed=2)
    single = model(q, ci, co)
    doubled = model(q, ci.repeat(1, 2, 1, 1, 1), co.repeat(1, 2, 1, 1, 1))
    assert (single - doubled).abs().max().item() <= 1e-6


def test_forward_rejects_bad_shapes():
    model = _model()
    q, ci, co = _inputs(2)
    with pytest.raises(ShapeError, match="query"):
        model(q[:, :2], ci, co)
    with pytest.raises(ShapeError, match="context tensors"):
        model(q, ci[:, 0], co)
    with pytest.raises(ShapeError, match="!= outputs"):
        model(q, ci, co[:, :1])
    with pytest.raises(ContextError):
        model(q, ci[:, :0], co[:, :0])
    q18, ci18, co18 = _inputs(2, size=18)
    with pytest.raises(ShapeError, match="divisible"):
        model(q18, ci18, co18)


def test_pairwise_block_single_context():
    torch.manual_seed(0)
    block = PairwiseConvAvg(4, 3, "relu")
    q = torch.rand(1, 4, 8, 8)
    c = torch.rand(1, 1, 4, 8, 8)
    q_out, g = block(q, c)
    assert q_out.shape == (1, 4, 8, 8)
    assert g.shape == (1, 1, 4, 8, 8)
    with pytest.raises(ContextError):
        block(q, c[:, :0])


# ---------------------------------------------------------------------------
# loss


def test_loss_off_by_one_example():
    pred = torch.zeros(1, 3, 2, 2)
    target = torch.ones(1, 3, 2, 2)
    assert mse_loss(pred, target).item() == 12.0


def test_loss_mean_over_batch():
    pred = torch.zeros(2, 3, 2, 2)
    target = torch.zeros(2, 3, 2, 2)
    target[0] = 1.0  # item 0 contributes 12, item 1 contributes 0
    assert mse_loss(pred, target).item() == 6.0


def test_loss_scales_with_pixel_count():
    pred = torch.zeros(1, 3, 4, 4)
    target = torch.full((1, 3, 4, 4), 0.5)
    assert mse_loss(pred, target).item() == pytest.approx(3 * 16 * 0.25)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_loss(torch.zeros(1, 3, 2, 2), torch.zeros(1, 3, 4, 4))


# ---------------------------------------------------------------------------
# numpy bridge


def _np_item(n, size=16, seed=0):
    rng = np.random.default_rng(seed)

    def img():
        return rng.uniform(0, 1, (size, size, 3)).astype(np.float32)

    ctx = [(img(), img()) for _ in range(n)]
    return ctx, img(), img()


def test_predict_round_trip():
    model = _model()
    ctx, query, _ = _np_item(3)
    out = predict(model, ctx, query)
    assert out.shape == (16, 16, 3)
    assert out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_predict_empty_context():
    with pytest.raises(ContextError):
        predict(_model(), [], np.zeros((16, 16, 3), np.float32))


def test_batch_tensors_shapes_and_mixed_sizes():
    items = [_np_item(2, seed=s) for s in range(3)]
    q, ci, co, y = batch_tensors(items)
    assert q.shape == (3, 3, 16, 16)
    assert ci.shape == (3, 2, 3, 16, 16)
    assert co.shape == ci.shape and y.shape == q.shape
    with pytest.raises(ShapeError, match="context sizes"):
        batch_tensors([_np_item(2), _np_item(3)])


# ---------------------------------------------------------------------------
# gradients


def test_gradients_cover_all_parameters_and_repeat():
    model = _model(6)
    batch = [_np_item(2, seed=s) for s in range(2)]
    g1 = gradients(model, batch)
    g2 = gradients(model, batch)
    names = {n for n, _ in model.named_parameters()}
    assert set(g1) == names
    nonzero = sum(int(g.abs().sum() > 0) for g in g1.values())
    assert nonzero > len(names) * 0.9
    for name in names:
        assert torch.equal(g1[name], g2[name]), name


def test_gradients_flag_nonfinite_items():
    model = _model()
    good = _np_item(2, seed=1)
    ctx, query, target = _np_item(2, seed=2)
    query = query.copy()
    query[0, 0, 0] = np.nan
    with pytest.raises(NumericError, match=r"\[1\]"):
        gradients(model, [good, (ctx, query, target)])


def test_batch_loss_matches_manual():
    # the training loss runs on the unclamped head output so saturated
    # pixels keep their gradients; the clamped path is inference-only
    model = _model(8)
    batch = [_np_item(2, seed=5)]
    loss = batch_loss(model, batch)
    q, ci, co, y = batch_tensors(batch)
    with torch.no_grad():
        raw = model(q, ci, co, clamp=False)
        clamped = model(q, ci, co)
    manual = float(((raw - y) ** 2).sum())
    assert loss.item() == pytest.approx(manual, rel=1e-5)
    assert torch.equal(clamped, raw.clamp(0.0, 1.0))
    # clamping toward targets that live in [0,1] can only reduce the error
    assert float(((clamped - y) ** 2).sum()) <= manual + 1e-6


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    model = _model(11)
    model.meta = {"run_name": "t", "step": 4}
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert loaded.meta == {"run_name": "t", "step": 4}
    assert not loaded.training
    sd_a, sd_b = model.state_dict(), loaded.state_dict()
    assert sorted(sd_a) == sorted(sd_b)
    for name in sd_a:
        assert torch.equal(sd_a[name], sd_b[name]), name


def test_checkpoint_predictions_survive_round_trip(tmp_path):
    model = _model(12)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    ctx, query, _ = _np_item(2, seed=3)
    assert np.array_equal(predict(model, ctx, query), predict(loaded, ctx, query))


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(_model(), path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(_model(), path)
    data = bytearray(path.read_bytes())
    data[:8] = b"NOTMAGIC"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_corrupt_payload(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(_model(), path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="integrity"):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(_model(), path)
    data = bytearray(path.read_bytes())
    payload = data[:-32]
    struct.pack_into("<I", payload, len(CHECKPOINT_MAGIC), 99)
    path.write_bytes(bytes(payload) + hashlib.sha256(bytes(payload)).digest())
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(path)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")
