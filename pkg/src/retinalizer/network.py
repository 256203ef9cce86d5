"""Context-conditioned UNet with pairwise-conv-avg context aggregation.

The model maps an arbitrary-size context set of (input, output) image pairs
plus a query image to a prediction. Context pairs enter as 6-channel stacks,
the query as 3 channels zero-padded to 6. At every encoder level and in the
bottleneck, a PairwiseConvAvg block mixes the query stream with each context
stream through a shared convolution, averages the results over the set (which
makes the model independent of the context size and invariant to its order up
to float summation), and fuses the average back into the query stream. The
decoder runs on the query stream alone with skip connections from the encoder.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .errors import CheckpointError, ContextError, NumericError, ShapeError

CHECKPOINT_MAGIC = b"RTLZCKPT"
CHECKPOINT_VERSION = 1


def _nonlin(tag: str):
    return {
        "relu": F.relu,
        "leaky_relu": lambda x: F.leaky_relu(x, 0.1),
        "gelu": F.gelu,
    }[tag]


class PairwiseConvAvg(nn.Module):
    """G_i = shared(q ‖ c_i); Ḡ = mean_i G_i; q' = fuse(q ‖ Ḡ); c_i' = G_i."""

    def __init__(self, channels: int, kernel_size: int, nonlinearity: str):
        super().__init__()
        pad = kernel_size // 2
        self.shared = nn.Conv2d(2 * channels, channels, kernel_size, padding=pad)
        self.fuse = nn.Conv2d(2 * channels, channels, kernel_size, padding=pad)
        self.act = _nonlin(nonlinearity)

    def forward(self, q: torch.Tensor, ctx: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # q: (B, C, H, W); ctx: (B, n, C, H, W)
        b, n, c, h, w = ctx.shape
        if n == 0:
            raise ContextError("pairwise-conv-avg needs at least one context entry")
        q_rep = q.unsqueeze(1).expand(b, n, c, h, w)
        g = self.act(self.shared(torch.cat([q_rep, ctx], dim=2).reshape(b * n, 2 * c, h, w)))
        g = g.reshape(b, n, c, h, w)
        g_bar = g.mean(dim=1)
        q_out = self.act(self.fuse(torch.cat([q, g_bar], dim=1)))
        return q_out, g


class RetinalizerModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.meta: dict = {}
        c0 = config.base_channels
        k = config.kernel_size
        pad = k // 2
        nl = config.nonlinearity
        self.act = _nonlin(nl)
        self.stem = nn.Conv2d(6, c0, k, padding=pad)
        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        ch = c0
        for _ in range(config.levels):
            self.enc_blocks.append(PairwiseConvAvg(ch, k, nl))
            self.downs.append(nn.Conv2d(ch, 2 * ch, k, stride=2, padding=pad))
            ch *= 2
        self.bottleneck = PairwiseConvAvg(ch, k, nl)
        self.up_convs = nn.ModuleList()
        self.skip_fuses = nn.ModuleList()
        for _ in range(config.levels):
            self.up_convs.append(nn.Conv2d(ch, ch // 2, k, padding=pad))
            self.skip_fuses.append(nn.Conv2d(ch, ch // 2, k, padding=pad))
            ch //= 2
        self.head = nn.Conv2d(c0, 3, 1)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def _check_sizes(self, query: torch.Tensor, ctx_in: torch.Tensor, ctx_out: torch.Tensor):
        if query.ndim != 4 or query.shape[1] != 3:
            raise ShapeError(f"query must be (B, 3, H, W), got {tuple(query.shape)}")
        if ctx_in.ndim != 5 or ctx_out.ndim != 5:
            raise ShapeError("context tensors must be (B, n, 3, H, W)")
        if ctx_in.shape != ctx_out.shape:
            raise ShapeError(
                f"context inputs {tuple(ctx_in.shape)} != outputs {tuple(ctx_out.shape)}"
            )
        if ctx_in.shape[1] < 1:
            raise ContextError("context set must contain at least one pair")
        if ctx_in.shape[0] != query.shape[0] or ctx_in.shape[-2:] != query.shape[-2:]:
            raise ShapeError(
                f"context {tuple(ctx_in.shape)} does not match query {tuple(query.shape)}"
            )
        div = 2 ** self.config.levels
        if query.shape[-1] % div or query.shape[-2] % div:
            raise ShapeError(
                f"spatial size {tuple(query.shape[-2:])} not divisible by 2^levels={div}"
            )

    def forward(
        self,
        query: torch.Tensor,
        ctx_in: torch.Tensor,
        ctx_out: torch.Tensor,
        clamp: bool = True,
    ) -> torch.Tensor:
        """query (B,3,H,W), ctx_in/ctx_out (B,n,3,H,W) -> prediction (B,3,H,W).

        Predictions are clamped to [0,1] at the output head. The training
        loss is computed with ``clamp=False`` on the linear head output:
        a hard clamp has zero gradient outside [0,1], so optimizing through
        it strands the model once predictions saturate (bright targets pull
        the head past 1.0 within a few dozen steps, after which nearly every
        pixel stops learning).
        """
        self._check_sizes(query, ctx_in, ctx_out)
        b, n = ctx_in.shape[:2]
        h, w = query.shape[-2:]
        q = torch.cat([query, torch.zeros_like(query)], dim=1)
        ctx = torch.cat([ctx_in, ctx_out], dim=2)
        q = self.act(self.stem(q))
        ctx = self.act(self.stem(ctx.reshape(b * n, 6, h, w)))
        ctx = ctx.reshape(b, n, -1, h, w)
        skips = []
        for block, down in zip(self.enc_blocks, self.downs):
            q, ctx = block(q, ctx)
            skips.append(q)
            q = self.act(down(q))
            bn, cc, hh, ww = ctx.shape[0] * ctx.shape[1], ctx.shape[2], ctx.shape[3], ctx.shape[4]
            ctx = self.act(down(ctx.reshape(bn, cc, hh, ww)))
            ctx = ctx.reshape(b, n, *ctx.shape[1:])
        q, _ = self.bottleneck(q, ctx)
        for up, fuse, skip in zip(self.up_convs, self.skip_fuses, reversed(skips)):
            q = self.act(up(F.interpolate(q, scale_factor=2, mode="nearest")))
            q = self.act(fuse(torch.cat([q, skip], dim=1)))
        out = self.head(q)
        return torch.clamp(out, 0.0, 1.0) if clamp else out


def init_model(config: ModelConfig, seed: int | None = None) -> RetinalizerModel:
    """Build a model with deterministic fan-in-scaled uniform weights, zero biases."""
    model = RetinalizerModel(config)
    gen = torch.Generator().manual_seed(config.param_seed if seed is None else seed)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3] if p.ndim == 4 else p.shape[1]
                bound = 1.0 / float(np.sqrt(fan_in))
                p.uniform_(-bound, bound, generator=gen)
    return model


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Squared error summed per item over pixels and channels, averaged over the batch."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} != target {tuple(target.shape)}")
    return ((pred - target) ** 2).sum(dim=tuple(range(1, pred.ndim))).mean()


def _to_tensor(img: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype)


def _to_image(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float32)


def predict(
    model: RetinalizerModel,
    context: Sequence[tuple[np.ndarray, np.ndarray]],
    query: np.ndarray,
) -> np.ndarray:
    """Single-query convenience wrapper over forward() for (H,W,3) numpy images."""
    if len(context) == 0:
        raise ContextError("context set must contain at least one pair")
    dtype = next(model.parameters()).dtype
    q = _to_tensor(query, dtype).unsqueeze(0)
    ci = torch.stack([_to_tensor(i, dtype) for i, _ in context]).unsqueeze(0)
    co = torch.stack([_to_tensor(o, dtype) for _, o in context]).unsqueeze(0)
    with torch.no_grad():
        out = model(q, ci, co)
    return _to_image(out[0])


def gradients(model: RetinalizerModel, batch) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of the batch loss for every named parameter."""
    model.zero_grad(set_to_none=True)
    loss = batch_loss(model, batch)
    if not torch.isfinite(loss):
        per_item = _per_item_losses(model, batch)
        bad = [i for i, v in enumerate(per_item) if not np.isfinite(v)]
        raise NumericError(f"non-finite loss (batch items {bad})")
    loss.backward()
    return {
        name: p.grad.detach().clone()
        for name, p in model.named_parameters()
        if p.grad is not None
    }


def batch_loss(model: RetinalizerModel, batch) -> torch.Tensor:
    q, ci, co, y = batch_tensors(batch, next(model.parameters()).dtype)
    return mse_loss(model(q, ci, co, clamp=False), y)


def _per_item_losses(model: RetinalizerModel, batch) -> list[float]:
    q, ci, co, y = batch_tensors(batch, next(model.parameters()).dtype)
    with torch.no_grad():
        pred = model(q, ci, co, clamp=False)
    per = ((pred - y) ** 2).sum(dim=(1, 2, 3))
    return [float(v) for v in per]


def batch_tensors(batch, dtype=torch.float32):
    """Stack a list of (context_pairs, query, target) items into forward() tensors.

    All items must share one context size; the training sampler guarantees it.
    """
    items = batch.items if hasattr(batch, "items") and not isinstance(batch, dict) else batch
    rows = [tuple(it)[:3] for it in items]
    sizes = {len(ctx) for ctx, _, _ in rows}
    if len(sizes) != 1:
        raise ShapeError(f"batch mixes context sizes {sorted(sizes)}")
    qs, cis, cos, ys = [], [], [], []
    for ctx, query, target in rows:
        qs.append(_to_tensor(query, dtype))
        cis.append(torch.stack([_to_tensor(i, dtype) for i, _ in ctx]))
        cos.append(torch.stack([_to_tensor(o, dtype) for _, o in ctx]))
        ys.append(_to_tensor(target, dtype))
    return torch.stack(qs), torch.stack(cis), torch.stack(cos), torch.stack(ys)


# ---------------------------------------------------------------------------
# checkpoint container: magic | version | header JSON | raw blobs | sha256


def save_checkpoint(model: RetinalizerModel, path, extra: dict | None = None) -> None:
    path = Path(path)
    state = model.state_dict()
    names = sorted(state)
    blobs = []
    tensors = []
    offset = 0
    for name in names:
        arr = state[name].detach().cpu().numpy().astype(np.float32)
        raw = arr.tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {
            "config": asdict(model.config),
            "tensors": tensors,
            "extra": extra or model.meta or {},
        }
    ).encode()
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
    buf.write(header)
    for raw in blobs:
        buf.write(raw)
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(digest)


def load_checkpoint(path) -> RetinalizerModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < len(CHECKPOINT_MAGIC) + 8 + 32:
        raise CheckpointError(f"checkpoint {path} is truncated")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic bytes)")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"checkpoint {path} failed its integrity check")
    pos = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", payload, pos)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )
    pos += 8
    try:
        header = json.loads(payload[pos : pos + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint {path} has a corrupt header: {exc}") from exc
    body = payload[pos + header_len :]
    config = ModelConfig(**header["config"])
    model = RetinalizerModel(config)
    state = {}
    for spec in header["tensors"]:
        raw = body[spec["offset"] : spec["offset"] + spec["nbytes"]]
        if len(raw) != spec["nbytes"]:
            raise CheckpointError(f"checkpoint {path} is truncated (blob {spec['name']})")
        state[spec["name"]] = torch.from_numpy(
            np.frombuffer(raw, dtype=np.float32).reshape(spec["shape"]).copy()
        )
    model.load_state_dict(state)
    model.meta = dict(header.get("extra", {}))
    model.eval()
    return model
