"""Balanced multi-task training loop with Adam, logging, and checkpointing.

Each optimization step draws one uniformly chosen task and a batch of episodes
for it from a per-step RNG stream, so runs are reproducible and batches could
in principle be synthesized ahead of the optimizer. The step log is an
append-only CSV of (step, task, loss, wall_ms); a JSONL sidecar records every
sample id the step touched so holdout audits can check what trained the model.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TaskParams, TrainConfig
from .corpus import DatasetPool
from .errors import NumericError, SamplingError
from .network import RetinalizerModel, batch_loss, init_model, mse_loss, save_checkpoint
from .phantom import derive_sample_seed
from .sampling import Batch, sample_batch, sample_episode
from .taskgen import TaskDescriptor

__all__ = ["TrainResult", "mse_loss", "train", "train_single_task", "steps_per_epoch"]

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    run_dir: Path
    last_checkpoint: Path
    best_checkpoint: Path | None
    log_path: Path
    audit_path: Path
    losses: list[float] = field(default_factory=list)
    val_losses: list[tuple[int, float]] = field(default_factory=list)
    steps: int = 0


def steps_per_epoch(pool: DatasetPool, tasks: list[TaskDescriptor], batch_size: int) -> int:
    """One epoch = ceil(total train samples across the task datasets / batch size)."""
    total = sum(len(pool.samples(t.dataset, "train")) for t in tasks)
    return max(1, math.ceil(total / batch_size))


def _val_loss(
    model: RetinalizerModel,
    pool: DatasetPool,
    tasks: list[TaskDescriptor],
    params: TaskParams,
    cfg: TrainConfig,
    seed: int,
) -> float:
    """Mean episode loss on val-split queries with train-split contexts."""
    model.eval()
    losses = []
    rng = np.random.default_rng(seed)
    for i in range(cfg.val_episodes):
        task = tasks[i % len(tasks)]
        try:
            item = sample_episode(
                pool, task, params, rng,
                context_size=cfg.context_size,
                min_nonempty=cfg.min_nonempty_context_masks,
                retries=cfg.sampling_retries,
                query_split="val",
                context_split="train",
                recolor=cfg.recolor_enabled,
            )
        except SamplingError:
            continue
        with torch.no_grad():
            losses.append(float(batch_loss(model, [item])))
    model.train()
    return float(np.mean(losses)) if losses else float("nan")


def train(
    pool: DatasetPool,
    tasks: list[TaskDescriptor],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    params: TaskParams,
    out_dir,
    run_name: str = "retinalizer",
    model: RetinalizerModel | None = None,
) -> TrainResult:
    """Run the optimization loop; returns artifact paths and the loss history.

    A non-finite loss aborts the run; checkpoints written so far are retained
    and the error names the offending step and task.
    """
    model_cfg.validate()
    train_cfg.validate()
    params.validate()
    run_dir = Path(out_dir) / run_name
    run_dir.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = init_model(model_cfg)
    model.train()
    opt = torch.optim.Adam(
        model.parameters(),
        lr=train_cfg.learning_rate,
        betas=(train_cfg.beta1, train_cfg.beta2),
    )
    n_steps = train_cfg.steps
    if n_steps is None:
        n_steps = train_cfg.epochs * steps_per_epoch(pool, tasks, train_cfg.batch_size)

    log_path = run_dir / "train_log.csv"
    audit_path = run_dir / "samples_log.jsonl"
    last_path = run_dir / "last.ckpt"
    best_path = run_dir / "best.ckpt"
    result = TrainResult(
        run_dir=run_dir,
        last_checkpoint=last_path,
        best_checkpoint=None,
        log_path=log_path,
        audit_path=audit_path,
    )
    best_val = float("inf")
    meta = {"run_name": run_name, "recolor": train_cfg.recolor_enabled, "seed": train_cfg.seed}

    with open(log_path, "w", newline="") as log_fh, open(audit_path, "w") as audit_fh:
        writer = csv.writer(log_fh)
        writer.writerow(["step", "task", "loss", "wall_ms"])
        for step in range(n_steps):
            t0 = time.perf_counter()
            rng = np.random.default_rng(derive_sample_seed(train_cfg.seed, "step", step))
            batch: Batch = sample_batch(pool, tasks, params, train_cfg, rng, step=step)
            opt.zero_grad(set_to_none=True)
            loss = batch_loss(model, batch)
            loss_val = float(loss.detach())
            if not math.isfinite(loss_val):
                log_fh.flush()
                audit_fh.flush()
                raise NumericError(
                    f"non-finite loss at step {step} (task {batch.task_id}); "
                    f"last good checkpoint retained at {last_path}"
                )
            loss.backward()
            opt.step()
            wall_ms = (time.perf_counter() - t0) * 1e3
            result.losses.append(loss_val)
            if step % train_cfg.log_every == 0 or step == n_steps - 1:
                writer.writerow([step, batch.task_id, f"{loss_val:.6f}", f"{wall_ms:.1f}"])
            audit_fh.write(
                json.dumps(
                    {"step": step, "task": batch.task_id, "samples": batch.sample_ids}
                )
                + "\n"
            )
            if (step + 1) % train_cfg.val_interval == 0 or step == n_steps - 1:
                val_seed = derive_sample_seed(train_cfg.seed, "val", step)
                val = _val_loss(model, pool, tasks, params, train_cfg, val_seed)
                result.val_losses.append((step, val))
                log.info(
                    "%s step %d/%d train %.4f val %.4f",
                    run_name, step + 1, n_steps, loss_val, val,
                )
                save_checkpoint(model, last_path, extra={**meta, "step": step})
                if math.isfinite(val) and val < best_val:
                    best_val = val
                    save_checkpoint(
                        model, best_path, extra={**meta, "step": step, "val_loss": val}
                    )
                    result.best_checkpoint = best_path
            result.steps = step + 1
        save_checkpoint(model, last_path, extra={**meta, "step": n_steps - 1})
        if result.best_checkpoint is None:
            save_checkpoint(model, best_path, extra={**meta, "step": n_steps - 1})
            result.best_checkpoint = best_path
    return result


def train_single_task(
    pool: DatasetPool,
    task: TaskDescriptor,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    params: TaskParams,
    out_dir,
    run_name: str | None = None,
) -> TrainResult:
    """Same loop restricted to one task (the specialist upper-bound baseline)."""
    name = run_name or f"single_{task.variant}_{task.dataset}"
    return train(pool, [task], model_cfg, train_cfg, params, out_dir, run_name=name)
