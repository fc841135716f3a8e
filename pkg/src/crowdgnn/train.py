"""SGD training loop with gradient accumulation across windows.

Windows carry heterogeneous pedestrian counts, so a batch is realized as
accumulated per-window mean-NLL gradients followed by a single parameter
update at the scheduled learning rate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit
from .gaussian import nll
from .graphs import GraphConfig
from .model import ModelConfig, ModelParameters, forward_raw
from .gaussian import constrain


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 250
    batch_size: int = 128
    lr_initial: float = 0.01
    lr_after: float = 0.002
    lr_switch_epoch: int = 150
    seed: int = 0
    clip_norm: float | None = None
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.lr_after <= self.lr_initial):
            raise ValueError("require 0 < lr_after <= lr_initial")
        if not (1 <= self.lr_switch_epoch <= self.epochs):
            raise ValueError("lr_switch_epoch must be in [1, epochs]")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        return self.lr_initial if epoch <= self.lr_switch_epoch else self.lr_after

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float
    lr: float


def window_nll(window, graph_cfg: GraphConfig, params: ModelParameters):
    """Mean NLL per (pedestrian, predicted frame) for one window, as a Var."""
    raw = forward_raw(window, graph_cfg, params)
    mu, sigma, rho = constrain(raw)
    target = window.future_displacements().transpose(1, 0, 2)  # [T_pred, N, 2]
    return nll(target, mu, sigma, rho).mean()


def sgd_step(params: ModelParameters, lr: float, cfg: TrainConfig,
             velocity: dict | None = None) -> None:
    """p <- p - lr * g, with optional global-norm clipping and momentum."""
    grads = {
        name: (v.grad if v.grad is not None else np.zeros_like(v.data))
        for name, v in params.items()
    }
    if cfg.clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if total > cfg.clip_norm:
            scale = cfg.clip_norm / total
            grads = {name: g * scale for name, g in grads.items()}
    for name, v in params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * v.data
        if cfg.momentum and velocity is not None:
            velocity[name] = cfg.momentum * velocity.get(name, 0.0) + g
            g = velocity[name]
        v.data = v.data - lr * g


def evaluate_nll(windows, graph_cfg: GraphConfig, params: ModelParameters) -> float:
    """Mean over windows of per-window mean NLL (no sampling)."""
    if not windows:
        return float("nan")
    vals = [float(window_nll(w, graph_cfg, params).data) for w in windows]
    return float(np.mean(vals))


def train(
    split: DatasetSplit,
    graph_cfg: GraphConfig,
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    ckpt_path=None,
    log=None,
) -> tuple[ModelParameters, list[EpochRecord]]:
    """Train on split.train, track validation NLL, keep the best checkpoint.

    Returns the best parameters (by validation NLL; train NLL when the
    validation set is empty) and the per-epoch loss history.
    """
    if not split.train:
        raise ValueError("training split is empty")
    model_cfg = model_cfg or ModelConfig()
    params = ModelParameters(model_cfg, seed=cfg.seed)
    velocity: dict = {}
    history: list[EpochRecord] = []
    best_nll = np.inf
    best_state = {name: v.data.copy() for name, v in params.items()}

    extra = {"graph_config": graph_cfg.to_dict(), "train_config": cfg.to_dict()}
    n_train = len(split.train)
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        order = rng.permutation(n_train)
        lr = cfg.lr_at(epoch)
        epoch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            params.zero_grad()
            batch_losses = []
            for idx in batch:
                window = split.train[idx]
                try:
                    loss = window_nll(window, graph_cfg, params) * (1.0 / len(batch))
                    val = float(loss.data) * len(batch)
                except ValueError as exc:
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, "
                        f"window {window.window_id}: {exc}"
                    ) from exc
                if not np.isfinite(val):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, window {window.window_id}"
                    )
                batch_losses.append(val)
                loss.backward()
            sgd_step(params, lr, cfg, velocity)
            epoch_losses.extend(batch_losses)

        train_nll = float(np.mean(epoch_losses))
        val_nll = evaluate_nll(split.val, graph_cfg, params)
        history.append(EpochRecord(epoch, train_nll, val_nll, lr))
        select = val_nll if split.val else train_nll
        if select < best_nll:
            best_nll = select
            best_state = {name: v.data.copy() for name, v in params.items()}
            if ckpt_path is not None:
                params.save(ckpt_path, extra_config=extra)
        if log is not None:
            log(history[-1])

    for name, v in params.items():
        v.data = best_state[name]
    return params, history


def write_history_csv(path, history: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_nll", "val_nll", "lr"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.train_nll), repr(rec.val_nll), rec.lr])
