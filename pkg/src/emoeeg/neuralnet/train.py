"""Seeded mini-batch training with early stopping on validation weighted F1."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..evalharness.metrics import confusion_matrix, weighted_f1
from .network import (Network, NetworkSpec, NumericalError, backward, cross_entropy, forward,
                      init_network, predict_proba)
from .optim import OPTIMIZERS, make_optimizer

LR_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    optimizer: str = "adam"
    dropout: float = 0.25
    batch_size: int = 32
    max_epochs: int = 30
    seed: int = 0
    patience: int = 5
    dtype: str = "float32"

    def __post_init__(self):
        if not 1e-5 <= self.lr <= 1e-1:
            raise ValueError(f"learning rate {self.lr} outside [1e-5, 1e-1]")
        if not 0.1 <= self.dropout <= 0.5:
            raise ValueError(f"dropout {self.dropout} outside [0.1, 0.5]")
        if self.optimizer.lower() not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size >= 1, max_epochs >= 0 and patience >= 1 required")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedNetwork:
    network: Network
    log: list = field(default_factory=list)      # dicts: epoch, loss, val_f1
    best_epoch: int = 0

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self.network, X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_bytes(self) -> bytes:
        return self.network.to_bytes(self.log)

    def log_csv(self) -> str:
        lines = ["epoch,loss,val_f1"]
        lines += [f"{r['epoch']},{r['loss']!r},{r['val_f1']!r}" for r in self.log]
        return "\n".join(lines) + "\n"


def _val_f1(net: Network, X, y, n_classes) -> float:
    pred = np.argmax(predict_proba(net, X), axis=1)
    return weighted_f1(confusion_matrix(y, pred, n_classes))


def train(spec: NetworkSpec, train_set, valid_set, config: TrainConfig) -> TrainedNetwork:
    """Train from a seeded init; keeps the weights of the best validation epoch.

    `train_set` / `valid_set` are (X, y) with integer labels 0..n_classes-1.
    Raises TrainingDiverged if the loss becomes non-finite.
    """
    X, y = train_set
    Xv, yv = valid_set
    X = np.asarray(X, dtype=config.dtype)
    Xv = np.asarray(Xv, dtype=config.dtype)
    y, yv = np.asarray(y, dtype=np.int64), np.asarray(yv, dtype=np.int64)
    if len(X) == 0 or len(Xv) == 0:
        raise ValueError("training and validation sets must be nonempty")
    spec = spec.with_dropout(config.dropout)
    k = spec.n_classes
    net = init_network(spec, seed=config.seed, dtype=config.dtype)
    if config.max_epochs == 0:
        return TrainedNetwork(net, [], 0)
    order_rng = np.random.default_rng([config.seed, 1])
    drop_rng = np.random.default_rng([config.seed, 2])
    opt = make_optimizer(config.optimizer, config.lr)
    eye = np.eye(k, dtype=net.dtype)
    best_f1, best_net, best_epoch, stale = -1.0, net.copy(), 0, 0
    log = []
    for epoch in range(1, config.max_epochs + 1):
        perm = order_rng.permutation(len(X))
        total, seen = 0.0, 0
        for s in range(0, len(X), config.batch_size):
            idx = perm[s:s + config.batch_size]
            if len(idx) < 2 and len(X) > 1:
                continue                    # batch norm needs >= 2 rows
            try:
                with np.errstate(over="raise", invalid="raise"):
                    probs, cache = forward(net, X[idx], "train", rng=drop_rng, update_running=True)
                    loss = cross_entropy(probs, eye[y[idx]])
                    grads = backward(net, cache, eye[y[idx]])
            except (NumericalError, FloatingPointError) as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from None
            if not np.isfinite(loss):
                raise TrainingDiverged(f"epoch {epoch}: non-finite loss")
            opt.step(net.params, grads)
            total += loss * len(idx)
            seen += len(idx)
        try:
            f1 = _val_f1(net, Xv, yv, k)
        except NumericalError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}") from None
        log.append({"epoch": epoch, "loss": total / max(seen, 1), "val_f1": f1})
        if f1 > best_f1:
            best_f1, best_net, best_epoch, stale = f1, net.copy(), epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainedNetwork(best_net, log, best_epoch)
