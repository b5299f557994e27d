"""SGD training loops: early stopping, gradual unfreezing, multi-task batches.

Gradual tuning starts with only the new head trainable (phase 0) and
unfreezes one hidden layer top-down (phase += 1) every time the validation
error moves by less than the plateau threshold between two consecutive
epochs.  The early-stopping patience counter is global: it is not reset
when a layer is unfrozen.

Datasets are anything exposing ``train`` / ``valid`` / ``test`` splits with
``x`` (float64, n x features) and ``y`` (int labels) attributes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .net import (
    Network,
    RegConfig,
    backward,
    checkpoint_bytes,
    cross_entropy,
    forward,
    l1_penalty,
    restore_checkpoint_into,
)
from .numerics import SeededRng, derive_seed


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 20
    patience: int = 20
    plateau_threshold: float = 0.1  # percentage points of validation error
    reg: RegConfig = field(default_factory=RegConfig.none)
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.patience < 1 or self.plateau_threshold <= 0:
            raise ValueError("learning_rate and plateau_threshold must be > 0, patience >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass(frozen=True)
class FreezeMask:
    """Trainable flags per body layer, plus the set of trainable head ids."""

    layers: tuple[bool, ...]
    heads: frozenset[int]

    @staticmethod
    def for_phase(net: Network, head: int, phase: int) -> "FreezeMask":
        """Head plus the ``phase`` topmost hidden layers trainable."""
        n = len(net.layers)
        phase = min(phase, n)
        return FreezeMask(tuple(k >= n - phase for k in range(n)), frozenset({head}))

    @staticmethod
    def all_trainable(net: Network, head: int) -> "FreezeMask":
        return FreezeMask.for_phase(net, head, len(net.layers))

    @staticmethod
    def head_only(net: Network, head: int) -> "FreezeMask":
        return FreezeMask.for_phase(net, head, 0)


@dataclass
class TuningState:
    """Per-run bookkeeping: freeze phase, plateau tracking, best checkpoint."""

    phase: int = 0
    best_val_err: float = math.inf
    epochs_since_best: int = 0
    prev_val_err: float | None = None
    best_checkpoint: bytes | None = None
    best_epoch: int = 0
    history: list[dict] = field(default_factory=list)
    capped: bool = False  # max_epochs exhausted without early stop
    per_task_best: dict[int, float] = field(default_factory=dict)


def sgd_step(net: Network, grads, lr: float, mask: FreezeMask | None = None) -> Network:
    """w <- w - lr * g for trainable parameters; frozen ones are not touched."""
    for k, layer in enumerate(net.layers):
        if mask is None or mask.layers[k]:
            dW, db = grads.layers[k]
            if dW.shape != layer.W.shape or db.shape != layer.b.shape:
                raise ValueError(f"gradient shape mismatch at layer {k}")
            layer.W -= lr * dW
            layer.b -= lr * db
    for hid, hd in net.heads.items():
        if mask is None or hid in mask.heads:
            dW, db = grads.heads[hid]
            if dW.shape != hd.W.shape or db.shape != hd.b.shape:
                raise ValueError(f"gradient shape mismatch at head {hid}")
            hd.W -= lr * dW
            hd.b -= lr * db
    return net


def evaluate(net: Network, head: int, split, batch_size: int = 4096) -> float:
    """Percentage of misclassified examples, eval mode."""
    x, y = split.x, np.asarray(split.y)
    n = len(y)
    if n == 0:
        raise ValueError("cannot evaluate an empty split")
    wrong = 0
    for s in range(0, n, batch_size):
        probs = forward(net, head, x[s : s + batch_size], "eval").probs
        wrong += int((np.argmax(probs, axis=1) != y[s : s + batch_size]).sum())
    return 100.0 * wrong / n


def update_early_stop(
    state: TuningState, val_err: float, patience: int, net: Network | None = None
) -> bool:
    """Track the running validation minimum; True means stop now.

    A new strict minimum resets the counter and stores a checkpoint of
    ``net`` (when given); otherwise the counter grows and the run stops
    once it reaches ``patience``.
    """
    if val_err < state.best_val_err:
        state.best_val_err = val_err
        state.epochs_since_best = 0
        if net is not None:
            state.best_checkpoint = checkpoint_bytes(net)
    else:
        state.epochs_since_best += 1
    return state.epochs_since_best >= patience


def update_gradual_phase(
    state: TuningState, val_err: float, net: Network, threshold: float, head: int
) -> FreezeMask:
    """Advance the freeze frontier when validation movement is below threshold.

    At most one layer is unfrozen per call; the previous-epoch error is
    updated every call.  Returns the mask for the next epoch.
    """
    prev = state.prev_val_err
    state.prev_val_err = val_err
    if prev is not None and abs(prev - val_err) < threshold and state.phase < len(net.layers):
        state.phase += 1
    return FreezeMask.for_phase(net, head, state.phase)


def _minibatches(order: np.ndarray, batch_size: int):
    for s in range(0, len(order), batch_size):
        yield order[s : s + batch_size]


def _batch_loss_and_step(net, head, x, y, cfg, mask, drop_rng):
    cache = forward(net, head, x, "train", cfg.reg, drop_rng)
    loss = cross_entropy(cache.probs, y)
    if cfg.reg.kind == "l1":
        loss += l1_penalty(net, cfg.reg.l1_lambda)
    grads = backward(net, head, cache, y, cfg.reg, mask)
    sgd_step(net, grads, cfg.learning_rate, mask)
    return loss


def train_single(
    net: Network,
    head: int,
    ds,
    cfg: TrainConfig,
    mode: str = "fine",
    track: list[tuple[int, object]] = (),
    on_epoch=None,
) -> tuple[Network, TuningState]:
    """Train one head on one dataset with early stopping.

    mode 'fine' trains every parameter from the first epoch; 'gradual'
    starts head-only and unfreezes top-down on validation plateaus.
    ``track`` pairs (head_id, dataset) are evaluated on their test split
    every epoch and logged.  On return the network carries the best
    checkpoint's parameters and the state holds the full history.
    """
    if mode not in ("fine", "gradual"):
        raise ValueError(f"mode must be 'fine' or 'gradual', got {mode!r}")
    n_hidden = len(net.layers)
    state = TuningState(phase=0 if mode == "gradual" else n_hidden)
    mask = FreezeMask.for_phase(net, head, state.phase)
    drop_rng = SeededRng(derive_seed(cfg.seed, "dropout"))
    x_train, y_train = ds.train.x, np.asarray(ds.train.y)

    for epoch in range(1, cfg.max_epochs + 1):
        phase_used = state.phase
        order = SeededRng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(len(y_train))
        loss_sum, n_batches = 0.0, 0
        for idx in _minibatches(order, cfg.batch_size):
            loss_sum += _batch_loss_and_step(
                net, head, x_train[idx], y_train[idx], cfg, mask, drop_rng
            )
            n_batches += 1
        val_err = evaluate(net, head, ds.valid)
        stop = update_early_stop(state, val_err, cfg.patience, net)
        stored = state.epochs_since_best == 0
        if stored:
            state.best_epoch = epoch
        if mode == "gradual":
            mask = update_gradual_phase(net=net, state=state, val_err=val_err,
                                        threshold=cfg.plateau_threshold, head=head)
        row = {
            "epoch": epoch,
            "phase": phase_used,
            "train_loss": loss_sum / n_batches,
            f"val_err_{head}": val_err,
        }
        for mon_head, mon_ds in track:
            row[f"test_err_{mon_head}"] = evaluate(net, mon_head, mon_ds.test)
        row["stored"] = int(stored)
        state.history.append(row)
        if on_epoch is not None:
            on_epoch(epoch, net, state)
        if stop:
            break
    else:
        state.capped = True
    if state.best_checkpoint is not None:
        restore_checkpoint_into(net, state.best_checkpoint)
    return net, state


def round_robin_schedule(sizes: list[int], batch_size: int) -> list[tuple[int, int, int]]:
    """Fixed cyclic batch order over tasks: (task_index, start, stop) triples.

    Cycles task 0, 1, ... taking one batch each until every task's examples
    are used once; exhausted tasks drop out of the rotation.
    """
    pos = [0] * len(sizes)
    out = []
    while any(p < s for p, s in zip(pos, sizes)):
        for i, size in enumerate(sizes):
            if pos[i] < size:
                stop = min(pos[i] + batch_size, size)
                out.append((i, pos[i], stop))
                pos[i] = stop
    return out


def train_multitask(
    net: Network,
    tasks: list[tuple[int, object]],
    cfg: TrainConfig,
    on_epoch=None,
) -> tuple[Network, TuningState]:
    """Interleave batches of several tasks in a fixed order, all layers trainable.

    A checkpoint is stored only on epochs where every task's validation
    error sets a new strict minimum; training stops as soon as any task
    goes ``patience`` epochs without improving its own minimum.
    """
    if len(tasks) < 2:
        raise ValueError("train_multitask needs at least 2 tasks")
    for hid, _ in tasks:
        if hid not in net.heads:
            raise KeyError(f"unknown head id {hid}")
    state = TuningState(phase=len(net.layers))
    masks = {hid: FreezeMask.all_trainable(net, hid) for hid, _ in tasks}
    best = {hid: math.inf for hid, _ in tasks}
    since = {hid: 0 for hid, _ in tasks}
    drop_rng = SeededRng(derive_seed(cfg.seed, "dropout"))
    train_xy = [(ds.train.x, np.asarray(ds.train.y)) for _, ds in tasks]

    for epoch in range(1, cfg.max_epochs + 1):
        orders = [
            SeededRng(derive_seed(cfg.seed, "shuffle", ti, epoch)).permutation(len(y))
            for ti, (_, y) in enumerate(train_xy)
        ]
        schedule = round_robin_schedule([len(y) for _, y in train_xy], cfg.batch_size)
        loss_sum = 0.0
        for ti, start, stop in schedule:
            hid = tasks[ti][0]
            x, y = train_xy[ti]
            idx = orders[ti][start:stop]
            loss_sum += _batch_loss_and_step(net, hid, x[idx], y[idx], cfg, masks[hid], drop_rng)
        vals = {hid: evaluate(net, hid, ds.valid) for hid, ds in tasks}
        all_below = all(vals[hid] < best[hid] for hid in vals)
        for hid, v in vals.items():
            if v < best[hid]:
                best[hid] = v
                since[hid] = 0
            else:
                since[hid] += 1
        if all_below:
            state.best_checkpoint = checkpoint_bytes(net)
            state.best_epoch = epoch
        row = {"epoch": epoch, "phase": state.phase, "train_loss": loss_sum / len(schedule)}
        for hid, _ in tasks:
            row[f"val_err_{hid}"] = vals[hid]
        row["stored"] = int(all_below)
        state.history.append(row)
        if on_epoch is not None:
            on_epoch(epoch, net, state)
        if any(c >= cfg.patience for c in since.values()):
            break
    else:
        state.capped = True
    state.per_task_best = best
    if state.best_checkpoint is not None:
        restore_checkpoint_into(net, state.best_checkpoint)
    return net, state


def write_history_csv(history: list[dict], path) -> None:
    """One row per epoch; floats at 6 significant digits."""
    if not history:
        raise ValueError("empty history")
    cols: list[str] = []
    for row in history:
        for key in row:
            if key not in cols:
                cols.append(key)
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in history:
            cells = []
            for key in cols:
                v = row.get(key, "")
                if isinstance(v, float):
                    cells.append(f"{v:.6g}")
                else:
                    cells.append(str(v))
            f.write(",".join(cells) + "\n")
