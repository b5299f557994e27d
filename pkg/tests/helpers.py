"""Shared test fixtures: tiny datasets, snapshots, and the gradient oracle."""

from types import SimpleNamespace

import numpy as np

from gradtune.net import cross_entropy, forward, l1_penalty
from gradtune.numerics import SeededRng


def split(x, y):
    return SimpleNamespace(x=np.asarray(x, dtype=np.float64), y=np.asarray(y, dtype=np.int64))


def toy_linear_dataset(seed=0, n_train=200, n_valid=80, n_test=80, dim=2, axis=0, margin=0.3):
    """Linearly separable 2-class blobs: sign of one coordinate decides."""
    rng = SeededRng(seed)

    def make(n):
        y = np.arange(n) % 2
        x = rng.uniform_block(n * dim, -1, 1).reshape(n, dim)
        pos = rng.uniform_block(n, margin, 1.0)
        neg = rng.uniform_block(n, -1.0, -margin)
        x[:, axis] = np.where(y == 1, pos, neg)
        return split(x, y)

    return SimpleNamespace(
        task=f"toy-axis{axis}", train=make(n_train), valid=make(n_valid), test=make(n_test)
    )


def body_bytes(net):
    return b"".join(layer.W.tobytes() + layer.b.tobytes() for layer in net.layers)


def layer_bytes(net, k):
    return net.layers[k].W.tobytes() + net.layers[k].b.tobytes()


def audit_freeze_soundness(snapshots, history, n_layers):
    """Check per-epoch snapshots against the logged phase column.

    snapshots: list of (epoch, [layer bytes...]) taken after each epoch's
    updates.  Layers below the freeze frontier must be bitwise unchanged
    since the frontier last moved (phase p trains the p topmost layers).
    """
    assert len(snapshots) == len(history)
    baseline = None  # frozen-layer bytes as of the last frontier move
    prev_phase = None
    for (epoch, layers_now), row in zip(snapshots, history):
        phase = row["phase"]
        assert row["epoch"] == epoch
        if prev_phase is None or phase != prev_phase:
            baseline = layers_now
        frozen = n_layers - phase
        for k in range(frozen):
            assert layers_now[k] == baseline[k], f"frozen layer {k} changed in epoch {epoch}"
        prev_phase = phase
    return True


def net_params(net):
    for layer in net.layers:
        yield layer.W
        yield layer.b
    for hid in sorted(net.heads):
        yield net.heads[hid].W
        yield net.heads[hid].b


def flat_grads(grads, net):
    out = []
    for k in range(len(net.layers)):
        out.extend(grads.layers[k])
    for hid in sorted(net.heads):
        out.extend(grads.heads[hid])
    return out


def total_loss(net, head, x, y, reg, masks=None):
    mode = "train" if masks is not None else "eval"
    cache = forward(net, head, x, mode, reg, masks=masks)
    loss = cross_entropy(cache.probs, y)
    if reg.kind == "l1":
        loss += l1_penalty(net, reg.l1_lambda)
    return loss


class KinkyConfiguration(Exception):
    """A pre-activation sits too close to the ReLU kink for FD to certify."""


def kink_margin(net, head, x, reg=None):
    """Smallest |pre-activation|: finite differences need this well above eps."""
    cache = forward(net, head, x)
    return min(float(np.abs(z).min()) for z in cache.pre)


def check_gradients(net, head, x, y, reg, eps=1e-5, rtol=1e-4):
    """Central finite differences vs analytic gradients, every entry.

    Entries where both sides are below 1e-6 are compared absolutely: that
    is the resolution floor of central differences at this eps (ReLU kink
    crossings produce O(1e-7) artifacts that no exact gradient can match).
    """
    from gradtune.net import backward

    masks = None
    if reg.kind == "dropout":
        cache = forward(net, head, x, "train", reg, SeededRng(7))
        masks = cache.masks
    else:
        cache = forward(net, head, x, "eval", reg)
    margin = min(float(np.abs(z).min()) for z in cache.pre)
    if margin <= 50 * eps:
        raise KinkyConfiguration(f"pre-activation within {margin:.1e} of the ReLU kink")
    grads = backward(net, head, cache, y, reg, trainable=None)
    analytic = flat_grads(grads, net)
    checked = 0
    for param, ga in zip(net_params(net), analytic):
        for i in range(param.size):
            old = param.flat[i]
            param.flat[i] = old + eps
            lp = total_loss(net, head, x, y, reg, masks)
            param.flat[i] = old - eps
            lm = total_loss(net, head, x, y, reg, masks)
            param.flat[i] = old
            fd = (lp - lm) / (2 * eps)
            a = ga.flat[i]
            scale = max(abs(a), abs(fd))
            if scale > 1e-6:
                assert abs(a - fd) / scale < rtol, f"grad mismatch: {a} vs {fd}"
            else:
                assert abs(a - fd) <= 1e-6
            checked += 1
    return checked


def audit_frontier_rule(history, threshold, n_layers):
    """Frontier advances at most 1/epoch and only after sub-threshold moves."""
    val_key = next(k for k in history[0] if k.startswith("val_err_"))
    for i in range(1, len(history)):
        prev_row, row = history[i - 1], history[i]
        dphase = row["phase"] - prev_row["phase"]
        assert dphase in (0, 1), "frontier must advance by at most one layer per epoch"
        assert row["phase"] <= n_layers
        if dphase == 1:
            assert i >= 2, "no two consecutive validation errors before epoch 2"
            delta = abs(history[i - 1][val_key] - history[i - 2][val_key])
            assert delta < threshold, f"frontier advanced on |delta|={delta}"
    return True
