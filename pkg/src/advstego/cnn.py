"""Compact Xu-style CNN steganalyzer in numpy, with input gradients.

Pipeline: fixed 5x5 KV high-pass filter (valid), then three groups

    group 1: conv 3x3 -> |.| -> norm -> tanh -> 2x2 avg pool
    group 2: conv 3x3 -> norm -> tanh -> 2x2 avg pool
    group 3: conv 3x3 -> norm -> relu -> global average

and a 2-way linear head. Output index 0 is "cover", 1 is "stego".
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, NumericError, TruncatedFileError
from .image import GrayImage

KV_KERNEL = np.array([[-1, 2, -2, 2, -1],
                      [2, -6, 8, -6, 2],
                      [-2, 8, -12, 8, -2],
                      [2, -6, 8, -6, 2],
                      [-1, 2, -2, 2, -1]], dtype=np.float64) / 12.0

COVER, STEGO = 0, 1
BN_EPS = 1e-5
MAGIC = b"ADVSTEGO-CNN\0"
FORMAT_VERSION = 1


def _param_shapes(channels):
    c1, c2, c3 = channels
    return {
        "conv1.w": (c1, 1, 3, 3), "conv1.b": (c1,),
        "bn1.gamma": (c1,), "bn1.beta": (c1,),
        "conv2.w": (c2, c1, 3, 3),
        "bn2.gamma": (c2,), "bn2.beta": (c2,),
        "conv3.w": (c3, c2, 3, 3),
        "bn3.gamma": (c3,), "bn3.beta": (c3,),
        "fc.w": (c3, 2), "fc.b": (2,),
    }


def _state_shapes(channels):
    out = {}
    for k, c in enumerate(channels, start=1):
        out[f"bn{k}.mean"] = (c,)
        out[f"bn{k}.var"] = (c,)
    return out


@dataclass
class CnnModel:
    input_shape: tuple[int, int]
    channels: tuple[int, int, int]
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    history: list[float] = field(default_factory=list, compare=False)

    def copy(self) -> CnnModel:
        return CnnModel(tuple(self.input_shape), tuple(self.channels),
                        {k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.state.items()},
                        list(self.history))

    def descriptor(self) -> dict:
        return {"arch": "kv-xu3", "input_shape": list(self.input_shape),
                "channels": list(self.channels)}


def init_model(input_shape=(64, 64), channels=(8, 16, 32), seed: int = 0) -> CnnModel:
    """Uniform fan-in initialization, unit norm scale, zero shifts."""
    h, w = input_shape
    if (h - 4) // 4 < 1 or (w - 4) // 4 < 1:
        raise ValueError(f"input {input_shape} too small for two 2x2 poolings after the 5x5 filter")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _param_shapes(channels).items():
        if name.endswith(".gamma"):
            params[name] = np.ones(shape)
        elif name.endswith(".beta") or name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    if "conv1.b" in params:
        params["conv1.b"] = rng.uniform(-0.1, 0.1, size=params["conv1.b"].shape)
    state = {k: (np.zeros(s) if k.endswith(".mean") else np.ones(s))
             for k, s in _state_shapes(channels).items()}
    return CnnModel(tuple(input_shape), tuple(channels), params, state)


# ---------------------------------------------------------------- layers

def _conv_forward(x, w, pad):
    n, c, hh, ww = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n c ho wo k k
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ w.reshape(o, -1).T
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def _conv_backward(dy, cols, x_shape, w, pad, need_dx=True):
    n, c, hh, ww = x_shape
    o, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    d2 = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    if not need_dx:
        return None, dw
    dcols = (d2 @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, hh + 2 * pad, ww + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp, dw


def _bn_forward(x, gamma, beta, mean, var, training):
    if training:
        mu = x.mean(axis=(0, 2, 3))
        sig2 = x.var(axis=(0, 2, 3))
    else:
        mu, sig2 = mean, var
    inv = 1.0 / np.sqrt(sig2 + BN_EPS)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return y, (xhat, inv, mu, sig2)


def _bn_backward(dy, cache, gamma, training):
    xhat, inv, _, _ = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    dxhat = dy * gamma[None, :, None, None]
    if not training:
        return dxhat * inv[None, :, None, None], dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
    dx = inv[None, :, None, None] / m * (m * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2).mean(axis=(3, 5))


def _pool_backward(dy, x_shape):
    n, c, h, w = x_shape
    dx = np.zeros(x_shape)
    up = np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25
    dx[:, :, :up.shape[2], :up.shape[3]] = up
    return dx


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ------------------------------------------------------- network passes

def _forward(model: CnnModel, x, training=False):
    """x: (N, H, W) float array. Returns logits and a cache for backward."""
    p = model.params
    s = model.state
    cache = {}
    h = x[:, None, :, :]
    cache["x_shape"] = h.shape
    r, cache["hpf_cols"] = _conv_forward(h, KV_KERNEL[None, None], 0)

    z, cache["c1"] = _conv_forward(r, p["conv1.w"], 1)
    z = z + p["conv1.b"][None, :, None, None]
    cache["r_shape"] = r.shape
    cache["z1"] = z
    a = np.abs(z)
    a, cache["bn1"] = _bn_forward(a, p["bn1.gamma"], p["bn1.beta"], s["bn1.mean"], s["bn1.var"], training)
    t = np.tanh(a)
    cache["t1"] = t
    h = _pool_forward(t)

    cache["g2_in"] = h.shape
    z, cache["c2"] = _conv_forward(h, p["conv2.w"], 1)
    a, cache["bn2"] = _bn_forward(z, p["bn2.gamma"], p["bn2.beta"], s["bn2.mean"], s["bn2.var"], training)
    t = np.tanh(a)
    cache["t2"] = t
    h = _pool_forward(t)

    cache["g3_in"] = h.shape
    z, cache["c3"] = _conv_forward(h, p["conv3.w"], 1)
    a, cache["bn3"] = _bn_forward(z, p["bn3.gamma"], p["bn3.beta"], s["bn3.mean"], s["bn3.var"], training)
    cache["a3"] = a
    t = np.maximum(a, 0.0)
    g = t.mean(axis=(2, 3))
    cache["g"] = g
    logits = g @ p["fc.w"] + p["fc.b"]
    return logits, cache


def _backward(model: CnnModel, cache, dlogits, training=False, need_params=True, need_input=True):
    p = model.params
    grads = {}
    grads["fc.w"] = cache["g"].T @ dlogits
    grads["fc.b"] = dlogits.sum(axis=0)
    dg = dlogits @ p["fc.w"].T
    a3 = cache["a3"]
    dt = np.broadcast_to(dg[:, :, None, None] / (a3.shape[2] * a3.shape[3]), a3.shape)
    da = dt * (a3 > 0)
    dz, grads["bn3.gamma"], grads["bn3.beta"] = _bn_backward(da, cache["bn3"], p["bn3.gamma"], training)
    dh, grads["conv3.w"] = _conv_backward(dz, cache["c3"], cache["g3_in"], p["conv3.w"], 1)

    dt = _pool_backward(dh, cache["t2"].shape)
    da = dt * (1.0 - cache["t2"] ** 2)
    dz, grads["bn2.gamma"], grads["bn2.beta"] = _bn_backward(da, cache["bn2"], p["bn2.gamma"], training)
    dh, grads["conv2.w"] = _conv_backward(dz, cache["c2"], cache["g2_in"], p["conv2.w"], 1)

    dt = _pool_backward(dh, cache["t1"].shape)
    da = dt * (1.0 - cache["t1"] ** 2)
    dabs, grads["bn1.gamma"], grads["bn1.beta"] = _bn_backward(da, cache["bn1"], p["bn1.gamma"], training)
    dz = dabs * np.sign(cache["z1"])
    grads["conv1.b"] = dz.sum(axis=(0, 2, 3))
    dr, grads["conv1.w"] = _conv_backward(dz, cache["c1"], cache["r_shape"], p["conv1.w"], 1, need_dx=need_input)
    dx = None
    if need_input:
        dx, _ = _conv_backward(dr, cache["hpf_cols"], cache["x_shape"], KV_KERNEL[None, None], 0)
        dx = dx[:, 0]
    return grads, dx


def _as_batch(model: CnnModel, images) -> np.ndarray:
    if isinstance(images, GrayImage):
        images = [images]
    arrs = []
    for im in images:
        a = im.pixels if isinstance(im, GrayImage) else np.asarray(im)
        if tuple(a.shape) != tuple(model.input_shape):
            raise ValueError(f"image shape {a.shape} does not match model input {tuple(model.input_shape)}")
        arrs.append(a.astype(np.float64))
    return np.stack(arrs)


def predict_proba(model: CnnModel, images) -> np.ndarray:
    """(N, 2) probabilities [p_cover, p_stego] in inference mode."""
    x = _as_batch(model, images)
    logits, _ = _forward(model, x, training=False)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return softmax(logits)


def forward(model: CnnModel, img) -> tuple[float, float]:
    pc, ps = predict_proba(model, [img])[0]
    return float(pc), float(ps)


def input_gradients(model: CnnModel, images, target: int = COVER) -> np.ndarray:
    """Batched d p_target / d pixel, inference mode; images are independent."""
    x = _as_batch(model, images)
    logits, cache = _forward(model, x, training=False)
    prob = softmax(logits)
    onehot = np.zeros_like(prob)
    onehot[:, target] = 1.0
    dlogits = prob[:, target:target + 1] * (onehot - prob)
    _, dx = _backward(model, cache, dlogits, training=False, need_params=False)
    if not np.all(np.isfinite(dx)):
        raise NumericError("non-finite input gradient")
    return dx


def input_gradient(model: CnnModel, img, target: int | str = COVER) -> np.ndarray:
    """Gradient of the target-class probability w.r.t. each pixel of one image.

    The attack always asks for the cover class, whatever the model predicts.
    """
    if isinstance(target, str):
        target = {"cover": COVER, "stego": STEGO}[target]
    return input_gradients(model, [img], target)[0]


def sign_map(grad, img: GrayImage | None = None) -> np.ndarray:
    """+1 / -1 grid from a gradient; exact zeros go to +1, or -1 on pixels valued 255."""
    grad = np.asarray(grad)
    signs = np.where(grad < 0, -1, 1).astype(np.int8)
    if img is not None:
        signs[(grad == 0) & (img.pixels == 255)] = -1
    return signs


def loss_and_grads(model: CnnModel, x, labels, training=True):
    """Mean cross-entropy and parameter gradients; does not touch running stats."""
    logits, cache = _forward(model, x, training=training)
    prob = softmax(logits)
    n = len(labels)
    loss = -np.mean(np.log(np.maximum(prob[np.arange(n), labels], 1e-300)))
    dlogits = prob.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads, _ = _backward(model, cache, dlogits, training=training, need_input=False)
    return loss, grads, cache


# -------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    bn_momentum: float = 0.1
    final_lr_fraction: float = 0.05  # step size decays linearly to lr * this
    channels: tuple[int, int, int] = (8, 16, 32)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch size must be an even number >= 2 (cover/stego pairs)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def train(config: TrainConfig, covers, stegos, log=None) -> CnnModel:
    """Momentum SGD on paired batches; each cover sits in the same batch as its stego."""
    if len(covers) != len(stegos) or len(covers) < 2:
        raise ValueError("need at least two cover/stego pairs of equal count")
    shape = covers[0].shape
    model = init_model(shape, config.channels, config.seed)
    xc = _as_batch(model, covers)
    xs = _as_batch(model, stegos)
    rng = np.random.default_rng(config.seed + 1)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    pairs_per_batch = config.batch_size // 2
    n = len(xc)
    labels = np.array([COVER] * pairs_per_batch + [STEGO] * pairs_per_batch)

    for epoch in range(config.epochs):
        frac = epoch / max(config.epochs - 1, 1)
        lr = config.lr * (1 - frac * (1 - config.final_lr_fraction))
        order = rng.permutation(n)
        losses = []
        for b in range(0, n, pairs_per_batch):
            idx = order[b:b + pairs_per_batch]
            if len(idx) < 2:
                continue
            x = np.concatenate([xc[idx], xs[idx]])
            y = labels if len(idx) == pairs_per_batch else np.array([COVER] * len(idx) + [STEGO] * len(idx))
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads, cache = loss_and_grads(model, x, y, training=True)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch}", epoch=epoch)
            for k in model.params:
                velocity[k] = config.momentum * velocity[k] - lr * grads[k]
                model.params[k] += velocity[k]
            _update_running_stats(model, cache, config.bn_momentum)
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise NumericError(f"training diverged at epoch {epoch}", epoch=epoch)
        model.history.append(mean_loss)
        if log:
            log(f"epoch {epoch + 1}/{config.epochs} loss {mean_loss:.4f}")
    return model


def _update_running_stats(model, cache, momentum):
    for k in (1, 2, 3):
        xhat, _, mu, var = cache[f"bn{k}"]
        m = xhat.size // xhat.shape[1]
        unbiased = var * m / max(m - 1, 1)
        model.state[f"bn{k}.mean"] = (1 - momentum) * model.state[f"bn{k}.mean"] + momentum * mu
        model.state[f"bn{k}.var"] = (1 - momentum) * model.state[f"bn{k}.var"] + momentum * unbiased


# --------------------------------------------------------- serialization

def _blob(model: CnnModel) -> bytes:
    parts = [model.params[k] for k in _param_shapes(model.channels)]
    parts += [model.state[k] for k in _state_shapes(model.channels)]
    return b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in parts)


def model_bytes(model: CnnModel) -> bytes:
    desc = json.dumps(model.descriptor(), sort_keys=True).encode()
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(desc)) + desc + _blob(model)
    return body + hashlib.sha256(body).digest()


def model_from_bytes(data: bytes) -> CnnModel:
    if not data.startswith(MAGIC):
        raise FormatError("not a model file (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 8 + 32:
        raise TruncatedFileError("model file truncated")
    version, dlen = struct.unpack_from("<II", data, off)
    if version != FORMAT_VERSION:
        raise FormatError(f"model format version {version}, expected {FORMAT_VERSION}")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise TruncatedFileError("model payload corrupt or truncated (checksum mismatch)")
    off += 8
    desc = json.loads(body[off:off + dlen])
    off += dlen
    channels = tuple(desc["channels"])
    shapes = list(_param_shapes(channels).items()) + list(_state_shapes(channels).items())
    total = sum(int(np.prod(s)) for _, s in shapes)
    flat = np.frombuffer(body[off:], dtype="<f8")
    if flat.size != total:
        raise TruncatedFileError(f"parameter blob has {flat.size} values, expected {total}")
    params, state, pos = {}, {}, 0
    for name, shape in shapes:
        k = int(np.prod(shape))
        target = state if name.endswith((".mean", ".var")) else params
        target[name] = flat[pos:pos + k].reshape(shape).astype(np.float64)
        pos += k
    return CnnModel(tuple(desc["input_shape"]), channels, params, state)


def save_model(model: CnnModel, path) -> None:
    with open(path, "wb") as f:
        f.write(model_bytes(model))


def load_model(path) -> CnnModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())
