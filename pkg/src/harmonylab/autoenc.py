"""Convolutional autoencoder producing a dense 13x13 image code.

Rasters are area-averaged down to 100x100, pushed through a small
strided-conv encoder to a single-channel 13x13 bottleneck (169 values)
and reconstructed by a mirrored nearest-neighbor-upsampling decoder.
Everything is plain numpy with analytic gradients; training is minibatch
SGD with momentum on MSE, deterministic for a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scene import BLACK, WHITE

AE_INPUT = 100
AE_CODE_SIDE = 13


class TrainingDiverged(RuntimeError):
    def __init__(self, last_finite_epoch: int):
        super().__init__(f"loss became non-finite; last finite epoch was {last_finite_epoch}")
        self.last_finite_epoch = last_finite_epoch


@dataclass(frozen=True)
class ConvLayer:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int
    pad: int
    activation: str          # "tanh", "sigmoid" or "linear"
    upsample: int = 1        # nearest-neighbor scale applied before the conv

    def out_size(self, size: int) -> int:
        size = size * self.upsample
        return (size + 2 * self.pad - self.kernel) // self.stride + 1


@dataclass(frozen=True)
class NetworkSpec:
    input_size: int
    encoder: tuple[ConvLayer, ...]
    decoder: tuple[ConvLayer, ...]

    def code_size(self) -> int:
        size = self.input_size
        for layer in self.encoder:
            size = layer.out_size(size)
        return size

    def output_size(self) -> int:
        size = self.code_size()
        for layer in self.decoder:
            size = layer.out_size(size)
        return size

    def layers(self) -> tuple[ConvLayer, ...]:
        return self.encoder + self.decoder

    def validate(self) -> None:
        if self.encoder[-1].out_ch != 1:
            raise ValueError("bottleneck must be single-channel")
        if self.output_size() != self.input_size:
            raise ValueError(f"decoder output {self.output_size()} != input {self.input_size}")


def default_spec(hidden: int = 8) -> NetworkSpec:
    """100x100x1 -> 13x13x1 encoder with a mirrored decoder."""
    spec = NetworkSpec(
        input_size=AE_INPUT,
        encoder=(
            ConvLayer(1, hidden, 3, 2, 1, "tanh"),
            ConvLayer(hidden, hidden, 3, 2, 1, "tanh"),
            ConvLayer(hidden, 1, 3, 2, 1, "linear"),
        ),
        decoder=(
            ConvLayer(1, hidden, 2, 1, 0, "tanh", upsample=2),
            ConvLayer(hidden, hidden, 3, 1, 1, "tanh", upsample=2),
            ConvLayer(hidden, 1, 3, 1, 1, "sigmoid", upsample=2),
        ),
    )
    spec.validate()
    assert spec.code_size() == AE_CODE_SIDE
    return spec


def toy_spec(size: int = 8, hidden: int = 3) -> NetworkSpec:
    """Small net for gradient checking (size -> size/4 code)."""
    return NetworkSpec(
        input_size=size,
        encoder=(
            ConvLayer(1, hidden, 3, 2, 1, "tanh"),
            ConvLayer(hidden, 1, 3, 2, 1, "linear"),
        ),
        decoder=(
            ConvLayer(1, hidden, 3, 1, 1, "tanh", upsample=2),
            ConvLayer(hidden, 1, 3, 1, 1, "sigmoid", upsample=2),
        ),
    )


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def init_params(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, np.ndarray] = {}
    for idx, layer in enumerate(spec.layers()):
        fan_in = layer.in_ch * layer.kernel ** 2
        params[f"w{idx}"] = rng.normal(0.0, np.sqrt(1.0 / fan_in),
                                       size=(layer.out_ch, layer.in_ch, layer.kernel, layer.kernel))
        params[f"b{idx}"] = np.zeros(layer.out_ch)
    return params


# ---------------------------------------------------------------------------
# layer primitives

def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int):
    n, c, h, _ = x.shape
    o, _, k, _ = w.shape
    xp = _pad(x, pad)
    out_h = (h + 2 * pad - k) // stride + 1
    patches = np.empty((n, c, k, k, out_h, out_h))
    for ki in range(k):
        for kj in range(k):
            patches[:, :, ki, kj] = xp[:, :, ki:ki + stride * out_h:stride,
                                       kj:kj + stride * out_h:stride]
    out = np.einsum("ockl,ncklhw->nohw", w, patches, optimize=True) + b[None, :, None, None]
    return out, (patches, xp.shape)


def _conv_backward(dout: np.ndarray, x_shape, w: np.ndarray, cache, stride: int, pad: int):
    patches, xp_shape = cache
    k = w.shape[2]
    dw = np.einsum("nohw,ncklhw->ockl", dout, patches, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    dpatches = np.einsum("ockl,nohw->ncklhw", w, dout, optimize=True)
    dxp = np.zeros(xp_shape)
    out_h = dout.shape[2]
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki:ki + stride * out_h:stride, kj:kj + stride * out_h:stride] += \
                dpatches[:, :, ki, kj]
    if pad:
        dx = dxp[:, :, pad:-pad, pad:-pad]
    else:
        dx = dxp
    return dx, dw, db


def _upsample(x: np.ndarray, scale: int) -> np.ndarray:
    if scale == 1:
        return x
    return np.repeat(np.repeat(x, scale, axis=2), scale, axis=3)


def _upsample_backward(d: np.ndarray, scale: int) -> np.ndarray:
    if scale == 1:
        return d
    n, c, h, w = d.shape
    return d.reshape(n, c, h // scale, scale, w // scale, scale).sum(axis=(3, 5))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activate_grad(a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a ** 2
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


# ---------------------------------------------------------------------------
# network

def forward(spec: NetworkSpec, params: dict, images: np.ndarray,
            with_cache: bool = False):
    """Run the full net. images: (N, H, W) in [0, 1].

    Returns (codes (N, code*code), reconstructions (N, H, W)) and, when
    requested, the cache needed for backprop.
    """
    x = images[:, None, :, :]
    caches = []
    code = None
    n_enc = len(spec.encoder)
    for idx, layer in enumerate(spec.layers()):
        x_up = _upsample(x, layer.upsample)
        z, conv_cache = _conv_forward(x_up, params[f"w{idx}"], params[f"b{idx}"],
                                      layer.stride, layer.pad)
        a = _activate(z, layer.activation)
        caches.append((layer, conv_cache, a, x_up.shape))
        x = a
        if idx == n_enc - 1:
            code = x.reshape(x.shape[0], -1).copy()
    recon = x[:, 0]
    if with_cache:
        return code, recon, caches
    return code, recon


def loss_and_grads(spec: NetworkSpec, params: dict, images: np.ndarray):
    """Mean squared reconstruction error and its analytic gradients."""
    _, recon, caches = forward(spec, params, images, with_cache=True)
    diff = recon - images
    loss = float((diff ** 2).mean())
    grads: dict[str, np.ndarray] = {}
    d = (2.0 * diff / diff.size)[:, None, :, :]
    for idx in range(len(spec.layers()) - 1, -1, -1):
        layer, conv_cache, a, x_up_shape = caches[idx]
        dz = d * _activate_grad(a, layer.activation)
        d, dw, db = _conv_backward(dz, x_up_shape, params[f"w{idx}"], conv_cache,
                                   layer.stride, layer.pad)
        grads[f"w{idx}"] = dw
        grads[f"b{idx}"] = db
        d = _upsample_backward(d, layer.upsample)
    return loss, grads


def batch_loss(spec: NetworkSpec, params: dict, images: np.ndarray) -> float:
    _, recon = forward(spec, params, images)
    return float(((recon - images) ** 2).mean())


def train(spec: NetworkSpec, images: np.ndarray, epochs: int = 50, seed: int = 0,
          lr: float = 1e-2, momentum: float = 0.9, batch_size: int = 32,
          val_images: np.ndarray | None = None):
    """Minibatch SGD with momentum on reconstruction MSE.

    Raises TrainingDiverged when the loss stops being finite, reporting
    the last epoch that was.
    """
    if images.shape[0] == 0:
        raise ValueError("empty training set")
    spec.validate()
    params = init_params(spec, seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    if val_images is None:
        val_images = images[:min(len(images), batch_size)]
    report = TrainReport()
    last_finite = -1
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        epoch_losses = []
        for start in range(0, len(images), batch_size):
            batch = images[order[start:start + batch_size]]
            loss, grads = loss_and_grads(spec, params, batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(last_finite)
            for key in params:
                velocity[key] = momentum * velocity[key] - lr * grads[key]
                params[key] += velocity[key]
            epoch_losses.append(loss)
        report.train_loss.append(float(np.mean(epoch_losses)))
        report.val_loss.append(batch_loss(spec, params, val_images))
        if not np.isfinite(report.val_loss[-1]):
            raise TrainingDiverged(last_finite)
        last_finite = epoch
    return params, report


# ---------------------------------------------------------------------------
# raster interface

def resize_raster(raster: np.ndarray, gray_level: int = 128,
                  out_size: int = AE_INPUT) -> np.ndarray:
    """Exact area-averaged downsampling to out_size x out_size in [0, 1]."""
    img = np.full(raster.shape, gray_level / 255.0)
    img[raster == BLACK] = 0.0
    img[raster == WHITE] = 1.0
    return _area_average(img, out_size)


def _area_average(img: np.ndarray, out: int) -> np.ndarray:
    weights = _overlap_matrix(img.shape[0], out)
    resized = weights @ img @ _overlap_matrix(img.shape[1], out).T
    # guard against 1-ulp excursions outside the input range
    return np.clip(resized, img.min(), img.max())


def _overlap_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic matrix of interval overlaps between dst and src bins."""
    w = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def encode_all(spec: NetworkSpec, params: dict, rasters, gray_level: int = 128,
               batch_size: int = 64) -> tuple[np.ndarray, list[str]]:
    """Bottleneck codes for every raster, plus their column names."""
    side = spec.code_size()
    names = [f"ae_{r}_{c}" for r in range(side) for c in range(side)]
    if len(rasters) == 0:
        return np.zeros((0, side * side)), names
    images = np.stack([resize_raster(r, gray_level, spec.input_size) for r in rasters])
    codes = []
    for start in range(0, len(images), batch_size):
        code, _ = forward(spec, params, images[start:start + batch_size])
        codes.append(code)
    return np.concatenate(codes), names


def save_params(path, spec: NetworkSpec, params: dict) -> None:
    meta = {
        "version": 1,
        "input_size": spec.input_size,
        "encoder": [list(l[:6]) + [l.upsample] for l in map(_layer_tuple, spec.encoder)],
        "decoder": [list(l[:6]) + [l.upsample] for l in map(_layer_tuple, spec.decoder)],
    }
    np.savez(path, __meta__=np.frombuffer(repr(meta).encode(), dtype=np.uint8), **params)


def _layer_tuple(layer: ConvLayer):
    t = (layer.in_ch, layer.out_ch, layer.kernel, layer.stride, layer.pad, layer.activation)

    class _T(tuple):
        upsample = layer.upsample
    return _T(t)


def load_params(path) -> tuple[NetworkSpec, dict]:
    import ast
    data = np.load(path)
    meta = ast.literal_eval(bytes(data["__meta__"]).decode())
    if meta.get("version") != 1:
        raise ValueError(f"unsupported params version {meta.get('version')}")

    def mk(listing):
        return tuple(ConvLayer(i, o, k, s, p, act, up) for i, o, k, s, p, act, up in listing)

    spec = NetworkSpec(meta["input_size"], mk(meta["encoder"]), mk(meta["decoder"]))
    params = {k: data[k] for k in data.files if k != "__meta__"}
    return spec, params
