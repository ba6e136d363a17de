"""Small trainable CNN fitted by least squares.

Architecture: one convolution layer with bias (zero padding as wide as the
kernel), ReLU, global max-pooling, then fully connected ReLU layers and a
tempered two-class softmax.  The loss is the mean squared difference
between the class-1 probability and the 0/1 label, minimized by Adam.
Gradients are hand-derived and checked against central finite differences;
max-pool ties route the subgradient to the first argmax in both paths.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cnn import Filter
from .datagen import Dataset, LabeledImage
from .errors import DataError, EmptyDataset, InvalidParams, TruncatedPayload
from .model import GrayImage

_MAGIC = b"DCNN"
_VERSION = 1


@dataclass(frozen=True)
class ArchSpec:
    n_filters: int = 28
    filter_size: int = 3
    dense_widths: tuple[int, ...] = (128,)
    beta: float = 1.0

    def validate(self) -> None:
        if self.n_filters < 1 or self.filter_size < 1:
            raise InvalidParams("need at least one filter of positive size")
        if any(w < 1 for w in self.dense_widths):
            raise InvalidParams("dense widths must be positive")
        if self.beta <= 0:
            raise InvalidParams(f"temperature must be positive, got {self.beta}")


@dataclass(frozen=True)
class OptSpec:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidParams("optimizer spec must have positive rate/epochs/batch")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidParams("moment decays must lie in [0, 1)")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class TrainableCnn:
    """Conv -> ReLU -> global max-pool -> dense stack -> softmax pair."""

    def __init__(self, arch: ArchSpec, seed: int = 0):
        arch.validate()
        self.arch = arch
        self.beta = float(arch.beta)
        rng = np.random.default_rng(seed)
        k, nf = arch.filter_size, arch.n_filters
        self.conv_w = rng.standard_normal((nf, k, k)) * np.sqrt(2.0 / (k * k))
        self.conv_b = np.zeros(nf)
        self.dense: list[tuple[np.ndarray, np.ndarray]] = []
        fan_in = nf
        for width in (*arch.dense_widths, 2):
            w = rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in)
            self.dense.append((w, np.zeros(width)))
            fan_in = width
        self.loss_history: list[float] = []

    @property
    def conv_filters(self) -> list[Filter]:
        return [Filter(w) for w in self.conv_w]

    # -- parameter plumbing ------------------------------------------------

    def param_arrays(self) -> list[np.ndarray]:
        arrays = [self.conv_w, self.conv_b]
        for w, b in self.dense:
            arrays.extend((w, b))
        return arrays

    def get_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays()])

    def set_flat(self, flat: np.ndarray) -> None:
        expected = sum(a.size for a in self.param_arrays())
        if flat.size != expected:
            raise InvalidParams(
                f"parameter vector size {flat.size}, expected {expected}")
        pos = 0
        for a in self.param_arrays():
            a[...] = flat[pos: pos + a.size].reshape(a.shape)
            pos += a.size

    # -- forward / backward ------------------------------------------------

    def forward_batch(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Class-1 probabilities for a (B, d, d) batch, plus a backward cache."""
        k = self.arch.filter_size
        padded = np.pad(x, ((0, 0), (k, k), (k, k)))
        windows = sliding_window_view(padded, (k, k), axis=(1, 2))
        conv = np.tensordot(windows, self.conv_w, axes=([3, 4], [1, 2]))
        conv = np.moveaxis(conv, 3, 1) + self.conv_b[None, :, None, None]
        act = np.maximum(conv, 0.0)
        b, nf, p, _ = act.shape
        flat = act.reshape(b, nf, p * p)
        pool_idx = flat.argmax(axis=2)
        h = np.take_along_axis(flat, pool_idx[:, :, None], axis=2)[:, :, 0]

        hidden = [h]
        for w, bias in self.dense[:-1]:
            hidden.append(np.maximum(hidden[-1] @ w.T + bias, 0.0))
        w_out, b_out = self.dense[-1]
        z = hidden[-1] @ w_out.T + b_out
        p1 = _sigmoid(self.beta * (z[:, 1] - z[:, 0]))
        cache = {"windows": windows, "act_pos": conv > 0, "pool_idx": pool_idx,
                 "hidden": hidden, "p1": p1, "shape": (b, nf, p)}
        return p1, cache

    def forward(self, img: GrayImage) -> tuple[float, float]:
        """Probability pair (p0, p1) for one image; sums to 1 exactly."""
        p1, _ = self.forward_batch(img.pixels[None])
        return 1.0 - float(p1[0]), float(p1[0])

    def predict(self, img: GrayImage) -> int:
        return int(self.forward(img)[1] > 0.5)

    def loss_batch(self, x: np.ndarray, y: np.ndarray) -> float:
        p1, _ = self.forward_batch(x)
        return float(np.mean((y - p1) ** 2))

    def gradients(self, x: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
        """Analytic gradient of the mean squared loss, per parameter array."""
        p1, cache = self.forward_batch(x)
        b, nf, p = cache["shape"]
        # d loss / d z, through p1 = sigmoid(beta (z1 - z0))
        gp = 2.0 * (p1 - y) / b
        gt = gp * self.beta * p1 * (1.0 - p1)
        gz = np.stack([-gt, gt], axis=1)

        hidden = cache["hidden"]
        grads_dense: list[tuple[np.ndarray, np.ndarray]] = []
        gcur = gz
        for layer in range(len(self.dense) - 1, -1, -1):
            w, _ = self.dense[layer]
            gw = gcur.T @ hidden[layer]
            gb = gcur.sum(axis=0)
            grads_dense.append((gw, gb))
            if layer > 0:
                gcur = (gcur @ w) * (hidden[layer] > 0)
        grads_dense.reverse()

        gh = gcur @ self.dense[0][0]
        # Route pooled gradients to the first argmax, masked by the ReLU.
        pool_idx = cache["pool_idx"]
        qi, ri = np.divmod(pool_idx, p)
        bi = np.arange(b)[:, None]
        fi = np.arange(nf)[None, :]
        live = cache["act_pos"][bi, fi, qi, ri]
        gc = gh * live
        patches = cache["windows"][bi, qi, ri]
        gw_conv = np.einsum("bf,bfij->fij", gc, patches)
        gb_conv = gc.sum(axis=0)

        grads = [gw_conv, gb_conv]
        for gw, gb in grads_dense:
            grads.extend((gw, gb))
        return grads


def train_least_squares(data: Dataset, arch: ArchSpec | None = None,
                        opt: OptSpec | None = None) -> TrainableCnn:
    """Fit the network to (image, label) pairs by Adam on the squared loss.

    Images are expected pre-normalized.  The per-epoch mean loss is logged
    on the returned network's ``loss_history``.
    """
    arch = arch or ArchSpec()
    opt = opt or OptSpec()
    arch.validate()
    opt.validate()
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    x = np.stack([item.image.pixels for item in data.items])
    y = np.array([item.label for item in data.items], dtype=float)

    net = TrainableCnn(arch, seed=opt.seed)
    rng = np.random.default_rng(opt.seed + 1)
    params = net.param_arrays()
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]
    t = 0
    n = len(data)
    for _ in range(opt.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, opt.batch_size):
            idx = order[start: start + opt.batch_size]
            xb, yb = x[idx], y[idx]
            total += net.loss_batch(xb, yb) * idx.size
            grads = net.gradients(xb, yb)
            t += 1
            for a, g, mi, vi in zip(params, grads, m, v):
                mi *= opt.beta1
                mi += (1 - opt.beta1) * g
                vi *= opt.beta2
                vi += (1 - opt.beta2) * g * g
                m_hat = mi / (1 - opt.beta1 ** t)
                v_hat = vi / (1 - opt.beta2 ** t)
                a -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
        net.loss_history.append(total / n)
    return net


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int

    def __float__(self) -> float:
        return self.max_rel_error


def grad_check(net: TrainableCnn, sample: LabeledImage, eps: float,
               n_params: int = 100, seed: int = 0) -> GradCheckResult:
    """Central-difference check of the analytic loss gradient.

    Coordinates whose perturbation flips a max-pool argmax sit on a kink of
    the loss; they are skipped and counted rather than compared.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise InvalidParams(f"eps must lie in [1e-7, 1e-3], got {eps}")
    x = sample.image.pixels[None]
    y = np.array([float(sample.label)])

    def pool_pattern() -> np.ndarray:
        _, cache = net.forward_batch(x)
        return cache["pool_idx"].copy()

    base_pattern = pool_pattern()
    analytic = np.concatenate([g.ravel() for g in net.gradients(x, y)])
    flat = net.get_flat()
    rng = np.random.default_rng(seed)
    count = min(n_params, flat.size)
    coords = rng.choice(flat.size, size=count, replace=False)

    max_rel = 0.0
    skipped = 0
    for c in coords:
        orig = flat[c]
        flat[c] = orig + eps
        net.set_flat(flat)
        lp = net.loss_batch(x, y)
        tied = not np.array_equal(pool_pattern(), base_pattern)
        flat[c] = orig - eps
        net.set_flat(flat)
        lm = net.loss_batch(x, y)
        tied = tied or not np.array_equal(pool_pattern(), base_pattern)
        flat[c] = orig
        net.set_flat(flat)
        if tied:
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * eps)
        denom = max(abs(analytic[c]), abs(numeric), 1e-6)
        max_rel = max(max_rel, abs(analytic[c] - numeric) / denom)
    return GradCheckResult(max_rel_error=float(max_rel),
                           n_checked=count - skipped, n_skipped=skipped)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(net: TrainableCnn) -> bytes:
    """Flat binary record: magic, version, architecture, little-endian f64."""
    widths = net.arch.dense_widths
    header = struct.pack("<4sHHHH", _MAGIC, _VERSION, net.arch.n_filters,
                         net.arch.filter_size, len(widths))
    header += struct.pack(f"<{len(widths)}H", *widths)
    header += struct.pack("<d", net.beta)
    body = b"".join(a.astype("<f8").tobytes() for a in net.param_arrays())
    return header + body


def load_checkpoint(blob: bytes) -> TrainableCnn:
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise DataError("not a checkpoint: bad magic")
    if len(blob) < 12:
        raise TruncatedPayload("checkpoint header truncated")
    version, nf, k, n_widths = struct.unpack("<HHHH", blob[4:12])
    if version != _VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos = 12
    if len(blob) < pos + 2 * n_widths + 8:
        raise TruncatedPayload("checkpoint header truncated")
    widths = struct.unpack(f"<{n_widths}H", blob[pos: pos + 2 * n_widths])
    pos += 2 * n_widths
    (beta,) = struct.unpack("<d", blob[pos: pos + 8])
    pos += 8
    net = TrainableCnn(ArchSpec(n_filters=nf, filter_size=k,
                                dense_widths=tuple(widths), beta=beta))
    expected = sum(a.size for a in net.param_arrays()) * 8
    if len(blob) - pos != expected:
        raise TruncatedPayload(
            f"checkpoint body has {len(blob) - pos} bytes, expected {expected}")
    net.set_flat(np.frombuffer(blob[pos:], dtype="<f8").astype(float))
    return net
