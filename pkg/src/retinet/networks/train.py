"""Training loop, augmentation, logs and inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..autodiff.checkpoint import module_checkpoint, save_checkpoint
from ..autodiff.functional import concat_c
from ..autodiff.optim import LrSchedule, poly_lr, sgd_step
from ..autodiff.tensor import Tensor, no_grad
from ..errors import NonFiniteLossError, UsageError
from ..imaging import IntrinsicSet, as_image, hwc_to_nchw, nchw_to_hwc
from .config import LossWeights
from .features import gradient_features
from .losses import loss_cl, loss_imf, loss_s1
from .models import IntrinsicNet, ReintegrationNet, RetiNet

# named random sub-streams derived from one root seed
STREAM_DATA, STREAM_INIT, STREAM_AUGMENT, STREAM_SHUFFLE = 0, 1, 2, 3

PAPER_BATCH_SIZE = 16
PAPER_MOMENTUM = 0.9
PAPER_WEIGHT_DECAY = 0.0005
PAPER_MAX_SHIFT = 20  # pixels at 120x160


def stream(seed: int, kind: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), kind, *[int(e) for e in extra]])


@dataclass
class TrainingData:
    """Stacked ``(N, 3, H, W)`` float32 arrays."""

    image: np.ndarray
    reflectance: np.ndarray
    shading: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "TrainingData":
        def stack(get):
            return np.stack([as_image(get(s)).transpose(2, 0, 1) for s in samples]).astype(np.float32)

        shading = stack(lambda s: s.set.shading)
        if shading.shape[1] == 1:
            shading = np.repeat(shading, 3, axis=1)
        return cls(stack(lambda s: s.image), stack(lambda s: s.set.reflectance), shading)

    def __len__(self) -> int:
        return self.image.shape[0]

    def batch(self, idx) -> list[np.ndarray]:
        return [self.image[idx], self.reflectance[idx], self.shading[idx]]


def max_shift_for(height: int, width: int) -> int:
    return int(round(PAPER_MAX_SHIFT * min(height, width) / 120))


def shift_fill(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate the last two axes by (dy, dx), filling uncovered pixels with zeros."""
    out = np.zeros_like(a)
    h, w = a.shape[-2:]
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[..., dst_y, dst_x] = a[..., src_y, src_x]
    return out


def augment_params(rng: np.random.Generator, max_shift: int) -> tuple[bool, bool, int, int]:
    flip_h, flip_v = bool(rng.integers(2)), bool(rng.integers(2))
    dy, dx = (int(v) for v in rng.integers(-max_shift, max_shift + 1, size=2))
    return flip_h, flip_v, dy, dx


def apply_augment(a: np.ndarray, flip_h: bool, flip_v: bool, dy: int, dx: int) -> np.ndarray:
    if flip_h:
        a = a[..., :, ::-1]
    if flip_v:
        a = a[..., ::-1, :]
    return shift_fill(np.ascontiguousarray(a), dy, dx)


def augment_batch(arrays: Sequence[np.ndarray], rngs, max_shift: int) -> list[np.ndarray]:
    """Apply one random flip/shift per sample, identically to every array."""
    out = [np.empty_like(a) for a in arrays]
    for i, rng in enumerate(rngs):
        p = augment_params(rng, max_shift)
        for src, dst in zip(arrays, out):
            dst[i] = apply_augment(src[i], *p)
    return out


class IntrinsicTask:
    """IntrinsicNet: predict R and S, optionally with the image formation loss."""

    name = "intrinsicnet"

    def __init__(self, model: IntrinsicNet, weights: LossWeights | None = None, use_imf: bool | None = None):
        self.model = model
        self.weights = weights or model.config.loss_weights
        self.use_imf = model.config.use_imf_loss if use_imf is None else use_imf

    def parameters(self):
        return self.model.parameters()

    def checkpoint_module(self):
        return self.model

    def train_mode(self):
        self.model.train()

    def losses(self, img, R, S):
        R_hat, S_hat = self.model(Tensor(img))
        cl = loss_cl(R_hat, R, S_hat, S, self.weights)
        imf = loss_imf(R_hat, S_hat, img, self.weights.gamma_IMF)
        total = cl + imf if self.use_imf else cl
        return cl, imf, total


class GradientTask:
    """RetiNet stage 1: separate image gradients into intrinsic gradients."""

    name = "retinet-s1"

    def __init__(self, model: IntrinsicNet, mode: str = "magnitude", weights: LossWeights | None = None):
        self.model = model
        self.mode = mode
        self.weights = weights or model.config.loss_weights

    def parameters(self):
        return self.model.parameters()

    def checkpoint_module(self):
        return self.model

    def train_mode(self):
        self.model.train()

    def losses(self, img, R, S):
        x = np.concatenate([img, gradient_features(img, self.mode)], axis=1)
        gR_hat, gS_hat = self.model(Tensor(x))
        cl = loss_s1(gR_hat, gradient_features(R, self.mode), gS_hat, gradient_features(S, self.mode),
                     self.weights)
        return cl, None, cl


class ReintegrationTask:
    """RetiNet stage 2 on top of a frozen stage 1 (or ground-truth gradients)."""

    name = "retinet-s2"

    def __init__(self, net: RetiNet, use_gt_gradients: bool = False, weights: LossWeights | None = None):
        self.net = net
        self.use_gt = use_gt_gradients
        self.weights = weights or net.config.loss_weights
        self.mode = net.config.gradient_mode

    def parameters(self):
        return self.net.stage2.parameters()

    def checkpoint_module(self):
        return self.net

    def train_mode(self):
        self.net.stage1.eval()
        self.net.stage2.train()

    def stage2_input(self, img, R=None, S=None) -> np.ndarray:
        if self.use_gt:
            gR, gS = gradient_features(R, self.mode), gradient_features(S, self.mode)
        else:
            gR, gS = predict_gradients(self.net.stage1, img, self.mode)
        return np.concatenate([img, gR, gS], axis=1)

    def losses(self, img, R, S):
        R_hat, S_hat = self.net.stage2(Tensor(self.stage2_input(img, R, S)))
        cl = loss_cl(R_hat, R, S_hat, S, self.weights)
        imf = loss_imf(R_hat, S_hat, img, self.weights.gamma_IMF)
        return cl, imf, cl + imf


def predict_gradients(stage1: IntrinsicNet, img: np.ndarray, mode: str = "magnitude"):
    was = stage1.training
    stage1.eval()
    with no_grad():
        x = np.concatenate([img, gradient_features(img, mode)], axis=1)
        gR, gS = stage1(Tensor(x))
    stage1.train(was)
    return gR.data, gS.data


@dataclass
class TrainingLog:
    records: list[dict] = field(default_factory=list)
    header: str = "# epoch step lr loss_cl loss_imf loss_total"

    KEYS = ("epoch", "step", "lr", "loss_cl", "loss_imf", "loss_total")

    def append(self, **rec) -> str:
        self.records.append(rec)
        return self.format(rec)

    @classmethod
    def format(cls, rec: dict) -> str:
        return " ".join(f"{k}={rec[k]!r}" for k in cls.KEYS)

    def text(self) -> str:
        return "\n".join([self.header] + [self.format(r) for r in self.records]) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.text())

    @classmethod
    def read(cls, path) -> "TrainingLog":
        return cls.read_text(Path(path).read_text())

    @classmethod
    def read_text(cls, text: str) -> "TrainingLog":
        log = cls()
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            rec = {}
            for tok in line.split():
                k, v = tok.split("=", 1)
                rec[k] = int(v) if k in ("epoch", "step") else float(v)
            log.records.append(rec)
        return log

    def epoch_means(self, key: str = "loss_cl") -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for r in self.records:
            by_epoch.setdefault(r["epoch"], []).append(r[key])
        return [math.fsum(v) / len(v) for _, v in sorted(by_epoch.items())]


def train(task, data: TrainingData, epochs: int, schedule: LrSchedule | None = None, seed: int = 0,
          augment: bool = True, batch_size: int = PAPER_BATCH_SIZE, momentum: float = PAPER_MOMENTUM,
          weight_decay: float = PAPER_WEIGHT_DECAY, log: TrainingLog | None = None,
          checkpoint_path=None, log_path=None, start_step: int = 0, progress=None) -> TrainingLog:
    """Momentum SGD with polynomial decay over ``epochs`` passes of ``data``.

    Shuffling and augmentation draw from per-epoch, per-sample generators
    derived from ``seed``, so a run resumed at an epoch boundary reproduces an
    uninterrupted one.
    """
    n = len(data)
    if n == 0:
        raise UsageError("empty training set")
    steps_per_epoch = math.ceil(n / batch_size)
    if schedule is None:
        schedule = LrSchedule(1e-5, 1e-7, max(1, epochs * steps_per_epoch))
    log = log if log is not None else TrainingLog()
    params = task.parameters()
    h, w = data.image.shape[2:]
    shift = max_shift_for(h, w)
    step = start_step
    module = task.checkpoint_module()

    def save(epoch_done):
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, module_checkpoint(
                module, {"seed": int(seed), "epoch": int(epoch_done)}, step))
        if log_path is not None:
            log.write(log_path)

    start_epoch = start_step // steps_per_epoch
    if epochs <= start_epoch:
        save(start_epoch)
    for epoch in range(start_epoch, epochs):
        task.train_mode()
        order = stream(seed, STREAM_SHUFFLE, epoch).permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * batch_size:(b + 1) * batch_size]
            arrays = data.batch(idx)
            if augment:
                rngs = [stream(seed, STREAM_AUGMENT, epoch, i) for i in idx]
                arrays = augment_batch(arrays, rngs, shift)
            lr = poly_lr(schedule, step)
            cl, imf, total = task.losses(*arrays)
            vals = {"loss_cl": float(cl.data), "loss_imf": float(imf.data) if imf is not None else 0.0,
                    "loss_total": float(total.data)}
            if not all(math.isfinite(v) for v in vals.values()):
                raise NonFiniteLossError(
                    f"non-finite loss {vals} at epoch {epoch + 1}, step {step + 1}, samples {idx.tolist()}")
            total.backward()
            sgd_step(params, lr, momentum, weight_decay)
            step += 1
            line = log.append(epoch=epoch + 1, step=step, lr=lr, **vals)
            if progress is not None:
                progress(line)
        save(epoch + 1)
    return log


def _pad_to_multiple(img: np.ndarray, m: int):
    h, w = img.shape[:2]
    ph, pw = (-h) % m, (-w) % m
    pads = (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2)
    if ph or pw:
        img = np.pad(img, ((pads[0], pads[1]), (pads[2], pads[3]), (0, 0)), mode="symmetric")
    return img, pads


def decompose(model, I) -> IntrinsicSet:
    """Predict reflectance and shading for one ``(H, W, 3)`` image.

    Inputs whose sides do not divide by the encoder's downsampling factor are
    padded symmetrically; the padding is recorded in ``meta["pad"]`` as
    (top, bottom, left, right) and removed from the outputs.
    """
    I = as_image(I)[:, :, :3]
    stage1 = model.stage1 if isinstance(model, RetiNet) else model
    if not isinstance(stage1, IntrinsicNet):
        raise UsageError(f"cannot decompose with {type(model).__name__}")
    if not isinstance(model, RetiNet) and model.config.input_channels != 3:
        raise UsageError("a stage-1 network predicts gradients; decompose needs IntrinsicNet or RetiNet")
    padded, pads = _pad_to_multiple(I.astype(np.float32), stage1.multiple)
    x = hwc_to_nchw(padded).astype(np.float32)
    with no_grad():
        if isinstance(model, RetiNet):
            model.stage2.eval()
            gR, gS = predict_gradients(model.stage1, x, model.config.gradient_mode)
            R_hat, S_hat = model.stage2(Tensor(np.concatenate([x, gR, gS], axis=1)))
        else:
            model.eval()
            R_hat, S_hat = model(Tensor(x))
    h, w = padded.shape[:2]
    crop = (slice(pads[0], h - pads[1]), slice(pads[2], w - pads[3]))
    R = np.maximum(nchw_to_hwc(R_hat.data)[crop], 0)
    S = np.maximum(nchw_to_hwc(S_hat.data)[crop], 0)
    meta = {"pad": pads} if any(pads) else {}
    return IntrinsicSet(R, S, meta=meta)
