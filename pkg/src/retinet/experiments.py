"""Desk-scale experiments behind the acceptance checks and ``scripts/``.

Each function is deterministic in its seed and returns a small result record
with the numbers it compared. Budgets default to what runs in minutes on a
laptop CPU; the full-size settings are reachable through the arguments.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics, synth
from .autodiff.optim import LrSchedule
from .autodiff.tensor import Tensor, no_grad
from .imaging import IntrinsicSet, nchw_to_hwc
from .networks.config import IntrinsicNetConfig, RetiNetConfig
from .networks.models import IntrinsicNet, RetiNet
from .networks.train import (STREAM_INIT, GradientTask, IntrinsicTask, ReintegrationTask,
                             TrainingData, TrainingLog, stream, train)
from .retinex import RetinexParams, poisson_reintegrate, retinex_decompose

# "paper optimizer settings scaled": the same schedule shape, two decades up
DESK_LR = (1e-3, 1e-5)


def make_data(n: int, seed: int, canvas=(32, 32), formation: str = "diffuse", offset: int = 0):
    params = synth.GeneratorParams(canvas=tuple(canvas))
    samples = [synth.generate_sample(seed, offset + i, formation, params) for i in range(n)]
    return TrainingData.from_samples(samples)


def _schedule(epochs: int, n: int, batch_size: int, lr=DESK_LR) -> LrSchedule:
    return LrSchedule(lr[0], lr[1], max(1, epochs * math.ceil(n / batch_size)))


def _predict_batches(fn, x: np.ndarray, batch: int = 32):
    outs = [fn(x[i:i + batch]) for i in range(0, len(x), batch)]
    return tuple(np.concatenate([o[k] for o in outs]) for k in range(len(outs[0])))


def intrinsic_predict(model: IntrinsicNet, x: np.ndarray):
    model.eval()

    def run(b):
        with no_grad():
            R, S = model(Tensor(b))
        return R.data, S.data
    return _predict_batches(run, x)


@dataclass
class OverfitResult:
    first_loss_cl: float
    final_loss_cl: float
    logs_identical: bool
    log_text: str = field(repr=False, default="")

    @property
    def ratio(self) -> float:
        return self.final_loss_cl / self.first_loss_cl


def overfit(seed: int = 0, n: int = 4, epochs: int = 200, canvas=(32, 32),
            widths=(16, 32, 64), runs: int = 2) -> OverfitResult:
    """Fit the desk IntrinsicNet to a handful of samples, ``runs`` times over."""
    data = make_data(n, seed, canvas)
    texts = []
    for _ in range(runs):
        model = IntrinsicNet(IntrinsicNetConfig(block_widths=tuple(widths)),
                             stream(seed, STREAM_INIT))
        log = train(IntrinsicTask(model), data, epochs, _schedule(epochs, n, 16), seed, augment=False)
        texts.append(log.text())
    means = TrainingLog.read_text(texts[0]).epoch_means("loss_cl")
    return OverfitResult(means[0], means[-1], all(t == texts[0] for t in texts), texts[0])


@dataclass
class ImfTrendResult:
    recon_mse_with_imf: float
    recon_mse_without_imf: float
    dssim_with_imf: float
    dssim_without_imf: float
    config: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.recon_mse_with_imf <= self.recon_mse_without_imf


def _dssim_mean(R_hat, S_hat, data: TrainingData) -> float:
    vals = []
    for i in range(len(data)):
        vals.append(metrics.dssim(nchw_to_hwc(R_hat, i), nchw_to_hwc(data.reflectance, i)))
        vals.append(metrics.dssim(nchw_to_hwc(S_hat, i), nchw_to_hwc(data.shading, i)))
    return float(np.mean(vals))


def imf_trend(seed: int = 0, n_train: int = 500, n_test: int = 100, epochs: int = 50,
              canvas=(16, 16), widths=(8, 16, 32), batch_size: int = 16) -> ImfTrendResult:
    """Train with and without the image formation loss; compare held-out reconstruction."""
    train_data = make_data(n_train, seed, canvas)
    test_data = make_data(n_test, seed, canvas, offset=n_train)
    out = {}
    for imf in (True, False):
        model = IntrinsicNet(IntrinsicNetConfig(block_widths=tuple(widths), use_imf_loss=imf),
                             stream(seed, STREAM_INIT))
        train(IntrinsicTask(model), train_data, epochs, _schedule(epochs, n_train, batch_size),
              seed, batch_size=batch_size)
        R, S = intrinsic_predict(model, test_data.image)
        recon = float(np.mean((R * S - test_data.image) ** 2, dtype=np.float64))
        out[imf] = (recon, _dssim_mean(R, S, test_data))
    cfg = dict(seed=seed, n_train=n_train, n_test=n_test, epochs=epochs, canvas=list(canvas),
               widths=list(widths), batch_size=batch_size, lr=list(DESK_LR))
    return ImfTrendResult(out[True][0], out[False][0], out[True][1], out[False][1], cfg)


@dataclass
class GtGradientResult:
    dssim_gt_gradients: float
    dssim_predicted_gradients: float
    config: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.dssim_gt_gradients <= self.dssim_predicted_gradients


def _retinet_predict(task: ReintegrationTask, data: TrainingData):
    task.net.stage2.eval()

    def run(idx):
        x = task.stage2_input(data.image[idx], data.reflectance[idx], data.shading[idx])
        with no_grad():
            R, S = task.net.stage2(Tensor(x))
        return R.data, S.data
    idx = np.arange(len(data))
    return _predict_batches(lambda b: run(b), idx)


def retinet_gt_gradients(seed: int = 0, n_train: int = 128, n_val: int = 32, epochs_s1: int = 20,
                         epochs_s2: int = 20, canvas=(16, 16), widths=(8, 16, 32),
                         stage2_widths=(64, 128, 128, 64), batch_size: int = 16) -> GtGradientResult:
    """Stage 2 trained on ground-truth intrinsic gradients versus on stage-1 predictions."""
    train_data = make_data(n_train, seed, canvas)
    val_data = make_data(n_val, seed, canvas, offset=n_train)
    cfg = RetiNetConfig(stage1=IntrinsicNetConfig(block_widths=tuple(widths), input_channels=6),
                        stage2_widths=tuple(stage2_widths))
    base = RetiNet(cfg, stream(seed, STREAM_INIT))
    train(GradientTask(base.stage1, cfg.gradient_mode), train_data, epochs_s1,
          _schedule(epochs_s1, n_train, batch_size), seed, batch_size=batch_size)
    stage1_state = [p.data.copy() for p in base.stage1.parameters()]
    out = {}
    for use_gt in (True, False):
        net = RetiNet(cfg, stream(seed, STREAM_INIT))
        for p, v in zip(net.stage1.parameters(), stage1_state):
            p.data[...] = v
        for (_, holder, attr), (_, h0, a0) in zip(net.stage1.named_buffers(), base.stage1.named_buffers()):
            setattr(holder, attr, getattr(h0, a0).copy())
        task = ReintegrationTask(net, use_gt_gradients=use_gt)
        train(task, train_data, epochs_s2, _schedule(epochs_s2, n_train, batch_size), seed,
              batch_size=batch_size)
        R, S = _retinet_predict(task, val_data)
        out[use_gt] = _dssim_mean(np.maximum(R, 0), np.maximum(S, 0), val_data)
    conf = dict(seed=seed, n_train=n_train, n_val=n_val, epochs_s1=epochs_s1, epochs_s2=epochs_s2,
                canvas=list(canvas), widths=list(widths), stage2_widths=list(stage2_widths),
                batch_size=batch_size, lr=list(DESK_LR))
    return GtGradientResult(out[True], out[False], conf)


@dataclass
class RetinexResult:
    lmse_retinex: float
    lmse_identity: float
    config: dict = field(default_factory=dict)

    @property
    def improvement(self) -> float:
        return 1.0 - self.lmse_retinex / self.lmse_identity


def retinex_baseline(seed: int = 0, n: int = 100, canvas=(64, 64), k: int = 20,
                     params: RetinexParams = RetinexParams()) -> RetinexResult:
    """Mean LMSE (albedo and shading averaged) of Retinex against the identity predictor
    on piecewise-constant albedo under smooth gray shading."""
    gp = synth.GeneratorParams(canvas=tuple(canvas))
    w = metrics.WindowSpec(k)
    ours, ident = [], []
    for i in range(n):
        s = synth.smooth_shading_sample(seed, i, gp)
        I = s.image.astype(np.float64)
        gt = IntrinsicSet(s.set.reflectance.astype(np.float64), s.set.shading.astype(np.float64))
        r = metrics.score_pair(retinex_decompose(I, params), gt, w)
        ours.append((r.lmse_r + r.lmse_s) / 2)
        r = metrics.score_pair(IntrinsicSet(I, np.ones_like(I)), gt, w)
        ident.append((r.lmse_r + r.lmse_s) / 2)
    conf = dict(seed=seed, n=n, canvas=list(canvas), k=k, **asdict(params))
    return RetinexResult(float(np.mean(ours)), float(np.mean(ident)), conf)


@dataclass
class PoissonResult:
    rms: float
    seconds: float
    iterations: int


def poisson_recovery(seed: int = 0, shape=(120, 160), tol: float = 1e-10) -> PoissonResult:
    """Reintegrate a smooth random potential from its own forward differences."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    f = np.zeros((h, w))
    for _ in range(6):
        a, fy, fx, ph = rng.uniform(-1, 1), rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0, 6.3)
        f += a * np.sin(fy * yy * math.pi + fx * xx * math.pi + ph)
    f -= f.mean()
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy[:-1, :] = f[1:, :] - f[:-1, :]
    t0 = time.perf_counter()
    sol = poisson_reintegrate(gx, gy, tol=tol, max_iters=20_000)
    dt = time.perf_counter() - t0
    rms = float(np.sqrt(np.mean((sol.image[:, :, 0] - f) ** 2)))
    return PoissonResult(rms, dt, sol.iterations)
