"""Self-verification: finite-difference gradient checks, formation round-trips
and metric oracles.

Every check looks its operation up on the module at call time, so a test can
monkeypatch a broken op into ``retinet.autodiff.functional`` and watch the
suite fail on it.
"""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import imaging, io, metrics, synth
from .autodiff import functional as F
from .autodiff.gradcheck import gradient_check
from .networks import losses as L
from .networks.config import LossWeights

GRAD_TOL = 1e-4
DEFAULT_TRIALS = 20


@dataclass
class CheckResult:
    name: str
    seed: int
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error)) and self.error < self.tol


@dataclass
class VerifyReport:
    results: list[CheckResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[CheckResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> list[str]:
        """One line per check name, worst seed first on failure."""
        lines = []
        names = list(dict.fromkeys(r.name for r in self.results))
        for name in names:
            rs = [r for r in self.results if r.name == name]
            worst = max(rs, key=lambda r: (not r.passed, r.error))
            tag = "PASS" if all(r.passed for r in rs) else "FAIL"
            lines.append(f"{tag} {name} seeds={len(rs)} worst_seed={worst.seed} "
                         f"max_err={worst.error:.3e} tol={worst.tol:.0e}")
        return lines


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _weights(rng) -> LossWeights:
    g = rng.uniform(0.2, 2.0, size=5)
    return LossWeights(*(float(v) for v in g))


# Each case builds (fn, inputs) from a generator. Shapes are tiny so that the
# element-by-element numeric gradient stays cheap.
def _conv_s1(rng):
    x = rng.standard_normal((2, 2, 5, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    return (lambda x, w, b: F.conv3x3(x, w, b, stride=1)), [x, w, b]


def _conv_s2(rng):
    x = rng.standard_normal((2, 2, 5, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    return (lambda x, w, b: F.conv3x3(x, w, b, stride=2)), [x, w, b]


def _deconv(rng):
    x = rng.standard_normal((2, 3, 3, 2))
    w = rng.standard_normal((3, 2, 4, 4))
    b = rng.standard_normal(2)
    return (lambda x, w, b: F.deconv4x4_s2(x, w, b)), [x, w, b]


def _batchnorm(training):
    def case(rng):
        x = rng.standard_normal((3, 2, 3, 3)) * 2 + 0.5
        gamma = rng.uniform(0.5, 1.5, 2)
        beta = rng.standard_normal(2)
        rm, rv = rng.standard_normal(2), rng.uniform(0.5, 2.0, 2)

        def fn(x, gamma, beta):
            state = F.BatchNormState(rm.copy(), rv.copy())
            return F.batchnorm(x, gamma, beta, state, training)
        return fn, [x, gamma, beta]
    return case


def _relu(rng):
    x = _away_from_zero(rng, (2, 3, 4, 4))
    return (lambda x: F.relu(x)), [x]


def _concat(rng):
    a, b = rng.standard_normal((2, 1, 3, 3)), rng.standard_normal((2, 3, 3, 3))
    return (lambda a, b: F.concat_c([a, b])), [a, b]


def _slice(rng):
    x = rng.standard_normal((2, 6, 3, 3))
    return (lambda x: F.slice_c(x, 3, 6)), [x]


def _mul(rng):
    a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))
    return (lambda a, b: F.mul_elem(a, b)), [a, b]


def _mul_broadcast(rng):
    a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 1, 1))
    return (lambda a, b: F.mul_elem(a, b)), [a, b]


def _add(rng):
    a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 1, 4, 4))
    return (lambda a, b: F.add(a, b)), [a, b]


def _mse(rng):
    a, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 3, 4, 4))
    return (lambda a, b: F.mse_loss(a, b)), [a, b]


def _quads(rng, n, shape=(2, 3, 4, 4)):
    return [rng.uniform(0.1, 1.0, size=shape) for _ in range(n)]


def _loss_cl(rng):
    w = _weights(rng)
    return (lambda Rh, R, Sh, S: L.loss_cl(Rh, R, Sh, S, w)), _quads(rng, 4)


def _loss_imf(rng):
    g = float(rng.uniform(0.2, 2.0))
    return (lambda Rh, Sh, I: L.loss_imf(Rh, Sh, I, g)), _quads(rng, 3)


def _loss_fl(rng):
    w = _weights(rng)
    return (lambda Rh, R, Sh, S, I: L.loss_fl(Rh, R, Sh, S, I, w)), _quads(rng, 5)


def _loss_frm(global_light):
    def case(rng):
        w = _weights(rng)
        arrs = _quads(rng, 7)
        eshape = (2, 3, 1, 1) if global_light else (2, 3, 4, 4)
        Eh, E = rng.uniform(0.3, 1.0, eshape), rng.uniform(0.3, 1.0, eshape)

        def fn(Rh, R, Sh, S, Hh, H, I, Eh, E):
            return L.loss_frm(Rh, R, Sh, S, Hh, H, Eh, E, I, w)
        return fn, arrs + [Eh, E]
    return case


def _loss_s1(rng):
    w = _weights(rng)
    return (lambda a, b, c, d: L.loss_s1(a, b, c, d, w)), _quads(rng, 4)


def _conv_bn_relu(rng):
    # a small composite: conv -> batchnorm -> relu -> deconv -> mse
    x = rng.standard_normal((2, 2, 4, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    wd = rng.standard_normal((3, 2, 4, 4))
    t = rng.standard_normal((2, 2, 4, 4))

    def fn(x, w, wd):
        h = F.conv3x3(x, w, None, stride=2)
        h = F.batchnorm(h, np.ones(3), np.zeros(3), F.BatchNormState.fresh(3, np.float64))
        return F.mse_loss(F.deconv4x4_s2(F.relu(h), wd), t)
    return fn, [x, w, wd]


GRADIENT_CASES: dict[str, Callable] = {
    "conv3x3_s1": _conv_s1,
    "conv3x3_s2": _conv_s2,
    "deconv4x4_s2": _deconv,
    "batchnorm_train": _batchnorm(True),
    "batchnorm_eval": _batchnorm(False),
    "relu": _relu,
    "concat_c": _concat,
    "slice_c": _slice,
    "mul_elem": _mul,
    "mul_elem_broadcast": _mul_broadcast,
    "add": _add,
    "mse_loss": _mse,
    "loss_cl": _loss_cl,
    "loss_imf": _loss_imf,
    "loss_fl": _loss_fl,
    "loss_frm": _loss_frm(False),
    "loss_frm_global": _loss_frm(True),
    "loss_s1": _loss_s1,
    "conv_bn_relu_deconv": _conv_bn_relu,
}


def check_gradient(name: str, seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, list(GRADIENT_CASES).index(name)])
    fn, inputs = GRADIENT_CASES[name](rng)
    err = gradient_check(fn, inputs, rng)
    return CheckResult(f"grad:{name}", seed, err, GRAD_TOL)


def _formation_roundtrip(seed: int) -> CheckResult:
    worst = 0.0
    for formation in synth.FORMATIONS:
        s = synth.generate_sample(seed, 0, formation, synth.GeneratorParams(canvas=(16, 16)))
        worst = max(worst, float(np.max(np.abs(s.set.compose() - s.image))))
    return CheckResult("roundtrip:formation", seed, worst, 1e-12)


def _shading_roundtrip(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 101])
    R = rng.uniform(0.05, 1.0, (6, 7, 3))
    S = rng.uniform(0.0, 2.0, (6, 7, 3))
    back = imaging.derive_shading(imaging.compose_diffuse(R, S), R)
    return CheckResult("roundtrip:derive_shading", seed, float(np.max(np.abs(back - S))), 1e-6)


def _pfm_roundtrip(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 102])
    img = rng.uniform(0, 10, (5, 4, 3)).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "x.pfm"
        io.write_pfm(p, img)
        back = io.read_pfm(p)
    err = 0.0 if np.array_equal(back, img) else float(np.max(np.abs(back - img))) or 1.0
    return CheckResult("roundtrip:pfm", seed, err, 1e-12)


def alpha_grid_mse(pred, gt, lo=0.0, hi=4.0, n=4001) -> float:
    """Brute-force scaled MSE: coarse grid over alpha, then a fine local grid."""
    alphas = np.linspace(lo, hi, n)
    errs = [np.mean((a * pred - gt) ** 2) for a in alphas]
    i = int(np.argmin(errs))
    fine = np.linspace(alphas[max(i - 1, 0)], alphas[min(i + 1, n - 1)], 2001)
    return float(min(np.mean((a * pred - gt) ** 2) for a in fine))


def _scaled_mse_oracle(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 103])
    pred = rng.uniform(0.1, 1.0, (4, 4, 3))
    gt = rng.uniform(0.8, 1.5) * pred + rng.normal(0, 0.05, pred.shape)
    err = abs(metrics.scaled_mse(pred, gt) - alpha_grid_mse(pred, gt))
    return CheckResult("oracle:scaled_mse", seed, err, 1e-6)


def _lmse_zero(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 104])
    gt = rng.uniform(0.1, 1.0, (30, 25, 3))
    v = metrics.lmse(np.zeros_like(gt), gt, metrics.WindowSpec(10))
    return CheckResult("oracle:lmse_zero", seed, abs(v - 1.0), 1e-9)


def _dssim_self(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 105])
    x = rng.uniform(0.0, 1.0, (16, 16, 3))
    return CheckResult("oracle:dssim_self", seed, abs(metrics.dssim(x, x)), 1e-12)


def _window_count(seed: int) -> CheckResult:
    n = len(metrics.window_anchors(120, 20)) * len(metrics.window_anchors(160, 20))
    return CheckResult("oracle:lmse_window_count", seed, float(abs(n - 165)), 0.5)


INVARIANT_CASES: dict[str, Callable[[int], CheckResult]] = {
    "formation": _formation_roundtrip,
    "derive_shading": _shading_roundtrip,
    "pfm": _pfm_roundtrip,
    "scaled_mse": _scaled_mse_oracle,
    "lmse_zero": _lmse_zero,
    "dssim_self": _dssim_self,
    "window_count": _window_count,
}


def run_verify(seed: int = 0, trials: int = DEFAULT_TRIALS, progress=None) -> VerifyReport:
    """Run every check for seeds ``seed .. seed + trials - 1``."""
    t0 = time.perf_counter()
    report = VerifyReport()
    for name, s in itertools.product(GRADIENT_CASES, range(seed, seed + trials)):
        try:
            r = check_gradient(name, s)
        except Exception as e:  # a crashing op counts as a failed check
            r = CheckResult(f"grad:{name}", s, math.inf, GRAD_TOL)
            if progress:
                progress(f"ERROR grad:{name} seed={s}: {e}")
        report.results.append(r)
    for name, s in itertools.product(INVARIANT_CASES, range(seed, seed + trials)):
        report.results.append(INVARIANT_CASES[name](s))
    report.seconds = time.perf_counter() - t0
    return report
