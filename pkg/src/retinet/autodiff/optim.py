"""SGD with momentum and the polynomial learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DomainError, UsageError
from .tensor import Parameter


@dataclass(frozen=True)
class LrSchedule:
    lr0: float = 1e-5
    lr_end: float = 1e-7
    total_steps: int = 1
    power: float = 1.0

    def __post_init__(self):
        if not (self.lr0 >= self.lr_end > 0) and not (self.lr0 == self.lr_end == 0):
            raise DomainError(f"need lr0 >= lr_end > 0, got {self.lr0}, {self.lr_end}")
        if self.total_steps < 1:
            raise DomainError("total_steps must be >= 1")


def poly_lr(schedule: LrSchedule, step: int) -> float:
    """``(lr0 - lr_end) * (1 - step/total)^power + lr_end``; clamps past the end."""
    frac = min(max(step, 0), schedule.total_steps) / schedule.total_steps
    return (schedule.lr0 - schedule.lr_end) * (1.0 - frac) ** schedule.power + schedule.lr_end


def sgd_step(params: list[Parameter], lr: float, momentum: float = 0.9,
             weight_decay: float = 0.0005) -> None:
    """One momentum-SGD update with L2 weight decay, then clear gradients.

    ``buf = momentum * buf + (grad + weight_decay * param)``;
    ``param -= lr * buf``.
    """
    for p in params:
        if p.grad is None:
            raise UsageError(f"parameter {p.name or '?'} has no gradient")
    for p in params:
        dt = p.data.dtype.type
        buf = p.momentum_buffer
        buf *= dt(momentum)
        buf += p.grad + dt(weight_decay) * p.data
        p.data -= dt(lr) * buf
        p.grad = None
