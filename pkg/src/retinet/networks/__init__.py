"""IntrinsicNet and RetiNet: architectures, losses, training and inference."""

from .config import DESK_CONFIG, PAPER_CONFIG, IntrinsicNetConfig, LossWeights, RetiNetConfig
from .losses import loss_cl, loss_fl, loss_frm, loss_imf, loss_s1
from .models import (IntrinsicNet, ReintegrationNet, RetiNet, bottleneck_shape,
                     build_intrinsic_net, build_retinet)
from .train import (GradientTask, IntrinsicTask, ReintegrationTask, TrainingData, TrainingLog,
                    decompose, train)

__all__ = [
    "DESK_CONFIG", "PAPER_CONFIG", "GradientTask", "IntrinsicNet", "IntrinsicNetConfig",
    "IntrinsicTask", "LossWeights", "ReintegrationNet", "ReintegrationTask", "RetiNet",
    "RetiNetConfig", "TrainingData", "TrainingLog", "bottleneck_shape", "build_intrinsic_net",
    "build_retinet", "decompose", "loss_cl", "loss_fl", "loss_frm", "loss_imf", "loss_s1", "train",
]
