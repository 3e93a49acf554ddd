"""Network and loss configurations (JSON-serialisable dataclasses)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigurationError


@dataclass(frozen=True)
class LossWeights:
    gamma_R: float = 1.0
    gamma_S: float = 1.0
    gamma_IMF: float = 1.0
    gamma_H: float = 1.0
    gamma_E: float = 1.0

    def __post_init__(self):
        vals = [self.gamma_R, self.gamma_S, self.gamma_IMF, self.gamma_H, self.gamma_E]
        if any(v < 0 for v in vals):
            raise ConfigurationError("loss weights must be non-negative")
        if self.gamma_R <= 0 and self.gamma_S <= 0:
            raise ConfigurationError("at least one of gamma_R, gamma_S must be positive")


@dataclass(frozen=True)
class IntrinsicNetConfig:
    block_widths: tuple[int, ...] = (16, 32, 64)
    convs_per_block: int = 2
    input_channels: int = 3
    output_channels: int = 3
    use_imf_loss: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)
    skip_mode: str = "concat"  # or "add"
    paper_faithful_init: bool = False  # N(0, 1) deconvolution weights

    def __post_init__(self):
        object.__setattr__(self, "block_widths", tuple(int(w) for w in self.block_widths))
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights(**self.loss_weights))
        if len(self.block_widths) < 2:
            raise ConfigurationError("need at least 2 encoder blocks")
        if any(w <= 0 for w in self.block_widths):
            raise ConfigurationError("block widths must be positive")
        if self.convs_per_block < 1 or self.input_channels < 1 or self.output_channels < 1:
            raise ConfigurationError("convs_per_block and channel counts must be >= 1")
        if self.skip_mode not in ("concat", "add"):
            raise ConfigurationError(f"unknown skip_mode {self.skip_mode!r}")

    @property
    def depth(self) -> int:
        return len(self.block_widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["block_widths"] = list(self.block_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IntrinsicNetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


DESK_CONFIG = IntrinsicNetConfig()
# VGG16-like widths; 4 blocks so 120x160 inputs pad to 128x160
PAPER_CONFIG = IntrinsicNetConfig(block_widths=(64, 128, 256, 512), convs_per_block=2)


@dataclass(frozen=True)
class RetiNetConfig:
    stage1: IntrinsicNetConfig = field(default_factory=lambda: replace(DESK_CONFIG, input_channels=6))
    stage2_widths: tuple[int, ...] = (64, 128, 128, 64)
    stage2_kernel: int = 3
    stage2_input_channels: int = 9
    gradient_mode: str = "magnitude"  # or "signed": (gx, gy) per color channel
    stage2_batchnorm: bool = False
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.stage1, dict):
            object.__setattr__(self, "stage1", IntrinsicNetConfig.from_dict(self.stage1))
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights(**self.loss_weights))
        object.__setattr__(self, "stage2_widths", tuple(int(w) for w in self.stage2_widths))
        if self.gradient_mode not in ("magnitude", "signed"):
            raise ConfigurationError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.stage2_kernel != 3:
            raise ConfigurationError("stage 2 uses 3x3 kernels")
        if not self.stage2_widths or any(w <= 0 for w in self.stage2_widths):
            raise ConfigurationError("stage-2 widths must be positive")
        g = self.gradient_channels
        if self.stage1.input_channels != 3 + g:
            raise ConfigurationError(
                f"stage 1 takes RGB plus {g} gradient channels, config says {self.stage1.input_channels}")
        if self.stage1.output_channels != g:
            raise ConfigurationError(f"stage 1 must emit {g} channels per decoder")
        if self.stage2_input_channels != 3 + 2 * g:
            raise ConfigurationError(
                f"stage 2 takes {3 + 2 * g} channels, config says {self.stage2_input_channels}")

    @property
    def gradient_channels(self) -> int:
        return 3 if self.gradient_mode == "magnitude" else 6

    @classmethod
    def with_mode(cls, gradient_mode: str = "magnitude", stage1: IntrinsicNetConfig = DESK_CONFIG, **kw):
        g = 3 if gradient_mode == "magnitude" else 6
        s1 = replace(stage1, input_channels=3 + g, output_channels=g)
        return cls(stage1=s1, gradient_mode=gradient_mode, stage2_input_channels=3 + 2 * g, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage1"] = self.stage1.to_dict()
        d["stage2_widths"] = list(self.stage2_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RetiNetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
