"""IntrinsicNet (shared encoder, two decoders) and the two RetiNet stages."""

from __future__ import annotations

import numpy as np

from ..autodiff import functional as F
from ..autodiff.layers import BatchNorm2d, Conv3x3, ConvBNReLU, Deconv4x4, Module
from ..autodiff.tensor import Tensor
from ..errors import ConfigurationError
from .config import IntrinsicNetConfig, RetiNetConfig


def bottleneck_shape(height: int, width: int, depth: int) -> tuple[int, int]:
    """Spatial size after ``depth`` stride-2 3x3 convolutions (ceil halving)."""
    for _ in range(depth):
        height = F.conv_out_size(height, 3, 2, 1)
        width = F.conv_out_size(width, 3, 2, 1)
    return height, width


class EncoderBlock(Module):
    def __init__(self, cin, width, convs, rng, dtype):
        self.convs = [ConvBNReLU(cin if i == 0 else width, width, 1, rng, True, dtype) for i in range(convs)]
        self.down = ConvBNReLU(width, width, 2, rng, True, dtype)

    def forward(self, x):
        for c in self.convs:
            x = c(x)
        return x, self.down(x)


class DecoderStage(Module):
    def __init__(self, cin, width, convs, skip, skip_mode, rng, normal_init, dtype):
        self.up = Deconv4x4(cin, width, rng, normal_init, dtype)
        self.up_bn = BatchNorm2d(width, dtype)
        self.skip = skip
        self.skip_mode = skip_mode
        first = 2 * width if skip and skip_mode == "concat" else width
        self.convs = [ConvBNReLU(first if i == 0 else width, width, 1, rng, True, dtype) for i in range(convs)]

    def forward(self, x, skip=None):
        x = F.relu(self.up_bn(self.up(x)))
        if self.skip:
            x = F.concat_c([x, skip]) if self.skip_mode == "concat" else F.add(x, skip)
        for c in self.convs:
            x = c(x)
        return x


class Decoder(Module):
    def __init__(self, config: IntrinsicNetConfig, rng, dtype):
        widths = config.block_widths
        depth = len(widths)
        self.stages = []
        cin = widths[-1]
        for j in range(depth):
            level = depth - 1 - j
            # no skip between the last encoder block and the first decoder block
            self.stages.append(DecoderStage(cin, widths[level], config.convs_per_block, j > 0,
                                            config.skip_mode, rng, config.paper_faithful_init, dtype))
            cin = widths[level]
        self.predict = Conv3x3(widths[0], config.output_channels, 1, rng, dtype)

    def forward(self, x, skips):
        for j, stage in enumerate(self.stages):
            x = stage(x, skips[len(skips) - 1 - j] if j > 0 else None)
        return self.predict(x)


class IntrinsicNet(Module):
    """Shared encoder with separate reflectance and shading decoders.

    Every convolution is followed by batch norm and ReLU except each
    decoder's linear prediction layer.
    """

    def __init__(self, config: IntrinsicNetConfig, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.blocks = []
        cin = config.input_channels
        for w in config.block_widths:
            self.blocks.append(EncoderBlock(cin, w, config.convs_per_block, rng, dtype))
            cin = w
        self.decoder_r = Decoder(config, rng, dtype)
        self.decoder_s = Decoder(config, rng, dtype)

    @property
    def multiple(self) -> int:
        return 2 ** self.config.depth

    def check_input(self, h: int, w: int) -> None:
        m = self.multiple
        if h % m or w % m:
            raise ConfigurationError(
                f"input {h}x{w} does not mirror through {self.config.depth} stride-2 stages; "
                f"dimensions must be multiples of {m}")

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1] != self.config.input_channels:
            raise ConfigurationError(f"expected {self.config.input_channels} input channels, got {x.shape[1]}")
        self.check_input(*x.shape[2:])
        skips = []
        for block in self.blocks:
            pre, x = block(x)
            skips.append(pre)
        return self.decoder_r(x, skips), self.decoder_s(x, skips)


class ReintegrationNet(Module):
    """Stride-1 convolution chain mapping RGB + intrinsic gradients to (R, S)."""

    def __init__(self, config: RetiNetConfig, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.layers = []
        cin = config.stage2_input_channels
        for w in config.stage2_widths:
            self.layers.append(ConvBNReLU(cin, w, 1, rng, config.stage2_batchnorm, dtype))
            cin = w
        self.predict = Conv3x3(cin, 6, 1, rng, dtype)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[1] != self.config.stage2_input_channels:
            raise ConfigurationError(
                f"expected {self.config.stage2_input_channels} input channels, got {x.shape[1]}")
        for layer in self.layers:
            x = layer(x)
        out = self.predict(x)
        return F.slice_c(out, 0, 3), F.slice_c(out, 3, 6)


class RetiNet(Module):
    def __init__(self, config: RetiNetConfig, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.stage1 = IntrinsicNet(config.stage1, rng, dtype)
        self.stage2 = ReintegrationNet(config, rng, dtype)


def build_intrinsic_net(config: IntrinsicNetConfig = IntrinsicNetConfig(), rng=None,
                        dtype=np.float32) -> IntrinsicNet:
    return IntrinsicNet(config, rng, dtype)


def build_retinet(config: RetiNetConfig = RetiNetConfig(), rng=None,
                  dtype=np.float32) -> tuple[IntrinsicNet, ReintegrationNet]:
    net = RetiNet(config, rng, dtype)
    return net.stage1, net.stage2
