"""Generator, critic, and segmentation networks.

The generator is a 4x-downsampling encoder/decoder whose bottleneck stacks
gated multi-dilation blocks; it takes the corrupted image plus the mask as
a 4th channel and emits a tanh image. The critic is a stack of stride-2
spectral-norm convs whose shallow activations double as the feature taps
for the textural loss and whose final 1-channel map, flattened, is the
embedding for the semantic loss. The segmentation net is a spectral-norm
U-net emitting per-pixel validity logits.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, DomainError
from .spectral import SpectralNorm, sn_conv


@dataclasses.dataclass(frozen=True)
class GeneratorConfig:
    image_size: int = 256
    base_channels: int = 64
    num_blocks: int = 8
    dilation_rates: tuple[int, ...] = (1, 2, 4, 8)

    def __post_init__(self):
        if self.image_size <= 0 or self.image_size % 4 != 0:
            raise ConfigurationError(
                f"generator image_size {self.image_size} must be a positive multiple of 4"
            )
        if self.base_channels < 1 or self.num_blocks < 1:
            raise ConfigurationError("generator base_channels and num_blocks must be >= 1")
        if not self.dilation_rates or any(r < 1 for r in self.dilation_rates):
            raise ConfigurationError(f"bad dilation rates {self.dilation_rates}")
        mid = self.base_channels * 4
        if mid % len(self.dilation_rates) != 0:
            raise ConfigurationError(
                f"bottleneck channels {mid} not divisible by {len(self.dilation_rates)} rates"
            )


class GatedDilationBlock(nn.Module):
    """Split channels across parallel dilated convs, fuse, and merge through
    a learned per-pixel gate: out = x * (1 - g) + fused * g."""

    def __init__(self, channels: int, rates: tuple[int, ...]):
        super().__init__()
        group = channels // len(rates)
        self.group = group
        self.branches = nn.ModuleList(
            nn.Conv2d(group, group, 3, padding=r, dilation=r) for r in rates
        )
        self.fuse = nn.Conv2d(channels, channels, 1)
        self.gate = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        parts = torch.split(x, self.group, dim=1)
        mixed = torch.cat(
            [F.relu(conv(p)) for conv, p in zip(self.branches, parts)], dim=1
        )
        fused = self.fuse(mixed)
        g = torch.sigmoid(self.gate(x))
        return x * (1 - g) + fused * g


class InpaintGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(4, b, 7, stride=1, padding=3),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            *[
                GatedDilationBlock(4 * b, config.dilation_rates)
                for _ in range(config.num_blocks)
            ]
        )
        self.decoder = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(4 * b, 2 * b, 3, stride=1, padding=1),
            nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(2 * b, b, 3, stride=1, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(b, 3, 3, stride=1, padding=1),
        )

    def forward(self, x_tilde: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
        if x_tilde.dim() != 4 or x_tilde.shape[1] != 3:
            raise DomainError(f"generator expects (B,3,H,W), got {tuple(x_tilde.shape)}")
        if m.dim() != 4 or m.shape[1] != 1 or m.shape[-2:] != x_tilde.shape[-2:]:
            raise DomainError(
                f"mask shape {tuple(m.shape)} incompatible with image {tuple(x_tilde.shape)}"
            )
        h, w = x_tilde.shape[-2:]
        if h % 4 != 0 or w % 4 != 0:
            raise ConfigurationError(
                f"spatial size {h}x{w} not divisible by the downsampling factor 4"
            )
        feats = self.encoder(torch.cat([x_tilde, m], dim=1))
        feats = self.blocks(feats)
        return torch.tanh(self.decoder(feats))


@dataclasses.dataclass(frozen=True)
class DiscriminatorConfig:
    image_size: int = 256
    base_channels: int = 64
    num_taps: int = 3

    def __post_init__(self):
        if self.image_size < 16:
            raise ConfigurationError("discriminator image_size must be >= 16")
        if self.base_channels < 1:
            raise ConfigurationError("discriminator base_channels must be >= 1")
        if not 1 <= self.num_taps <= 4:
            raise ConfigurationError("discriminator num_taps must be in [1, 4]")


@dataclasses.dataclass
class FeaturePyramid:
    """Critic outputs: shallow taps for the textural loss, the final
    1-channel critic map, and its flattened per-sample embedding."""

    shallow: list[torch.Tensor]
    last: torch.Tensor

    @property
    def embedding(self) -> torch.Tensor:
        return self.last.reshape(self.last.shape[0], -1)


def _conv_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


class Discriminator(nn.Module):
    """Five spectral-norm convs, leaky ReLU 0.2 between; strides 2,2,2,1,1."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        plan = [
            (3, b, 2),
            (b, 2 * b, 2),
            (2 * b, 4 * b, 2),
            (4 * b, 8 * b, 1),
            (8 * b, 1, 1),
        ]
        self.layers = nn.ModuleList(
            sn_conv(cin, cout, 4, stride=s, padding=1) for cin, cout, s in plan
        )
        side = config.image_size
        for _, _, s in plan:
            side = _conv_out(side, 4, s, 1)
        if side < 1:
            raise ConfigurationError(
                f"image_size {config.image_size} too small for the critic stack"
            )
        self.embedding_dim = side * side
        self._final_side = side

    def forward(self, img: torch.Tensor) -> FeaturePyramid:
        if img.dim() != 4 or img.shape[1] != 3:
            raise DomainError(f"critic expects (B,3,H,W), got {tuple(img.shape)}")
        if img.shape[-2:] != (self.config.image_size, self.config.image_size):
            raise DomainError(
                f"critic configured for {self.config.image_size}, got {tuple(img.shape[-2:])}"
            )
        taps = []
        h = img
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = F.leaky_relu(h, 0.2)
            if i < self.config.num_taps:
                taps.append(h)
        return FeaturePyramid(shallow=taps, last=h)


@dataclasses.dataclass(frozen=True)
class SegmentationConfig:
    image_size: int = 256
    base_channels: int = 32
    depth: int = 4

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("segmentation depth must be >= 1")
        if self.base_channels < 1:
            raise ConfigurationError("segmentation base_channels must be >= 1")
        if self.image_size % (2**self.depth) != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} not divisible by 2^depth = {2**self.depth}"
            )


PROB_CLAMP = 1e-6


@dataclasses.dataclass
class SegmentationOutput:
    logits: torch.Tensor
    prob_map: torch.Tensor


class SegmentationUNet(nn.Module):
    """U-net with spectral norm on every conv; returns per-pixel logits for
    pixel validity (high = valid)."""

    def __init__(self, config: SegmentationConfig):
        super().__init__()
        self.config = config
        chans = [config.base_channels * (2**i) for i in range(config.depth)]
        self.in_conv = sn_conv(3, chans[0], 3, padding=1)
        self.enc = nn.ModuleList(sn_conv(c, c, 3, padding=1) for c in chans)
        self.down = nn.ModuleList(
            sn_conv(chans[i], chans[min(i + 1, config.depth - 1)], 4, stride=2, padding=1)
            for i in range(config.depth)
        )
        bott = chans[-1]
        self.bottleneck = sn_conv(bott, bott, 3, padding=1)
        self.up = nn.ModuleList(
            sn_conv(
                chans[min(i + 1, config.depth - 1)] + chans[i], chans[i], 3, padding=1
            )
            for i in reversed(range(config.depth))
        )
        self.head = sn_conv(chans[0], 1, 3, padding=1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.dim() != 4 or img.shape[1] != 3:
            raise DomainError(f"segmenter expects (B,3,H,W), got {tuple(img.shape)}")
        if img.shape[-2:] != (self.config.image_size, self.config.image_size):
            raise DomainError(
                f"segmenter configured for {self.config.image_size}, got {tuple(img.shape[-2:])}"
            )
        h = F.leaky_relu(self.in_conv(img), 0.2)
        skips = []
        for enc, down in zip(self.enc, self.down):
            h = F.leaky_relu(enc(h), 0.2)
            skips.append(h)
            h = F.leaky_relu(down(h), 0.2)
        h = F.leaky_relu(self.bottleneck(h), 0.2)
        for up in self.up:
            skip = skips.pop()
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.leaky_relu(up(torch.cat([h, skip], dim=1)), 0.2)
        return self.head(h)

    def predict(self, img: torch.Tensor) -> SegmentationOutput:
        logits = self.forward(img)
        probs = torch.sigmoid(logits).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
        return SegmentationOutput(logits=logits, prob_map=probs)


@dataclasses.dataclass(frozen=True)
class NetworkSettings:
    """Width/depth knobs for all three networks, size-agnostic; the trainer
    injects its image_size when instantiating."""

    generator_base: int = 64
    generator_blocks: int = 8
    dilation_rates: tuple[int, ...] = (1, 2, 4, 8)
    discriminator_base: int = 64
    discriminator_taps: int = 3
    segmentation_base: int = 32
    segmentation_depth: int = 4

    def generator_config(self, image_size: int) -> GeneratorConfig:
        return GeneratorConfig(
            image_size=image_size,
            base_channels=self.generator_base,
            num_blocks=self.generator_blocks,
            dilation_rates=tuple(self.dilation_rates),
        )

    def discriminator_config(self, image_size: int) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            image_size=image_size,
            base_channels=self.discriminator_base,
            num_taps=self.discriminator_taps,
        )

    def segmentation_config(self, image_size: int) -> SegmentationConfig:
        return SegmentationConfig(
            image_size=image_size,
            base_channels=self.segmentation_base,
            depth=self.segmentation_depth,
        )


def build_networks(
    settings: NetworkSettings, image_size: int, include_segmenter: bool = True
) -> tuple[InpaintGenerator, Discriminator, Optional[SegmentationUNet]]:
    gen = InpaintGenerator(settings.generator_config(image_size))
    disc = Discriminator(settings.discriminator_config(image_size))
    seg = (
        SegmentationUNet(settings.segmentation_config(image_size))
        if include_segmenter
        else None
    )
    return gen, disc, seg
