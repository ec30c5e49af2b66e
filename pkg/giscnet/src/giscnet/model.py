"""The reconstruction network.

Two input branches (the quadrant-reshaped measurement and the CS
preprocessed cube) each pass through two convolutional blocks at 32
channels and are concatenated.  Nine UD stages follow: five down the
encoder with 2x2 max-pooling between them, four up the decoder with
factor-2 upsampling and skip connections from the matching encoder
stage.  Each UD stage is a dense block of four pre-activation layers
(BN -> ReLU -> 3x3 conv): a widening layer to UL[i] channels, a
compression layer to a*UL[i], and three growth layers of 32 channels
whose outputs concatenate onto the compressed base, so the stage emits
a*UL[i] + 96 channels.  A fusion conv and a 1x1 projection produce the
output bands.
"""

from __future__ import annotations

import torch
from torch import nn

from .spec import NetworkSpec, SpecError, base_channels, channels_out

STEM_CHANNELS = 32


class PreActConv(nn.Module):
    """BN -> ReLU -> 3x3 conv (-> dropout)."""

    def __init__(self, c_in: int, c_out: int, dropout: float = 0.0):
        super().__init__()
        self.bn = nn.BatchNorm2d(c_in)
        self.act = nn.ReLU(inplace=True)
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.drop = nn.Dropout2d(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x):
        return self.drop(self.conv(self.act(self.bn(x))))


class StemBlock(nn.Module):
    """3x3 conv -> BN -> ReLU (-> dropout), the input-branch unit."""

    def __init__(self, c_in: int, c_out: int, dropout: float = 0.0):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.bn = nn.BatchNorm2d(c_out)
        self.act = nn.ReLU(inplace=True)
        self.drop = nn.Dropout2d(dropout) if dropout > 0 else nn.Identity()

    def forward(self, x):
        return self.drop(self.act(self.bn(self.conv(x))))


class UDBlock(nn.Module):
    """Dense block of 4 layers emitting a*U + 3*growth channels."""

    def __init__(self, c_in: int, spec: NetworkSpec, stage: int):
        super().__init__()
        unet = spec.UL[stage]
        base = base_channels(spec, stage)
        growth = spec.GR[stage]
        drop = spec.dropout
        self.widen = PreActConv(c_in, unet, drop)
        self.compress = PreActConv(unet, base, drop)
        self.growths = nn.ModuleList(
            [PreActConv(base + j * growth, growth, drop) for j in range(3)]
        )
        # structural count from the assembled convs, not from the formula
        self.out_channels = self.compress.conv.out_channels + sum(
            g.conv.out_channels for g in self.growths
        )

    def forward(self, x):
        base = self.compress(self.widen(x))
        features = base
        for layer in self.growths:
            features = torch.cat([features, layer(features)], dim=1)
        return features


def quadrant_stack(y: torch.Tensor) -> torch.Tensor:
    """(N, 1, 2h, 2h) measurement -> (N, 4, h, h) quadrant channels.

    Channel order matches the simulator's file convention: top-left,
    top-right, bottom-left, bottom-right.
    """
    if y.shape[-1] != y.shape[-2] or y.shape[-1] % 2:
        raise SpecError(f"measurement must be square with even side, got {tuple(y.shape)}")
    h = y.shape[-1] // 2
    return torch.cat(
        [y[..., :h, :h], y[..., :h, h:], y[..., h:, :h], y[..., h:, h:]], dim=-3
    )


class GiscNet(nn.Module):
    def __init__(self, spec: NetworkSpec, bands: int = 15):
        super().__init__()
        self.spec = spec
        self.bands = bands
        drop = spec.dropout

        self.measurement_stem = nn.Sequential(
            StemBlock(4, STEM_CHANNELS, drop), StemBlock(STEM_CHANNELS, STEM_CHANNELS, drop)
        )
        self.cube_stem = nn.Sequential(
            StemBlock(bands, STEM_CHANNELS, drop),
            StemBlock(STEM_CHANNELS, STEM_CHANNELS, drop),
        )

        out = [channels_out(spec, i) for i in range(9)]
        self.encoder = nn.ModuleList()
        c_in = 2 * STEM_CHANNELS
        for i in range(5):
            self.encoder.append(UDBlock(c_in, spec, i))
            c_in = out[i]
        self.pool = nn.MaxPool2d(2, 2)
        self.upscale = nn.Upsample(scale_factor=2, mode="nearest")

        self.skip_adapters = nn.ModuleList()
        self.decoder = nn.ModuleList()
        for i, skip in zip(range(5, 9), (3, 2, 1, 0)):
            self.skip_adapters.append(PreActConv(out[skip], spec.UL[i], drop))
            self.decoder.append(UDBlock(out[i - 1] + spec.UL[i], spec, i))

        self.fuse = PreActConv(out[8], out[8], drop)
        self.head = nn.Conv2d(out[8], bands, 1)

    def forward(self, measurement: torch.Tensor, cs_cube: torch.Tensor) -> torch.Tensor:
        """measurement: (N, 1, 2n, 2n); cs_cube: (N, bands, n, n) -> (N, bands, n, n)."""
        if measurement.shape[-1] != 2 * cs_cube.shape[-1]:
            raise SpecError(
                f"measurement side {measurement.shape[-1]} must be twice the cube "
                f"side {cs_cube.shape[-1]}"
            )
        patches = quadrant_stack(measurement)
        x = torch.cat([self.measurement_stem(patches), self.cube_stem(cs_cube)], dim=1)

        skips = []
        for i, block in enumerate(self.encoder):
            x = block(x)
            if i < 4:
                skips.append(x)
                x = self.pool(x)
        for block, adapter, skip in zip(self.decoder, self.skip_adapters, reversed(skips)):
            x = torch.cat([self.upscale(x), adapter(skip)], dim=1)
            x = block(x)
        return self.head(self.fuse(x))


def build_network(spec: NetworkSpec, bands: int = 15) -> GiscNet:
    return GiscNet(spec, bands)


def count_params(model: nn.Module) -> int:
    """All trainable parameters."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def stage_output_channels(model: GiscNet) -> list[int]:
    """Actual per-stage output channels of a built model (audit hook)."""
    return [b.out_channels for b in model.encoder] + [b.out_channels for b in model.decoder]
