"""Network parameterization: growth rates, Unet channel ladder, stages.

A network has 9 stages: stages 0..4 down-sample (a = 1) and stages 5..8
up-sample (a = 1/2).  Stage i emits

    out_channels(i) = a * UL[i] + (n - 1) * GR[i]

with the dense growth rate fixed at 32 and n = 4 dense layers per stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

GROWTH_RATE = 32
DENSE_LAYERS = 4
STAGES = 9
DOWN_STAGES = range(0, 5)  # a = 1
UP_STAGES = range(5, 9)  # a = 1/2


class SpecError(ValueError):
    """The network parameterization is inconsistent."""


@dataclass
class NetworkSpec:
    GR: list[int] = field(default_factory=lambda: [GROWTH_RATE] * STAGES)
    UL: list[int] = field(default_factory=lambda: [32, 64, 128, 256, 512, 256, 128, 64, 32])
    dense_layers: int = DENSE_LAYERS
    dropout: float = 0.05
    variant_name: str = "custom"

    def __post_init__(self):
        if len(self.GR) != STAGES or len(self.UL) != STAGES:
            raise SpecError(f"GR and UL must have {STAGES} entries")
        if any(g != GROWTH_RATE for g in self.GR):
            raise SpecError(f"growth rate is fixed at {GROWTH_RATE}")
        if self.dense_layers != DENSE_LAYERS:
            raise SpecError(f"dense block depth is fixed at {DENSE_LAYERS}")
        for i in UP_STAGES:
            if self.UL[i] % 2:
                raise SpecError(
                    f"stage {i} is up-sampling (a=1/2) and needs an even channel "
                    f"count, got UL[{i}]={self.UL[i]}"
                )


def stage_scale(i: int) -> float:
    """The a factor: 1 in the down-sampling phase, 1/2 going up."""
    if not 0 <= i < STAGES:
        raise SpecError(f"stage index must be 0..{STAGES - 1}, got {i}")
    return 1.0 if i in DOWN_STAGES else 0.5


def channels_out(spec: NetworkSpec, i: int) -> int:
    """Output channel count of stage i: a*U + (n-1)*D."""
    a = stage_scale(i)
    scaled = a * spec.UL[i]
    if scaled != int(scaled):
        raise SpecError(f"a*UL[{i}] = {scaled} is not integral")
    return int(scaled) + (spec.dense_layers - 1) * spec.GR[i]


def base_channels(spec: NetworkSpec, i: int) -> int:
    """Channels of the stage's compressed (Unet) feature: a*U."""
    a = stage_scale(i)
    scaled = a * spec.UL[i]
    if scaled != int(scaled):
        raise SpecError(f"a*UL[{i}] = {scaled} is not integral")
    return int(scaled)


VARIANTS = {
    "giscnet32": NetworkSpec(
        UL=[32, 64, 128, 256, 512, 256, 128, 64, 32], variant_name="giscnet32"
    ),
    "m-giscnet256": NetworkSpec(
        UL=[256, 64, 128, 256, 512, 256, 128, 64, 32], variant_name="m-giscnet256"
    ),
    "giscnet256": NetworkSpec(
        UL=[256, 64, 128, 256, 512, 256, 128, 64, 256], variant_name="giscnet256"
    ),
}

# published trainable-parameter counts for the named variants (millions)
VARIANT_PARAMS_M = {
    "giscnet32": 11.0632,
    "m-giscnet256": 12.2862,
    "giscnet256": 14.7432,
}


def get_variant(name: str) -> NetworkSpec:
    key = name.lower().replace(":", "").replace("_", "-")
    aliases = {
        "giscnet32": "giscnet32",
        "giscnet-32": "giscnet32",
        "m-giscnet256": "m-giscnet256",
        "mgiscnet256": "m-giscnet256",
        "giscnet256": "giscnet256",
        "giscnet-256": "giscnet256",
    }
    if key not in aliases:
        raise SpecError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}")
    return VARIANTS[aliases[key]]


@dataclass
class TrainConfig:
    alpha: float = 50.0
    learning_rate: float = 1e-4
    lr_schedule: str = "constant"  # "constant" | "cosine"
    grad_clip_norm: float | None = None  # max gradient norm, None disables clipping
    epochs: int = 200
    batch_size: int = 8
    denoiser: str = "off"  # "off" | "gaussian"
    denoiser_sigma: float = 0.8
    seed: int = 0
