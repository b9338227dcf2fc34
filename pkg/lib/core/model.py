"""
Desk-scale ESA network: a small convolutional backbone producing T, a
1x1 parsing head with softmax producing P(R_i | g), a parallel 1x1
reduction producing F, and the per-region identity classifiers used by
the ID losses.

Backbone block: 3x3 stride-2 conv -> SiLU -> 3x3 conv -> SiLU, repeated
log2(downsample) times, every conv with `c` output channels. Convs use
Kaiming normal (fan-out) weights and zero biases; the parsing head is
drawn from N(0, 0.01) so an untrained parser is close to uniform.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch import nn

from lib.core.align import FeatureKind, FeatureMap
from lib.core.errors import ShapeMismatchError
from lib.core.losses import RegionClassifiers
from lib.core.segmap import SemanticProbMap


class ModelConfig(BaseModel):
    """
    Network shape and initialization seed.

    The full-scale reference is 384x128 input on ResNet50 with 8 parts;
    the defaults are the CPU desk-scale configuration.
    """

    model_config = ConfigDict(frozen=True)

    input_height: int = Field(default=96, gt=0)
    input_width: int = Field(default=32, gt=0)
    downsample: int = Field(default=8, ge=2)
    c: int = Field(default=64, ge=2)
    c_new: int = Field(default=32, ge=2)
    n_regions: int = Field(default=8, ge=2)
    num_identities: int = Field(default=25, ge=2)
    seed: int = 0

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        if self.downsample & (self.downsample - 1):
            raise ValueError("downsample must be a power of two")
        if self.input_height % self.downsample or (
            self.input_width % self.downsample
        ):
            raise ValueError("input size must be divisible by downsample")
        return self

    @property
    def n_blocks(self) -> int:
        return int(math.log2(self.downsample))

    @property
    def feature_size(self) -> tuple[int, int]:
        return (
            self.input_height // self.downsample,
            self.input_width // self.downsample,
        )


@dataclass(frozen=True)
class ModelOutput:
    """
    Attributes:
        backbone: Backbone feature map T, (B, c, h, w)
        parsing: Parsing probabilities, (B, N, h, w)
        reduced: Reduced feature map F, (B, c_new, h, w)
    """

    backbone: FeatureMap
    parsing: SemanticProbMap
    reduced: FeatureMap


def expected_parameter_count(config: ModelConfig) -> int:
    """Analytic parameter count of `EsaNet(config)`."""
    c, n, k = config.c, config.n_regions, config.num_identities
    count = 0
    in_channels = 3
    for _ in range(config.n_blocks):
        count += in_channels * c * 9 + c
        count += c * c * 9 + c
        in_channels = c
    count += c * n + n
    count += c * config.c_new + config.c_new
    count += n * (config.c_new * k + k)
    return count


class EsaNet(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        layers: list[nn.Module] = []
        in_channels = 3
        for _ in range(config.n_blocks):
            layers += [
                nn.Conv2d(in_channels, config.c, 3, stride=2, padding=1),
                nn.SiLU(),
                nn.Conv2d(config.c, config.c, 3, padding=1),
                nn.SiLU(),
            ]
            in_channels = config.c
        self.backbone = nn.Sequential(*layers)
        self.parsing_head = nn.Conv2d(config.c, config.n_regions, 1)
        self.reduction = nn.Conv2d(config.c, config.c_new, 1)
        self.classifiers = RegionClassifiers(
            config.c_new, config.num_identities, config.n_regions
        )
        self.reset_parameters(config.seed)

    def reset_parameters(self, seed: int) -> None:
        """Seeded initialization; leaves the global RNG untouched."""
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for layer in self.backbone:
                if isinstance(layer, nn.Conv2d):
                    nn.init.kaiming_normal_(
                        layer.weight, mode="fan_out", nonlinearity="relu"
                    )
                    nn.init.zeros_(layer.bias)
            nn.init.normal_(self.parsing_head.weight, std=0.01)
            nn.init.zeros_(self.parsing_head.bias)
            nn.init.kaiming_normal_(
                self.reduction.weight, nonlinearity="linear"
            )
            nn.init.zeros_(self.reduction.bias)
            self.classifiers.reset_parameters()

    def forward(self, images: torch.Tensor) -> ModelOutput:
        """
        Args:
            images: (B, 3, H, W) batch with pixel values in [0, 1].
        """
        expected = (3, self.config.input_height, self.config.input_width)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise ShapeMismatchError(
                f"expected images (B, {expected[0]}, {expected[1]}, "
                f"{expected[2]}), got {tuple(images.shape)}"
            )
        backbone = self.backbone(images)
        probs = self.parsing_head(backbone).softmax(dim=1)
        return ModelOutput(
            backbone=FeatureMap(backbone, FeatureKind.BACKBONE),
            parsing=SemanticProbMap(probs),
            reduced=FeatureMap(self.reduction(backbone), FeatureKind.REDUCED),
        )


def init_parameters(config: ModelConfig) -> dict[str, torch.Tensor]:
    """Seeded parameter set of a freshly built network."""
    return dict(EsaNet(config).state_dict())


def images_to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    """
    Stacks H x W x 3 arrays into a (B, 3, H, W) float32 tensor.
    """
    batch = torch.as_tensor(np.stack(images), dtype=torch.float32)
    return batch.permute(0, 3, 1, 2).contiguous()
