"""
Training objective: visibility-weighted region ID losses, batch-hard
triplet loss on the extended distance, parsing loss and their weighted
total.
"""

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch import nn

from lib.core.align import normalize_features
from lib.core.errors import (
    BatchCompositionError,
    LabelRangeError,
    ShapeMismatchError,
)
from lib.core.segmap import SemanticProbMap


class LossWeights(BaseModel):
    """
    Weights of the multi-task objective.

    Attributes:
        parsing_weight: lambda, weight of the parsing loss (key `lambda`)
        margin: Triplet margin m in distance units
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    parsing_weight: float = Field(default=0.1, ge=0, alias="lambda")
    margin: float = Field(default=0.3, ge=0)


class RegionClassifiers(nn.Module):
    """
    Independent identity classifiers, one per foreground region plus one
    for the unconfident feature.
    """

    def __init__(
        self, feature_dim: int, num_identities: int, n_regions: int
    ) -> None:
        super().__init__()
        self.feature_dim = feature_dim
        self.num_identities = num_identities
        self.region_heads = nn.ModuleList(
            nn.Linear(feature_dim, num_identities)
            for _ in range(n_regions - 1)
        )
        self.unconfident_head = nn.Linear(feature_dim, num_identities)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for head in [*self.region_heads, self.unconfident_head]:
            nn.init.normal_(head.weight, std=0.01)
            nn.init.zeros_(head.bias)

    def forward(
        self, region_features: torch.Tensor, unconfident_feature: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            region_features: (B, N-1, C) region features.
            unconfident_feature: (B, C) unconfident feature.

        Returns:
            Region logits (B, N-1, K) and unconfident logits (B, K).
        """
        regions = region_features.shape[-2]
        if regions != len(self.region_heads):
            raise ShapeMismatchError(
                f"{regions} regions for {len(self.region_heads)} classifiers"
            )
        if region_features.shape[-1] != self.feature_dim:
            raise ShapeMismatchError(
                f"feature dim {region_features.shape[-1]}, "
                f"classifiers expect {self.feature_dim}"
            )
        region_logits = torch.stack(
            [
                head(region_features[..., i, :])
                for i, head in enumerate(self.region_heads)
            ],
            dim=-2,
        )
        return region_logits, self.unconfident_head(unconfident_feature)

    def probabilities(
        self, region_features: torch.Tensor, unconfident_feature: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        region_logits, un_logits = self(region_features, unconfident_feature)
        return region_logits.softmax(dim=-1), un_logits.softmax(dim=-1)


def _check_identities(identities: torch.Tensor, num_identities: int) -> None:
    if identities.numel() and (
        int(identities.min()) < 0 or int(identities.max()) >= num_identities
    ):
        raise LabelRangeError(
            f"identity labels must lie in [0, {num_identities})"
        )


def extended_id_loss(
    region_features: torch.Tensor,
    visibility: torch.Tensor,
    unconfident_feature: torch.Tensor,
    unconfident_score: torch.Tensor,
    classifiers: RegionClassifiers,
    identities: torch.Tensor,
    total_mass: float,
    include_unconfident: bool = True,
) -> torch.Tensor:
    """
    Visibility-weighted identity cross-entropy over the regions.

    Args:
        region_features: Plain f_i of the foreground regions, (B, N-1, C).
        visibility: S_i, (B, N-1).
        unconfident_feature: f_un, (B, C).
        unconfident_score: S_un, (B,).
        classifiers: Per-region identity classifiers.
        identities: Identity labels, (B,).
        total_mass: h * w, dividing every score.
        include_unconfident: False drops the f_un term, giving L_ID.

    Returns:
        Batch mean of sum_i S_i CE(y, y_i) + S_un CE(y, y_un), scores
        divided by `total_mass`.
    """
    _check_identities(identities, classifiers.num_identities)
    region_logits, un_logits = classifiers(
        normalize_features(region_features),
        normalize_features(unconfident_feature),
    )
    region_log_probs = F.log_softmax(region_logits, dim=-1)
    target = identities.view(-1, 1, 1).expand(-1, region_logits.shape[-2], 1)
    region_ce = -region_log_probs.gather(-1, target).squeeze(-1)
    per_sample = (visibility / total_mass * region_ce).sum(dim=-1)
    if include_unconfident:
        un_ce = F.cross_entropy(un_logits, identities, reduction="none")
        per_sample = per_sample + unconfident_score / total_mass * un_ce
    return per_sample.mean()


def batch_hard_triplet(
    distances: torch.Tensor,
    identities: torch.Tensor,
    margin: float,
    missing: torch.Tensor | None = None,
) -> torch.Tensor:
    """
    Batch-hard triplet loss over a full pairwise distance matrix.

    Pairs flagged in `missing` take the largest observed distance of the
    batch before mining.

    Raises:
        ShapeMismatchError: If the matrix is not square over the batch.
        BatchCompositionError: Fewer than two identities, or an identity
            with a single sample.
    """
    size = identities.shape[0]
    if distances.shape != (size, size):
        raise ShapeMismatchError(
            f"distance matrix {tuple(distances.shape)} for batch of {size}"
        )
    _, counts = torch.unique(identities, return_counts=True)
    if counts.numel() < 2 or int(counts.min()) < 2:
        raise BatchCompositionError(
            "batch needs >= 2 identities with >= 2 samples each"
        )

    values = distances
    if missing is not None and bool(missing.any()):
        present = distances[~missing]
        fill = (
            present.max().detach()
            if present.numel()
            else torch.zeros((), dtype=distances.dtype)
        )
        values = torch.where(missing, fill, distances)

    same = identities[:, None] == identities[None, :]
    eye = torch.eye(size, dtype=torch.bool, device=distances.device)
    hardest_positive = values.masked_fill(~same | eye, float("-inf")).amax(1)
    hardest_negative = values.masked_fill(same, float("inf")).amin(1)
    return F.relu(hardest_positive - hardest_negative + margin).mean()


def parsing_loss(
    prob_map: SemanticProbMap, part_labels: torch.Tensor
) -> torch.Tensor:
    """
    Mean per-pixel cross-entropy of the parsing probabilities.

    Args:
        prob_map: Parsing output, (..., N, h, w).
        part_labels: Region index per pixel in [1, N], (..., h, w).
    """
    probs = prob_map.probs
    expected = probs.shape[:-3] + probs.shape[-2:]
    if part_labels.shape != expected:
        raise ShapeMismatchError(
            f"labels {tuple(part_labels.shape)} for probs {tuple(probs.shape)}"
        )
    n_regions = prob_map.n_regions
    if int(part_labels.min()) < 1 or int(part_labels.max()) > n_regions:
        raise LabelRangeError(f"part labels must lie in [1, {n_regions}]")
    index = (part_labels.long() - 1).unsqueeze(-3)
    true_prob = probs.gather(-3, index).squeeze(-3)
    tiny = torch.finfo(probs.dtype).tiny
    return -torch.log(true_prob.clamp_min(tiny)).mean()


def total_loss(
    parsing: torch.Tensor | float,
    id_extended: torch.Tensor | float,
    triplet: torch.Tensor | float,
    weights: LossWeights,
) -> torch.Tensor | float:
    """L_all = lambda * L_parsing + L~_ID + L_triplet."""
    return weights.parsing_weight * parsing + id_extended + triplet
