"""
Semantic alignment: per-person region descriptors and the aligned (d) and
extended (d~) distances between them.

Feature maps are `(..., C, h, w)`; descriptor tensors carry the same
leading batch dimensions as the maps they were pooled from.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, fields
from enum import Enum
from typing import Literal

import torch
from pydantic import BaseModel, ConfigDict, Field

from lib.core.errors import (
    NoComparableRegionsError,
    ShapeMismatchError,
    UnknownVariantError,
)
from lib.core.segmap import (
    ConfidenceMap,
    SemanticProbMap,
    UnconfidentMask,
    confidence_map,
    dynamic_unconfident_mask,
    entropy_map,
    unconfident_mask,
)


class FeatureKind(str, Enum):
    BACKBONE = "backbone"
    REDUCED = "reduced"


class Variant(str, Enum):
    """
    Descriptor / objective variants compared in the ablations.

    full: entropy masks with fixed tau
    g: unconfident feature replaced by the global average feature
    w: no unconfident term at all
    d: per-image median threshold instead of tau
    baseline: global average feature only, triplet loss only
    """

    FULL = "full"
    GLOBAL = "g"
    WITHOUT_UNCONFIDENT = "w"
    DYNAMIC = "d"
    BASELINE = "baseline"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        try:
            return cls(value)
        except ValueError as exc:
            known = ", ".join(v.value for v in cls)
            raise UnknownVariantError(
                f"unknown variant {value!r}, expected one of {known}"
            ) from exc


class DistanceConfig(BaseModel):
    """
    Region feature distance settings.

    Attributes:
        metric: Region distance D; Euclidean on unit-normalized vectors
        epsilon: Guard for vanishing denominators and zero norms
    """

    model_config = ConfigDict(frozen=True)

    metric: Literal["euclidean"] = "euclidean"
    epsilon: float = Field(default=1e-8, gt=0)


@dataclass(frozen=True)
class FeatureMap:
    """
    Spatial feature grid: backbone output T or reduced map F.

    Attributes:
        data: Tensor of shape (..., C, h, w)
        kind: Which branch produced the map
    """

    data: torch.Tensor
    kind: FeatureKind

    @property
    def channels(self) -> int:
        return int(self.data.shape[-3])

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return int(self.data.shape[-2]), int(self.data.shape[-1])


@dataclass(frozen=True)
class PersonDescriptor:
    """
    Aligned descriptor of one person image, or a batch of them.

    The background region is dropped from `region_features` and
    `visibility`; its pixel mass is kept in `background_visibility` so
    the full visibility bookkeeping still sums to h * w.

    Attributes:
        region_features: Unit-normalized f~_i, shape (..., N-1, C)
        visibility: Visible scores S_i, shape (..., N-1)
        unconfident_feature: Unit-normalized f_un, shape (..., C)
        unconfident_score: S_un, shape (...)
        background_visibility: S_N, shape (...)
    """

    region_features: torch.Tensor
    visibility: torch.Tensor
    unconfident_feature: torch.Tensor
    unconfident_score: torch.Tensor
    background_visibility: torch.Tensor

    @property
    def n_regions(self) -> int:
        """N, background included."""
        return int(self.region_features.shape[-2]) + 1

    @property
    def feature_dim(self) -> int:
        return int(self.region_features.shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.unconfident_score.shape)

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("unbatched descriptor has no length")
        return self.batch_shape[0]

    def __getitem__(
        self, index: int | slice | torch.Tensor
    ) -> "PersonDescriptor":
        return self.map(lambda t: t[index])

    def map(
        self, func: Callable[[torch.Tensor], torch.Tensor]
    ) -> "PersonDescriptor":
        """Applies `func` to every tensor field."""
        return PersonDescriptor(
            **{f.name: func(getattr(self, f.name)) for f in fields(self)}
        )

    def detach(self) -> "PersonDescriptor":
        return self.map(lambda t: t.detach())

    @classmethod
    def stack(cls, items: Sequence["PersonDescriptor"]) -> "PersonDescriptor":
        return cls(
            **{
                f.name: torch.stack([getattr(d, f.name) for d in items])
                for f in fields(cls)
            }
        )

    @classmethod
    def cat(cls, items: Sequence["PersonDescriptor"]) -> "PersonDescriptor":
        return cls(
            **{
                f.name: torch.cat([getattr(d, f.name) for d in items])
                for f in fields(cls)
            }
        )


@dataclass(frozen=True)
class DescriptorSet:
    """
    Labelled batch of descriptors, e.g. an exported gallery.

    Attributes:
        image_ids: Unique image identifier per record
        identities: Identity label per record
        descriptors: Batched descriptor with leading dimension len(image_ids)
    """

    image_ids: list[str]
    identities: list[int]
    descriptors: PersonDescriptor

    def __post_init__(self) -> None:
        if not (
            len(self.image_ids)
            == len(self.identities)
            == len(self.descriptors)
        ):
            raise ShapeMismatchError("descriptor set fields differ in length")

    def __len__(self) -> int:
        return len(self.image_ids)

    def subset(self, indices: Sequence[int]) -> "DescriptorSet":
        index = torch.as_tensor(list(indices), dtype=torch.long)
        return DescriptorSet(
            image_ids=[self.image_ids[i] for i in indices],
            identities=[self.identities[i] for i in indices],
            descriptors=self.descriptors[index],
        )


@dataclass(frozen=True)
class PairwiseDistances:
    """
    Distance matrix with markers for pairs that cannot be compared.

    Attributes:
        values: Distances, 0 where `missing` is set
        missing: True where the extended distance is undefined
    """

    values: torch.Tensor
    missing: torch.Tensor


def normalize_features(
    features: torch.Tensor, epsilon: float = 1e-8
) -> torch.Tensor:
    """
    Scales each vector along the last axis to unit norm; vectors with
    norm below `epsilon` become zero vectors.
    """
    norm = torch.linalg.vector_norm(features, dim=-1, keepdim=True)
    scaled = features / norm.clamp_min(epsilon)
    return torch.where(norm > epsilon, scaled, torch.zeros_like(features))


def _check_spatial(
    feature_map: FeatureMap, other: torch.Tensor, has_channels: bool
) -> None:
    expected = feature_map.data.shape[:-3] + feature_map.data.shape[-2:]
    lead = other.shape[:-3] if has_channels else other.shape[:-2]
    found = lead + other.shape[-2:]
    if tuple(expected) != tuple(found):
        raise ShapeMismatchError(
            f"feature map {tuple(feature_map.data.shape)} and "
            f"{tuple(other.shape)} do not share batch and spatial shape"
        )


def region_features(
    feature_map: FeatureMap,
    prob_map: SemanticProbMap,
    weight: ConfidenceMap | None = None,
) -> torch.Tensor:
    """
    Probability-weighted pooling of the reduced feature map per region.

    Args:
        feature_map: Reduced feature map F.
        prob_map: Region probabilities sharing F's h x w.
        weight: Optional confidence map M~ multiplied into the pooling
            weights.

    Returns:
        Raw, unnormalized region sums of shape (..., N, C): f_i, or f~_i
        when `weight` is given.
    """
    if feature_map.kind is not FeatureKind.REDUCED:
        raise ShapeMismatchError("region features pool the reduced map F")
    _check_spatial(feature_map, prob_map.probs, has_channels=True)
    probs = prob_map.probs
    if weight is not None:
        _check_spatial(feature_map, weight.values, has_channels=False)
        probs = probs * weight.values.unsqueeze(-3)
    return torch.einsum("...nhw,...chw->...nc", probs, feature_map.data)


def visibility_scores(prob_map: SemanticProbMap) -> torch.Tensor:
    """Visible score S_i: total probability mass of each region."""
    return prob_map.probs.sum(dim=(-2, -1))


def unconfident_feature(
    feature_map: FeatureMap,
    mask: UnconfidentMask,
    epsilon: float = 1e-8,
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Masked mean of F under the unconfident mask.

    Returns:
        (feature, score): the raw masked mean and S_un = sum of M_g. When
        S_un < epsilon both are zero.
    """
    _check_spatial(feature_map, mask.values, has_channels=False)
    score = mask.values.sum(dim=(-2, -1))
    pooled = torch.einsum("...hw,...chw->...c", mask.values, feature_map.data)
    empty = score < epsilon
    feature = pooled / score.clamp_min(epsilon).unsqueeze(-1)
    feature = torch.where(
        empty.unsqueeze(-1), torch.zeros_like(feature), feature
    )
    score = torch.where(empty, torch.zeros_like(score), score)
    return feature, score


def global_feature(
    feature_map: FeatureMap,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Global average pooled feature with score h * w."""
    h, w = feature_map.spatial_shape
    feature = feature_map.data.mean(dim=(-2, -1))
    score = torch.full(
        feature.shape[:-1],
        float(h * w),
        dtype=feature.dtype,
        device=feature.device,
    )
    return feature, score


def build_descriptor(
    feature_map: FeatureMap,
    prob_map: SemanticProbMap,
    tau: float,
    variant: Variant = Variant.FULL,
    config: DistanceConfig | None = None,
    validate: bool = True,
) -> PersonDescriptor:
    """
    Builds the aligned descriptor(s) of one image or a batch.

    Args:
        feature_map: Reduced feature map F.
        prob_map: Parsing probabilities over the same grid.
        tau: Fixed entropy threshold (used by the full variant).
        variant: Which ablation variant of the unconfident term to use.
        config: Distance settings providing the epsilon guard.
        validate: Check probability map invariants.

    Returns:
        Descriptor with unit-normalized features and raw pixel-mass
        scores; background dropped from the region lists.
    """
    config = config or DistanceConfig()
    eps = config.epsilon
    h, w = prob_map.spatial_shape
    entropy = entropy_map(prob_map, validate=validate)
    visibility = visibility_scores(prob_map)

    if variant is Variant.BASELINE:
        gap, score = global_feature(feature_map)
        region = torch.zeros(
            gap.shape[:-1] + (prob_map.n_regions - 1, gap.shape[-1]),
            dtype=gap.dtype,
            device=gap.device,
        )
        return PersonDescriptor(
            region_features=region,
            visibility=torch.zeros_like(region[..., 0]),
            unconfident_feature=normalize_features(gap, eps),
            unconfident_score=score,
            background_visibility=score,
        )

    confident = region_features(
        feature_map, prob_map, weight=confidence_map(entropy)
    )
    if variant is Variant.GLOBAL:
        un_raw, un_score = global_feature(feature_map)
    elif variant is Variant.WITHOUT_UNCONFIDENT:
        un_raw = torch.zeros_like(confident[..., 0, :])
        un_score = torch.zeros_like(visibility[..., 0])
    else:
        if variant is Variant.DYNAMIC:
            mask = dynamic_unconfident_mask(entropy)
        else:
            mask = unconfident_mask(entropy, tau)
        un_raw, un_score = unconfident_feature(feature_map, mask, eps)

    return PersonDescriptor(
        region_features=normalize_features(confident[..., :-1, :], eps),
        visibility=visibility[..., :-1],
        unconfident_feature=normalize_features(un_raw, eps),
        unconfident_score=un_score,
        background_visibility=visibility[..., -1],
    )


def _check_compatible(p: PersonDescriptor, q: PersonDescriptor) -> None:
    if p.region_features.shape[-2:] != q.region_features.shape[-2:]:
        raise ShapeMismatchError(
            f"descriptors disagree on (N-1, C): "
            f"{tuple(p.region_features.shape[-2:])} vs "
            f"{tuple(q.region_features.shape[-2:])}"
        )


def _weighted_terms(
    p: PersonDescriptor, q: PersonDescriptor
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    region_d = torch.linalg.vector_norm(
        p.region_features - q.region_features, dim=-1
    )
    region_w = p.visibility * q.visibility
    un_d = torch.linalg.vector_norm(
        p.unconfident_feature - q.unconfident_feature, dim=-1
    )
    un_w = p.unconfident_score * q.unconfident_score
    return region_d, region_w, un_d, un_w


def aligned_distance(
    p: PersonDescriptor,
    q: PersonDescriptor,
    config: DistanceConfig | None = None,
) -> torch.Tensor:
    """
    Visibility-weighted sum of region distances, d_{p,q}.
    """
    _check_compatible(p, q)
    region_d, region_w, _, _ = _weighted_terms(p, q)
    return (region_w * region_d).sum(dim=-1)


def extended_distance(
    p: PersonDescriptor,
    q: PersonDescriptor,
    config: DistanceConfig | None = None,
) -> torch.Tensor:
    """
    Normalized distance over shared regions plus the unconfident region,
    d~_{p,q}.

    Raises:
        NoComparableRegionsError: If the weight denominator is below
            epsilon for any compared pair.
    """
    config = config or DistanceConfig()
    _check_compatible(p, q)
    region_d, region_w, un_d, un_w = _weighted_terms(p, q)
    numerator = (region_w * region_d).sum(dim=-1) + un_w * un_d
    denominator = region_w.sum(dim=-1) + un_w
    if bool((denominator < config.epsilon).any()):
        raise NoComparableRegionsError(
            "descriptors share no visible region and no unconfident mass"
        )
    return numerator / denominator


def cross_distances(
    probes: PersonDescriptor,
    gallery: PersonDescriptor,
    config: DistanceConfig | None = None,
    extended: bool = True,
    chunk_size: int = 128,
) -> PairwiseDistances:
    """
    Distances between every probe and every gallery descriptor.

    Args:
        probes: Batched descriptors, leading dimension P.
        gallery: Batched descriptors, leading dimension G.
        config: Distance settings.
        extended: Use d~ (default) or the aligned distance d.
        chunk_size: Probes processed per block.

    Returns:
        P x G distances; pairs with no comparable regions are flagged in
        `missing` and hold 0.
    """
    config = config or DistanceConfig()
    _check_compatible(probes, gallery)
    eps = config.epsilon
    target = gallery.map(lambda t: t.unsqueeze(0))
    values, missing = [], []
    if len(probes) == 0:
        empty = torch.zeros(0, len(gallery))
        return PairwiseDistances(values=empty, missing=empty.bool())
    for start in range(0, len(probes), chunk_size):
        block = probes[start : start + chunk_size].map(lambda t: t.unsqueeze(1))
        region_d, region_w, un_d, un_w = _weighted_terms(block, target)
        aligned = (region_w * region_d).sum(dim=-1)
        if not extended:
            values.append(aligned)
            missing.append(torch.zeros_like(aligned, dtype=torch.bool))
            continue
        numerator = aligned + un_w * un_d
        denominator = region_w.sum(dim=-1) + un_w
        absent = denominator < eps
        ratio = numerator / denominator.clamp_min(eps)
        values.append(torch.where(absent, torch.zeros_like(ratio), ratio))
        missing.append(absent)
    return PairwiseDistances(
        values=torch.cat(values), missing=torch.cat(missing)
    )


def pairwise_extended_distances(
    batch: PersonDescriptor,
    config: DistanceConfig | None = None,
    extended: bool = True,
) -> PairwiseDistances:
    """
    Symmetric within-batch distance matrix with a zero diagonal.
    """
    result = cross_distances(batch, batch, config, extended=extended)
    eye = torch.eye(len(batch), dtype=torch.bool, device=result.values.device)
    values = torch.where(eye, torch.zeros_like(result.values), result.values)
    return PairwiseDistances(values=values, missing=result.missing)
