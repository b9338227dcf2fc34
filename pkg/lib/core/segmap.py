"""
Entropy math over semantic segmentation probability maps.

Tensors are channel-first: a probability map is `(..., N, h, w)` and every
per-pixel quantity derived from it is `(..., h, w)`. Region `i` (1-based,
background is region `N`) lives in channel `i - 1`.
"""

import math
from dataclasses import dataclass

import torch

from lib.core.errors import (
    InvalidProbabilityMapError,
    InvalidThresholdError,
    ShapeMismatchError,
)

PROB_TOLERANCE = 1e-6


def _sum_tolerance(dtype: torch.dtype, n_regions: int) -> float:
    # float32 softmax rows drift by a few ulps per summand
    return max(PROB_TOLERANCE, 4 * n_regions * torch.finfo(dtype).eps)


@dataclass(frozen=True)
class SemanticProbMap:
    """
    Per-pixel probabilities p(R_i | g) over N semantic regions.

    Attributes:
        probs: Tensor of shape (..., N, h, w)
    """

    probs: torch.Tensor

    @property
    def n_regions(self) -> int:
        return int(self.probs.shape[-3])

    @property
    def background_index(self) -> int:
        """1-based index of the background region (always N)."""
        return self.n_regions

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return int(self.probs.shape[-2]), int(self.probs.shape[-1])

    def validate(self) -> None:
        """
        Check the probability map invariants.

        Raises:
            InvalidProbabilityMapError: On out-of-range entries or pixels
                whose probabilities do not sum to one.
        """
        if self.probs.dim() < 3:
            raise InvalidProbabilityMapError(
                f"expected (..., N, h, w), got shape {tuple(self.probs.shape)}"
            )
        if self.n_regions < 2:
            raise InvalidProbabilityMapError("need at least two regions")
        tol = _sum_tolerance(self.probs.dtype, self.n_regions)
        with torch.no_grad():
            probs = self.probs
            if not torch.isfinite(probs).all():
                raise InvalidProbabilityMapError("non-finite probability")
            if probs.min() < -tol or probs.max() > 1 + tol:
                raise InvalidProbabilityMapError("probability outside [0, 1]")
            drift = (probs.sum(dim=-3) - 1).abs().max()
            if drift > tol:
                raise InvalidProbabilityMapError(
                    f"pixel probabilities sum off one by {drift.item():.3g}"
                )


@dataclass(frozen=True)
class EntropyMap:
    """
    Per-pixel segmentation entropy E_g.

    Attributes:
        raw: Entropy in nats, shape (..., h, w)
        normalized: raw / e_max, in [0, 1]
        e_max: ln(N), the entropy of the uniform distribution
    """

    raw: torch.Tensor
    normalized: torch.Tensor
    e_max: float


@dataclass(frozen=True)
class UnconfidentMask:
    """
    Mask M_g selecting high-entropy pixels.

    Attributes:
        values: Normalized entropy where it reaches the threshold, else 0
        tau: Fixed threshold, or per-image thresholds of shape (...,)
    """

    values: torch.Tensor
    tau: float | torch.Tensor


@dataclass(frozen=True)
class ConfidenceMap:
    """Confident attention map 1 - E_g / E_max."""

    values: torch.Tensor


def entropy_map(
    prob_map: SemanticProbMap, validate: bool = True
) -> EntropyMap:
    """
    Computes the per-pixel entropy of a probability map.

    Args:
        prob_map: Probability map to measure.
        validate: Check the map invariants first.

    Returns:
        Raw and normalized entropy, with 0 * log 0 taken as 0.
    """
    if validate:
        prob_map.validate()
    probs = prob_map.probs
    # clamped log keeps 0 * log 0 = 0 with a finite gradient at p = 0
    tiny = torch.finfo(probs.dtype).tiny
    raw = -(probs * probs.clamp_min(tiny).log()).sum(dim=-3)
    e_max = math.log(prob_map.n_regions)
    return EntropyMap(raw=raw, normalized=raw / e_max, e_max=e_max)


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise InvalidThresholdError(f"tau must lie in (0, 1), got {tau}")


def unconfident_mask(entropy: EntropyMap, tau: float) -> UnconfidentMask:
    """
    Keeps the normalized entropy of pixels at or above `tau`.
    """
    _check_tau(tau)
    norm = entropy.normalized
    values = torch.where(norm >= tau, norm, torch.zeros_like(norm))
    return UnconfidentMask(values=values, tau=tau)


def confidence_map(entropy: EntropyMap) -> ConfidenceMap:
    return ConfidenceMap(values=1 - entropy.normalized)


def median_threshold(normalized: torch.Tensor) -> torch.Tensor:
    """
    Per-image median of a `(..., h, w)` grid.

    Even pixel counts use the midpoint of the two central order
    statistics.
    """
    flat = normalized.flatten(start_dim=-2)
    n = flat.shape[-1]
    if n < 2:
        raise ShapeMismatchError("dynamic threshold needs at least 2 pixels")
    ordered, _ = torch.sort(flat, dim=-1)
    if n % 2:
        return ordered[..., n // 2]
    return (ordered[..., n // 2 - 1] + ordered[..., n // 2]) / 2


def dynamic_unconfident_mask(entropy: EntropyMap) -> UnconfidentMask:
    """
    Unconfident mask with a per-image median threshold instead of tau.

    Pixels at or above their image's median normalized entropy keep
    their value, so at least half of each image is selected.
    """
    norm = entropy.normalized
    threshold = median_threshold(norm.detach())
    keep = norm >= threshold[..., None, None]
    values = torch.where(keep, norm, torch.zeros_like(norm))
    return UnconfidentMask(values=values, tau=threshold)
