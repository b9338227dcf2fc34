import torch

from lib.core.align import PersonDescriptor, normalize_features


def random_prob_map(
    generator: torch.Generator,
    shape: tuple[int, ...],
    sharpness: float = 3.0,
) -> torch.Tensor:
    """Softmax of random logits; `shape` is (..., N, h, w)."""
    logits = torch.randn(shape, generator=generator, dtype=torch.float64)
    return (sharpness * logits).softmax(dim=-3)


def random_descriptor(
    generator: torch.Generator,
    batch: tuple[int, ...] = (),
    n_regions: int = 4,
    c_new: int = 3,
    hidden: float = 0.3,
) -> PersonDescriptor:
    """
    Unit-feature descriptor with roughly `hidden` of its regions
    invisible (zero score, zero feature).
    """
    shape = batch + (n_regions - 1,)
    visible = torch.rand(shape, generator=generator) >= hidden
    scores = torch.rand(shape, generator=generator, dtype=torch.float64) * 5
    scores = torch.where(visible, scores + 0.1, torch.zeros_like(scores))
    features = normalize_features(
        torch.randn(shape + (c_new,), generator=generator, dtype=torch.float64)
    )
    features = features * visible.unsqueeze(-1)
    return PersonDescriptor(
        region_features=features,
        visibility=scores,
        unconfident_feature=normalize_features(
            torch.randn(batch + (c_new,), generator=generator,
                        dtype=torch.float64)
        ),
        unconfident_score=(
            torch.rand(batch, generator=generator, dtype=torch.float64) + 0.1
        ),
        background_visibility=torch.zeros(batch, dtype=torch.float64),
    )


# seconds-scale training on a 48x16 synthetic dataset
TINY_OVERRIDES = (
    "model.input_height=48",
    "model.input_width=16",
    "model.c=8",
    "model.c_new=4",
    "data.n_identities=8",
    "data.images_per_identity=4",
    "batch.identities=2",
    "batch.images=2",
    "optimizer.epochs=2",
    "optimizer.decay_epoch=1",
    "max_rank=4",
)
