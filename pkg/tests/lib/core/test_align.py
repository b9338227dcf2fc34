import math

import pytest
import torch

from lib.core.align import (
    DescriptorSet,
    FeatureKind,
    FeatureMap,
    PersonDescriptor,
    Variant,
    aligned_distance,
    build_descriptor,
    cross_distances,
    extended_distance,
    normalize_features,
    pairwise_extended_distances,
    region_features,
    unconfident_feature,
    visibility_scores,
)
from lib.core.errors import (
    NoComparableRegionsError,
    ShapeMismatchError,
    UnknownVariantError,
)
from lib.core.segmap import (
    ConfidenceMap,
    SemanticProbMap,
    UnconfidentMask,
)
from tests.helpers import random_descriptor, random_prob_map

F64 = torch.float64


def two_pixel_features() -> FeatureMap:
    # g_f = (1, 2) at pixel 0 and (3, 4) at pixel 1, grid 1 x 2
    data = torch.tensor([[[1.0, 3.0]], [[2.0, 4.0]]], dtype=F64)
    return FeatureMap(data, FeatureKind.REDUCED)


def two_region_probs(region_one: tuple[float, float]) -> SemanticProbMap:
    first = torch.tensor([region_one], dtype=F64)
    return SemanticProbMap(torch.stack([first, 1 - first]))


def test_region_features_one_hot_selects_pixel() -> None:
    pooled = region_features(two_pixel_features(), two_region_probs((1, 0)))
    assert pooled[0].tolist() == [1.0, 2.0]


def test_region_features_weighted_sum() -> None:
    pooled = region_features(
        two_pixel_features(), two_region_probs((0.5, 0.5))
    )
    assert pooled[0].tolist() == pytest.approx([2.0, 3.0])


def test_zero_confidence_annihilates_region_features() -> None:
    weight = ConfidenceMap(torch.zeros(1, 2, dtype=F64))
    pooled = region_features(
        two_pixel_features(), two_region_probs((0.3, 0.6)), weight
    )
    assert torch.equal(pooled, torch.zeros_like(pooled))


def test_region_features_reject_backbone_maps() -> None:
    backbone = FeatureMap(two_pixel_features().data, FeatureKind.BACKBONE)
    with pytest.raises(ShapeMismatchError):
        region_features(backbone, two_region_probs((1, 0)))


def test_region_features_reject_mismatched_grids() -> None:
    probs = SemanticProbMap(torch.full((2, 2, 2), 0.5, dtype=F64))
    with pytest.raises(ShapeMismatchError):
        region_features(two_pixel_features(), probs)


def test_visibility_scores_examples() -> None:
    one_hot = torch.zeros(8, 2, 4, dtype=F64)
    one_hot[0] = 1
    assert visibility_scores(SemanticProbMap(one_hot)).tolist() == [
        8.0, 0, 0, 0, 0, 0, 0, 0,
    ]
    uniform = torch.full((8, 2, 4), 1 / 8, dtype=F64)
    assert visibility_scores(SemanticProbMap(uniform)).tolist() == (
        pytest.approx([1.0] * 8)
    )
    mixed = torch.stack(
        [
            torch.full((2, 2), 0.75, dtype=F64),
            torch.full((2, 2), 0.25, dtype=F64),
        ]
    )
    assert visibility_scores(SemanticProbMap(mixed)).tolist() == [3.0, 1.0]


def test_unconfident_feature_examples() -> None:
    features = FeatureMap(
        torch.tensor([[[0.0, 4.0]], [[2.0, 0.0]]], dtype=F64),
        FeatureKind.REDUCED,
    )
    empty = UnconfidentMask(torch.zeros(1, 2, dtype=F64), tau=0.5)
    feature, score = unconfident_feature(features, empty)
    assert feature.tolist() == [0.0, 0.0]
    assert float(score) == 0.0

    single = FeatureMap(
        torch.tensor([[[2.0, 9.0]], [[-2.0, 9.0]]], dtype=F64),
        FeatureKind.REDUCED,
    )
    mask = UnconfidentMask(torch.tensor([[1.0, 0.0]], dtype=F64), tau=0.5)
    feature, score = unconfident_feature(single, mask)
    assert feature.tolist() == [2.0, -2.0]
    assert float(score) == 1.0

    half = UnconfidentMask(torch.tensor([[0.5, 0.5]], dtype=F64), tau=0.5)
    feature, score = unconfident_feature(features, half)
    assert feature.tolist() == pytest.approx([2.0, 1.0])
    assert float(score) == pytest.approx(1.0)


def test_one_hot_parsing_has_no_unconfident_mass() -> None:
    probs = torch.zeros(4, 3, 2, dtype=F64)
    probs[1, :, 0] = 1
    probs[3, :, 1] = 1
    features = FeatureMap(
        torch.randn(5, 3, 2, dtype=F64), FeatureKind.REDUCED
    )
    descriptor = build_descriptor(features, SemanticProbMap(probs), tau=0.5)
    assert float(descriptor.unconfident_score) == 0.0
    assert torch.equal(
        descriptor.unconfident_feature, torch.zeros(5, dtype=F64)
    )
    assert descriptor.region_features.shape == (3, 5)
    assert descriptor.visibility.tolist() == [0.0, 3.0, 0.0]
    assert float(descriptor.background_visibility) == 3.0


def test_uniform_parsing_is_fully_unconfident() -> None:
    probs = torch.full((4, 3, 2), 0.25, dtype=F64)
    features = FeatureMap(
        torch.randn(5, 3, 2, dtype=F64), FeatureKind.REDUCED
    )
    descriptor = build_descriptor(features, SemanticProbMap(probs), tau=0.9)
    assert float(descriptor.unconfident_score) == pytest.approx(6.0)
    assert descriptor.visibility.tolist() == pytest.approx([1.5] * 3)
    assert torch.allclose(
        descriptor.region_features, torch.zeros(3, 5, dtype=F64)
    )
    assert float(descriptor.unconfident_feature.norm()) == pytest.approx(1.0)


def straight_line_descriptor(
    features: torch.Tensor, probs: torch.Tensor, tau: float
) -> dict[str, list]:
    """Pixel-by-pixel recomputation of every descriptor quantity."""
    n_regions, h, w = probs.shape
    c_new = features.shape[0]
    e_max = math.log(n_regions)
    confident = [[0.0] * c_new for _ in range(n_regions)]
    scores = [0.0] * n_regions
    un_sum = [0.0] * c_new
    un_score = 0.0
    for y in range(h):
        for x in range(w):
            p = [float(probs[i, y, x]) for i in range(n_regions)]
            entropy = -sum(v * math.log(v) for v in p if v > 0) / e_max
            g = [float(features[c, y, x]) for c in range(c_new)]
            for i in range(n_regions):
                scores[i] += p[i]
                for c in range(c_new):
                    confident[i][c] += (1 - entropy) * p[i] * g[c]
            if entropy >= tau:
                un_score += entropy
                for c in range(c_new):
                    un_sum[c] += entropy * g[c]

    def unit(v: list[float]) -> list[float]:
        norm = math.sqrt(sum(x * x for x in v))
        return [x / norm for x in v] if norm > 1e-8 else [0.0] * len(v)

    return {
        "region_features": [unit(v) for v in confident[:-1]],
        "visibility": scores[:-1],
        "unconfident_feature": unit([v / un_score for v in un_sum])
        if un_score > 0
        else [0.0] * c_new,
        "unconfident_score": un_score,
        "background_visibility": scores[-1],
    }


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_descriptor_matches_straight_line_recomputation(seed: int) -> None:
    generator = torch.Generator().manual_seed(seed)
    probs = random_prob_map(generator, (6, 4, 3), sharpness=1.5)
    features = torch.randn(5, 4, 3, generator=generator, dtype=F64)
    descriptor = build_descriptor(
        FeatureMap(features, FeatureKind.REDUCED),
        SemanticProbMap(probs),
        tau=0.5,
    )
    expected = straight_line_descriptor(features, probs, 0.5)
    for name, value in expected.items():
        actual = getattr(descriptor, name)
        assert torch.allclose(
            actual, torch.tensor(value, dtype=F64), atol=1e-10
        ), name


def test_visibility_bookkeeping_sums_to_pixel_mass(
    generator: torch.Generator,
) -> None:
    probs = torch.randn(3, 8, 12, 4, generator=generator).softmax(dim=1)
    features = FeatureMap(torch.randn(3, 6, 12, 4), FeatureKind.REDUCED)
    descriptor = build_descriptor(features, SemanticProbMap(probs), tau=0.5)
    total = descriptor.visibility.sum(-1) + descriptor.background_visibility
    assert torch.allclose(total, torch.full((3,), 48.0), atol=1e-4)


@pytest.mark.parametrize("variant", list(Variant))
def test_variants_build_unit_or_zero_features(
    variant: Variant, generator: torch.Generator
) -> None:
    probs = random_prob_map(generator, (2, 8, 6, 4))
    features = FeatureMap(
        torch.randn(2, 5, 6, 4, generator=generator, dtype=F64),
        FeatureKind.REDUCED,
    )
    descriptor = build_descriptor(
        features, SemanticProbMap(probs), tau=0.5, variant=variant
    )
    norms = torch.cat(
        [
            descriptor.region_features.norm(dim=-1).flatten(),
            descriptor.unconfident_feature.norm(dim=-1).flatten(),
        ]
    )
    assert bool(
        ((norms - 1).abs().lt(1e-9) | norms.eq(0)).all()
    ), variant
    if variant is Variant.WITHOUT_UNCONFIDENT:
        assert torch.equal(
            descriptor.unconfident_score, torch.zeros(2, dtype=F64)
        )
    if variant in (Variant.GLOBAL, Variant.BASELINE):
        assert descriptor.unconfident_score.tolist() == [24.0, 24.0]
    if variant is Variant.BASELINE:
        assert torch.equal(descriptor.visibility, torch.zeros(2, 7, dtype=F64))


def test_unknown_variant_is_rejected() -> None:
    with pytest.raises(UnknownVariantError):
        Variant.parse("x")
    assert Variant.parse("g") is Variant.GLOBAL


def hand_descriptor(
    features: list[list[float]],
    scores: list[float],
    un_feature: list[float],
    un_score: float,
) -> PersonDescriptor:
    return PersonDescriptor(
        region_features=torch.tensor(features, dtype=F64),
        visibility=torch.tensor(scores, dtype=F64),
        unconfident_feature=torch.tensor(un_feature, dtype=F64),
        unconfident_score=torch.tensor(un_score, dtype=F64),
        background_visibility=torch.tensor(0.0, dtype=F64),
    )


def test_disjoint_regions_have_zero_aligned_distance() -> None:
    p = hand_descriptor([[1, 0], [0, 0]], [3.0, 0.0], [0, 0], 0.0)
    q = hand_descriptor([[0, 0], [0, 1]], [0.0, 2.0], [0, 0], 0.0)
    assert float(aligned_distance(p, q)) == 0.0
    with pytest.raises(NoComparableRegionsError):
        extended_distance(p, q)


def test_self_distances_are_zero(generator: torch.Generator) -> None:
    p = random_descriptor(generator)
    assert float(aligned_distance(p, p)) == 0.0
    assert float(extended_distance(p, p)) == 0.0


def test_single_shared_region_distance_ignores_score_magnitude() -> None:
    angle = 2 * math.asin(0.35)
    for score in (0.01, 1.0, 250.0):
        p = hand_descriptor([[1, 0], [0, 0]], [score, 0.0], [1, 0], 0.0)
        q = hand_descriptor(
            [[math.cos(angle), math.sin(angle)], [0, 1]],
            [3.0, 4.0],
            [0, 1],
            2.0,
        )
        assert float(extended_distance(p, q)) == pytest.approx(0.7, abs=1e-12)


def test_two_region_hand_evaluation() -> None:
    p = hand_descriptor([[1, 0], [0, 1]], [2.0, 1.0], [1, 0], 0.5)
    q = hand_descriptor([[0, 1], [0, 1]], [1.0, 3.0], [-1, 0], 2.0)
    # region 1: 2 * 1 * sqrt(2); region 2: 1 * 3 * 0; unconfident: 1 * 2
    assert float(aligned_distance(p, q)) == pytest.approx(2 * math.sqrt(2))
    expected = (2 * math.sqrt(2) + 0.0 + 1.0 * 2.0) / (2.0 + 3.0 + 1.0)
    assert float(extended_distance(p, q)) == pytest.approx(expected)


def test_distance_properties_over_random_pairs(
    generator: torch.Generator,
) -> None:
    p = random_descriptor(generator, batch=(1000,))
    q = random_descriptor(generator, batch=(1000,))

    forward = extended_distance(p, q)
    assert torch.allclose(forward, extended_distance(q, p), atol=1e-12)
    assert torch.allclose(
        aligned_distance(p, q), aligned_distance(q, p), atol=1e-12
    )
    assert bool((forward >= 0).all()) and bool((forward <= 2).all())

    a, b = 3.7, 0.02
    scaled = extended_distance(
        PersonDescriptor(
            region_features=p.region_features,
            visibility=p.visibility * a,
            unconfident_feature=p.unconfident_feature,
            unconfident_score=p.unconfident_score * a,
            background_visibility=p.background_visibility,
        ),
        PersonDescriptor(
            region_features=q.region_features,
            visibility=q.visibility * b,
            unconfident_feature=q.unconfident_feature,
            unconfident_score=q.unconfident_score * b,
            background_visibility=q.background_visibility,
        ),
    )
    assert torch.allclose(scaled, forward, atol=1e-9)


def test_invisible_regions_do_not_affect_distances(
    generator: torch.Generator,
) -> None:
    p = random_descriptor(generator, batch=(200,), hidden=0.5)
    q = random_descriptor(generator, batch=(200,))
    hidden = (p.visibility == 0).unsqueeze(-1)
    noise = torch.randn(q.region_features.shape, generator=generator, dtype=F64)
    perturbed = PersonDescriptor(
        region_features=torch.where(
            hidden, q.region_features + noise, q.region_features
        ),
        visibility=q.visibility,
        unconfident_feature=q.unconfident_feature,
        unconfident_score=q.unconfident_score,
        background_visibility=q.background_visibility,
    )
    assert bool(hidden.any())
    assert torch.equal(aligned_distance(p, q), aligned_distance(p, perturbed))
    assert torch.allclose(
        extended_distance(p, q), extended_distance(p, perturbed), atol=1e-12
    )


def test_distances_reject_mismatched_descriptors(
    generator: torch.Generator,
) -> None:
    p = random_descriptor(generator, n_regions=4)
    q = random_descriptor(generator, n_regions=5)
    with pytest.raises(ShapeMismatchError):
        extended_distance(p, q)


def test_pairwise_batch_of_one_is_zero(generator: torch.Generator) -> None:
    batch = random_descriptor(generator, batch=(1,))
    result = pairwise_extended_distances(batch)
    assert result.values.tolist() == [[0.0]]
    assert not bool(result.missing.any())


def test_pairwise_identical_batch_is_zero(generator: torch.Generator) -> None:
    one = random_descriptor(generator)
    batch = PersonDescriptor.stack([one] * 5)
    values = pairwise_extended_distances(batch).values
    assert torch.allclose(values, torch.zeros(5, 5, dtype=F64), atol=1e-12)


def test_pairwise_matches_elementwise_calls(generator: torch.Generator) -> None:
    batch = random_descriptor(generator, batch=(8,))
    values = pairwise_extended_distances(batch).values
    for i in range(8):
        for j in range(8):
            expected = 0.0 if i == j else float(
                extended_distance(batch[i], batch[j])
            )
            assert float(values[i, j]) == pytest.approx(expected, abs=1e-12)
    assert torch.allclose(values, values.T, atol=1e-12)


def test_cross_distances_flag_missing_pairs() -> None:
    p = hand_descriptor([[1, 0], [0, 0]], [3.0, 0.0], [0, 0], 0.0)
    q = hand_descriptor([[0, 0], [0, 1]], [0.0, 2.0], [0, 0], 0.0)
    r = hand_descriptor([[1, 0], [0, 1]], [1.0, 1.0], [0, 0], 0.0)
    result = cross_distances(
        PersonDescriptor.stack([p]), PersonDescriptor.stack([q, r])
    )
    assert result.missing.tolist() == [[True, False]]
    assert result.values.tolist() == [[0.0, 0.0]]
    aligned = cross_distances(
        PersonDescriptor.stack([p]),
        PersonDescriptor.stack([q, r]),
        extended=False,
    )
    assert not bool(aligned.missing.any())


def test_cross_distances_chunking_is_invisible(
    generator: torch.Generator,
) -> None:
    probes = random_descriptor(generator, batch=(13,))
    gallery = random_descriptor(generator, batch=(7,))
    whole = cross_distances(probes, gallery, chunk_size=128).values
    chunked = cross_distances(probes, gallery, chunk_size=3).values
    assert torch.allclose(whole, chunked, atol=1e-12)


def test_extended_distance_is_differentiable(
    generator: torch.Generator,
) -> None:
    f1 = torch.randn(3, 4, 2, generator=generator, dtype=F64)
    f2 = torch.randn(3, 4, 2, generator=generator, dtype=F64)
    l1 = torch.randn(4, 4, 2, generator=generator, dtype=F64)
    l2 = torch.randn(4, 4, 2, generator=generator, dtype=F64)

    def distance(*tensors: torch.Tensor) -> torch.Tensor:
        a, b, la, lb = tensors
        p = build_descriptor(
            FeatureMap(a, FeatureKind.REDUCED),
            SemanticProbMap(la.softmax(dim=0)),
            tau=0.5,
        )
        q = build_descriptor(
            FeatureMap(b, FeatureKind.REDUCED),
            SemanticProbMap(lb.softmax(dim=0)),
            tau=0.5,
        )
        return extended_distance(p, q)

    inputs = tuple(t.requires_grad_() for t in (f1, f2, l1, l2))
    assert torch.autograd.gradcheck(distance, inputs, eps=1e-5, rtol=1e-4)


def test_normalize_features_zeroes_tiny_vectors() -> None:
    vectors = torch.tensor([[3.0, 4.0], [1e-12, 0.0]], dtype=F64)
    normalized = normalize_features(vectors)
    assert normalized.tolist() == [[0.6, 0.8], [0.0, 0.0]]


def test_descriptor_set_subset(generator: torch.Generator) -> None:
    descriptors = random_descriptor(generator, batch=(4,))
    dataset = DescriptorSet(["a", "b", "c", "d"], [0, 0, 1, 1], descriptors)
    subset = dataset.subset([3, 1])
    assert subset.image_ids == ["d", "b"]
    assert subset.identities == [1, 0]
    assert torch.equal(
        subset.descriptors.visibility, descriptors.visibility[[3, 1]]
    )
    with pytest.raises(ShapeMismatchError):
        DescriptorSet(["a"], [0, 1], descriptors)


def test_descriptor_of_saturated_parsing_has_finite_gradients() -> None:
    logits = torch.zeros(2, 4, 3, 2)
    logits[:, 0] += 120.0
    logits.requires_grad_()
    features = torch.randn(2, 3, 3, 2, requires_grad=True)
    descriptor = build_descriptor(
        FeatureMap(features, FeatureKind.REDUCED),
        SemanticProbMap(logits.softmax(dim=1)),
        tau=0.5,
    )
    assert float(descriptor.unconfident_score.sum()) == 0.0
    total = descriptor.region_features.sum() + descriptor.visibility.sum()
    total.backward()
    for tensor in (logits, features):
        assert tensor.grad is not None
        assert bool(torch.isfinite(tensor.grad).all())
