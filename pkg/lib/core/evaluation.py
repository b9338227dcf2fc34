"""
Single-query retrieval metrics: CMC, mAP and PR-AUC.

Ranking convention shared by every metric: ascending distance, pairs
that cannot be compared (missing) after every finite distance, ties by
gallery index. Excluded pairs (a probe against its own image) take no
part in ranking or pooling.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from lib.core.align import DescriptorSet, DistanceConfig, cross_distances
from lib.core.errors import (
    DegeneratePoolError,
    NoGalleryMatchError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class ScoreMatrix:
    """
    Probe x gallery distances with identity labels.

    Attributes:
        distances: (P, G) float64, finite where not missing
        probe_ids: (P,) identity labels
        gallery_ids: (G,) identity labels
        missing: (P, G) True where the pair has no comparable regions
        excluded: (P, G) True where the pair is dropped (self-match)
    """

    distances: np.ndarray
    probe_ids: np.ndarray
    gallery_ids: np.ndarray
    missing: np.ndarray | None = None
    excluded: np.ndarray | None = None

    def __post_init__(self) -> None:
        distances = np.asarray(self.distances, dtype=np.float64)
        shape = (len(self.probe_ids), len(self.gallery_ids))
        if distances.shape != shape:
            raise ShapeMismatchError(
                f"distances {distances.shape} for {shape[0]} probes and "
                f"{shape[1]} gallery items"
            )
        missing = (
            np.zeros(shape, dtype=bool)
            if self.missing is None
            else np.asarray(self.missing, dtype=bool)
        )
        excluded = (
            np.zeros(shape, dtype=bool)
            if self.excluded is None
            else np.asarray(self.excluded, dtype=bool)
        )
        if missing.shape != shape or excluded.shape != shape:
            raise ShapeMismatchError("pair markers do not match distances")
        if not np.isfinite(distances[~missing]).all():
            raise ValueError("distances must be finite where present")
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "probe_ids", np.asarray(self.probe_ids))
        object.__setattr__(self, "gallery_ids", np.asarray(self.gallery_ids))
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "excluded", excluded)

    @property
    def positives(self) -> np.ndarray:
        return self.probe_ids[:, None] == self.gallery_ids[None, :]


def _ranked_hits(scores: ScoreMatrix) -> tuple[np.ndarray, np.ndarray]:
    """
    Hit matrix of every probe's ranked gallery list.

    Returns:
        (hits, valid): hits[p, r] is True when rank r+1 of probe p is a
        correct identity; valid[p, r] is False for excluded pairs, which
        sort to the end.
    """
    n_probe, n_gallery = scores.distances.shape
    index = np.broadcast_to(np.arange(n_gallery), (n_probe, n_gallery))
    distance = np.where(scores.missing, 0.0, scores.distances)
    order = np.lexsort(
        (index, distance, scores.missing, scores.excluded), axis=-1
    )
    valid = ~np.take_along_axis(scores.excluded, order, axis=1)
    matches = np.take_along_axis(scores.positives, order, axis=1)
    hits = matches & valid
    unmatched = ~hits.any(axis=1)
    if unmatched.any():
        raise NoGalleryMatchError(
            f"{int(unmatched.sum())} probes have no gallery match"
        )
    return hits, valid


def cmc(scores: ScoreMatrix, max_rank: int = 20) -> np.ndarray:
    """
    Cumulative matching characteristic.

    Returns:
        Length `max_rank` array; entry k-1 is the fraction of probes with
        a correct identity among their k nearest gallery items.

    Raises:
        NoGalleryMatchError: If a probe has no gallery match.
    """
    hits, _ = _ranked_hits(scores)
    first = hits.argmax(axis=1)
    ranks = np.arange(1, max_rank + 1)
    return (first[:, None] < ranks[None, :]).mean(axis=0)


def average_precision(scores: ScoreMatrix) -> np.ndarray:
    """Per-probe average precision of the ranked gallery list."""
    hits, _ = _ranked_hits(scores)
    cumulative = np.cumsum(hits, axis=1)
    precision = cumulative / np.arange(1, hits.shape[1] + 1)[None, :]
    return (precision * hits).sum(axis=1) / hits.sum(axis=1)


def mean_ap(scores: ScoreMatrix) -> float:
    return float(average_precision(scores).mean())


@dataclass(frozen=True)
class PRTable:
    """
    Precision-recall points, one per distinct score threshold.

    Attributes:
        thresholds: Distance thresholds, ascending; a pair is accepted
            when its distance is at or below the threshold (inf for
            pairs without comparable regions)
        precision: Precision at each threshold
        recall: Recall at each threshold
    """

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        lines = ["# distance_threshold\tprecision\trecall"]
        lines += [
            f"{t:.9g}\t{p:.9g}\t{r:.9g}"
            for t, p, r in zip(
                self.thresholds, self.precision, self.recall, strict=True
            )
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def pr_curve(scores: ScoreMatrix) -> PRTable:
    """
    Precision-recall curve over all non-excluded probe-gallery pairs,
    each scored by its negative distance (missing pairs score -inf).

    Raises:
        DegeneratePoolError: If the pool has no positive or no negative.
    """
    keep = ~scores.excluded
    score = np.where(scores.missing, -np.inf, -scores.distances)[keep]
    label = scores.positives[keep]
    n_pos = int(label.sum())
    if n_pos == 0 or n_pos == label.size:
        raise DegeneratePoolError(
            "PR-AUC needs at least one positive and one negative pair"
        )
    order = np.argsort(-score, kind="stable")
    score, label = score[order], label[order]
    true_pos = np.cumsum(label)
    false_pos = np.cumsum(~label)
    # last position of every run of equal scores
    last = np.append(score[1:] != score[:-1], True)
    true_pos, false_pos = true_pos[last], false_pos[last]
    return PRTable(
        thresholds=-score[last],
        precision=true_pos / (true_pos + false_pos),
        recall=true_pos / n_pos,
    )


def pr_auc(
    scores: ScoreMatrix,
    interpolation: Literal["trapezoid", "step"] = "trapezoid",
) -> float:
    """
    Area under the precision-recall curve.

    The curve is anchored at (recall 0, precision 1). `trapezoid`
    interpolates linearly between successive points; `step` sums
    delta-recall times precision at each recall step.
    """
    table = pr_curve(scores)
    recall = np.concatenate([[0.0], table.recall])
    precision = np.concatenate([[1.0], table.precision])
    delta = np.diff(recall)
    if interpolation == "step":
        return float((delta * precision[1:]).sum())
    if interpolation == "trapezoid":
        return float((delta * (precision[1:] + precision[:-1]) / 2).sum())
    raise ValueError(f"unknown interpolation {interpolation!r}")


class MetricReport(BaseModel):
    """
    Retrieval metrics of one evaluation.

    Attributes:
        cmc: Accuracy at ranks 1..len(cmc), fractions
        map: Mean average precision
        pr_auc: Area under the pooled precision-recall curve
    """

    model_config = ConfigDict(frozen=True)

    cmc: list[float]
    map: float = Field(ge=0, le=1)  # noqa: A003
    pr_auc: float = Field(ge=0, le=1)

    @field_validator("cmc")
    @classmethod
    def _check_cmc(cls, value: list[float]) -> list[float]:
        if any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError("cmc values must lie in [0, 1]")
        if any(b < a for a, b in zip(value, value[1:])):
            raise ValueError("cmc must be nondecreasing in rank")
        return value

    def rank(self, k: int) -> float:
        return self.cmc[k - 1]

    def to_text(self) -> str:
        lines = [
            f"rank-1  {100 * self.rank(1):6.2f}%",
            *(
                f"rank-{k:<2d} {100 * self.rank(k):6.2f}%"
                for k in (5, 10, 20)
                if k <= len(self.cmc)
            ),
            f"mAP     {100 * self.map:6.2f}%",
            f"PR-AUC  {self.pr_auc:.4f}",
        ]
        return "\n".join(lines) + "\n"

    def to_key_values(self) -> str:
        lines = [
            f"map = {self.map!r}",
            f"pr_auc = {self.pr_auc!r}",
            f"max_rank = {len(self.cmc)}",
            *(f"cmc.{k} = {v!r}" for k, v in enumerate(self.cmc, start=1)),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_key_values(cls, text: str) -> "MetricReport":
        values: dict[str, str] = {}
        for line in text.splitlines():
            key, sep, value = line.partition("=")
            if sep:
                values[key.strip()] = value.strip()
        max_rank = int(values["max_rank"])
        return cls(
            cmc=[float(values[f"cmc.{k}"]) for k in range(1, max_rank + 1)],
            map=float(values["map"]),
            pr_auc=float(values["pr_auc"]),
        )

    def write(self, out_dir: str | Path, stem: str = "metrics") -> list[Path]:
        """
        Writes `<stem>.txt` (report), `<stem>.kv` (key-value) and
        `<stem>_cmc.dat` (rank, accuracy).
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = out_dir / f"{stem}.txt"
        report.write_text(self.to_text(), encoding="utf-8")
        key_values = out_dir / f"{stem}.kv"
        key_values.write_text(self.to_key_values(), encoding="utf-8")
        curve = out_dir / f"{stem}_cmc.dat"
        curve.write_text(
            "".join(f"{k}\t{v!r}\n" for k, v in enumerate(self.cmc, start=1)),
            encoding="utf-8",
        )
        return [report, key_values, curve]


def score_matrix(
    gallery: DescriptorSet,
    probes: DescriptorSet,
    config: DistanceConfig | None = None,
    extended: bool = True,
) -> ScoreMatrix:
    """
    Scores every probe against the gallery; a probe is never matched
    against the record carrying its own image id.
    """
    pairs = cross_distances(
        probes.descriptors.detach(),
        gallery.descriptors.detach(),
        config,
        extended=extended,
    )
    gallery_ids = np.array(gallery.image_ids, dtype=object)
    probe_ids = np.array(probes.image_ids, dtype=object)
    return ScoreMatrix(
        distances=pairs.values.double().cpu().numpy(),
        probe_ids=np.array(probes.identities, dtype=np.int64),
        gallery_ids=np.array(gallery.identities, dtype=np.int64),
        missing=pairs.missing.cpu().numpy(),
        excluded=probe_ids[:, None] == gallery_ids[None, :],
    )


def evaluate_scores(scores: ScoreMatrix, max_rank: int = 20) -> MetricReport:
    return MetricReport(
        cmc=[float(v) for v in cmc(scores, max_rank)],
        map=mean_ap(scores),
        pr_auc=pr_auc(scores),
    )


def evaluate_retrieval(
    gallery: DescriptorSet,
    probes: DescriptorSet,
    config: DistanceConfig | None = None,
    extended: bool = True,
    max_rank: int = 20,
    logger: structlog.stdlib.BoundLogger | None = None,
) -> MetricReport:
    """
    Single-query evaluation of probe descriptors against a gallery.

    Args:
        gallery: Gallery descriptor set.
        probes: Probe descriptor set.
        config: Distance settings.
        extended: Rank by d~ (default) or by the aligned distance d.
        max_rank: Length of the CMC curve.
        logger: Optional structlog logger.

    Returns:
        CMC, mAP and PR-AUC of the ranking.
    """
    logger = logger or structlog.get_logger(__name__)
    scores = score_matrix(gallery, probes, config, extended=extended)
    report = evaluate_scores(scores, max_rank)
    logger.info(
        "Evaluated retrieval",
        probes=len(probes),
        gallery=len(gallery),
        missing_pairs=int(scores.missing.sum()),
        rank1=report.rank(1),
        map=report.map,
        pr_auc=report.pr_auc,
    )
    return report
