"""
Parsing, entropy and unconfident-mask rasters for trained checkpoints.

For every input image `<stem>` three PNGs are written at input
resolution: `<stem>_parsing.png` (argmax region, color-coded),
`<stem>_entropy.png` (normalized entropy through a colormap) and
`<stem>_mask.png` (unconfident mask, grayscale). `summary.tsv` records
per-image entropy statistics.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import matplotlib as mpl
import numpy as np
import structlog
import torch
from PIL import Image, UnidentifiedImageError

from lib.core.checkpoint import load_checkpoint
from lib.core.errors import DatasetError, ShapeMismatchError
from lib.core.model import images_to_tensor
from lib.core.segmap import entropy_map, unconfident_mask
from lib.core.synthdata import downsample_labels, load_image

ENTROPY_COLORMAP = "jet"
SUMMARY_NAME = "summary.tsv"


@dataclass(frozen=True)
class BoundaryStatistic:
    """
    Mean normalized entropy on label-transition and interior pixels.

    A pixel is a transition pixel when one of its 4-neighbours carries a
    different label. Means are NaN when a class of pixels is empty.
    """

    boundary_mean: float
    interior_mean: float
    boundary_pixels: int
    interior_pixels: int

    @property
    def boundary_higher(self) -> bool:
        return self.boundary_mean > self.interior_mean


def transition_pixels(labels: np.ndarray) -> np.ndarray:
    edge = np.zeros(labels.shape, dtype=bool)
    vertical = labels[1:, :] != labels[:-1, :]
    horizontal = labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= vertical
    edge[:-1, :] |= vertical
    edge[:, 1:] |= horizontal
    edge[:, :-1] |= horizontal
    return edge


def boundary_entropy_statistic(
    normalized_entropy: np.ndarray, labels: np.ndarray
) -> BoundaryStatistic:
    """
    Args:
        normalized_entropy: (h, w) normalized entropy.
        labels: (h, w) region labels on the same grid.
    """
    if normalized_entropy.shape != labels.shape:
        raise ShapeMismatchError(
            f"entropy {normalized_entropy.shape} vs labels {labels.shape}"
        )
    edge = transition_pixels(labels)
    boundary = normalized_entropy[edge]
    interior = normalized_entropy[~edge]
    return BoundaryStatistic(
        boundary_mean=float(boundary.mean()) if boundary.size else np.nan,
        interior_mean=float(interior.mean()) if interior.size else np.nan,
        boundary_pixels=int(boundary.size),
        interior_pixels=int(interior.size),
    )


def region_palette(n_regions: int) -> np.ndarray:
    """(N, 3) uint8 colors; the background (last region) is black."""
    cmap = mpl.colormaps["tab10" if n_regions <= 11 else "tab20"]
    colors = np.array(
        [cmap(i)[:3] for i in range(n_regions - 1)] + [(0.0, 0.0, 0.0)]
    )
    return np.round(colors * 255).astype(np.uint8)


def _upsample(values: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(values, factor, axis=0), factor, axis=1)


def render_parsing(probs: np.ndarray, factor: int) -> np.ndarray:
    """Color-coded argmax of (N, h, w) probabilities."""
    palette = region_palette(probs.shape[0])
    return _upsample(palette[probs.argmax(axis=0)], factor)


def render_entropy(normalized: np.ndarray, factor: int) -> np.ndarray:
    rgba = mpl.colormaps[ENTROPY_COLORMAP](np.clip(normalized, 0.0, 1.0))
    return _upsample(np.round(rgba[..., :3] * 255).astype(np.uint8), factor)


def render_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    return _upsample(np.round(mask * 255).astype(np.uint8), factor)


@dataclass(frozen=True)
class VisualizationResult:
    """
    Attributes:
        files: Written rasters, three per input
        mean_entropy: Mean normalized entropy per input
        statistics: Boundary statistic per input, None without labels
        summary: Path of the summary table
    """

    files: list[Path]
    mean_entropy: list[float]
    statistics: list[BoundaryStatistic | None]
    summary: Path


def _read_labels(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as handle:
            return np.asarray(handle, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise DatasetError(f"cannot read labels {path}: {exc}") from exc


def visualize(
    checkpoint: str | Path,
    image_paths: Sequence[str | Path],
    out_dir: str | Path,
    tau: float = 0.5,
    label_paths: Sequence[str | Path] | None = None,
    logger: structlog.stdlib.BoundLogger | None = None,
) -> VisualizationResult:
    """
    Writes parsing, entropy and mask rasters for every input image.

    Args:
        checkpoint: Trained checkpoint.
        image_paths: Input images, resized to the model input if needed.
        out_dir: Destination directory.
        tau: Threshold of the unconfident mask.
        label_paths: Optional full-resolution part labels per image,
            enabling the boundary-entropy statistic.
        logger: Optional structlog logger.

    Raises:
        DatasetError: If an input cannot be read.
    """
    logger = logger or structlog.get_logger(__name__)
    if label_paths is not None and len(label_paths) != len(image_paths):
        raise ShapeMismatchError("one label raster per image is required")
    model, _ = load_checkpoint(checkpoint)
    config = model.config
    size = (config.input_height, config.input_width)
    factor = config.downsample
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    files: list[Path] = []
    means: list[float] = []
    statistics: list[BoundaryStatistic | None] = []
    rows = ["image\tmean_entropy\tboundary_mean\tinterior_mean"]
    for index, raw_path in enumerate(image_paths):
        path = Path(raw_path)
        try:
            image = load_image(path, size=size)
        except (OSError, UnidentifiedImageError) as exc:
            raise DatasetError(f"cannot read image {path}: {exc}") from exc
        with torch.no_grad():
            output = model(images_to_tensor([image]))
        entropy = entropy_map(output.parsing)
        mask = unconfident_mask(entropy, tau)
        probs = output.parsing.probs[0].numpy()
        normalized = entropy.normalized[0].numpy()

        rasters = {
            "parsing": render_parsing(probs, factor),
            "entropy": render_entropy(normalized, factor),
            "mask": render_mask(mask.values[0].numpy(), factor),
        }
        for name, raster in rasters.items():
            target = out_dir / f"{path.stem}_{name}.png"
            Image.fromarray(raster).save(target, format="PNG")
            files.append(target)

        statistic = None
        if label_paths is not None:
            labels = _read_labels(Path(label_paths[index]))
            statistic = boundary_entropy_statistic(
                normalized, downsample_labels(labels, factor)
            )
        means.append(float(normalized.mean()))
        statistics.append(statistic)
        rows.append(
            f"{path.stem}\t{means[-1]:.6f}\t"
            + (
                f"{statistic.boundary_mean:.6f}\t{statistic.interior_mean:.6f}"
                if statistic is not None
                else "nan\tnan"
            )
        )

    summary = out_dir / SUMMARY_NAME
    summary.write_text("\n".join(rows) + "\n", encoding="utf-8")
    logger.info(
        "Wrote visualizations",
        out_dir=str(out_dir),
        images=len(image_paths),
        files=len(files),
    )
    return VisualizationResult(files, means, statistics, summary)
