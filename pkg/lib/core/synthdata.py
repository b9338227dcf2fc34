"""
Procedural partial-person benchmark with exact part labels.

Every identity is a seven-part body (head, torso, upper arm, lower arm,
upper leg, lower leg, foot) whose per-part colors encode the identity.
Samples are rendered in three views: `full`, `half` (upper body stretched
over the frame, as a cropped-and-resized detection would be) and
`occluded` (a full-width occluder band hides at least one part).

Dataset directory layout::

    manifest.txt
    images/<split>/<identity>_<index>.png    8-bit RGB
    labels/<split>/<identity>_<index>.png    8-bit region index, 1..8

`manifest.txt` starts with `# key = value` header lines echoing the
generation config, then one tab-separated record per sample with fields
`split identity index view image label` (paths relative to the root).
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field

from lib.core.errors import DatasetError, ShapeMismatchError

MANIFEST_NAME = "manifest.txt"
SPLITS = ("train", "gallery", "probe")


class Part(IntEnum):
    HEAD = 1
    TORSO = 2
    UPPER_ARM = 3
    LOWER_ARM = 4
    UPPER_LEG = 5
    LOWER_LEG = 6
    FOOT = 7
    BACKGROUND = 8


N_REGIONS = len(Part)
FOREGROUND = tuple(p for p in Part if p is not Part.BACKGROUND)


class ViewTag(str, Enum):
    FULL = "full"
    HALF = "half"
    OCCLUDED = "occluded"


# Box = (top, left, bottom, right); normalized canvas units for shapes,
# pixels for occluder / erase rectangles.
Box = tuple[float, float, float, float]
PixelBox = tuple[int, int, int, int]

# Canonical body, drawn in this order (later shapes cover earlier ones).
_CANONICAL_BODY: tuple[tuple[Part, str, Box], ...] = (
    (Part.UPPER_LEG, "rect", (0.50, 0.29, 0.70, 0.49)),
    (Part.UPPER_LEG, "rect", (0.50, 0.51, 0.70, 0.71)),
    (Part.LOWER_LEG, "rect", (0.70, 0.30, 0.89, 0.48)),
    (Part.LOWER_LEG, "rect", (0.70, 0.52, 0.89, 0.70)),
    (Part.FOOT, "rect", (0.88, 0.26, 0.96, 0.48)),
    (Part.FOOT, "rect", (0.88, 0.52, 0.96, 0.74)),
    (Part.TORSO, "rect", (0.16, 0.27, 0.52, 0.73)),
    (Part.UPPER_ARM, "rect", (0.17, 0.10, 0.35, 0.28)),
    (Part.UPPER_ARM, "rect", (0.17, 0.72, 0.35, 0.90)),
    (Part.LOWER_ARM, "rect", (0.34, 0.08, 0.50, 0.26)),
    (Part.LOWER_ARM, "rect", (0.34, 0.74, 0.50, 0.92)),
    (Part.HEAD, "ellipse", (0.02, 0.31, 0.175, 0.69)),
)

HALF_VIEW_EXTENT = 0.60


@dataclass(frozen=True)
class Shape:
    """
    One rasterizable body piece.

    Attributes:
        part: Region label painted by the shape
        kind: "rect" or "ellipse" (inscribed in `box`)
        box: (top, left, bottom, right) in normalized canvas coordinates
    """

    part: Part
    kind: Literal["rect", "ellipse"]
    box: Box

    def contains(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        top, left, bottom, right = self.box
        if self.kind == "rect":
            return (y >= top) & (y < bottom) & (x >= left) & (x < right)
        cy, cx = (top + bottom) / 2, (left + right) / 2
        ry, rx = (bottom - top) / 2, (right - left) / 2
        return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0


@dataclass(frozen=True)
class IdentitySpec:
    """
    Appearance and body proportions of one synthetic person.

    Attributes:
        id: Identity label
        part_colors: (7, 3) base RGB color per foreground part
        noise_amplitude: (7,) texture noise std per part
        body_geometry: Canonical shapes with this identity's proportions
    """

    id: int
    part_colors: np.ndarray
    noise_amplitude: np.ndarray
    body_geometry: tuple[Shape, ...]

    @property
    def appearance_vector(self) -> np.ndarray:
        return self.part_colors.ravel()


@dataclass(frozen=True)
class Variation:
    """
    Per-image rendering parameters.

    Attributes:
        scale: Body scale about the canvas center
        shift: (dy, dx) translation in normalized canvas units
        brightness: Multiplicative illumination factor
        background_color: Base RGB of the background
        clutter: Background rectangles as (box, color) in normalized units
        occluder_anchor: Part whose pixels an occluded view fully covers
        occluder_margin: Extra occluder rows beyond the anchor part
        occluder_box: Explicit occluder rectangle in pixels, overriding
            the anchor placement
        occluder_color: Base RGB of the occluder
        noise_seed: Seed of the texture noise
    """

    scale: float = 1.0
    shift: tuple[float, float] = (0.0, 0.0)
    brightness: float = 1.0
    background_color: tuple[float, float, float] = (0.5, 0.5, 0.5)
    clutter: tuple[tuple[Box, tuple[float, float, float]], ...] = ()
    occluder_anchor: Part = Part.LOWER_LEG
    occluder_margin: int = 1
    occluder_box: PixelBox | None = None
    occluder_color: tuple[float, float, float] = (0.2, 0.2, 0.2)
    noise_seed: int = 0

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "Variation":
        clutter = []
        for _ in range(int(rng.integers(0, 3))):
            top, left = rng.uniform(0, 0.9), rng.uniform(0, 0.8)
            box = (top, left, top + rng.uniform(0.05, 0.3), left + 0.2)
            clutter.append((box, tuple(rng.uniform(0, 1, 3).tolist())))
        anchors = (Part.HEAD, Part.UPPER_LEG, Part.LOWER_LEG, Part.FOOT)
        anchor = anchors[
            int(rng.choice(len(anchors), p=(0.2, 0.25, 0.3, 0.25)))
        ]
        return cls(
            scale=float(rng.uniform(0.85, 1.0)),
            shift=(
                float(rng.uniform(-0.02, 0.02)),
                float(rng.uniform(-0.03, 0.03)),
            ),
            brightness=float(rng.uniform(0.85, 1.15)),
            background_color=tuple(rng.uniform(0, 1, 3).tolist()),
            clutter=tuple(clutter),
            occluder_anchor=anchor,
            occluder_margin=int(rng.integers(0, 4)),
            occluder_color=tuple(rng.uniform(0, 1, 3).tolist()),
            noise_seed=int(rng.integers(0, 2**31 - 1)),
        )


@dataclass(frozen=True)
class SampleRecord:
    """
    Attributes:
        image: (H, W, 3) float32 in [0, 1]
        part_labels: (H, W) uint8 region index in [1, N]
        identity: Identity label
        view_tag: Rendered view
    """

    image: np.ndarray
    part_labels: np.ndarray
    identity: int
    view_tag: ViewTag


class AugmentConfig(BaseModel):
    """Random flip and random erasing settings."""

    model_config = ConfigDict(frozen=True)

    flip_probability: float = Field(default=0.5, ge=0, le=1)
    erase_probability: float = Field(default=0.5, ge=0, le=1)
    erase_area: tuple[float, float] = (0.02, 0.4)
    erase_aspect: tuple[float, float] = (0.3, 1 / 0.3)


def make_identity(
    identity: int, rng: np.random.Generator
) -> IdentitySpec:
    colors = rng.uniform(0.0, 1.0, size=(len(FOREGROUND), 3))
    noise = rng.uniform(0.02, 0.08, size=len(FOREGROUND))
    width = rng.uniform(0.9, 1.1)
    head = rng.uniform(0.9, 1.1)
    shapes = []
    for part, kind, (top, left, bottom, right) in _CANONICAL_BODY:
        left, right = 0.5 + (left - 0.5) * width, 0.5 + (right - 0.5) * width
        if part is Part.HEAD:
            cx, half = (left + right) / 2, (right - left) / 2 * head
            left, right = cx - half, cx + half
        shapes.append(Shape(part, kind, (top, left, bottom, right)))
    return IdentitySpec(
        id=identity,
        part_colors=colors.astype(np.float32),
        noise_amplitude=noise.astype(np.float32),
        body_geometry=tuple(shapes),
    )


def make_identities(
    n_identities: int,
    rng: np.random.Generator,
    min_color_distance: float = 0.5,
    max_attempts: int = 10_000,
) -> list[IdentitySpec]:
    """
    Draws identities whose appearance vectors are pairwise at least
    `min_color_distance` apart.
    """
    identities: list[IdentitySpec] = []
    for _ in range(max_attempts):
        if len(identities) == n_identities:
            break
        candidate = make_identity(len(identities), rng)
        if all(
            np.linalg.norm(
                candidate.appearance_vector - other.appearance_vector
            )
            >= min_color_distance
            for other in identities
        ):
            identities.append(candidate)
    if len(identities) < n_identities:
        raise DatasetError(
            f"could not draw {n_identities} distinct identities"
        )
    return identities


def place_shapes(
    identity: IdentitySpec, variation: Variation, view_tag: ViewTag
) -> list[Shape]:
    """
    Maps the identity's canonical body onto the canvas for one view.

    A `half` view stretches the top HALF_VIEW_EXTENT of the canvas over
    the whole frame vertically, pushing the lower legs and feet out.
    """
    dy, dx = variation.shift
    extent = HALF_VIEW_EXTENT if view_tag is ViewTag.HALF else 1.0

    def map_y(y: float) -> float:
        return (0.5 + (y - 0.5) * variation.scale + dy) / extent

    def map_x(x: float) -> float:
        return 0.5 + (x - 0.5) * variation.scale + dx

    return [
        Shape(
            shape.part,
            shape.kind,
            (
                map_y(shape.box[0]),
                map_x(shape.box[1]),
                map_y(shape.box[2]),
                map_x(shape.box[3]),
            ),
        )
        for shape in identity.body_geometry
    ]


def rasterize(shapes: Sequence[Shape], height: int, width: int) -> np.ndarray:
    """
    Paints shapes in order onto a background label raster, testing pixel
    centers against each shape.
    """
    y = (np.arange(height, dtype=np.float64)[:, None] + 0.5) / height
    x = (np.arange(width, dtype=np.float64)[None, :] + 0.5) / width
    labels = np.full((height, width), int(Part.BACKGROUND), dtype=np.uint8)
    for shape in shapes:
        labels[shape.contains(y, x)] = int(shape.part)
    return labels


def _texture(
    rng: np.random.Generator,
    color: Sequence[float],
    amplitude: float,
    shape: tuple[int, int],
) -> np.ndarray:
    base = np.asarray(color, dtype=np.float32)
    noise = rng.normal(0.0, amplitude, size=shape + (3,)).astype(np.float32)
    return base + noise


def occluder_rows(
    labels: np.ndarray, anchor: Part, margin: int
) -> tuple[int, int]:
    """
    Row span of a full-width occluder band hiding every pixel of
    `anchor`: from the top edge for the head, to the bottom edge
    otherwise.
    """
    height = labels.shape[0]
    rows = np.flatnonzero((labels == int(anchor)).any(axis=1))
    if rows.size == 0:
        return height, height
    if anchor is Part.HEAD:
        return 0, min(height, int(rows.max()) + 1 + margin)
    return max(0, int(rows.min()) - margin), height


def render_sample(
    identity: IdentitySpec,
    variation: Variation,
    view_tag: ViewTag,
    size: tuple[int, int] = (96, 32),
) -> SampleRecord:
    """
    Renders one image of `identity` with exact part labels.

    Occluded pixels are labelled background.
    """
    height, width = size
    rng = np.random.default_rng(variation.noise_seed)
    labels = rasterize(place_shapes(identity, variation, view_tag), *size)

    gradient = np.linspace(-0.1, 0.1, height, dtype=np.float32)[:, None, None]
    image = (
        _texture(rng, variation.background_color, 0.05, size) + gradient
    )
    y = (np.arange(height)[:, None] + 0.5) / height
    x = (np.arange(width)[None, :] + 0.5) / width
    for box, color in variation.clutter:
        inside = Shape(Part.BACKGROUND, "rect", box).contains(y, x)
        image[inside] = _texture(rng, color, 0.05, size)[inside]
    for index, part in enumerate(FOREGROUND):
        inside = labels == int(part)
        texture = _texture(
            rng,
            identity.part_colors[index],
            float(identity.noise_amplitude[index]),
            size,
        )
        image[inside] = texture[inside]
    image = image * variation.brightness

    if view_tag is ViewTag.OCCLUDED:
        if variation.occluder_box is not None:
            top, left, bottom, right = variation.occluder_box
        else:
            top, bottom = occluder_rows(
                labels, variation.occluder_anchor, variation.occluder_margin
            )
            left, right = 0, width
        occluder = _texture(rng, variation.occluder_color, 0.04, size)
        image[top:bottom, left:right] = occluder[top:bottom, left:right]
        labels[top:bottom, left:right] = int(Part.BACKGROUND)

    return SampleRecord(
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        part_labels=labels,
        identity=identity.id,
        view_tag=view_tag,
    )


def flip_sample(sample: SampleRecord) -> SampleRecord:
    return replace(
        sample,
        image=np.ascontiguousarray(sample.image[:, ::-1]),
        part_labels=np.ascontiguousarray(sample.part_labels[:, ::-1]),
    )


def erase_sample(
    sample: SampleRecord, box: PixelBox, fill: np.ndarray
) -> SampleRecord:
    """Overwrites `box` with `fill` and relabels it as background."""
    top, left, bottom, right = box
    image = sample.image.copy()
    labels = sample.part_labels.copy()
    image[top:bottom, left:right] = fill[top:bottom, left:right]
    labels[top:bottom, left:right] = int(Part.BACKGROUND)
    return replace(sample, image=image, part_labels=labels)


def _sample_erase_box(
    rng: np.random.Generator, config: AugmentConfig, height: int, width: int
) -> PixelBox | None:
    # up to 100 attempts at a rectangle that fits, as in random erasing
    for _ in range(100):
        area = rng.uniform(*config.erase_area) * height * width
        aspect = rng.uniform(*config.erase_aspect)
        h = int(round(np.sqrt(area * aspect)))
        w = int(round(np.sqrt(area / aspect)))
        if 0 < h < height and 0 < w < width:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, top + h, left + w
    return None


def augment(
    sample: SampleRecord,
    seed: int | Sequence[int],
    config: AugmentConfig | None = None,
    flip: bool | None = None,
    erase_box: PixelBox | None = None,
) -> SampleRecord:
    """
    Random horizontal flip and random erasing.

    Args:
        sample: Sample to augment.
        seed: Seed (or seed sequence) of the augmentation draw.
        config: Probabilities and erase geometry.
        flip: Force (True/False) or draw (None) the flip.
        erase_box: Force an erase rectangle in pixels; None draws one.

    Returns:
        Augmented copy; erased pixels are labelled background.
    """
    config = config or AugmentConfig()
    rng = np.random.default_rng(seed)
    height, width = sample.part_labels.shape
    flip_draw = rng.random() < config.flip_probability
    erase_draw = rng.random() < config.erase_probability
    if flip is None:
        flip = flip_draw
    if erase_box is None and erase_draw:
        erase_box = _sample_erase_box(rng, config, height, width)

    if flip:
        sample = flip_sample(sample)
    if erase_box is not None:
        fill = rng.random((height, width, 3), dtype=np.float32)
        sample = erase_sample(sample, erase_box, fill)
    return sample


def downsample_labels(
    part_labels: np.ndarray, downsample: int, n_regions: int = N_REGIONS
) -> np.ndarray:
    """
    Majority label of every downsample x downsample block; ties go to the
    smallest region index.

    Args:
        part_labels: (..., H, W) region indices in [1, n_regions].
        downsample: Block edge length; must divide H and W.
        n_regions: Number of regions N.

    Returns:
        (..., H / downsample, W / downsample) labels.
    """
    height, width = part_labels.shape[-2:]
    if height % downsample or width % downsample:
        raise ShapeMismatchError(
            f"labels {height}x{width} not divisible by {downsample}"
        )
    lead = part_labels.shape[:-2]
    blocks = part_labels.reshape(
        *lead, height // downsample, downsample, width // downsample, downsample
    )
    counts = np.stack(
        [
            (blocks == region).sum(axis=(-3, -1))
            for region in range(1, n_regions + 1)
        ],
        axis=-1,
    )
    return (counts.argmax(axis=-1) + 1).astype(part_labels.dtype)


@dataclass(frozen=True)
class ManifestRecord:
    split: str
    identity: int
    index: int
    view: ViewTag
    image: str
    label: str

    @property
    def image_id(self) -> str:
        return f"{self.split}/{self.identity:04d}_{self.index:03d}"


@dataclass(frozen=True)
class DatasetManifest:
    """
    Generated dataset index.

    Attributes:
        root: Dataset directory
        seed: Generation seed
        n_identities: Identities generated
        images_per_identity: Images rendered per identity
        size: (H, W) image size
        records: One record per sample
    """

    root: Path
    seed: int
    n_identities: int
    images_per_identity: int
    size: tuple[int, int]
    records: tuple[ManifestRecord, ...]

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    @property
    def counts(self) -> dict[str, int]:
        return {name: len(self.split(name)) for name in SPLITS}

    def validate(self) -> None:
        """
        Checks split hygiene.

        Raises:
            DatasetError: If gallery and probe identities do not overlap,
                an image is in both, or a train identity is also tested.
        """
        ids = {name: {r.identity for r in self.split(name)} for name in SPLITS}
        if not ids["gallery"] & ids["probe"]:
            raise DatasetError("gallery and probe identities do not overlap")
        if ids["train"] & (ids["gallery"] | ids["probe"]):
            raise DatasetError("train identities leak into the test splits")
        gallery_images = {r.image for r in self.split("gallery")}
        if gallery_images & {r.image for r in self.split("probe")}:
            raise DatasetError("probe and gallery share images")

    def write(self) -> Path:
        lines = [
            "# esa-reid synthetic dataset manifest",
            f"# seed = {self.seed}",
            f"# n_identities = {self.n_identities}",
            f"# images_per_identity = {self.images_per_identity}",
            f"# height = {self.size[0]}",
            f"# width = {self.size[1]}",
            *(f"# count_{name} = {n}" for name, n in self.counts.items()),
            "# fields: split identity index view image label",
        ]
        lines += [
            "\t".join(
                (r.split, str(r.identity), str(r.index), r.view.value,
                 r.image, r.label)
            )
            for r in self.records
        ]
        path = self.root / MANIFEST_NAME
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, root: str | Path) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.is_file():
            raise DatasetError(f"no manifest at {path}")
        header: dict[str, str] = {}
        records = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    header[key.strip()] = value.strip()
                continue
            if not line.strip():
                continue
            split, identity, index, view, image, label = line.split("\t")
            records.append(
                ManifestRecord(
                    split, int(identity), int(index), ViewTag(view),
                    image, label,
                )
            )
        return cls(
            root=root,
            seed=int(header["seed"]),
            n_identities=int(header["n_identities"]),
            images_per_identity=int(header["images_per_identity"]),
            size=(int(header["height"]), int(header["width"])),
            records=tuple(records),
        )


_TRAIN_VIEWS = (
    ViewTag.FULL,
    ViewTag.FULL,
    ViewTag.FULL,
    ViewTag.HALF,
    ViewTag.OCCLUDED,
)


def plan_samples(
    n_identities: int, images_per_identity: int
) -> list[tuple[str, int, int, ViewTag]]:
    """
    Split, identity, index and view of every sample.

    The first half of the identities train. Each remaining identity puts
    its first half of images (full views) in the gallery and the rest
    (alternating half / occluded) in the probe set.
    """
    n_train = n_identities // 2
    half = images_per_identity // 2
    plan = []
    for identity in range(n_identities):
        for index in range(images_per_identity):
            if identity < n_train:
                split, view = "train", _TRAIN_VIEWS[index % len(_TRAIN_VIEWS)]
            elif index < half:
                split, view = "gallery", ViewTag.FULL
            else:
                split = "probe"
                view = (ViewTag.HALF, ViewTag.OCCLUDED)[(index - half) % 2]
            plan.append((split, identity, index, view))
    return plan


def save_sample(
    sample: SampleRecord, image_path: Path, label_path: Path
) -> None:
    pixels = np.round(sample.image * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(image_path, format="PNG")
    Image.fromarray(sample.part_labels).save(label_path, format="PNG")


def generate_dataset(
    out_dir: str | Path,
    seed: int,
    n_identities: int = 50,
    images_per_identity: int = 20,
    size: tuple[int, int] = (96, 32),
    workers: int = 1,
    logger: structlog.stdlib.BoundLogger | None = None,
) -> DatasetManifest:
    """
    Renders the benchmark to disk.

    Args:
        out_dir: Dataset root; created if needed.
        seed: Generation seed; equal seeds give byte-identical datasets.
        n_identities: Identities, at least 4.
        images_per_identity: Images per identity, at least 4.
        size: (H, W) of every image.
        workers: Threads rendering samples concurrently.
        logger: Optional structlog logger.

    Returns:
        The written manifest.
    """
    logger = logger or structlog.get_logger(__name__)
    if n_identities < 4 or images_per_identity < 4:
        raise ValueError("need at least 4 identities and 4 images each")
    root = Path(out_dir)
    try:
        for kind in ("images", "labels"):
            for split in SPLITS:
                (root / kind / split).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {root}: {exc}") from exc

    identities = make_identities(n_identities, np.random.default_rng(seed))
    plan = plan_samples(n_identities, images_per_identity)
    logger.info(
        "Generating synthetic dataset",
        root=str(root),
        seed=seed,
        n_identities=n_identities,
        images_per_identity=images_per_identity,
        samples=len(plan),
    )

    def render(entry: tuple[str, int, int, ViewTag]) -> ManifestRecord:
        split, identity, index, view = entry
        rng = np.random.default_rng([seed, identity, index])
        sample = render_sample(
            identities[identity], Variation.sample(rng), view, size
        )
        name = f"{identity:04d}_{index:03d}.png"
        record = ManifestRecord(
            split, identity, index, view,
            f"images/{split}/{name}", f"labels/{split}/{name}",
        )
        save_sample(sample, root / record.image, root / record.label)
        return record

    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            records = tuple(pool.map(render, plan))
        manifest = DatasetManifest(
            root=root,
            seed=seed,
            n_identities=n_identities,
            images_per_identity=images_per_identity,
            size=size,
            records=records,
        )
        manifest.validate()
        manifest.write()
    except DatasetError:
        raise
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {root}: {exc}") from exc
    logger.info("Generated synthetic dataset", **manifest.counts)
    return manifest


@dataclass(frozen=True)
class SplitData:
    """
    In-memory split.

    Attributes:
        images: (B, H, W, 3) float32 in [0, 1]
        labels: (B, H, W) uint8 region indices
        identities: (B,) int64 identity labels
        image_ids: Record identifiers
        views: View tag per sample
    """

    images: np.ndarray
    labels: np.ndarray
    identities: np.ndarray
    image_ids: list[str]
    views: list[ViewTag]

    def __len__(self) -> int:
        return len(self.image_ids)

    def sample(self, index: int) -> SampleRecord:
        return SampleRecord(
            image=self.images[index],
            part_labels=self.labels[index],
            identity=int(self.identities[index]),
            view_tag=self.views[index],
        )


def load_image(
    path: str | Path, size: tuple[int, int] | None = None
) -> np.ndarray:
    """Reads an RGB raster as (H, W, 3) float32 in [0, 1]."""
    with Image.open(path) as handle:
        image = handle.convert("RGB")
        if size is not None and image.size != (size[1], size[0]):
            image = image.resize((size[1], size[0]), Image.Resampling.BILINEAR)
        return np.asarray(image, dtype=np.float32) / 255.0


def load_split(manifest: DatasetManifest, split: str) -> SplitData:
    records = manifest.split(split)
    images, labels = [], []
    for record in records:
        images.append(load_image(manifest.root / record.image))
        with Image.open(manifest.root / record.label) as handle:
            labels.append(np.asarray(handle, dtype=np.uint8))
    height, width = manifest.size
    return SplitData(
        images=(
            np.stack(images)
            if images
            else np.zeros((0, height, width, 3), np.float32)
        ),
        labels=(
            np.stack(labels)
            if labels
            else np.zeros((0, height, width), np.uint8)
        ),
        identities=np.array([r.identity for r in records], dtype=np.int64),
        image_ids=[r.image_id for r in records],
        views=[r.view for r in records],
    )
