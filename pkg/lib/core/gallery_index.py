import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
import torch

from lib.core.align import (
    DescriptorSet,
    DistanceConfig,
    PersonDescriptor,
    Variant,
    build_descriptor,
    cross_distances,
)
from lib.core.checkpoint import load_checkpoint
from lib.core.descriptor_io import read_descriptor_file
from lib.core.errors import ShapeMismatchError
from lib.core.model import EsaNet, images_to_tensor


@dataclass(frozen=True)
class GalleryMatch:
    """
    One ranked gallery entry.

    Attributes:
        image_id: Gallery record identifier
        identity: Gallery identity label
        distance: Extended distance, None when nothing is comparable
    """

    image_id: str
    identity: int
    distance: float | None


class GalleryIndex:
    """
    Ranks an exported gallery against query images.

    Args:
        model: Trained network.
        gallery: Descriptors built by the same network and variant.
        tau: Entropy threshold of the unconfident mask.
        variant: Descriptor variant of the gallery.
        distance_config: Distance settings.
        logger: Optional structlog logger.
    """

    def __init__(
        self,
        model: EsaNet,
        gallery: DescriptorSet,
        tau: float = 0.5,
        variant: Variant = Variant.FULL,
        distance_config: DistanceConfig | None = None,
        logger: structlog.stdlib.BoundLogger | None = None,
    ) -> None:
        descriptors = gallery.descriptors
        config = model.config
        if (descriptors.n_regions, descriptors.feature_dim) != (
            config.n_regions,
            config.c_new,
        ):
            raise ShapeMismatchError(
                f"gallery has N={descriptors.n_regions}, "
                f"c_new={descriptors.feature_dim}; model has "
                f"N={config.n_regions}, c_new={config.c_new}"
            )
        self.model = model.eval()
        self.gallery = gallery
        self.tau = tau
        self.variant = variant
        self.distance_config = distance_config or DistanceConfig()
        self.logger = logger or structlog.get_logger(__name__)
        self._lock = threading.Lock()

    @classmethod
    def from_files(
        cls,
        checkpoint: str | Path,
        gallery_file: str | Path,
        tau: float = 0.5,
        variant: Variant | str = Variant.FULL,
        logger: structlog.stdlib.BoundLogger | None = None,
    ) -> "GalleryIndex":
        model, _ = load_checkpoint(checkpoint)
        gallery = read_descriptor_file(gallery_file)
        index = cls(
            model, gallery, tau, Variant.parse(variant), logger=logger
        )
        index.logger.info(
            "Loaded gallery index",
            checkpoint=str(checkpoint),
            gallery_file=str(gallery_file),
            size=len(gallery),
        )
        return index

    def __len__(self) -> int:
        return len(self.gallery)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.model.config.input_height, self.model.config.input_width, 3

    def describe(self, image: np.ndarray) -> PersonDescriptor:
        """Descriptor of one H x W x 3 image in [0, 1], batch of one."""
        if image.shape != self.input_shape:
            raise ShapeMismatchError(
                f"expected image of shape {self.input_shape}, "
                f"got {image.shape}"
            )
        with self._lock, torch.no_grad():
            output = self.model(images_to_tensor([image]))
        return build_descriptor(
            output.reduced,
            output.parsing,
            self.tau,
            self.variant,
            self.distance_config,
        )

    def query(self, image: np.ndarray, top_k: int = 10) -> list[GalleryMatch]:
        """
        Nearest gallery entries by extended distance; pairs without
        comparable regions rank last, ties keep gallery order.
        """
        pairs = cross_distances(
            self.describe(image),
            self.gallery.descriptors,
            self.distance_config,
        )
        distances = pairs.values[0].double().numpy()
        missing = pairs.missing[0].numpy()
        order = np.lexsort(
            (np.arange(len(distances)), np.where(missing, 0.0, distances),
             missing)
        )
        return [
            GalleryMatch(
                image_id=self.gallery.image_ids[i],
                identity=int(self.gallery.identities[i]),
                distance=None if missing[i] else float(distances[i]),
            )
            for i in order[:top_k]
        ]
