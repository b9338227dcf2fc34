from dataclasses import dataclass
from pathlib import Path

import structlog

from lib.core.gallery_index import GalleryIndex


@dataclass
class Context:
    """
    Context class represents essential connectors for each request.

    Attributes:
        logger: structlog logger
        request_id: string request ID
        gallery_index: gallery the service ranks queries against
        image_root: directory query images must lie under
    """

    logger: structlog.stdlib.BoundLogger
    request_id: str
    gallery_index: GalleryIndex
    image_root: Path
