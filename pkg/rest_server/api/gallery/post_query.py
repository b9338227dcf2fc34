from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import APIRouter, Request
from fastapi.responses import JSONResponse
from PIL import UnidentifiedImageError
from starlette.concurrency import run_in_threadpool

from lib.core.errors import ShapeMismatchError
from lib.core.gallery_index import GalleryIndex, GalleryMatch
from lib.core.synthdata import load_image
from lib.rest_server.http_error import HTTPError
from rest_server.api.gallery.models import Match, QueryRequest, QueryResponse

router = APIRouter()


def resolve_image_path(image_root: Path, image_path: str) -> Path | None:
    """
    Resolves `image_path` against `image_root`, following symlinks.

    Returns:
        The resolved path, or None if it lies outside the root.
    """
    resolved = (image_root / image_path).resolve()
    return resolved if resolved.is_relative_to(image_root) else None


def run_query(
    index: GalleryIndex, image_path: Path, top_k: int
) -> list[GalleryMatch]:
    image: np.ndarray = load_image(image_path)
    return index.query(image, top_k=top_k)


@router.post("/query", response_model=QueryResponse)
async def post_query(
    request: Request, data: QueryRequest
) -> QueryResponse | JSONResponse:
    """
    Ranks the gallery against the image at `image_path`, relative to
    the image root or absolute under it.
    """
    context = request.state.context
    image_path = resolve_image_path(context.image_root, data.image_path)
    if image_path is None:
        context.logger.warning(
            "Query image outside the image root", image_path=data.image_path
        )
        error = HTTPError(403, f"image {data.image_path} is not servable")
        return error.to_response()
    try:
        matches = await run_in_threadpool(
            run_query, context.gallery_index, image_path, data.top_k
        )
    except (OSError, UnidentifiedImageError) as exc:
        context.logger.warning(
            "Query image unreadable", image_path=data.image_path, error=str(exc)
        )
        error = HTTPError(404, f"cannot read image {data.image_path}")
        return error.to_response()
    except ShapeMismatchError as exc:
        context.logger.warning(
            "Query image rejected", image_path=data.image_path, error=str(exc)
        )
        return HTTPError(422, str(exc)).to_response()

    context.logger.info(
        "Query answered", image_path=data.image_path, matches=len(matches)
    )
    return QueryResponse(
        matches=[Match(**asdict(match)) for match in matches],
        request_id=context.request_id,
    )
