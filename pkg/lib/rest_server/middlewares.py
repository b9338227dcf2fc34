import time
import uuid

import structlog
from fastapi import Request, Response
from starlette.middleware.base import RequestResponseEndpoint

from lib.rest_server.context import Context

REQUEST_ID_HEADER = "X-Request-ID"


async def create_context(
    request: Request,
    call_next: RequestResponseEndpoint,
) -> Response:
    """
    Bind a per-request context (logger, request ID, gallery) to the
    request and log how the query went.

    The request ID is echoed back in the `X-Request-ID` header.

    Args:
        request: FastAPI request object
        call_next: Next middleware in chain

    Returns:
        Response: FastAPI response object
    """
    request_id = uuid.uuid4().hex
    index = request.app.gallery_index

    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(
        url=str(request.url),
        method=request.method,
        request_id=request_id,
        client_host=request.client.host if request.client else None,
        variant=index.variant.value,
        gallery_size=len(index),
    )
    request.state.context = Context(
        logger=request.app.logger,
        request_id=request_id,
        gallery_index=index,
        image_root=request.app.image_root,
    )

    started = time.perf_counter()
    response = await call_next(request)
    request.app.logger.info(
        "Request served",
        status_code=response.status_code,
        elapsed_ms=round(1000 * (time.perf_counter() - started), 2),
    )
    response.headers[REQUEST_ID_HEADER] = request_id
    return response
