from fastapi import APIRouter, Request

from rest_server.api.gallery.models import InfoResponse

router = APIRouter()


@router.get("/info", response_model=InfoResponse)
async def get_info(request: Request) -> InfoResponse:
    """
    Describes the loaded gallery and the network serving it.
    """
    index = request.state.context.gallery_index
    config = index.model.config
    return InfoResponse(
        size=len(index),
        n_regions=config.n_regions,
        c_new=config.c_new,
        variant=index.variant.value,
        tau=index.tau,
        input_height=config.input_height,
        input_width=config.input_width,
    )
