from fastapi import APIRouter

from .get_info import router as get_info_router
from .post_query import router as post_query_router

router = APIRouter(prefix="/api/v1/gallery", tags=["gallery"])
router.include_router(post_query_router)
router.include_router(get_info_router)
