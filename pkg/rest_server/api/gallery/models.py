from pydantic import BaseModel, Field


class QueryRequest(BaseModel):
    image_path: str
    top_k: int = Field(default=10, ge=1)


class Match(BaseModel):
    image_id: str
    identity: int
    distance: float | None


class QueryResponse(BaseModel):
    matches: list[Match]
    request_id: str


class InfoResponse(BaseModel):
    size: int
    n_regions: int
    c_new: int
    variant: str
    tau: float
    input_height: int
    input_width: int
