from dataclasses import asdict, dataclass

from fastapi.responses import JSONResponse


@dataclass
class HTTPError:
    """
    HTTPError class represents an HTTP error

    Attributes:
        error_code: HTTP error code
        error_msg: HTTP error message
    """

    error_code: int
    error_msg: str

    def to_response(self) -> JSONResponse:
        return JSONResponse(status_code=self.error_code, content=asdict(self))
