"""
Descriptor file: gallery/probe export of aligned descriptors.

Layout
------
A plain-text header, one `key = value` per line, closed by an empty line::

    ESA-REID DESCRIPTORS
    format_version = 2
    n_regions = <N>
    c_new = <C>
    count = <records>

followed by `count` binary records, all little-endian:

    uint32   byte length L of the image id
    L bytes  image id, UTF-8
    int64    identity label
    float32  (N-1) * C region features f~_1 .. f~_{N-1}, row-major
    float32  C unconfident feature f_un
    float32  N scores: S_1 .. S_{N-1}, then S_un
    float32  background score S_N
"""

import struct
from pathlib import Path

import numpy as np
import structlog
import torch

from lib.core.align import DescriptorSet, PersonDescriptor
from lib.core.errors import DescriptorFormatError

MAGIC = "ESA-REID DESCRIPTORS"
FORMAT_VERSION = 2

_FLOAT = np.dtype("<f4")
_ID_LENGTH = struct.Struct("<I")
_IDENTITY = struct.Struct("<q")


def write_descriptor_file(
    path: str | Path,
    descriptor_set: DescriptorSet,
    logger: structlog.stdlib.BoundLogger | None = None,
) -> Path:
    """
    Writes a descriptor set to `path`.

    Args:
        path: Destination file.
        descriptor_set: Records to write; tensors are cast to float32.
        logger: Optional structlog logger.

    Returns:
        The written path.
    """
    logger = logger or structlog.get_logger(__name__)
    path = Path(path)
    descriptors = descriptor_set.descriptors.detach().map(
        lambda t: t.cpu().to(torch.float32)
    )
    n_regions = descriptors.n_regions
    c_new = descriptors.feature_dim
    header = (
        f"{MAGIC}\n"
        f"format_version = {FORMAT_VERSION}\n"
        f"n_regions = {n_regions}\n"
        f"c_new = {c_new}\n"
        f"count = {len(descriptor_set)}\n"
        "\n"
    )
    region = descriptors.region_features.numpy().astype(_FLOAT)
    un_feat = descriptors.unconfident_feature.numpy().astype(_FLOAT)
    scores = np.concatenate(
        [
            descriptors.visibility.numpy(),
            descriptors.unconfident_score.numpy()[:, None],
            descriptors.background_visibility.numpy()[:, None],
        ],
        axis=1,
    ).astype(_FLOAT)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(header.encode("utf-8"))
        for i, (image_id, identity) in enumerate(
            zip(
                descriptor_set.image_ids,
                descriptor_set.identities,
                strict=True,
            )
        ):
            encoded = image_id.encode("utf-8")
            handle.write(_ID_LENGTH.pack(len(encoded)))
            handle.write(encoded)
            handle.write(_IDENTITY.pack(int(identity)))
            handle.write(region[i].tobytes())
            handle.write(un_feat[i].tobytes())
            handle.write(scores[i].tobytes())

    logger.info(
        "Wrote descriptor file",
        path=str(path),
        count=len(descriptor_set),
        n_regions=n_regions,
        c_new=c_new,
    )
    return path


def _parse_header(raw: bytes) -> tuple[dict[str, int], int]:
    end = raw.find(b"\n\n")
    if end < 0:
        raise DescriptorFormatError("header is not terminated")
    try:
        lines = raw[:end].decode("utf-8").split("\n")
    except UnicodeDecodeError as exc:
        raise DescriptorFormatError("header is not UTF-8") from exc
    if lines[0] != MAGIC:
        raise DescriptorFormatError(f"bad magic line {lines[0]!r}")
    header: dict[str, int] = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise DescriptorFormatError(f"bad header line {line!r}")
        try:
            header[key.strip()] = int(value.strip())
        except ValueError as exc:
            raise DescriptorFormatError(
                f"header value of {key.strip()!r} is not an integer"
            ) from exc
    for key in ("format_version", "n_regions", "c_new", "count"):
        if key not in header:
            raise DescriptorFormatError(f"header lacks {key}")
    if header["format_version"] != FORMAT_VERSION:
        raise DescriptorFormatError(
            f"unsupported format version {header['format_version']}"
        )
    if header["n_regions"] < 2 or header["c_new"] < 1 or header["count"] < 0:
        raise DescriptorFormatError(f"inconsistent header sizes {header}")
    return header, end + 2


def read_descriptor_file(path: str | Path) -> DescriptorSet:
    """
    Reads a descriptor file written by `write_descriptor_file`.

    Raises:
        DescriptorFormatError: On malformed header or truncated records.
    """
    raw = Path(path).read_bytes()
    header, offset = _parse_header(raw)
    n_regions, c_new = header["n_regions"], header["c_new"]
    region_len = (n_regions - 1) * c_new
    float_count = region_len + c_new + n_regions + 1

    image_ids: list[str] = []
    identities: list[int] = []
    records = []
    try:
        for _ in range(header["count"]):
            (length,) = _ID_LENGTH.unpack_from(raw, offset)
            offset += _ID_LENGTH.size
            image_ids.append(raw[offset : offset + length].decode("utf-8"))
            offset += length
            (identity,) = _IDENTITY.unpack_from(raw, offset)
            identities.append(identity)
            offset += _IDENTITY.size
            values = np.frombuffer(
                raw, dtype=_FLOAT, count=float_count, offset=offset
            )
            records.append(values)
            offset += float_count * _FLOAT.itemsize
    except (struct.error, ValueError) as exc:
        raise DescriptorFormatError(f"malformed record in {path}") from exc
    if offset != len(raw):
        raise DescriptorFormatError(f"{len(raw) - offset} trailing bytes")

    table = (
        np.stack(records)
        if records
        else np.zeros((0, float_count), dtype=_FLOAT)
    )
    table = torch.from_numpy(table.astype(np.float32))
    count = table.shape[0]
    region = table[:, :region_len].reshape(count, n_regions - 1, c_new)
    un_feat = table[:, region_len : region_len + c_new]
    scores = table[:, region_len + c_new :]
    descriptors = PersonDescriptor(
        region_features=region.contiguous(),
        visibility=scores[:, :-2].contiguous(),
        unconfident_feature=un_feat.contiguous(),
        unconfident_score=scores[:, -2].contiguous(),
        background_visibility=scores[:, -1].contiguous(),
    )
    return DescriptorSet(
        image_ids=image_ids, identities=identities, descriptors=descriptors
    )
