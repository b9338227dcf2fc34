"""
Checkpoint container: a NumPy `.npz` archive holding every named
parameter array as little-endian float32, plus four metadata entries:

    __format__   "esa-checkpoint"
    __version__  format version (int)
    __config__   ModelConfig as JSON
    __epoch__    epoch the parameters were saved after (-1 if untrained)
"""

import json
import zipfile
from pathlib import Path

import numpy as np
import structlog
import torch

from lib.core.errors import CheckpointFormatError
from lib.core.model import EsaNet, ModelConfig

FORMAT_NAME = "esa-checkpoint"
FORMAT_VERSION = 1

_META_KEYS = ("__format__", "__version__", "__config__", "__epoch__")


def save_checkpoint(
    path: str | Path,
    model: EsaNet,
    epoch: int = -1,
    logger: structlog.stdlib.BoundLogger | None = None,
) -> Path:
    """
    Saves the model parameters and configuration.

    Args:
        path: Destination file.
        model: Network to save; parameters are stored as float32.
        epoch: Epoch counter recorded with the parameters.
        logger: Optional structlog logger.

    Returns:
        The written path.
    """
    logger = logger or structlog.get_logger(__name__)
    path = Path(path)
    arrays: dict[str, np.ndarray] = {
        name: tensor.detach().cpu().numpy().astype("<f4")
        for name, tensor in model.state_dict().items()
    }
    arrays["__format__"] = np.array(FORMAT_NAME)
    arrays["__version__"] = np.array(FORMAT_VERSION)
    arrays["__config__"] = np.array(model.config.model_dump_json())
    arrays["__epoch__"] = np.array(epoch)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    logger.info("Saved checkpoint", path=str(path), epoch=epoch)
    return path


def load_checkpoint(path: str | Path) -> tuple[EsaNet, int]:
    """
    Rebuilds the network stored at `path`.

    Returns:
        The network in eval mode and the recorded epoch.

    Raises:
        CheckpointFormatError: On unknown format or version, or parameter
            names that do not match the configured architecture, or a
            file that is not a readable archive.
    """
    try:
        with np.load(Path(path), allow_pickle=False) as archive:
            entries = {key: archive[key] for key in archive.files}
    except FileNotFoundError:
        raise
    except (OSError, EOFError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}") from exc
    for key in _META_KEYS:
        if key not in entries:
            raise CheckpointFormatError(f"checkpoint lacks {key}")
    if str(entries["__format__"]) != FORMAT_NAME:
        raise CheckpointFormatError("not an ESA checkpoint")
    if int(entries["__version__"]) != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {int(entries['__version__'])}"
        )
    try:
        config = ModelConfig.model_validate(
            json.loads(str(entries["__config__"]))
        )
    except ValueError as exc:
        raise CheckpointFormatError(f"bad model config: {exc}") from exc
    model = EsaNet(config)
    state = {
        name: torch.from_numpy(array.astype(np.float32))
        for name, array in entries.items()
        if name not in _META_KEYS
    }
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointFormatError(str(exc)) from exc
    model.eval()
    return model, int(entries["__epoch__"])
