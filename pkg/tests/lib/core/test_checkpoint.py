from pathlib import Path

import numpy as np
import pytest
import torch

from lib.core.checkpoint import load_checkpoint, save_checkpoint
from lib.core.errors import CheckpointFormatError
from lib.core.model import EsaNet, ModelConfig

CONFIG = ModelConfig(
    input_height=16, input_width=8, downsample=4, c=4, c_new=3,
    num_identities=3, seed=5,
)


def test_round_trip_reproduces_forward_pass(tmp_path: Path) -> None:
    model = EsaNet(CONFIG).eval()
    path = save_checkpoint(tmp_path / "ckpt.npz", model, epoch=7)
    loaded, epoch = load_checkpoint(path)

    assert epoch == 7
    assert loaded.config == CONFIG
    assert not loaded.training
    images = torch.rand(2, 3, 16, 8)
    with torch.no_grad():
        before = model(images)
        after = loaded(images)
    assert torch.equal(before.parsing.probs, after.parsing.probs)
    assert torch.equal(before.reduced.data, after.reduced.data)


def test_untrained_epoch_marker(tmp_path: Path) -> None:
    path = save_checkpoint(tmp_path / "nested" / "c.npz", EsaNet(CONFIG))
    assert load_checkpoint(path)[1] == -1


def rewrite(path: Path, **changes: np.ndarray | None) -> None:
    with np.load(path) as archive:
        entries = {key: archive[key] for key in archive.files}
    entries.update(changes)
    for key in [k for k, v in changes.items() if v is None]:
        del entries[key]
    with path.open("wb") as handle:
        np.savez(handle, **entries)


@pytest.mark.parametrize(
    "changes",
    [
        {"__format__": np.array("something-else")},
        {"__version__": np.array(99)},
        {"__epoch__": None},
        {"parsing_head.weight": None},
        {"extra.weight": np.zeros(3, dtype="<f4")},
        {"reduction.weight": np.zeros((2, 2), dtype="<f4")},
    ],
)
def test_malformed_checkpoints_are_rejected(
    tmp_path: Path, changes: dict[str, np.ndarray | None]
) -> None:
    path = save_checkpoint(tmp_path / "c.npz", EsaNet(CONFIG))
    rewrite(path, **changes)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


@pytest.mark.parametrize(
    "content", [b"", b"not an archive", b"PK\x03\x04 broken zip"]
)
def test_unreadable_files_are_format_errors(
    tmp_path: Path, content: bytes
) -> None:
    path = tmp_path / "c.npz"
    path.write_bytes(content)
    with pytest.raises(CheckpointFormatError, match="cannot read"):
        load_checkpoint(path)


def test_invalid_model_config_is_a_format_error(tmp_path: Path) -> None:
    path = save_checkpoint(tmp_path / "c.npz", EsaNet(CONFIG))
    rewrite(path, __config__=np.array('{"downsample": 3}'))
    with pytest.raises(CheckpointFormatError, match="config"):
        load_checkpoint(path)


def test_missing_checkpoint_is_not_found(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.npz")
