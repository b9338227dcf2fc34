from pathlib import Path

import numpy as np
import pytest
import torch
from torch import nn
from torch.func import functional_call

from lib.core.align import Variant
from lib.core.checkpoint import load_checkpoint
from lib.core.config import ExperimentConfig, with_value
from lib.core.descriptor_io import read_descriptor_file
from lib.core.errors import BatchCompositionError, DatasetError, DivergenceError
from lib.core.model import EsaNet, ModelConfig, images_to_tensor
from lib.core.synthdata import downsample_labels, generate_dataset
from lib.core.trainer import (
    FINAL_CHECKPOINT,
    GALLERY_FILE,
    PROBE_FILE,
    TRAIN_LOG_NAME,
    EpochRecord,
    PKSampler,
    StepLosses,
    TrainLog,
    TrainResult,
    Trainer,
    compute_losses,
    train,
)


def record(epoch: int, loss: float = 1.0) -> EpochRecord:
    return EpochRecord(
        epoch=epoch,
        parsing_loss=loss,
        id_loss=loss,
        triplet_loss=loss,
        total_loss=3 * loss,
        parsing_accuracy=0.5,
        unconfident_fraction=0.2,
        learning_rate=0.05,
        wall_clock=float(epoch),
    )


def test_train_log_round_trip(tmp_path: Path) -> None:
    log = TrainLog(tmp_path / "logs" / TRAIN_LOG_NAME)
    log.append(record(1, 2.0))
    log.append(record(2, 1.5))
    loaded = TrainLog.load(tmp_path / "logs" / TRAIN_LOG_NAME)
    assert loaded.records == log.records
    assert loaded.losses() == [(2.0, 2.0, 2.0, 6.0), (1.5, 1.5, 1.5, 4.5)]


def test_train_log_requires_consecutive_epochs() -> None:
    log = TrainLog()
    log.append(record(1))
    with pytest.raises(ValueError, match="consecutive"):
        log.append(record(3))


def test_pk_sampler_batches() -> None:
    identities = np.repeat(np.arange(5), 3)
    sampler = PKSampler(identities, p=2, k=4, seed=1)
    batches = list(sampler.epoch(0))
    assert len(sampler) == len(batches) == 2
    for batch in batches:
        assert batch.shape == (8,)
        labels = identities[batch]
        assert len(set(labels[:4])) == 1
        assert len(set(labels[4:])) == 1
        assert labels[0] != labels[4]
    again = list(sampler.epoch(0))
    assert all(np.array_equal(a, b) for a, b in zip(batches, again))


def test_pk_sampler_needs_enough_identities() -> None:
    with pytest.raises(BatchCompositionError):
        PKSampler(np.array([0, 0, 0]), p=2, k=2, seed=0)


def step_inputs(
    config: ExperimentConfig,
) -> tuple[EsaNet, torch.Tensor, torch.Tensor, torch.Tensor]:
    model = EsaNet(config.model.model_copy(update={"num_identities": 2}))
    generator = torch.Generator().manual_seed(0)
    images = torch.rand(4, 3, 48, 16, generator=generator)
    labels = np.random.default_rng(0).integers(1, 9, (4, 48, 16))
    part_labels = torch.as_tensor(
        downsample_labels(labels.astype(np.uint8), 8), dtype=torch.long
    )
    identities = torch.tensor([0, 0, 1, 1])
    return model, images, part_labels, identities


def test_compute_losses_combines_the_terms(
    tiny_config: ExperimentConfig,
) -> None:
    losses = compute_losses(*step_inputs(tiny_config), tiny_config)
    assert isinstance(losses, StepLosses)
    expected = (
        tiny_config.loss.parsing_weight * losses.parsing
        + losses.identity
        + losses.triplet
    )
    assert torch.allclose(losses.total, expected)
    assert 0.0 <= losses.parsing_accuracy <= 1.0
    assert 0.0 <= losses.unconfident_fraction <= 1.0
    losses.total.backward()


def test_baseline_trains_on_the_triplet_loss_only(
    tiny_config: ExperimentConfig,
) -> None:
    config = with_value(tiny_config, "variant", "baseline")
    losses = compute_losses(*step_inputs(config), config)
    assert float(losses.parsing) == 0.0
    assert float(losses.identity) == 0.0
    assert torch.equal(losses.total, losses.triplet)
    assert losses.unconfident_fraction == 1.0


def test_variant_w_drops_the_unconfident_id_term(
    tiny_config: ExperimentConfig,
) -> None:
    inputs = step_inputs(tiny_config)
    full = compute_losses(*inputs, tiny_config)
    config = with_value(
        tiny_config, "variant", Variant.WITHOUT_UNCONFIDENT.value
    )
    without = compute_losses(*inputs, config)
    assert float(without.unconfident_fraction) == 0.0
    assert float(without.identity) <= float(full.identity)
    assert torch.equal(without.parsing, full.parsing)


def test_tiny_run_writes_every_artifact(tiny_run: TrainResult) -> None:
    run = tiny_run.run_dir
    for name in (
        "config.txt",
        TRAIN_LOG_NAME,
        FINAL_CHECKPOINT,
        GALLERY_FILE,
        PROBE_FILE,
        "checkpoints/epoch_001.npz",
        "checkpoints/epoch_002.npz",
        "dataset/manifest.txt",
    ):
        assert (run / name).is_file(), name

    log = TrainLog.load(run / TRAIN_LOG_NAME)
    assert [r.epoch for r in log.records] == [1, 2]
    assert log.records[0].learning_rate == pytest.approx(0.05)
    assert log.records[1].learning_rate == pytest.approx(0.005)
    assert all(np.isfinite(log.losses()).all(axis=1))

    model, epoch = load_checkpoint(run / FINAL_CHECKPOINT)
    assert epoch == 2
    assert model.config.num_identities == 4
    assert model.config.seed == 3

    gallery = read_descriptor_file(run / GALLERY_FILE)
    probes = read_descriptor_file(run / PROBE_FILE)
    assert len(gallery) == len(probes) == 8
    assert set(gallery.identities) == set(probes.identities) == {4, 5, 6, 7}
    assert gallery.descriptors.n_regions == 8
    assert gallery.descriptors.feature_dim == 4


def test_exported_descriptors_match_the_final_checkpoint(
    tiny_run: TrainResult,
) -> None:
    model, _ = load_checkpoint(tiny_run.checkpoint)
    with torch.no_grad():
        before = tiny_run.model(torch.zeros(1, 3, 48, 16))
        after = model(torch.zeros(1, 3, 48, 16))
    assert torch.equal(before.reduced.data, after.reduced.data)
    written = read_descriptor_file(tiny_run.run_dir / GALLERY_FILE)
    assert written.image_ids == tiny_run.gallery.image_ids
    assert torch.allclose(
        written.descriptors.region_features,
        tiny_run.gallery.descriptors.region_features.float(),
    )


def test_same_seed_reproduces_the_train_log(
    tiny_config: ExperimentConfig, tiny_run: TrainResult, tmp_path: Path
) -> None:
    rerun = train(tiny_config, out_dir=tmp_path / "again")
    assert rerun.log.losses() == tiny_run.log.losses()
    assert [r.parsing_accuracy for r in rerun.log.records] == [
        r.parsing_accuracy for r in tiny_run.log.records
    ]


def test_existing_dataset_is_reused(
    tiny_config: ExperimentConfig, tmp_path: Path
) -> None:
    root = tmp_path / "data"
    generate_dataset(
        root, seed=3, n_identities=8, images_per_identity=4, size=(48, 16)
    )
    config = with_value(tiny_config, "data.root", root)
    manifest = Trainer(config, out_dir=tmp_path / "run").prepare_data()
    assert manifest.root == root
    assert not (tmp_path / "run" / "dataset").exists()


def test_dataset_of_another_size_is_rejected(
    tiny_config: ExperimentConfig, tmp_path: Path
) -> None:
    root = tmp_path / "data"
    generate_dataset(
        root, seed=3, n_identities=4, images_per_identity=4, size=(32, 16)
    )
    config = with_value(tiny_config, "data.root", root)
    with pytest.raises(DatasetError, match="model expects"):
        Trainer(config, out_dir=tmp_path / "run").prepare_data()


def test_non_finite_loss_stops_training(
    tiny_config: ExperimentConfig,
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    def diverged(*_: object) -> StepLosses:
        nan = torch.tensor(float("nan"), requires_grad=True)
        return StepLosses(nan, nan, nan, nan, 0.0, 0.0)

    monkeypatch.setattr("lib.core.trainer.compute_losses", diverged)
    with pytest.raises(DivergenceError, match="epoch 1 step 0"):
        train(tiny_config, out_dir=tmp_path / "run")


def test_descriptor_batches_match_single_images(
    tiny_run: TrainResult,
) -> None:
    model = tiny_run.model
    images = images_to_tensor(
        [np.full((48, 16, 3), v, dtype=np.float32) for v in (0.2, 0.8)]
    )
    with torch.no_grad():
        batched = model(images).reduced.data
        single = model(images[1:]).reduced.data
    assert torch.allclose(batched[1:], single, atol=1e-5)


class BatchLoss(nn.Module):
    """Total training loss of a fixed batch as a function of the images."""

    def __init__(
        self,
        net: EsaNet,
        part_labels: torch.Tensor,
        identities: torch.Tensor,
        config: ExperimentConfig,
    ) -> None:
        super().__init__()
        self.net = net
        self.part_labels = part_labels
        self.identities = identities
        self.config = config

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        losses = compute_losses(
            self.net, images, self.part_labels, self.identities, self.config
        )
        return losses.total


def test_total_loss_gradients_through_the_network(
    tiny_config: ExperimentConfig,
) -> None:
    # 8x4 input, one block: a 4x2 feature grid with 4 regions
    net = EsaNet(
        ModelConfig(
            input_height=8,
            input_width=4,
            downsample=2,
            c=3,
            c_new=3,
            n_regions=4,
            num_identities=2,
        )
    ).double()
    generator = torch.Generator().manual_seed(0)
    images = torch.rand(4, 3, 8, 4, generator=generator, dtype=torch.float64)
    part_labels = torch.randint(1, 5, (4, 4, 2), generator=generator)
    loss = BatchLoss(
        net, part_labels, torch.tensor([0, 0, 1, 1]), tiny_config
    )
    names = [name for name, _ in loss.named_parameters()]
    assert any(name.startswith("net.classifiers.") for name in names)
    leaves = [
        p.detach().clone().requires_grad_() for p in loss.parameters()
    ]

    def total(batch: torch.Tensor, *params: torch.Tensor) -> torch.Tensor:
        return functional_call(loss, dict(zip(names, params)), (batch,))

    assert torch.autograd.gradcheck(
        total,
        (images.requires_grad_(), *leaves),
        eps=1e-6,
        atol=1e-5,
        rtol=1e-4,
    )


def test_labels_are_downsampled_one_batch_at_a_time(
    tiny_config: ExperimentConfig,
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    batch_sizes: list[int] = []

    def recording(labels: np.ndarray, factor: int) -> np.ndarray:
        batch_sizes.append(labels.shape[0])
        return downsample_labels(labels, factor)

    monkeypatch.setattr("lib.core.trainer.downsample_labels", recording)
    train(with_value(tiny_config, "optimizer.epochs", 1), out_dir=tmp_path)
    assert batch_sizes
    assert set(batch_sizes) == {4}
