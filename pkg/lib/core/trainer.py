"""
Training loop: seeded P x K batches, multi-task objective, plain SGD with
a step learning-rate decay, one checkpoint and one TrainLog record per
epoch, descriptor export of the test splits at the end.
"""

import math
import time
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
import torch
from pydantic import BaseModel
from tqdm import tqdm

from lib.core.align import (
    DescriptorSet,
    PersonDescriptor,
    Variant,
    build_descriptor,
    pairwise_extended_distances,
    region_features,
)
from lib.core.checkpoint import save_checkpoint
from lib.core.config import ExperimentConfig, run_dir, to_config_text
from lib.core.descriptor_io import write_descriptor_file
from lib.core.errors import BatchCompositionError, DatasetError, DivergenceError
from lib.core.losses import (
    batch_hard_triplet,
    extended_id_loss,
    parsing_loss,
    total_loss,
)
from lib.core.model import EsaNet, images_to_tensor
from lib.core.synthdata import (
    MANIFEST_NAME,
    DatasetManifest,
    SplitData,
    augment,
    downsample_labels,
    generate_dataset,
    load_split,
)

TRAIN_LOG_NAME = "train_log.jsonl"
CONFIG_FILE = "config.txt"
GALLERY_FILE = "gallery.desc"
PROBE_FILE = "probe.desc"
FINAL_CHECKPOINT = "checkpoint.npz"


class EpochRecord(BaseModel):
    """
    One TrainLog line, averaged over the epoch's steps.

    Attributes:
        epoch: 1-based epoch number
        parsing_loss: L_parsing
        id_loss: Visibility-weighted ID loss
        triplet_loss: Batch-hard triplet loss
        total_loss: Weighted total
        parsing_accuracy: Pixel accuracy of the argmax parsing map
        unconfident_fraction: S_un / (h * w)
        learning_rate: Learning rate used during the epoch
        wall_clock: Seconds since training started
    """

    epoch: int
    parsing_loss: float
    id_loss: float
    triplet_loss: float
    total_loss: float
    parsing_accuracy: float
    unconfident_fraction: float
    learning_rate: float
    wall_clock: float


class TrainLog:
    """Append-only per-epoch log mirrored to a JSON-lines file."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.records: list[EpochRecord] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch != self.records[-1].epoch + 1:
            raise ValueError("train log records must be consecutive epochs")
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(record.model_dump_json() + "\n")

    def losses(self) -> list[tuple[float, float, float, float]]:
        return [
            (r.parsing_loss, r.id_loss, r.triplet_loss, r.total_loss)
            for r in self.records
        ]

    @classmethod
    def load(cls, path: str | Path) -> "TrainLog":
        log = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                log.append(EpochRecord.model_validate_json(line))
        log.path = Path(path)
        return log


class PKSampler:
    """
    Seeded P identities x K images batches.

    Identities with fewer than K images are sampled with replacement.
    """

    def __init__(
        self, identities: np.ndarray, p: int, k: int, seed: int
    ) -> None:
        self.p = p
        self.k = k
        self.seed = seed
        self.by_identity = {
            int(identity): np.flatnonzero(identities == identity)
            for identity in np.unique(identities)
        }
        if len(self.by_identity) < p:
            raise BatchCompositionError(
                f"{len(self.by_identity)} identities cannot fill P={p}"
            )
        self.n_batches = math.ceil(len(identities) / (p * k))

    def __len__(self) -> int:
        return self.n_batches

    def epoch(self, epoch: int) -> Iterator[np.ndarray]:
        rng = np.random.default_rng([self.seed, epoch])
        keys = np.array(sorted(self.by_identity))
        for _ in range(self.n_batches):
            chosen = rng.choice(keys, size=self.p, replace=False)
            batch = [
                rng.choice(
                    self.by_identity[int(identity)],
                    size=self.k,
                    replace=len(self.by_identity[int(identity)]) < self.k,
                )
                for identity in chosen
            ]
            yield np.concatenate(batch)


@dataclass(frozen=True)
class StepLosses:
    parsing: torch.Tensor
    identity: torch.Tensor
    triplet: torch.Tensor
    total: torch.Tensor
    parsing_accuracy: float
    unconfident_fraction: float


def compute_losses(
    model: EsaNet,
    images: torch.Tensor,
    part_labels: torch.Tensor,
    identities: torch.Tensor,
    config: ExperimentConfig,
) -> StepLosses:
    """
    Forward pass and every loss term of one batch.

    Args:
        model: Network in train mode.
        images: (B, 3, H, W) batch.
        part_labels: (B, h, w) region labels at feature resolution.
        identities: (B,) labels in [0, num_identities).
        config: Experiment settings (variant, tau, weights).
    """
    output = model(images)
    h, w = output.parsing.spatial_shape
    descriptor = build_descriptor(
        output.reduced,
        output.parsing,
        config.tau,
        config.variant,
        config.distance,
    )
    pairs = pairwise_extended_distances(descriptor, config.distance)
    triplet = batch_hard_triplet(
        pairs.values, identities, config.loss.margin, pairs.missing
    )
    with torch.no_grad():
        predicted = output.parsing.probs.argmax(dim=-3) + 1
        accuracy = float((predicted == part_labels).float().mean())
        fraction = float(descriptor.unconfident_score.mean()) / (h * w)

    zero = torch.zeros((), dtype=triplet.dtype)
    if config.variant is Variant.BASELINE:
        return StepLosses(zero, zero, triplet, triplet, accuracy, fraction)

    plain = region_features(output.reduced, output.parsing)[..., :-1, :]
    identity_loss = extended_id_loss(
        plain,
        descriptor.visibility,
        descriptor.unconfident_feature,
        descriptor.unconfident_score,
        model.classifiers,
        identities,
        total_mass=float(h * w),
        include_unconfident=config.variant is not Variant.WITHOUT_UNCONFIDENT,
    )
    parsing = parsing_loss(output.parsing, part_labels)
    total = total_loss(parsing, identity_loss, triplet, config.loss)
    return StepLosses(
        parsing, identity_loss, triplet, total, accuracy, fraction
    )


@torch.no_grad()
def compute_descriptors(
    model: EsaNet,
    split: SplitData,
    config: ExperimentConfig,
    batch_size: int = 64,
) -> DescriptorSet:
    """Descriptors of every image in `split`, no test-time augmentation."""
    was_training = model.training
    model.eval()
    parts = []
    for start in range(0, len(split), batch_size):
        images = images_to_tensor(split.images[start : start + batch_size])
        output = model(images)
        parts.append(
            build_descriptor(
                output.reduced,
                output.parsing,
                config.tau,
                config.variant,
                config.distance,
            )
        )
    model.train(was_training)
    return DescriptorSet(
        image_ids=list(split.image_ids),
        identities=[int(i) for i in split.identities],
        descriptors=PersonDescriptor.cat(parts),
    )


@dataclass(frozen=True)
class TrainResult:
    """
    Attributes:
        model: Trained network (eval mode)
        log: Per-epoch records
        run_dir: Directory holding every artifact of the run
        checkpoint: Final checkpoint path
        gallery: Gallery descriptors
        probes: Probe descriptors
    """

    model: EsaNet
    log: TrainLog
    run_dir: Path
    checkpoint: Path
    gallery: DescriptorSet
    probes: DescriptorSet


class Trainer:
    """
    Runs one training job inside its run directory.

    Args:
        config: Experiment configuration.
        out_dir: Run directory; defaults to `run_dir(config)`.
        logger: Optional structlog logger.
        show_progress: Display a tqdm bar per epoch.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        out_dir: str | Path | None = None,
        logger: structlog.stdlib.BoundLogger | None = None,
        show_progress: bool = False,
    ) -> None:
        self.config = config
        self.run_dir = Path(out_dir) if out_dir is not None else run_dir(config)
        self.logger = logger or structlog.get_logger(__name__)
        self.show_progress = show_progress

    def prepare_data(self) -> DatasetManifest:
        """Loads the configured dataset, generating it when needed."""
        data = self.config.data
        model = self.config.model
        if data.root is not None:
            manifest = DatasetManifest.load(data.root)
        elif (self.run_dir / "dataset" / MANIFEST_NAME).is_file():
            manifest = DatasetManifest.load(self.run_dir / "dataset")
        else:
            manifest = generate_dataset(
                self.run_dir / "dataset",
                seed=self.config.seed,
                n_identities=data.n_identities,
                images_per_identity=data.images_per_identity,
                size=(model.input_height, model.input_width),
                workers=data.workers,
                logger=self.logger,
            )
        if manifest.size != (model.input_height, model.input_width):
            raise DatasetError(
                f"dataset images are {manifest.size}, model expects "
                f"{(model.input_height, model.input_width)}"
            )
        manifest.validate()
        return manifest

    def build_model(self, num_identities: int) -> EsaNet:
        model_config = self.config.model.model_copy(
            update={"num_identities": num_identities, "seed": self.config.seed}
        )
        return EsaNet(model_config)

    def run(self) -> TrainResult:
        config = self.config
        torch.manual_seed(config.seed)
        torch.use_deterministic_algorithms(True, warn_only=True)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / CONFIG_FILE).write_text(
            to_config_text(config), encoding="utf-8"
        )

        manifest = self.prepare_data()
        train = load_split(manifest, "train")
        identity_keys, identities = np.unique(
            train.identities, return_inverse=True
        )
        model = self.build_model(len(identity_keys))
        model.train()
        downsample = config.model.downsample

        sampler = PKSampler(
            identities,
            config.batch.identities,
            config.batch.images,
            config.seed,
        )
        optimizer = torch.optim.SGD(
            model.parameters(),
            lr=config.optimizer.lr,
            momentum=config.optimizer.momentum,
        )
        scheduler = torch.optim.lr_scheduler.MultiStepLR(
            optimizer,
            milestones=[config.optimizer.decay_epoch],
            gamma=config.optimizer.decay_factor,
        )
        log = TrainLog(self.run_dir / TRAIN_LOG_NAME)
        checkpoint = self.run_dir / FINAL_CHECKPOINT
        self.logger.info(
            "Training started",
            run_dir=str(self.run_dir),
            variant=config.variant.value,
            train_images=len(train),
            train_identities=len(identity_keys),
            steps_per_epoch=len(sampler),
        )
        started = time.monotonic()

        for epoch in range(config.optimizer.epochs):
            learning_rate = optimizer.param_groups[0]["lr"]
            sums = np.zeros(6)
            batches = tqdm(
                sampler.epoch(epoch),
                total=len(sampler),
                desc=f"epoch {epoch + 1}",
                leave=False,
                disable=not self.show_progress,
            )
            for step, batch in enumerate(batches):
                samples = [
                    augment(
                        train.sample(int(i)),
                        seed=[config.seed, epoch, step, position],
                        config=config.augment,
                    )
                    for position, i in enumerate(batch)
                ]
                images = images_to_tensor([s.image for s in samples])
                part_labels = torch.as_tensor(
                    downsample_labels(
                        np.stack([s.part_labels for s in samples]), downsample
                    ),
                    dtype=torch.long,
                )
                targets = torch.as_tensor(identities[batch], dtype=torch.long)

                losses = compute_losses(
                    model, images, part_labels, targets, config
                )
                if not torch.isfinite(losses.total):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch + 1} step {step}"
                    )
                optimizer.zero_grad()
                losses.total.backward()
                optimizer.step()
                sums += (
                    float(losses.parsing),
                    float(losses.identity),
                    float(losses.triplet),
                    float(losses.total),
                    losses.parsing_accuracy,
                    losses.unconfident_fraction,
                )
            scheduler.step()

            means = sums / len(sampler)
            record = EpochRecord(
                epoch=epoch + 1,
                parsing_loss=means[0],
                id_loss=means[1],
                triplet_loss=means[2],
                total_loss=means[3],
                parsing_accuracy=means[4],
                unconfident_fraction=means[5],
                learning_rate=learning_rate,
                wall_clock=time.monotonic() - started,
            )
            log.append(record)
            self.logger.info("Epoch finished", **record.model_dump())
            save_checkpoint(
                self.run_dir / "checkpoints" / f"epoch_{epoch + 1:03d}.npz",
                model,
                epoch=epoch + 1,
                logger=self.logger,
            )

        model.eval()
        save_checkpoint(
            checkpoint, model, epoch=config.optimizer.epochs, logger=self.logger
        )
        gallery = compute_descriptors(
            model, load_split(manifest, "gallery"), config
        )
        probes = compute_descriptors(
            model, load_split(manifest, "probe"), config
        )
        write_descriptor_file(
            self.run_dir / GALLERY_FILE, gallery, logger=self.logger
        )
        write_descriptor_file(
            self.run_dir / PROBE_FILE, probes, logger=self.logger
        )
        self.logger.info(
            "Training finished",
            run_dir=str(self.run_dir),
            wall_clock=time.monotonic() - started,
        )
        return TrainResult(
            model=model,
            log=log,
            run_dir=self.run_dir,
            checkpoint=checkpoint,
            gallery=gallery,
            probes=probes,
        )


def train(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    logger: structlog.stdlib.BoundLogger | None = None,
    show_progress: bool = False,
) -> TrainResult:
    """Trains `config` and exports its artifacts; see `Trainer`."""
    return Trainer(config, out_dir, logger, show_progress).run()
