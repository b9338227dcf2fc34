"""
Ablation runners: one variant, a lambda / tau sweep, or a variant
comparison, each trained and evaluated under an otherwise identical
config.
"""

import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import structlog

from lib.core.align import Variant
from lib.core.config import ExperimentConfig, run_dir, with_value
from lib.core.errors import ConfigError, EsaError
from lib.core.evaluation import MetricReport, evaluate_retrieval
from lib.core.trainer import train

SWEEP_PARAMETERS = {"lambda": "loss.lambda", "tau": "tau"}
METRICS = ("rank1", "map", "pr_auc")


def run_variant(
    config: ExperimentConfig,
    variant: Variant | str,
    logger: structlog.stdlib.BoundLogger | None = None,
    show_progress: bool = False,
) -> MetricReport:
    """
    Trains `config` with `variant` and evaluates it on the probe split.

    Raises:
        UnknownVariantError: If `variant` is not a known variant.
    """
    logger = logger or structlog.get_logger(__name__)
    variant = Variant.parse(variant)
    config = with_value(config, "variant", variant.value)
    result = train(config, logger=logger, show_progress=show_progress)
    report = evaluate_retrieval(
        result.gallery,
        result.probes,
        config.distance,
        max_rank=config.max_rank,
        logger=logger,
    )
    report.write(result.run_dir)
    return report


@dataclass(frozen=True)
class SweepRow:
    """
    Attributes:
        value: Swept value (or variant name)
        report: Metrics, None when the cell failed
        error: Failure message of a failed cell
        seconds: Wall-clock time of the cell
    """

    value: str
    report: MetricReport | None
    error: str | None
    seconds: float

    def metric(self, name: str) -> float:
        if self.report is None:
            return float("nan")
        if name == "rank1":
            return self.report.rank(1)
        return float(getattr(self.report, name))


@dataclass(frozen=True)
class SweepTable:
    parameter: str
    rows: list[SweepRow]

    def to_tsv(self) -> str:
        lines = [f"{self.parameter}\trank1\tmap\tpr_auc\tseconds\tstatus"]
        for row in self.rows:
            metrics = "\t".join(f"{row.metric(m):.6f}" for m in METRICS)
            status = "ok" if row.error is None else f"error: {row.error}"
            lines.append(
                f"{row.value}\t{metrics}\t{row.seconds:.2f}\t{status}"
            )
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        """
        Writes `<parameter>.tsv` and one two-column
        `<parameter>_<metric>.dat` per metric, skipping failed cells.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table = out_dir / f"{self.parameter}.tsv"
        table.write_text(self.to_tsv(), encoding="utf-8")
        paths = [table]
        for metric in METRICS:
            path = out_dir / f"{self.parameter}_{metric}.dat"
            path.write_text(
                "".join(
                    f"{row.value}\t{row.metric(metric)!r}\n"
                    for row in self.rows
                    if row.report is not None
                ),
                encoding="utf-8",
            )
            paths.append(path)
        return paths


def _run_cells(
    parameter: str,
    base: ExperimentConfig,
    key: str,
    values: Sequence[str],
    logger: structlog.stdlib.BoundLogger,
    show_progress: bool,
) -> SweepTable:
    rows = []
    for value in values:
        started = time.monotonic()
        try:
            config = with_value(base, key, value)
            report = run_variant(
                config, config.variant, logger=logger,
                show_progress=show_progress,
            )
        except EsaError as exc:
            logger.error(
                "Sweep cell failed", parameter=parameter, value=value,
                exc_info=exc,
            )
            rows.append(
                SweepRow(value, None, str(exc), time.monotonic() - started)
            )
            continue
        seconds = time.monotonic() - started
        logger.info(
            "Sweep cell finished",
            parameter=parameter,
            value=value,
            rank1=report.rank(1),
            map=report.map,
            pr_auc=report.pr_auc,
            seconds=seconds,
        )
        rows.append(SweepRow(value, report, None, seconds))
    return SweepTable(parameter, rows)


def sweep(
    config: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    out_dir: str | Path | None = None,
    logger: structlog.stdlib.BoundLogger | None = None,
    show_progress: bool = False,
) -> SweepTable:
    """
    Trains and evaluates one model per value of `lambda` or `tau`, all
    with the shared seed; failed cells are recorded and the sweep goes on.

    Args:
        config: Base configuration.
        parameter: "lambda" or "tau".
        values: Values to try, at least one.
        out_dir: Where the tables go; defaults to the base run directory.
        logger: Optional structlog logger.
        show_progress: Display tqdm bars while training.

    Returns:
        One row per value, written to `<out_dir>/<parameter>.tsv`.
    """
    logger = logger or structlog.get_logger(__name__)
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"cannot sweep {parameter!r}, expected one of "
            f"{', '.join(SWEEP_PARAMETERS)}"
        )
    if not values:
        raise ConfigError("sweep needs at least one value")
    table = _run_cells(
        parameter,
        config,
        SWEEP_PARAMETERS[parameter],
        [str(v) for v in values],
        logger,
        show_progress,
    )
    table.write(out_dir if out_dir is not None else run_dir(config))
    return table


def compare_variants(
    config: ExperimentConfig,
    variants: Sequence[Variant | str],
    out_dir: str | Path | None = None,
    logger: structlog.stdlib.BoundLogger | None = None,
    show_progress: bool = False,
) -> SweepTable:
    """Variant table: one row per variant, shared seed and config."""
    logger = logger or structlog.get_logger(__name__)
    if not variants:
        raise ConfigError("need at least one variant")
    names = [Variant.parse(v).value for v in variants]
    table = _run_cells(
        "variant", config, "variant", names, logger, show_progress
    )
    table.write(out_dir if out_dir is not None else run_dir(config))
    return table
