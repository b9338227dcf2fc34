import math
from pathlib import Path

import pytest

from lib.core.align import Variant
from lib.core.config import ExperimentConfig, run_dir
from lib.core.errors import ConfigError, DivergenceError, UnknownVariantError
from lib.core.evaluation import MetricReport, evaluate_retrieval
from lib.core.experiments import (
    SweepRow,
    SweepTable,
    compare_variants,
    sweep,
)
from lib.core.trainer import TrainResult

REPORT = MetricReport(cmc=[0.5, 0.75], map=0.4, pr_auc=0.3)


@pytest.fixture()
def seen(monkeypatch: pytest.MonkeyPatch) -> list[ExperimentConfig]:
    """Replaces training with a canned report, recording each config."""
    configs: list[ExperimentConfig] = []

    def fake_run_variant(
        config: ExperimentConfig, variant: Variant, **_: object
    ) -> MetricReport:
        configs.append(config)
        if variant is Variant.WITHOUT_UNCONFIDENT:
            raise DivergenceError("non-finite loss at epoch 1 step 0")
        return REPORT

    monkeypatch.setattr(
        "lib.core.experiments.run_variant", fake_run_variant
    )
    return configs


def test_single_value_sweep_equals_plain_training(
    tiny_config: ExperimentConfig,
    tiny_run: TrainResult,
    output_root: Path,
    tmp_path: Path,
) -> None:
    table = sweep(tiny_config, "tau", [1.5, 0.5], out_dir=tmp_path / "t")
    failed, cell = table.rows
    assert failed.value == "1.5"
    assert failed.report is None
    assert "tau" in failed.error
    assert math.isnan(failed.metric("map"))

    assert cell.error is None
    assert cell.report == evaluate_retrieval(
        tiny_run.gallery, tiny_run.probes, max_rank=4
    )
    assert (run_dir(tiny_config) / "metrics.kv").is_file()
    tsv = (tmp_path / "t" / "tau.tsv").read_text().splitlines()
    assert tsv[0] == "tau\trank1\tmap\tpr_auc\tseconds\tstatus"
    assert tsv[1].startswith("1.5\tnan\tnan\tnan\t")
    assert tsv[2].endswith("\tok")
    dat = (tmp_path / "t" / "tau_map.dat").read_text().splitlines()
    assert dat == [f"0.5\t{cell.report.map!r}"]


def test_tau_sweep_rows_follow_the_values(
    tiny_config: ExperimentConfig,
    seen: list[ExperimentConfig],
    tmp_path: Path,
) -> None:
    table = sweep(tiny_config, "tau", [0.1, 0.5, 0.9], out_dir=tmp_path)
    assert [row.value for row in table.rows] == ["0.1", "0.5", "0.9"]
    assert [config.tau for config in seen] == [0.1, 0.5, 0.9]
    assert {config.seed for config in seen} == {tiny_config.seed}
    assert all(row.seconds >= 0 for row in table.rows)
    assert len((tmp_path / "tau.tsv").read_text().splitlines()) == 4


def test_lambda_sweep_sets_the_parsing_weight(
    tiny_config: ExperimentConfig,
    seen: list[ExperimentConfig],
    tmp_path: Path,
) -> None:
    sweep(tiny_config, "lambda", [0.01, 1.0], out_dir=tmp_path)
    assert [c.loss.parsing_weight for c in seen] == [0.01, 1.0]
    assert (tmp_path / "lambda_rank1.dat").read_text().splitlines() == [
        "0.01\t0.5",
        "1.0\t0.5",
    ]


def test_failed_variant_does_not_stop_the_comparison(
    tiny_config: ExperimentConfig,
    seen: list[ExperimentConfig],
    tmp_path: Path,
) -> None:
    table = compare_variants(
        tiny_config, ["full", "w", "baseline"], out_dir=tmp_path
    )
    assert [row.value for row in table.rows] == ["full", "w", "baseline"]
    assert table.rows[1].report is None
    assert "non-finite" in table.rows[1].error
    assert table.rows[2].metric("rank1") == 0.5
    assert [c.variant for c in seen] == [
        Variant.FULL,
        Variant.WITHOUT_UNCONFIDENT,
        Variant.BASELINE,
    ]
    lines = (tmp_path / "variant.tsv").read_text().splitlines()
    assert lines[2].endswith("error: non-finite loss at epoch 1 step 0")


@pytest.mark.parametrize(
    ("parameter", "values"), [("margin", [0.1]), ("tau", [])]
)
def test_bad_sweeps_are_rejected(
    tiny_config: ExperimentConfig, parameter: str, values: list[float]
) -> None:
    with pytest.raises(ConfigError):
        sweep(tiny_config, parameter, values)


def test_unknown_variant_is_rejected(tiny_config: ExperimentConfig) -> None:
    with pytest.raises(UnknownVariantError):
        compare_variants(tiny_config, ["full", "x"])
    with pytest.raises(ConfigError):
        compare_variants(tiny_config, [])


def test_sweep_table_metrics() -> None:
    row = SweepRow("0.1", REPORT, None, 1.0)
    assert row.metric("rank1") == 0.5
    assert row.metric("pr_auc") == 0.3
    table = SweepTable("tau", [row])
    assert table.to_tsv().splitlines()[1] == (
        "0.1\t0.500000\t0.400000\t0.300000\t1.00\tok"
    )
