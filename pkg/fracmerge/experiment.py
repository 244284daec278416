
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np
from tqdm import tqdm

from fracmerge.fragment_record import AssemblySample
from fracmerge.metrics import AssemblyMetrics, MetricsReport
from fracmerge.pipeline import Models, assemble_all, evaluate_runs
from fracmerge.run_config import RunConfig

logger = logging.getLogger(__name__)

GRID_FILE = "grid.csv"
ITERATIONS_FILE = "iterations.csv"
STEPS_FILE = "steps.csv"
REPORT_FILE = "report.json"
METRICS_FILE = "metrics.csv"
METRICS_REPORT_FILE = "metrics.json"


@dataclass(frozen=True)
class ExperimentCell:
    """Aggregate metrics of one (sampling steps, iterations) setting."""

    steps: int
    iterations: int
    assemblies: int
    rmse_rot: float
    rmse_trans: float
    part_accuracy: float
    chamfer: float
    ms_per_sample: float


@dataclass
class ExperimentResult:
    config: RunConfig
    cells: list[ExperimentCell] = field(default_factory=list)
    reports: dict[tuple[int, int], MetricsReport] = field(
        default_factory=dict)

    def headline(self) -> MetricsReport:
        """The report at the configured steps and iterations."""
        return self.reports[(self.config.steps, self.config.iterations)]

    def iteration_table(self) -> list[ExperimentCell]:
        return [cell for cell in self.cells
                if cell.steps == self.config.steps]

    def step_table(self) -> list[ExperimentCell]:
        return [cell for cell in self.cells
                if cell.iterations == self.config.iterations]


def run_experiment(config: RunConfig, assemblies: Sequence[AssemblySample],
                   models: Models) -> ExperimentResult:
    """Sweeps the number of sampling steps and agglomeration iterations.

    Every step count gets one assembly run of the largest iteration count;
    smaller iteration counts are read from its per-iteration snapshots. The
    configured steps and iterations are always part of the sweep.

    Parameters
    ----------
    config : RunConfig
        Sweeps, thresholds, seed and metric options.
    assemblies : Sequence[AssemblySample]
        Evaluation assemblies with ground truth.
    models : Models
        Trained encoder, denoiser and verifier.

    Returns
    -------
    ExperimentResult
        One cell per (steps, iterations) pair and the full reports.
    """
    step_values = sorted(set(config.step_sweep) | {config.steps})
    iteration_values = sorted(set(config.iteration_sweep) |
                              {config.iterations})
    assembly_config = config.with_overrides(
        iterations=max(iteration_values)).assembly_config()
    scorer = models.scorer()
    result = ExperimentResult(config)
    for steps in tqdm(step_values, desc="Sampling step sweep"):
        runs = assemble_all(assemblies, models.solver(steps), scorer,
                            assembly_config, config.seed)
        for iterations in iteration_values:
            report = evaluate_runs(runs, iterations, config.include_anchor,
                                   config.rmse_aggregation)
            result.reports[(steps, iterations)] = report
            milliseconds = [1000 * run.result.seconds_at(iterations)
                            for run in runs]
            result.cells.append(ExperimentCell(
                steps, iterations, len(runs), report.rmse_rot,
                report.rmse_trans, report.part_accuracy, report.chamfer,
                float(np.median(milliseconds))))
            logger.info("steps=%d iterations=%d PA %.1f%% RMSE(R) %.2f",
                        steps, iterations, report.part_accuracy,
                        report.rmse_rot)
    return result


def _write_csv(path: str, row_type: type, rows: Sequence[Any]) -> None:
    names = [f.name for f in fields(row_type)]
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))


def write_experiment(result: ExperimentResult, output_dir: str) -> list[str]:
    """Writes the sweep tables as CSV and the full report as JSON.

    Returns
    -------
    list[str]
        The paths written.
    """
    os.makedirs(output_dir, exist_ok=True)
    tables = {GRID_FILE: result.cells,
              ITERATIONS_FILE: result.iteration_table(),
              STEPS_FILE: result.step_table()}
    paths = []
    for name, cells in tables.items():
        path = os.path.join(output_dir, name)
        _write_csv(path, ExperimentCell, cells)
        paths.append(path)
    report = {
        "config": asdict(result.config),
        "cells": [asdict(cell) for cell in result.cells],
        "headline": result.headline().to_dict()}
    path = os.path.join(output_dir, REPORT_FILE)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(report, file, indent=2)
    paths.append(path)
    return paths


def write_metrics(report: MetricsReport, output_dir: str) -> list[str]:
    """Writes per-assembly metric rows as CSV and the report as JSON."""
    os.makedirs(output_dir, exist_ok=True)
    rows_path = os.path.join(output_dir, METRICS_FILE)
    _write_csv(rows_path, AssemblyMetrics, report.rows)
    report_path = os.path.join(output_dir, METRICS_REPORT_FILE)
    with open(report_path, "w", encoding="utf-8") as file:
        json.dump(report.to_dict(), file, indent=2)
    return [rows_path, report_path]
