"""Configuration search: grid evaluation and backwards elimination.

Every candidate correction is scored by the same fixed-seed pipeline:
correct weights -> aggregate features -> cross-validated prediction of each
outcome. Aggregations are cached by a digest of the weight vector, so grid
cells that produce identical weights (for example, anything that collapses
to single bins) cost one aggregation, not many.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from .aggregate import FeatureIndex
from .io import Dataset
from .pipeline import FeatureMatrix, PipelineConfig, cross_validate
from .types import CorrectionConfig, OutcomeTable
from .weights import correct_dataset

__all__ = ["GridSpec", "GridCellResult", "grid_search", "EliminationResult", "backwards_eliminate"]

_ALL_VARS = ("age", "gender", "income", "education")


@dataclass(frozen=True)
class GridSpec:
    """Axes of the configuration grid."""

    methods: tuple[str, ...] = ("naive", "raking")
    variable_subsets: tuple[tuple[str, ...], ...] = (
        ("income",),
        ("education",),
        ("income", "education"),
    )
    min_bin_thresholds: tuple[int, ...] = (1, 10, 50, 100, 1000)
    smoothing_ks: tuple[float, ...] = (0.0, 1.0, 10.0, 100.0, 1000.0)
    redistribute: tuple[bool, ...] = (True,)
    include_baseline: bool = True

    def __post_init__(self) -> None:
        if not (self.methods and self.variable_subsets and self.min_bin_thresholds
                and self.smoothing_ks and self.redistribute):
            raise ValueError("every grid axis needs at least one value")

    def cells(self) -> list[CorrectionConfig]:
        out: list[CorrectionConfig] = []
        seen: set[str] = set()
        if self.include_baseline:
            baseline = CorrectionConfig(method="raking", variables=())
            out.append(baseline)
            seen.add(baseline.label())
        for method, subset, threshold, k, redist in itertools.product(
            self.methods, self.variable_subsets, self.min_bin_thresholds,
            self.smoothing_ks, self.redistribute,
        ):
            if not subset:
                # every no-variable cell is the same baseline
                config = CorrectionConfig(method="raking", variables=())
            else:
                config = CorrectionConfig(
                    method=method,
                    variables=tuple(subset),
                    redistribute=redist,
                    min_bin_threshold=threshold,
                    smoothing_k=k,
                )
            if config.label() not in seen:
                seen.add(config.label())
                out.append(config)
        return out


@dataclass
class GridCellResult:
    config: CorrectionConfig
    metrics: dict[str, dict[str, float]] = field(default_factory=dict)
    mean_r: float | None = None
    error: str | None = None


class _Evaluator:
    """Shared scoring machinery with weight-digest aggregation caching."""

    def __init__(
        self,
        dataset: Dataset,
        outcomes: dict[str, OutcomeTable],
        pipeline_config: PipelineConfig,
        folds: int,
        seed: int,
    ):
        self.dataset = dataset
        self.outcomes = outcomes
        self.pipeline_config = pipeline_config
        self.folds = folds
        self.seed = seed
        self.index = FeatureIndex(dataset.individuals, dataset.features)
        self._agg_cache: dict[str, FeatureMatrix] = {}
        self._metric_cache: dict[str, dict[str, dict[str, float]]] = {}

    def _weight_digest(self, weights) -> str:
        h = hashlib.sha1()
        for cid in self.index.community_ids:
            sl = self.index._slices[cid]
            assignment = weights.get(cid)
            psi = np.array(
                [1.0] * (sl.stop - sl.start)
                if assignment is None
                else [assignment.weights[iid] for iid in self.index.row_ids[sl]]
            )
            h.update(psi.tobytes())
        return h.hexdigest()

    def features_for(self, config: CorrectionConfig) -> FeatureMatrix:
        result = correct_dataset(
            self.dataset.individuals, self.dataset.margins, self.dataset.targets, config
        )
        digest = self._weight_digest(result.weights)
        if digest not in self._agg_cache:
            aggregated = self.index.aggregate(result.weights)
            self._agg_cache[digest] = FeatureMatrix(
                tuple(self.index.community_ids),
                tuple(self.index.feature_ids),
                self.index.matrix_of(aggregated),
            )
        return self._agg_cache[digest]

    def evaluate(self, config: CorrectionConfig) -> dict[str, dict[str, float]]:
        label = config.label()
        if label not in self._metric_cache:
            X = self.features_for(config)
            per_task = {}
            for name, outcome in sorted(self.outcomes.items()):
                result = cross_validate(
                    X, outcome.values, folds=self.folds, seed=self.seed,
                    config=self.pipeline_config, task=name,
                )
                per_task[name] = result.metrics
            self._metric_cache[label] = per_task
        return self._metric_cache[label]


def grid_search(
    dataset: Dataset,
    outcomes: dict[str, OutcomeTable],
    grid: GridSpec,
    pipeline_config: PipelineConfig = PipelineConfig(),
    folds: int = 10,
    seed: int = 0,
) -> list[GridCellResult]:
    """Score every grid cell; rank by mean out-of-sample correlation.

    Per-cell failures (for example raking on structurally empty tables) are
    recorded on the cell and rank last rather than aborting the search.
    """
    evaluator = _Evaluator(dataset, outcomes, pipeline_config, folds, seed)
    results: list[GridCellResult] = []
    for config in grid.cells():
        cell = GridCellResult(config)
        try:
            cell.metrics = evaluator.evaluate(config)
            cell.mean_r = float(
                np.mean([m["pearson_r"] for m in cell.metrics.values()])
            )
        except Exception as exc:  # recorded, not fatal
            cell.error = f"{type(exc).__name__}: {exc}"
        results.append(cell)
    results.sort(
        key=lambda c: (-(c.mean_r if c.mean_r is not None else -np.inf), c.config.label())
    )
    return results


@dataclass
class EliminationResult:
    task: str
    variables: tuple[str, ...]
    config: CorrectionConfig
    metrics: dict[str, float]
    trace: list[tuple[tuple[str, ...], str, float]]


def backwards_eliminate(
    dataset: Dataset,
    outcomes: dict[str, OutcomeTable],
    variables: tuple[str, ...] = _ALL_VARS,
    grid: GridSpec = GridSpec(),
    pipeline_config: PipelineConfig = PipelineConfig(),
    folds: int = 10,
    seed: int = 0,
    tie_tol: float = 0.001,
    objective: str = "per-task",
) -> dict[str, EliminationResult]:
    """Smallest variable set whose best grid cell keeps the best accuracy.

    Uses raking with redistribution throughout (the strongest multi-variable
    combination), sweeping the grid's binning thresholds and smoothing
    constants for each candidate variable set. Starting from all variables,
    the variable whose removal costs the least is dropped while the cost
    stays within ``tie_tol`` (improvements always accepted, ties favour fewer
    variables and drop the alphabetically last variable). ``objective`` is
    ``"per-task"`` for one elimination per outcome or ``"average"`` for a
    single elimination on the across-task mean correlation.
    """
    if not variables:
        raise ValueError("need at least one candidate variable")
    evaluator = _Evaluator(dataset, outcomes, pipeline_config, folds, seed)

    if objective == "per-task":
        tasks = sorted(outcomes)
    elif objective == "average":
        tasks = ["average"]
    else:
        raise ValueError(f"objective must be 'per-task' or 'average', got {objective!r}")

    def score_for(metrics: dict[str, dict[str, float]], task: str) -> float:
        if task == "average":
            return float(np.mean([m["pearson_r"] for m in metrics.values()]))
        return metrics[task]["pearson_r"]

    def best_cell(varset: tuple[str, ...], task: str):
        """Best (score, config, metrics) for a variable set on one task."""
        if not varset:
            config = CorrectionConfig(method="raking", variables=())
            metrics = evaluator.evaluate(config)
            return score_for(metrics, task), config, metrics
        best = None
        for threshold, k in itertools.product(grid.min_bin_thresholds, grid.smoothing_ks):
            config = CorrectionConfig(
                method="raking", variables=varset, redistribute=True,
                min_bin_threshold=threshold, smoothing_k=k,
            )
            try:
                metrics = evaluator.evaluate(config)
            except Exception:
                continue
            s = score_for(metrics, task)
            if best is None or s > best[0] or (s == best[0] and config.label() < best[1].label()):
                best = (s, config, metrics)
        if best is None:
            raise RuntimeError(f"every grid cell failed for variables {varset}")
        return best

    results: dict[str, EliminationResult] = {}
    for task in tasks:
        current = tuple(sorted(variables))
        trace: list[tuple[tuple[str, ...], str, float]] = []
        score, config, metrics = best_cell(current, task)
        trace.append((current, config.label(), score))
        while current:
            candidates = []
            for drop in current:
                subset = tuple(v for v in current if v != drop)
                s, cfg, met = best_cell(subset, task)
                candidates.append((s, drop, subset, cfg, met))
                trace.append((subset, cfg.label(), s))
            # highest score wins; on ties prefer dropping the alphabetically
            # last variable (stable sorts: reverse-alpha first, then score)
            candidates.sort(key=lambda c: c[1], reverse=True)
            candidates.sort(key=lambda c: c[0], reverse=True)
            best_s, drop, subset, cfg, met = candidates[0]
            if best_s < score - tie_tol:
                break
            current, score, config, metrics = subset, best_s, cfg, met
        task_metrics = (
            {m: float(np.mean([metrics[t][m] for t in metrics])) for m in ("pearson_r", "r_squared", "rmse")}
            if task == "average"
            else metrics[task]
        )
        results[task] = EliminationResult(task, current, config, dict(task_metrics), trace)
    return results
