"""Command-line surface.

Subcommands: ``synth`` (generate a dataset), ``weights`` (emit correction
factors), ``aggregate`` (emit community feature means), ``evaluate``
(cross-validated metrics against the uncorrected baseline), ``search`` (grid
search and backwards elimination trace), ``report`` (bias reduction plus
summary tables). Every flag can also be supplied through a flat
``key = value`` config file; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluate as ev
from .aggregate import FeatureIndex
from .io import (
    Dataset,
    fingerprint,
    load_dataset,
    load_weights,
    parse_config_file,
    save_dataset,
    save_weights,
    write_csv,
)
from .pipeline import FeatureMatrix, PipelineConfig, cross_validate
from .search import GridSpec, backwards_eliminate, grid_search
from .synth import SynthSpec, generate
from .types import CorrectionConfig
from .weights import correct_dataset


def _add_correction_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["full", "naive", "raking"], default=None)
    p.add_argument("--vars", default=None, help="comma-separated correction variables")
    p.add_argument("--min-bin", dest="min_bin", type=int, default=None)
    p.add_argument("--smooth-k", dest="smooth_k", type=float, default=None)
    p.add_argument("--redistribute", action="store_true", default=None)
    p.add_argument("--no-redistribute", dest="redistribute", action="store_false")
    p.add_argument("--normalize", action="store_true", default=None)


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None, help="family-wise correlation budget")
    p.add_argument("--ratio", type=float, default=None, help="dimensionality reduction ratio")


def _merged(args, key: str, cfg: dict[str, str], default, cast):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in cfg:
        raw = cfg[key]
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _correction_config(args, cfg: dict[str, str]) -> CorrectionConfig:
    vars_raw = _merged(args, "vars", cfg, "", str)
    variables = tuple(v.strip() for v in vars_raw.split(",") if v.strip())
    return CorrectionConfig(
        method=_merged(args, "method", cfg, "raking", str),
        variables=variables,
        redistribute=bool(_merged(args, "redistribute", cfg, False, bool)),
        min_bin_threshold=_merged(args, "min_bin", cfg, 0, int),
        smoothing_k=_merged(args, "smooth_k", cfg, 0.0, float),
        normalize_weights=bool(_merged(args, "normalize", cfg, False, bool)),
    )


def _pipeline_config(args, cfg: dict[str, str]) -> tuple[PipelineConfig, int, int]:
    config = PipelineConfig(
        alpha_family=_merged(args, "alpha", cfg, 60.0, float),
        reduce_ratio=_merged(args, "ratio", cfg, 0.1, float),
        ridge_lambda=_merged(args, "ridge_lambda", cfg, 10_000.0, float),
    )
    folds = _merged(args, "folds", cfg, 10, int)
    seed = _merged(args, "seed", cfg, 0, int)
    return config, folds, seed


def _provenance(seed: int, *config_parts) -> str:
    return f"restrat seed={seed} fingerprint={fingerprint(*config_parts)}"


def _load(args) -> Dataset:
    dataset = load_dataset(args.data)
    report = dataset.validation
    if report is not None and not report.clean:
        for line in report.summary_lines()[1:]:
            print(f"warning: {line}", file=sys.stderr)
    return dataset


def _cmd_synth(args, cfg) -> int:
    seed = _merged(args, "seed", cfg, 0, int)
    selection = {}
    raw = _merged(args, "selection", cfg, "income=-1.2", str)
    for part in raw.split(","):
        if part.strip():
            var, coef = part.split("=")
            selection[var.strip()] = float(coef)
    spec = SynthSpec(
        seed=seed,
        n_communities=_merged(args, "communities", cfg, 50, int),
        population_size=_merged(args, "population", cfg, 1000, int),
        sample_size=_merged(args, "sample", cfg, 200, int),
        n_features=_merged(args, "features", cfg, 24, int),
        shrinkage=_merged(args, "shrinkage", cfg, 0.5, float),
        outcome_noise_sd=_merged(args, "noise_sd", cfg, 0.1, float),
        selection_coefs=selection,
    )
    data = generate(spec)
    out = Path(args.out)
    stamp = _provenance(seed, spec)
    data.dataset.provenance = stamp
    save_dataset(data.dataset, out)

    write_csv(
        out / "oracle" / "true_means.csv",
        ["community_id", "feature_id", "mean"],
        (
            (cid, fid, data.oracle_means[cid].means[fid])
            for cid in sorted(data.oracle_means)
            for fid in data.feature_ids
        ),
        stamp,
    )
    write_csv(
        out / "oracle" / "true_margins.csv",
        ["community_id", "variable", "bin_lo", "bin_hi", "pct"],
        (
            (cid, var, lo, hi, pct)
            for (cid, var) in sorted(data.dataset.margins)
            for (lo, hi), pct in zip(
                data.dataset.margins[(cid, var)].partition.bins,
                data.dataset.margins[(cid, var)].percentages,
            )
        ),
        stamp,
    )
    print(f"wrote {len(data.dataset.individuals)} individuals in "
          f"{spec.n_communities} communities to {out}")
    return 0


def _cmd_weights(args, cfg) -> int:
    dataset = _load(args)
    config = _correction_config(args, cfg)
    seed = _merged(args, "seed", cfg, 0, int)
    result = correct_dataset(dataset.individuals, dataset.margins, dataset.targets, config)
    for cid, reason in sorted(result.uncorrectable.items()):
        print(f"warning: community {cid} uncorrectable ({reason}); weights set to 1",
              file=sys.stderr)
    save_weights(result.weights, args.out, _provenance(seed, config))
    print(f"wrote weights for {len(result.weights)} communities to {args.out}")
    return 0


def _cmd_aggregate(args, cfg) -> int:
    dataset = _load(args)
    seed = _merged(args, "seed", cfg, 0, int)
    weights = load_weights(args.weights) if args.weights else {}
    index = FeatureIndex(dataset.individuals, dataset.features)
    aggregated = index.aggregate(weights)

    write_csv(
        Path(args.out),
        ["community_id", "feature_id", "mean"],
        (
            (cid, fid, aggregated[cid].means[fid])
            for cid in index.community_ids
            for fid in index.feature_ids
        ),
        _provenance(seed, args.weights or "unweighted"),
    )
    print(f"wrote aggregated features for {len(aggregated)} communities to {args.out}")
    return 0


def _evaluate_both(dataset: Dataset, config: CorrectionConfig,
                   pipeline_config: PipelineConfig, folds: int, seed: int):
    """Cross-validate the corrected and uncorrected pipelines on every task."""
    index = FeatureIndex(dataset.individuals, dataset.features)
    base_X = FeatureMatrix(
        tuple(index.community_ids), tuple(index.feature_ids),
        index.matrix_of(index.aggregate({})),
    )
    result = correct_dataset(dataset.individuals, dataset.margins, dataset.targets, config)
    corr_X = FeatureMatrix(
        tuple(index.community_ids), tuple(index.feature_ids),
        index.matrix_of(index.aggregate(result.weights)),
    )
    rows = []
    predictions = []
    diffs: dict[str, dict[str, float]] = {}
    p_values = []
    for name in sorted(dataset.outcomes):
        y = dataset.outcomes[name].values
        base = cross_validate(base_X, y, folds=folds, seed=seed, config=pipeline_config, task=name)
        corr = cross_validate(corr_X, y, folds=folds, seed=seed, config=pipeline_config, task=name)
        p = ev.paired_residual_test(corr.residuals, base.residuals)
        comparison = ev.compare_metrics(
            name, "pearson_r", base.metrics["pearson_r"], corr.metrics["pearson_r"], p
        )
        rows.append((name, base.metrics, corr.metrics, comparison))
        for cid, actual, pb, pc in zip(
            corr.community_ids, corr.actuals, base.predictions, corr.predictions
        ):
            predictions.append((name, cid, float(actual), float(pb), float(pc)))
        diffs[name] = {
            cid: abs(rc) - abs(rb)
            for cid, rc, rb in zip(corr.community_ids, corr.residuals, base.residuals)
        }
        p_values.append(p)
    combined = None
    if len(p_values) > 1:
        R = ev.residual_diff_correlations(diffs)
        combined = ev.combine_dependent_pvalues(p_values, R)
    return rows, combined, result, predictions


def _write_comparison(out_dir: Path, rows, combined, provenance: str) -> None:
    write_csv(
        out_dir / "comparison.csv",
        ["task", "baseline_r", "corrected_r", "baseline_r2", "corrected_r2",
         "baseline_rmse", "corrected_rmse", "p_value", "direction"],
        (
            (
                name,
                base["pearson_r"], corr["pearson_r"],
                base["r_squared"], corr["r_squared"],
                base["rmse"], corr["rmse"],
                comparison.p_value, comparison.direction,
            )
            for name, base, corr, comparison in rows
        ),
        provenance,
    )
    lines = [f"{'task':<24}{'base r':>8}{'corr r':>8}{'base R2':>9}{'corr R2':>9}"
             f"{'base RMSE':>11}{'corr RMSE':>11}  p        direction"]
    for name, base, corr, comparison in rows:
        lines.append(
            f"{name:<24}{base['pearson_r']:>8.3f}{corr['pearson_r']:>8.3f}"
            f"{base['r_squared']:>9.3f}{corr['r_squared']:>9.3f}"
            f"{base['rmse']:>11.4g}{corr['rmse']:>11.4g}  {comparison.p_value:<9.3g}"
            f"{comparison.direction}"
        )
    if combined is not None:
        lines.append(f"combined dependent p-value across tasks: {combined:.4g}")
    text = "\n".join(lines)
    (out_dir / "comparison.txt").write_text(f"# {provenance}\n" + text + "\n")
    print(text)


def _cmd_evaluate(args, cfg) -> int:
    dataset = _load(args)
    config = _correction_config(args, cfg)
    pipeline_config, folds, seed = _pipeline_config(args, cfg)
    rows, combined, _, predictions = _evaluate_both(dataset, config, pipeline_config, folds, seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = _provenance(seed, config, pipeline_config, folds)
    _write_comparison(out_dir, rows, combined, provenance)

    write_csv(
        out_dir / "predictions.csv",
        ["task", "community_id", "actual", "baseline_pred", "corrected_pred"],
        predictions,
        provenance,
    )
    return 0


def _cmd_search(args, cfg) -> int:
    dataset = _load(args)
    pipeline_config, folds, seed = _pipeline_config(args, cfg)
    thresholds = tuple(
        int(x) for x in _merged(args, "thresholds", cfg, "1,10,50,100,1000", str).split(",")
    )
    ks = tuple(float(x) for x in _merged(args, "ks", cfg, "0,1,10,100,1000", str).split(","))
    subsets_raw = _merged(args, "subsets", cfg, "income|education|income,education", str)
    subsets = tuple(
        tuple(v.strip() for v in chunk.split(",") if v.strip())
        for chunk in subsets_raw.split("|")
    )
    grid = GridSpec(
        methods=("naive", "raking"),
        variable_subsets=subsets,
        min_bin_thresholds=thresholds,
        smoothing_ks=ks,
    )
    provenance = _provenance(seed, grid, pipeline_config, folds)
    results = grid_search(dataset, dataset.outcomes, grid, pipeline_config, folds, seed)
    out_dir = Path(args.out)

    tasks = sorted(dataset.outcomes)
    write_csv(
        out_dir / "grid_trace.csv",
        ["rank", "config", "mean_r", "error"] + [f"r_{t}" for t in tasks],
        (
            tuple(
                [rank, cell.config.label(),
                 cell.mean_r if cell.mean_r is not None else float("nan"),
                 cell.error or ""]
                + [
                    cell.metrics[t]["pearson_r"] if t in cell.metrics else float("nan")
                    for t in tasks
                ]
            )
            for rank, cell in enumerate(results)
        ),
        provenance,
    )
    elim_vars = tuple(
        v.strip() for v in _merged(args, "elim_vars", cfg, "age,gender,income,education", str).split(",")
        if v.strip()
    )
    eliminated = backwards_eliminate(
        dataset, dataset.outcomes, elim_vars, grid, pipeline_config, folds, seed
    )
    write_csv(
        out_dir / "elimination.csv",
        ["task", "variables", "config", "pearson_r", "r_squared", "rmse"],
        (
            (
                task,
                "+".join(res.variables) if res.variables else "none",
                res.config.label(),
                res.metrics["pearson_r"], res.metrics["r_squared"], res.metrics["rmse"],
            )
            for task, res in sorted(eliminated.items())
        ),
        provenance,
    )
    best = results[0]
    print(f"best grid cell: {best.config.label()} (mean r {best.mean_r:.3f})")
    for task, res in sorted(eliminated.items()):
        kept = "+".join(res.variables) if res.variables else "none"
        print(f"{task}: kept {kept} via {res.config.label()} (r {res.metrics['pearson_r']:.3f})")
    return 0


def _cmd_report(args, cfg) -> int:
    dataset = _load(args)
    config = _correction_config(args, cfg)
    pipeline_config, folds, seed = _pipeline_config(args, cfg)
    rows, combined, correction, _ = _evaluate_both(dataset, config, pipeline_config, folds, seed)
    bias = ev.quantify_bias(
        dataset.individuals,
        correction.weights,
        dataset.margins,
        corrected_individuals=correction.individuals,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = _provenance(seed, config, pipeline_config, folds)
    _write_comparison(out_dir, rows, combined, provenance)

    write_csv(
        out_dir / "bias.csv",
        ["variable", "kind", "bias_before", "bias_after"],
        (
            (e.variable, e.kind, e.before, e.after)
            for e in (bias.entries[v] for v in sorted(bias.entries))
        ),
        provenance,
    )
    print(f"\n{'variable':<12}{'kind':<14}{'before':>10}{'after':>10}")
    for v in sorted(bias.entries):
        e = bias.entries[v]
        print(f"{e.variable:<12}{e.kind:<14}{e.before:>10.4f}{e.after:>10.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="restrat",
        description="Selection-bias correction for community-level prediction",
    )
    parser.add_argument("--config", default=None, help="flat key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset with oracles")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--communities", type=int, default=None)
    p_synth.add_argument("--population", type=int, default=None)
    p_synth.add_argument("--sample", type=int, default=None)
    p_synth.add_argument("--features", type=int, default=None)
    p_synth.add_argument("--shrinkage", type=float, default=None)
    p_synth.add_argument("--noise-sd", dest="noise_sd", type=float, default=None)
    p_synth.add_argument("--selection", default=None, help="e.g. income=-1.2,age=0.4")
    p_synth.set_defaults(func=_cmd_synth)

    p_weights = sub.add_parser("weights", help="compute correction factors")
    p_weights.add_argument("--data", required=True)
    p_weights.add_argument("--out", required=True)
    p_weights.add_argument("--seed", type=int, default=None)
    _add_correction_flags(p_weights)
    p_weights.set_defaults(func=_cmd_weights)

    p_agg = sub.add_parser("aggregate", help="aggregate features to community means")
    p_agg.add_argument("--data", required=True)
    p_agg.add_argument("--weights", default=None)
    p_agg.add_argument("--out", required=True)
    p_agg.add_argument("--seed", type=int, default=None)
    p_agg.set_defaults(func=_cmd_aggregate)

    p_eval = sub.add_parser("evaluate", help="cross-validated comparison vs baseline")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True)
    _add_correction_flags(p_eval)
    _add_pipeline_flags(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_search = sub.add_parser("search", help="grid search and backwards elimination")
    p_search.add_argument("--data", required=True)
    p_search.add_argument("--out", required=True)
    p_search.add_argument("--thresholds", default=None)
    p_search.add_argument("--ks", default=None)
    p_search.add_argument("--subsets", default=None, help="pipe-separated variable subsets")
    p_search.add_argument("--elim-vars", dest="elim_vars", default=None)
    _add_pipeline_flags(p_search)
    p_search.set_defaults(func=_cmd_search)

    p_report = sub.add_parser("report", help="bias reduction and summary tables")
    p_report.add_argument("--data", required=True)
    p_report.add_argument("--out", required=True)
    _add_correction_flags(p_report)
    _add_pipeline_flags(p_report)
    p_report.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    cfg = parse_config_file(args.config) if args.config else {}
    try:
        return args.func(args, cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
