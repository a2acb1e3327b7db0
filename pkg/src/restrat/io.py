"""File schemas and dataset loading.

All files are UTF-8 comma-separated with a header row, optionally preceded
by ``#``-prefixed provenance lines (run seed and config fingerprint). Bin
boundaries are explicit in the margin and target files so binning schemes
are data, not code. Rows are written in a canonical sort order and floats in
shortest round-trip form, so load followed by save is byte-identical.

    users.csv            individual_id, community_id, age, gender_score, income, education_score
    features.csv         individual_id, feature_id, rel_freq
    margins.csv          community_id, variable, bin_lo, bin_hi, pct
    national_target.csv  variable, bin_lo, bin_hi, pct
    outcomes.csv         community_id, outcome_name, value
    weights.csv          community_id, individual_id, psi
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .types import (
    VARIABLES,
    FeatureVector,
    Individual,
    MarginTable,
    NationalTarget,
    OutcomeTable,
    Partition,
    ValidationReport,
    WeightAssignment,
    validate_dataset,
)

__all__ = [
    "SchemaError",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "load_weights",
    "save_weights",
    "parse_config_file",
    "fingerprint",
    "write_csv",
]


class SchemaError(ValueError):
    """A file violated its schema; names the file, line, and column."""

    def __init__(self, path, line: int, column: str, message: str):
        self.path = str(path)
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}:{column}: {message}")


@dataclass
class Dataset:
    """Everything one correction-and-evaluation run needs, in memory."""

    individuals: list[Individual]
    features: dict[str, FeatureVector]
    margins: dict[tuple[str, str], MarginTable]
    targets: dict[str, NationalTarget]
    outcomes: dict[str, OutcomeTable]
    provenance: str = ""
    validation: ValidationReport | None = None

    def communities(self) -> dict[str, list[Individual]]:
        out: dict[str, list[Individual]] = {}
        for ind in self.individuals:
            out.setdefault(ind.community_id, []).append(ind)
        return out

    def community_margins(self, cid: str) -> dict[str, MarginTable]:
        return {
            var: self.margins[(cid, var)]
            for var in VARIABLES
            if (cid, var) in self.margins
        }


def fingerprint(*parts) -> str:
    """Short stable hash of configuration values for output headers."""
    text = "|".join(repr(p) for p in parts)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # plain float repr even for numpy scalars
    return str(value)


def write_csv(path: Path, header: list[str], rows, provenance: str = "") -> None:
    """Write one delimited file with optional provenance comment line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            for cell in row:
                if isinstance(cell, str) and ("," in cell or "\n" in cell or cell.startswith("#")):
                    raise SchemaError(path, 0, "id", f"identifier {cell!r} not representable")
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def _read_csv(path: Path, header: list[str]):
    """Yield (line_number, row_dict); also returns provenance via closure-free tuple."""
    provenance = ""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        line_no = 0
        pending_header = True
        reader = csv.reader(fh)
        for raw in reader:
            line_no += 1
            if raw and raw[0].startswith("#"):
                if not provenance:
                    provenance = ",".join(raw).lstrip("# ").strip()
                continue
            if pending_header:
                if raw != header:
                    raise SchemaError(path, line_no, raw[0] if raw else "",
                                      f"expected header {header}, got {raw}")
                pending_header = False
                continue
            if not raw:
                continue
            if len(raw) != len(header):
                raise SchemaError(path, line_no, "", f"expected {len(header)} fields, got {len(raw)}")
            rows.append((line_no, dict(zip(header, raw))))
    if pending_header:
        raise SchemaError(path, 0, "", "missing header row")
    return provenance, rows


def _float(path: Path, line: int, column: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(path, line, column, f"not a number: {raw!r}") from None


_USER_COLUMNS = ["individual_id", "community_id", "age", "gender_score", "income", "education_score"]
_USER_VARS = {"age": "age", "gender_score": "gender", "income": "income", "education_score": "education"}


def load_dataset(directory: str | Path) -> Dataset:
    """Load and validate a dataset directory; clamps out-of-range estimates."""
    d = Path(directory)
    provenance, user_rows = _read_csv(d / "users.csv", _USER_COLUMNS)

    individuals = []
    clamped: dict[str, int] = {}
    for line, row in user_rows:
        demo = {}
        for column, var in _USER_VARS.items():
            value = _float(d / "users.csv", line, column, row[column])
            spec = VARIABLES[var]
            lo, hi = spec.valid_range
            if not lo <= value <= hi:
                clamped[var] = clamped.get(var, 0) + 1
                value = spec.clamp(value)
            demo[var] = value
        individuals.append(Individual(row["individual_id"], row["community_id"], demo))

    features: dict[str, FeatureVector] = {}
    _, feat_rows = _read_csv(d / "features.csv", ["individual_id", "feature_id", "rel_freq"])
    for line, row in feat_rows:
        freq = _float(d / "features.csv", line, "rel_freq", row["rel_freq"])
        features.setdefault(row["individual_id"], {})[row["feature_id"]] = freq

    margins = _load_margin_file(d / "margins.csv")

    targets: dict[str, NationalTarget] = {}
    target_path = d / "national_target.csv"
    if target_path.exists():
        grouped = _load_bins(target_path, ["variable", "bin_lo", "bin_hi", "pct"], key_cols=("variable",))
        for (var,), bins in grouped.items():
            part, pcts = _assemble_partition(target_path, var, bins)
            targets[var] = NationalTarget(var, part, pcts)

    outcomes: dict[str, OutcomeTable] = {}
    outcome_path = d / "outcomes.csv"
    if outcome_path.exists():
        _, rows = _read_csv(outcome_path, ["community_id", "outcome_name", "value"])
        values: dict[str, dict[str, float]] = {}
        for line, row in rows:
            v = _float(outcome_path, line, "value", row["value"])
            values.setdefault(row["outcome_name"], {})[row["community_id"]] = v
        outcomes = {name: OutcomeTable(name, vals) for name, vals in values.items()}

    report = validate_dataset(individuals, features, list(margins.values()))
    merged = ValidationReport(
        n_individuals=report.n_individuals,
        n_communities=report.n_communities,
        small_communities=report.small_communities,
        missing_demographics=report.missing_demographics,
        invalid_margins=report.invalid_margins,
        out_of_range={**report.out_of_range, **clamped},
    )
    return Dataset(individuals, features, margins, targets, outcomes, provenance, merged)


def _load_bins(path: Path, header: list[str], key_cols: tuple[str, ...]):
    _, rows = _read_csv(path, header)
    grouped: dict[tuple, list[tuple[float, float, float]]] = {}
    for line, row in rows:
        lo = _float(path, line, "bin_lo", row["bin_lo"])
        hi = _float(path, line, "bin_hi", row["bin_hi"])
        pct = _float(path, line, "pct", row["pct"])
        key = tuple(row[c] for c in key_cols)
        grouped.setdefault(key, []).append((lo, hi, pct))
    return grouped


def _assemble_partition(path: Path, var: str, bins) -> tuple[Partition, tuple[float, ...]]:
    ordered = sorted(bins)
    try:
        part = Partition(var, tuple((lo, hi) for lo, hi, _ in ordered))
    except ValueError as exc:
        raise SchemaError(path, 0, "bin_lo", f"{var}: {exc}") from None
    return part, tuple(pct for _, _, pct in ordered)


def _load_margin_file(path: Path) -> dict[tuple[str, str], MarginTable]:
    grouped = _load_bins(
        path, ["community_id", "variable", "bin_lo", "bin_hi", "pct"],
        key_cols=("community_id", "variable"),
    )
    margins: dict[tuple[str, str], MarginTable] = {}
    for (cid, var), bins in grouped.items():
        part, pcts = _assemble_partition(path, var, bins)
        margins[(cid, var)] = MarginTable(cid, var, part, pcts)
    return margins


def save_dataset(dataset: Dataset, directory: str | Path, provenance: str | None = None) -> None:
    """Write the dataset files in canonical order (see module docstring)."""
    d = Path(directory)
    stamp = dataset.provenance if provenance is None else provenance

    users = sorted(dataset.individuals, key=lambda i: (i.community_id, i.individual_id))
    write_csv(
        d / "users.csv",
        _USER_COLUMNS,
        (
            (
                i.individual_id,
                i.community_id,
                i.demographics["age"],
                i.demographics["gender"],
                i.demographics["income"],
                i.demographics["education"],
            )
            for i in users
        ),
        stamp,
    )
    write_csv(
        d / "features.csv",
        ["individual_id", "feature_id", "rel_freq"],
        (
            (iid, fid, freq)
            for iid in sorted(dataset.features)
            for fid, freq in sorted(dataset.features[iid].items())
        ),
        stamp,
    )
    write_csv(
        d / "margins.csv",
        ["community_id", "variable", "bin_lo", "bin_hi", "pct"],
        (
            (cid, var, lo, hi, pct)
            for (cid, var) in sorted(dataset.margins)
            for (lo, hi), pct in zip(
                dataset.margins[(cid, var)].partition.bins,
                dataset.margins[(cid, var)].percentages,
            )
        ),
        stamp,
    )
    if dataset.targets:
        write_csv(
            d / "national_target.csv",
            ["variable", "bin_lo", "bin_hi", "pct"],
            (
                (var, lo, hi, pct)
                for var in sorted(dataset.targets)
                for (lo, hi), pct in zip(
                    dataset.targets[var].partition.bins, dataset.targets[var].percentages
                )
            ),
            stamp,
        )
    if dataset.outcomes:
        write_csv(
            d / "outcomes.csv",
            ["community_id", "outcome_name", "value"],
            (
                (cid, name, dataset.outcomes[name].values[cid])
                for name in sorted(dataset.outcomes)
                for cid in sorted(dataset.outcomes[name].values)
            ),
            stamp,
        )


def save_weights(
    weights: dict[str, WeightAssignment], path: str | Path, provenance: str = ""
) -> None:
    write_csv(
        Path(path),
        ["community_id", "individual_id", "psi"],
        (
            (cid, iid, weights[cid].weights[iid])
            for cid in sorted(weights)
            for iid in sorted(weights[cid].weights)
        ),
        provenance,
    )


def load_weights(path: str | Path) -> dict[str, WeightAssignment]:
    p = Path(path)
    _, rows = _read_csv(p, ["community_id", "individual_id", "psi"])
    grouped: dict[str, dict[str, float]] = {}
    for line, row in rows:
        psi = _float(p, line, "psi", row["psi"])
        grouped.setdefault(row["community_id"], {})[row["individual_id"]] = psi
    return {cid: WeightAssignment(cid, w) for cid, w in grouped.items()}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` run-configuration files; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(path, line_no, "", f"expected key = value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
