"""Model (JSON) and dataset (CSV) file formats.

Model files carry ``variables``, ``edges``, ``equations`` and optionally
``exogenous_pmfs``.  Equation tables list child states in lexicographic
parent order.  Variables may declare string ``labels`` which are mapped to
integer states when datasets are loaded.

Dataset files are CSV with a header of endogenous variable names and one
row per observation, or the aggregated variant with a trailing ``count``
column.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping
from pathlib import Path

from .errors import DataError, ModelError
from .model import Dataset, Scm, StructuralEquation, Variable


def model_to_dict(model: Scm, labels: Mapping[str, list[str]] | None = None) -> dict:
    doc: dict = {
        "variables": [
            {"name": v.name, "cardinality": v.cardinality, "kind": v.kind}
            for v in model.variables
        ],
        "edges": [[p, c] for p, c in model.edges],
        "equations": [
            {"child": eq.child, "parents": list(eq.parents), "table": list(eq.table)}
            for eq in (model.equations[v.name] for v in model.endogenous)
        ],
    }
    if labels:
        for entry in doc["variables"]:
            if entry["name"] in labels:
                entry["labels"] = list(labels[entry["name"]])
    if model.exogenous_pmfs is not None:
        doc["exogenous_pmfs"] = {
            name: list(pmf.values) for name, pmf in model.exogenous_pmfs.items()
        }
    return doc


def model_from_dict(doc: Mapping) -> Scm:
    try:
        raw_vars = doc["variables"]
        raw_eqs = doc["equations"]
    except KeyError as exc:
        raise ModelError(f"model document is missing key {exc}") from None

    variables = []
    labels: dict[str, list[str]] = {}
    for entry in raw_vars:
        variables.append(
            Variable(str(entry["name"]), int(entry["cardinality"]), str(entry["kind"]))
        )
        if "labels" in entry:
            lab = [str(s) for s in entry["labels"]]
            if len(lab) != int(entry["cardinality"]):
                raise ModelError(f"labels for {entry['name']!r} do not match the cardinality")
            labels[str(entry["name"])] = lab

    equations = [
        StructuralEquation(
            child=str(e["child"]),
            parents=tuple(str(p) for p in e["parents"]),
            table=tuple(int(v) for v in e["table"]),
        )
        for e in raw_eqs
    ]
    pmfs = doc.get("exogenous_pmfs")
    model = Scm(variables, equations, pmfs)

    declared = {(str(p), str(c)) for p, c in doc.get("edges", [])}
    if declared and declared != set(model.edges):
        extra = declared - set(model.edges)
        missing = set(model.edges) - declared
        parts = []
        if extra:
            parts.append(f"edges {sorted(extra)} have no equation backing")
        if missing:
            parts.append(f"equation arcs {sorted(missing)} are not declared")
        raise ModelError("edge list disagrees with equations: " + "; ".join(parts))

    model.state_labels = labels  # type: ignore[attr-defined]
    return model


def load_model(path: str | Path) -> Scm:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: Scm, path: str | Path, labels: Mapping[str, list[str]] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, labels), fh, indent=2)
        fh.write("\n")


def _decode_cell(cell: str, column: str, labels: Mapping[str, list[str]]) -> int:
    cell = cell.strip()
    if column in labels and cell in labels[column]:
        return labels[column].index(cell)
    try:
        return int(cell)
    except ValueError:
        raise DataError(f"cannot decode state {cell!r} for column {column!r}") from None


def load_dataset(
    path: str | Path, labels: Mapping[str, list[str]] | None = None
) -> Dataset:
    labels = dict(labels or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty dataset file") from None
        header = [h.strip() for h in header]
        aggregated = bool(header) and header[-1] == "count"
        columns = header[:-1] if aggregated else header
        if not columns:
            raise DataError(f"{path}: no data columns in header")
        counts: dict[tuple[int, ...], int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells")
            cfg = tuple(
                _decode_cell(cell, col, labels) for cell, col in zip(row, columns)
            )
            if aggregated:
                try:
                    count = int(row[-1])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad count {row[-1]!r}") from None
            else:
                count = 1
            counts[cfg] = counts.get(cfg, 0) + count
    return Dataset(columns, counts)


def save_dataset(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.columns) + ["count"])
        for cfg in sorted(data.counts):
            writer.writerow(list(cfg) + [data.counts[cfg]])
