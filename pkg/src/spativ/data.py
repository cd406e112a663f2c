"""Spatial dataset model, CSV ingestion, distances, and adjacency graphs.

A SpatialDataset bundles planar coordinates, exposure, optional outcome and
covariates, and optional region labels. Adjacency comes either from a
symmetrized k-nearest-neighbor rule on the coordinates or from a user-supplied
edge list (for users who have true contiguity); the Graph Laplacian L = D - W
built here doubles as the ICAR precision matrix for the eigenvector bases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .numkernel import SymMatrix

__all__ = [
    "SpatialDataset",
    "SpatialGraph",
    "MissingColumn",
    "EmptyAfterFiltering",
    "NonNumericValue",
    "KTooLarge",
    "load_csv",
    "save_csv",
    "distance_matrix",
    "knn_graph",
    "graph_from_edges",
    "load_edge_list",
    "graph_laplacian",
]

# Cell contents treated as missing (row dropped) rather than malformed.
_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class MissingColumn(ValueError):
    """A column named in the schema mapping is absent from the file."""


class EmptyAfterFiltering(ValueError):
    """Every row was dropped by the missing-value filter."""


class NonNumericValue(ValueError):
    """A mapped cell holds a non-numeric, non-missing token."""

    def __init__(self, column: str, row: int, token: str):
        super().__init__(f"non-numeric value {token!r} in column {column!r} at data row {row}")
        self.column = column
        self.row = row
        self.token = token


class KTooLarge(ValueError):
    """k-nearest-neighbor request with k >= n."""


@dataclass
class SpatialDataset:
    """Units with planar coordinates, exposure, and optional outcome/covariates.

    Coordinates are planar x, y in the unit declared by ``distance_unit``
    (defaults to the simulation convention of 1e6 m). Outcome and covariates
    are either fully present or absent; partially missing columns never
    survive ingestion.
    """

    coords: np.ndarray
    exposure: np.ndarray
    outcome: np.ndarray | None = None
    covariates: np.ndarray | None = None
    region: np.ndarray | None = None
    ids: np.ndarray | None = None
    distance_unit: str = "1e6 m"
    dropped_rows: int = 0
    covariate_names: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        self.exposure = np.asarray(self.exposure, dtype=float)
        n = self.exposure.shape[0]
        if self.coords.ndim != 2 or self.coords.shape != (n, 2):
            raise ValueError(f"coords must be (n, 2) with n={n}, got {self.coords.shape}")
        if n < 3:
            raise ValueError(f"need at least 3 units, got {n}")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain non-finite values")
        if not np.all(np.isfinite(self.exposure)):
            raise ValueError("exposure contains non-finite values")
        if self.outcome is not None:
            self.outcome = np.asarray(self.outcome, dtype=float)
            if self.outcome.shape != (n,):
                raise ValueError("outcome length does not match")
            if not np.all(np.isfinite(self.outcome)):
                raise ValueError("outcome contains non-finite values")
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.ndim != 2 or self.covariates.shape[0] != n:
                raise ValueError("covariates must be an (n, p) matrix")
            if not np.all(np.isfinite(self.covariates)):
                raise ValueError("covariates contain non-finite values")
            if not self.covariate_names:
                self.covariate_names = tuple(
                    f"x{j + 1}" for j in range(self.covariates.shape[1])
                )
        if self.region is not None:
            self.region = np.asarray(self.region)
            if self.region.shape != (n,):
                raise ValueError("region length does not match")
            if any(str(r) == "" for r in self.region):
                raise ValueError("every unit must carry a region label")
        if self.ids is None:
            self.ids = np.arange(n)
        else:
            self.ids = np.asarray(self.ids)
            if self.ids.shape != (n,):
                raise ValueError("ids length does not match")
            if len(set(self.ids.tolist())) != n:
                raise ValueError("ids must be unique")

    @property
    def n(self) -> int:
        return self.exposure.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected simple graph on dataset units."""

    n: int
    edges: frozenset
    degree: np.ndarray
    connected: bool
    n_components: int


def _parse_cell(token: str, column: str, row: int):
    token = token.strip()
    if token.lower() in _MISSING_TOKENS:
        return None
    try:
        return float(token)
    except ValueError:
        raise NonNumericValue(column, row, token) from None


def load_csv(path, schema: dict) -> SpatialDataset:
    """Read a dataset from CSV using a column-name mapping.

    ``schema`` maps roles to column names: required ``x``, ``y``,
    ``exposure``; optional ``outcome``, ``region``, ``id``, and
    ``covariates`` (a list of column names). Rows with any missing mapped
    value are dropped and counted in ``dropped_rows``.
    """
    covariate_cols = list(schema.get("covariates", []))
    required = {"x": schema["x"], "y": schema["y"], "exposure": schema["exposure"]}
    optional = {
        key: schema[key] for key in ("outcome", "region", "id") if schema.get(key)
    }
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterFiltering(f"{path}: file has no header row") from None
        header = [h.strip() for h in header]
        col_index = {}
        for col in list(required.values()) + list(optional.values()) + covariate_cols:
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
            col_index[col] = header.index(col)

        rows = []
        dropped = 0
        for row_num, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            record = {}
            missing = False
            for role, col in required.items():
                value = _parse_cell(row[col_index[col]], col, row_num)
                if value is None:
                    missing = True
                    break
                record[role] = value
            if not missing:
                for col in covariate_cols:
                    value = _parse_cell(row[col_index[col]], col, row_num)
                    if value is None:
                        missing = True
                        break
                    record[col] = value
            if not missing and "outcome" in optional:
                value = _parse_cell(row[col_index[optional["outcome"]]], optional["outcome"], row_num)
                if value is None:
                    missing = True
                else:
                    record["outcome"] = value
            if not missing and "region" in optional:
                token = row[col_index[optional["region"]]].strip()
                if token.lower() in _MISSING_TOKENS:
                    missing = True
                else:
                    record["region"] = token
            if missing:
                dropped += 1
                continue
            if "id" in optional:
                record["id"] = row[col_index[optional["id"]]].strip()
            rows.append(record)

    if not rows:
        raise EmptyAfterFiltering(f"{path}: no rows left after dropping missing values")

    coords = np.array([[r["x"], r["y"]] for r in rows])
    exposure = np.array([r["exposure"] for r in rows])
    outcome = np.array([r["outcome"] for r in rows]) if "outcome" in optional else None
    covariates = (
        np.array([[r[c] for c in covariate_cols] for r in rows]) if covariate_cols else None
    )
    region = np.array([r["region"] for r in rows]) if "region" in optional else None
    ids = np.array([r["id"] for r in rows]) if "id" in optional else None
    return SpatialDataset(
        coords=coords,
        exposure=exposure,
        outcome=outcome,
        covariates=covariates,
        region=region,
        ids=ids,
        dropped_rows=dropped,
        covariate_names=tuple(covariate_cols),
    )


def save_csv(dataset: SpatialDataset, path, float_format=repr) -> dict:
    """Write a dataset back to CSV; returns the schema mapping that reloads it."""
    header = ["id", "x", "y", "exposure"]
    schema = {"id": "id", "x": "x", "y": "y", "exposure": "exposure"}
    if dataset.outcome is not None:
        header.append("outcome")
        schema["outcome"] = "outcome"
    if dataset.region is not None:
        header.append("region")
        schema["region"] = "region"
    cov_names = list(dataset.covariate_names)
    header.extend(cov_names)
    if cov_names:
        schema["covariates"] = cov_names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [
                str(dataset.ids[i]),
                float_format(dataset.coords[i, 0]),
                float_format(dataset.coords[i, 1]),
                float_format(dataset.exposure[i]),
            ]
            if dataset.outcome is not None:
                row.append(float_format(dataset.outcome[i]))
            if dataset.region is not None:
                row.append(str(dataset.region[i]))
            for j in range(dataset.p):
                row.append(float_format(dataset.covariates[i, j]))
            writer.writerow(row)
    return schema


def distance_matrix(dataset: SpatialDataset) -> SymMatrix:
    """Pairwise Euclidean distances between unit coordinates."""
    coords = dataset.coords
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, 0.0)
    return SymMatrix(dist)


def _graph_from_edge_set(n: int, edges: set) -> SpatialGraph:
    degree = np.zeros(n, dtype=int)
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1
    # connected-component count via union-find; the Laplacian's zero
    # eigenvalue multiplicity equals this number.
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    n_components = len({find(i) for i in range(n)})
    return SpatialGraph(
        n=n,
        edges=frozenset(edges),
        degree=degree,
        connected=(n_components == 1),
        n_components=n_components,
    )


def knn_graph(dataset: SpatialDataset, k: int) -> SpatialGraph:
    """Symmetrized k-nearest-neighbor graph on the dataset coordinates.

    An edge is present if either endpoint lists the other among its k nearest
    neighbors. Distance ties break toward the lower record index, which keeps
    the graph reproducible on gridded layouts.
    """
    n = dataset.n
    if not 1 <= k < n:
        raise KTooLarge(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    dist = distance_matrix(dataset).entries
    edges = set()
    order = np.arange(n)
    for i in range(n):
        # lexicographic (distance, index) sort; exclude self
        keys = np.lexsort((order, dist[i]))
        neighbors = [j for j in keys if j != i][:k]
        for j in neighbors:
            edges.add((min(i, j), max(i, j)))
    return _graph_from_edge_set(n, edges)


def graph_from_edges(n: int, pairs) -> SpatialGraph:
    """Build a graph from explicit undirected index pairs (self-loops rejected)."""
    edges = set()
    for a, b in pairs:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self-loop on node {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"edge ({a}, {b}) out of range for n={n}")
        edges.add((min(a, b), max(a, b)))
    return _graph_from_edge_set(n, edges)


def load_edge_list(path, dataset: SpatialDataset) -> SpatialGraph:
    """Read a two-column edge list whose entries are dataset ids."""
    id_to_index = {str(v): i for i, v in enumerate(dataset.ids)}
    pairs = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        for row_num, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: row {row_num} needs two id columns")
            a, b = row[0].strip(), row[1].strip()
            if a not in id_to_index or b not in id_to_index:
                raise ValueError(f"{path}: row {row_num} references unknown id")
            pairs.append((id_to_index[a], id_to_index[b]))
    return graph_from_edges(dataset.n, pairs)


def graph_laplacian(graph: SpatialGraph) -> SymMatrix:
    """L = D - W with binary adjacency; rows sum to zero."""
    lap = np.zeros((graph.n, graph.n))
    for i, j in graph.edges:
        lap[i, j] = -1.0
        lap[j, i] = -1.0
    np.fill_diagonal(lap, graph.degree.astype(float))
    return SymMatrix(lap)
