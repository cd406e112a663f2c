"""Spatial basis families and the exposure decomposition A = A_C + A_UC.

Four basis kinds are supported: thin plate spline columns over the
coordinates, eigenvector bases of the Graph Laplacian and of the ICAR
precision matrix (identical construction, two labels), and region
indicators. ``decompose`` projects any vector onto a basis, splitting it
into a large-scale component (the projection) and the small-scale remainder
that serves as the instrument.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .numkernel import SymMatrix, least_squares, sym_eigen

__all__ = [
    "SpatialBasis",
    "ExposureDecomposition",
    "DfOutOfRange",
    "DegenerateCoordinates",
    "MOutOfRange",
    "NoRegionLabels",
    "ZeroInstrumentWarning",
    "tps_basis",
    "eigen_basis",
    "region_basis",
    "decompose",
    "variance_targeted_dimension",
]

KIND_TPS = "ThinPlateSpline"
KIND_LAPLACIAN = "LaplacianEigen"
KIND_PRECISION = "PrecisionEigen"
KIND_REGION = "RegionIndicator"


class DfOutOfRange(ValueError):
    """Thin plate spline degrees of freedom outside [4, n]."""


class DegenerateCoordinates(ValueError):
    """All coordinates identical; no spatial basis can be built."""


class MOutOfRange(ValueError):
    """Eigen-basis dimension outside [1, n]."""


class NoRegionLabels(ValueError):
    """Region basis requested but the dataset carries no region labels."""


class ZeroInstrumentWarning(UserWarning):
    """The residual component has (numerically) zero variance; the exposure
    is collinear with the basis and the instrument is unidentified."""


def _constant_in_span(matrix: np.ndarray) -> bool:
    ones = np.ones(matrix.shape[0])
    fit = least_squares(matrix, ones)
    return bool(np.max(np.abs(fit.residuals)) < 1e-8)


@dataclass(frozen=True)
class SpatialBasis:
    """An n x m matrix of basis columns plus provenance.

    For eigen kinds the columns are ordered smooth to rough (ascending
    eigenvalue); ``meta`` carries the eigenvalues, knots, or level names.
    """

    kind: str
    matrix: np.ndarray
    meta: tuple
    includes_constant: bool

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise ValueError("basis matrix must be n x m with m >= 1")
        norms = np.linalg.norm(self.matrix, axis=0)
        if not np.all(np.isfinite(norms)) or np.any(norms == 0):
            raise ValueError("basis columns must be finite and nonzero")
        self.matrix.setflags(write=False)

    @property
    def m(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ExposureDecomposition:
    """Large-scale component a_c (the projection) and residual instrument a_uc."""

    a_c: np.ndarray
    a_uc: np.ndarray
    basis: SpatialBasis
    projection_rank: int

    @property
    def instrument_variance_share(self) -> float:
        total = float(np.var(self.a_c + self.a_uc))
        if total == 0.0:
            return 0.0
        return float(np.var(self.a_uc)) / total


def _maximin_knots(coords: np.ndarray, count: int) -> np.ndarray:
    """Deterministic farthest-point subsample of the data locations.

    Starts at the point closest to the centroid and greedily adds the point
    farthest from the chosen set (ties toward the lower index), so knot
    layouts are reproducible across runs and platforms.
    """
    centroid = coords.mean(axis=0)
    start = int(np.argmin(np.sum((coords - centroid) ** 2, axis=1)))
    chosen = [start]
    min_dist = np.sum((coords - coords[start]) ** 2, axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(min_dist))
        if min_dist[nxt] <= 0.0:
            # fewer distinct locations than knots; reuse is harmless because
            # the projection uses pseudo-inverse semantics
            nxt = int(len(chosen) % coords.shape[0])
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.sum((coords - coords[nxt]) ** 2, axis=1))
    return np.array(chosen, dtype=int)


def tps_basis(dataset, df: int) -> SpatialBasis:
    """Unpenalized thin plate spline regression basis with ``df`` columns.

    Columns are [1, x, y, phi(|s - k_1|), ..., phi(|s - k_{df-3}|)] with
    phi(r) = r^2 log r and phi(0) = 0; knots are a maximin subsample of the
    data locations.
    """
    coords = dataset.coords
    n = coords.shape[0]
    if df < 4 or df > n:
        raise DfOutOfRange(f"df must be in [4, n={n}], got {df}")
    if np.allclose(coords, coords[0], atol=0.0):
        raise DegenerateCoordinates("all coordinates identical")
    knot_idx = _maximin_knots(coords, df - 3)
    knots = coords[knot_idx]
    cols = [np.ones(n), coords[:, 0].copy(), coords[:, 1].copy()]
    for knot in knots:
        r = np.sqrt(np.sum((coords - knot) ** 2, axis=1))
        col = np.zeros(n)
        pos = r > 0
        col[pos] = r[pos] ** 2 * np.log(r[pos])
        cols.append(col)
    matrix = np.column_stack(cols)
    return SpatialBasis(
        kind=KIND_TPS,
        matrix=matrix,
        meta=tuple(map(tuple, knots)),
        includes_constant=True,
    )


def eigen_basis(matrix: SymMatrix, m: int, which: str = "smoothest",
                kind: str = KIND_LAPLACIAN) -> SpatialBasis:
    """Eigenvector basis of a Laplacian or precision matrix.

    ``smoothest`` takes the m eigenvectors of the smallest eigenvalues,
    ``roughest`` the m largest; in both cases columns stay ordered by
    ascending eigenvalue.
    """
    n = matrix.n
    if not 1 <= m <= n:
        raise MOutOfRange(f"m must be in [1, n={n}], got {m}")
    if which not in ("smoothest", "roughest"):
        raise ValueError(f"which must be 'smoothest' or 'roughest', got {which!r}")
    if kind not in (KIND_LAPLACIAN, KIND_PRECISION):
        raise ValueError(f"eigen basis kind must be Laplacian or Precision, got {kind!r}")
    decomp = sym_eigen(matrix)
    idx = np.arange(m) if which == "smoothest" else np.arange(n - m, n)
    cols = decomp.eigenvectors[:, idx].copy()
    eigenvalues = decomp.eigenvalues[idx]
    return SpatialBasis(
        kind=kind,
        matrix=cols,
        meta=tuple(eigenvalues.tolist()),
        includes_constant=_constant_in_span(cols),
    )


def region_basis(dataset) -> SpatialBasis:
    """One 0/1 indicator column per region level; levels sorted by name."""
    if dataset.region is None:
        raise NoRegionLabels("dataset has no region labels")
    labels = [str(r) for r in dataset.region]
    levels = sorted(set(labels))
    matrix = np.column_stack([
        np.array([1.0 if lab == level else 0.0 for lab in labels]) for level in levels
    ])
    return SpatialBasis(
        kind=KIND_REGION,
        matrix=matrix,
        meta=tuple(levels),
        includes_constant=True,
    )


def decompose(a, basis: SpatialBasis) -> ExposureDecomposition:
    """Split a vector into its projection onto the basis and the remainder.

    The projection uses minimum-norm least squares, so rank-deficient bases
    (duplicated columns, region indicators with empty levels) are safe. A
    ZeroInstrumentWarning is issued when the remainder carries essentially no
    variance, which makes downstream IV estimates unidentified.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.shape[0] != basis.matrix.shape[0]:
        raise ValueError(
            f"vector length {a.shape} does not match basis rows {basis.matrix.shape[0]}"
        )
    fit = least_squares(basis.matrix, a)
    a_c = fit.fitted
    a_uc = fit.residuals
    var_a = float(np.var(a))
    if var_a == 0.0 or float(np.var(a_uc)) / var_a < 1e-12:
        warnings.warn(
            "residual component has ~zero variance; exposure is collinear "
            "with the basis",
            ZeroInstrumentWarning,
            stacklevel=2,
        )
    return ExposureDecomposition(a_c=a_c, a_uc=a_uc, basis=basis, projection_rank=fit.rank)


def variance_targeted_dimension(a, build, dims, target: float):
    """Pick the basis dimension whose explained variance share is closest to target.

    ``build`` maps a dimension to a SpatialBasis; ``dims`` is the candidate
    list. Returns (dimension, decomposition, share). Shares are nondecreasing
    for nested families, so scanning is cheap at desk scale.
    """
    best = None
    for dim in dims:
        basis = build(dim)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroInstrumentWarning)
            dec = decompose(a, basis)
        share = 1.0 - dec.instrument_variance_share
        score = abs(share - target)
        if best is None or score < best[0]:
            best = (score, dim, dec, share)
    if best is None:
        raise ValueError("no candidate dimensions supplied")
    return best[1], best[2], best[3]
