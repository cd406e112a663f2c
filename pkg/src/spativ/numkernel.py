"""Dense symmetric linear algebra and the modified Bessel function K_nu.

Everything downstream (spatial bases, Gaussian-process simulation, the
estimators) funnels its numerics through this module: symmetric matrices with
guaranteed symmetry, eigendecompositions with a deterministic sign convention,
minimum-norm least squares, Cholesky factorization with an explicit jitter
ladder, and K_0/K_1/K_2 for the Matern correlation family.

Factorizations and eigensolves are delegated to LAPACK via numpy; this module
owns the contracts (ordering, sign conventions, jitter reporting, rank
policy), not the inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

# Euler-Mascheroni constant, used by the K_nu power series.
_EULER_GAMMA = 0.5772156649015328606

__all__ = [
    "DEFAULT_JITTER_LADDER",
    "SymMatrix",
    "EigenDecomposition",
    "LeastSquaresFit",
    "NotPositiveDefinite",
    "NoConvergence",
    "DimensionMismatch",
    "DomainError",
    "cholesky_jittered",
    "sym_eigen",
    "least_squares",
    "bessel_k",
]


class NotPositiveDefinite(Exception):
    """Cholesky failed at every jitter level of the ladder."""


class NoConvergence(Exception):
    """The eigensolver did not converge; carries the iteration count."""

    def __init__(self, iterations: int):
        super().__init__(f"eigensolver failed to converge after {iterations} iterations")
        self.iterations = iterations


class DimensionMismatch(ValueError):
    """Operands have incompatible shapes."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the function."""


class SymMatrix:
    """A dense symmetric matrix; the constructor symmetrizes via (M + M^T)/2.

    The stored array is marked read-only so instances can be shared across
    threads without defensive copies.
    """

    def __init__(self, entries):
        arr = np.array(entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DimensionMismatch("matrix dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        arr = 0.5 * (arr + arr.T)
        arr.setflags(write=False)
        self.entries = arr
        self.n = arr.shape[0]

    def __repr__(self):
        return f"SymMatrix(n={self.n})"


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues ascending; eigenvectors as orthonormal columns.

    Sign convention: in each eigenvector the entry of largest magnitude
    (lowest index on ties) is positive, which makes the decomposition
    reproducible across BLAS builds.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class LeastSquaresFit:
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rank: int


def cholesky_jittered(m: SymMatrix, jitter_ladder=DEFAULT_JITTER_LADDER):
    """Return (L, jitter) with L L^T = m.entries + jitter * I.

    Tries each ladder entry in order and reports the first jitter that gives
    a successful factorization, so near-singular covariances are handled
    loudly rather than silently.
    """
    ladder = list(jitter_ladder)
    if not ladder:
        raise ValueError("jitter ladder must be non-empty")
    if any(j < 0 for j in ladder):
        raise ValueError("jitter ladder entries must be nonnegative")
    if sorted(ladder) != ladder:
        raise ValueError("jitter ladder must be ascending")
    eye = np.eye(m.n)
    for jitter in ladder:
        try:
            lower = np.linalg.cholesky(m.entries + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        return lower, jitter
    raise NotPositiveDefinite(
        f"matrix is not positive definite at any jitter in {ladder}"
    )


def sym_eigen(m: SymMatrix) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, ascending eigenvalues."""
    try:
        eigenvalues, vectors = np.linalg.eigh(m.entries)
    except np.linalg.LinAlgError as exc:  # LAPACK iteration cap exceeded
        raise NoConvergence(30 * m.n) from exc
    # eigh returns ascending eigenvalues already; enforce the sign convention.
    anchor = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[anchor, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    eigenvalues = eigenvalues.copy()
    eigenvalues.setflags(write=False)
    vectors.setflags(write=False)
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=vectors)


def least_squares(design, response) -> LeastSquaresFit:
    """Minimum-norm least squares of response on the design columns.

    Rank deficiency is resolved with pseudo-inverse semantics, so duplicated
    or collinear columns are harmless: fitted values are the orthogonal
    projection onto the column space either way.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    if design.ndim != 2 or response.ndim != 1:
        raise DimensionMismatch("design must be 2-d and response 1-d")
    if design.shape[0] != response.shape[0]:
        raise DimensionMismatch(
            f"design has {design.shape[0]} rows but response has {response.shape[0]}"
        )
    coefficients, _, rank, _ = np.linalg.lstsq(design, response, rcond=1e-10)
    fitted = design @ coefficients
    residuals = response - fitted
    return LeastSquaresFit(
        coefficients=coefficients, fitted=fitted, residuals=residuals, rank=int(rank)
    )


def _k01_series(x):
    """K_0 and K_1 by the ascending power series; accurate for x <= 2."""
    x = np.asarray(x, dtype=float)
    t = x * x / 4.0
    log_half_x = np.log(x / 2.0)
    i0 = np.ones_like(x)
    k0_sum = np.zeros_like(x)
    i1_sum = np.ones_like(x)  # sum for I_1/(x/2), k = 0 term
    k1_sum = np.full_like(x, -2.0 * _EULER_GAMMA)  # (H_0 + H_1 - 2*gamma), H_1 = 1 below
    k1_sum += 1.0
    term0 = np.ones_like(x)  # t^k / (k!)^2
    term1 = np.ones_like(x)  # t^k / (k! (k+1)!)
    harmonic = 0.0
    for k in range(1, 31):
        harmonic += 1.0 / k
        term0 = term0 * t / (k * k)
        term1 = term1 * t / (k * (k + 1))
        i0 = i0 + term0
        k0_sum = k0_sum + term0 * harmonic
        i1_sum = i1_sum + term1
        k1_sum = k1_sum + term1 * (2.0 * harmonic + 1.0 / (k + 1) - 2.0 * _EULER_GAMMA)
    i1 = (x / 2.0) * i1_sum
    k0 = -(log_half_x + _EULER_GAMMA) * i0 + k0_sum
    k1 = 1.0 / x + log_half_x * i1 - (x / 4.0) * k1_sum
    return k0, k1

# Trapezoid nodes for K_nu(x) = e^{-x} * integral_0^inf e^{-x(cosh u - 1)} cosh(nu u) du.
# The integrand is even and analytic, so the trapezoid rule converges
# geometrically; the node count below gives < 1e-12 relative error for x >= 2.
_QUAD_STEP = 0.05
_QUAD_NODES = np.arange(0.0, 5.0 + _QUAD_STEP, _QUAD_STEP)
_QUAD_COSHM1 = np.cosh(_QUAD_NODES) - 1.0


def _k01_integral(x):
    """K_0 and K_1 from the cosh-substituted integral; accurate for x >= 2."""
    x = np.asarray(x, dtype=float)
    expo = np.exp(-np.outer(x, _QUAD_COSHM1))  # (len(x), nodes)
    w0 = np.full(_QUAD_NODES.shape, _QUAD_STEP)
    w0[0] = 0.5 * _QUAD_STEP
    scale = np.exp(-x)
    k0 = scale * (expo @ w0)
    k1 = scale * (expo @ (w0 * np.cosh(_QUAD_NODES)))
    return k0, k1


def bessel_k(nu: int, x):
    """Modified Bessel function of the second kind, K_nu, for nu in {0, 1, 2}.

    Accepts scalars or arrays of positive reals. The power series handles
    x <= 2 and exponentially convergent quadrature of the integral
    representation handles x > 2 (a truncated asymptotic expansion cannot
    reach 1e-8 relative accuracy near the switchover, so quadrature stands in
    for it); K_2 comes from the recurrence K_2 = K_0 + (2/x) K_1.
    """
    if nu not in (0, 1, 2):
        raise DomainError(f"order must be 0, 1, or 2, got {nu}")
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    if np.any(~np.isfinite(x_arr)) or np.any(x_arr <= 0):
        raise DomainError("argument must be positive and finite")
    k0 = np.empty_like(x_arr)
    k1 = np.empty_like(x_arr)
    small = x_arr <= 2.0
    if np.any(small):
        k0[small], k1[small] = _k01_series(x_arr[small])
    if np.any(~small):
        k0[~small], k1[~small] = _k01_integral(x_arr[~small])
    if nu == 0:
        out = k0
    elif nu == 1:
        out = k1
    else:
        out = k0 + (2.0 / x_arr) * k1
    return float(out[0]) if scalar else out
