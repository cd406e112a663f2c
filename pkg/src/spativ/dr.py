"""Doubly robust truncated-exposure effects and exposure-response curves.

The estimand is the ratio E(Y(min(A, c))) / E(Y): the population effect of
capping exposure at c. Identification conditions on measured covariates plus
the large-scale exposure component, so the adjustment set here is a choice of
{covariates, spatial coordinates, a_c}. Estimation follows the doubly robust
recipe: fit an outcome-mean model and a conditional exposure density on the
A >= c subpopulation with a stacked learner ensemble, map each unit through
the doubly robust pseudo-outcome, regress the pseudo-outcome on exposure with
a local linear kernel smoother (bandwidth by leave-one-out CV), read the
smoothed value at c, and assemble the four-component ratio with a delta-method
confidence interval.

The learner stack is {grand mean, linear, linear + pairwise interactions,
linear + quadratic in exposure} combined by exact simplex-constrained least
squares on out-of-fold predictions; the conditional density is Gaussian
around a stacked mean with pooled residual variance. Deliberate
misspecification knobs (density variance scaling, restricted learner lists)
exist so the double-robustness property can be exercised directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .basis import ExposureDecomposition
from .data import KTooLarge, SpatialDataset
from .numkernel import least_squares

__all__ = [
    "AdjustmentSet",
    "DrConfig",
    "NuisanceFit",
    "PseudoOutcome",
    "TruncatedEffectEstimate",
    "GridSpec",
    "Policy",
    "SingularDesign",
    "KTooLarge",
    "EmptySubpopulation",
    "DegenerateWindow",
    "InvalidInterval",
    "ZeroDenominator",
    "PositivityWarning",
    "fit_nuisances",
    "pseudo_outcome",
    "local_linear",
    "local_linear_weights",
    "truncated_effect",
    "influence_functions",
    "delta_method",
    "erc_grid",
    "policy_effect",
    "hausdorff",
    "avg_hausdorff",
]

LEARNER_MEAN = "mean"
LEARNER_LINEAR = "linear"
LEARNER_INTERACTIONS = "interactions"
LEARNER_QUADRATIC = "quadratic"

DEFAULT_OUTCOME_LEARNERS = (
    LEARNER_MEAN, LEARNER_LINEAR, LEARNER_INTERACTIONS, LEARNER_QUADRATIC,
)
DEFAULT_DENSITY_LEARNERS = (LEARNER_MEAN, LEARNER_LINEAR, LEARNER_INTERACTIONS)

_TINY_DENSITY = 1e-300


class SingularDesign(ValueError):
    """A confounder feature is degenerate (zero variance)."""


class EmptySubpopulation(ValueError):
    """No units at or above the cutoff."""


class DegenerateWindow(ValueError):
    """Every candidate bandwidth leaves a fit point with fewer than three
    effective neighbors."""


class InvalidInterval(ValueError):
    """Interval endpoints are not ordered lo <= hi."""


class ZeroDenominator(ValueError):
    """The mean outcome is zero; the ratio estimand is undefined."""


class PositivityWarning(UserWarning):
    """A policy maps some exposures outside the observed range."""


@dataclass(frozen=True)
class AdjustmentSet:
    """Which confounder blocks enter the nuisance models.

    The four named constructors mirror the benchmark adjustment sets:
    ``none`` adjusts for nothing (the outcome model depends on exposure only
    and the density is the marginal normal), the others add measured
    covariates plus the indicated spatial terms.
    """

    covariates: bool = False
    coords: bool = False
    a_c: bool = False

    @staticmethod
    def none() -> "AdjustmentSet":
        return AdjustmentSet()

    @staticmethod
    def spatial_coords() -> "AdjustmentSet":
        return AdjustmentSet(covariates=True, coords=True)

    @staticmethod
    def confounded_component() -> "AdjustmentSet":
        return AdjustmentSet(covariates=True, a_c=True)

    @staticmethod
    def confounded_plus_coords() -> "AdjustmentSet":
        return AdjustmentSet(covariates=True, coords=True, a_c=True)

    @staticmethod
    def from_name(name: str) -> "AdjustmentSet":
        table = {
            "none": AdjustmentSet.none(),
            "coords": AdjustmentSet.spatial_coords(),
            "ac": AdjustmentSet.confounded_component(),
            "ac+coords": AdjustmentSet.confounded_plus_coords(),
            "covariates": AdjustmentSet(covariates=True),
        }
        if name not in table:
            raise ValueError(f"unknown adjustment set {name!r}; choose from {sorted(table)}")
        return table[name]


@dataclass(frozen=True)
class DrConfig:
    """Estimation knobs; defaults follow the benchmark configuration.

    ``density_variance_scale`` != 1 and restricted learner tuples are for
    deliberate-misspecification experiments, not production use.
    """

    folds: int = 5
    fold_seed: int = 1729
    bandwidth_grid: tuple | None = None  # None -> 20 log-spaced in [0.05, 2] * sd(A)
    outcome_learners: tuple = DEFAULT_OUTCOME_LEARNERS
    density_learners: tuple = DEFAULT_DENSITY_LEARNERS
    density_variance_scale: float = 1.0
    positivity_slack: float | None = None  # None -> 0.05 * sd(A)


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid for the exposure-response curve."""

    points: int = 100
    lo_percentile: float = 2.5
    hi_percentile: float = 97.5
    values: tuple | None = None  # explicit grid overrides the percentile rule


@dataclass(frozen=True)
class Policy:
    """Exposure modification q(a): shift by delta, cap at c, or identity."""

    kind: str  # "shift" | "cap" | "identity"
    value: float = 0.0

    def apply(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "shift":
            return a + self.value
        if self.kind == "cap":
            return np.minimum(a, self.value)
        if self.kind == "identity":
            return a.copy()
        raise ValueError(f"unknown policy kind {self.kind!r}")


# A design term is (feature_indices, exposure_power): the column is the
# product of the indexed confounder features times a**power. Keeping designs
# symbolic lets the population average over units collapse each learner to a
# quadratic polynomial in exposure.


def _terms_for(learner: str, q: int, with_exposure: bool):
    intercept = [((), 0)]
    if learner == LEARNER_MEAN:
        return intercept
    linear = intercept + [((j,), 0) for j in range(q)]
    if with_exposure:
        linear = linear + [((), 1)]
    if learner == LEARNER_LINEAR:
        return linear
    if learner == LEARNER_INTERACTIONS:
        pairs = [((j, k), 0) for j, k in combinations(range(q), 2)]
        if with_exposure:
            pairs += [((j,), 1) for j in range(q)]
        return linear + pairs
    if learner == LEARNER_QUADRATIC:
        if with_exposure:
            return linear + [((), 2)]
        return linear
    raise ValueError(f"unknown learner {learner!r}")


def _build_design(terms, features: np.ndarray, a: np.ndarray | None) -> np.ndarray:
    n = features.shape[0]
    cols = []
    for idxs, power in terms:
        col = np.ones(n)
        for j in idxs:
            col = col * features[:, j]
        if power:
            col = col * a**power
        cols.append(col)
    return np.column_stack(cols)


def _simplex_weights(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact arg min over the simplex of ||z w - y||^2 by support enumeration.

    With at most a handful of learners all support subsets are cheap to try.
    Subsets are visited smallest first in learner order, so ties resolve
    toward the earliest (the grand-mean learner) deterministically.
    """
    n_learners = z.shape[1]
    gram = z.T @ z
    zy = z.T @ y
    tol = 1e-10 * (1.0 + float(y @ y))
    best_obj = math.inf
    best_w = None
    indices = list(range(n_learners))
    for size in range(1, n_learners + 1):
        for subset in combinations(indices, size):
            s = list(subset)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = gram[np.ix_(s, s)]
            kkt[:size, size] = 1.0
            kkt[size, :size] = 1.0
            rhs = np.concatenate([zy[s], [1.0]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            w_sub = sol[:size]
            if np.any(w_sub < -1e-9) or abs(w_sub.sum() - 1.0) > 1e-8:
                continue
            w_sub = np.clip(w_sub, 0.0, None)
            w_sub = w_sub / w_sub.sum()
            w = np.zeros(n_learners)
            w[s] = w_sub
            resid = z @ w - y
            obj = float(resid @ resid)
            if obj < best_obj - tol:
                best_obj = obj
                best_w = w
    if best_w is None:  # every subset failed feasibility; fall back to uniform
        best_w = np.full(n_learners, 1.0 / n_learners)
    return best_w


@dataclass
class _Stack:
    """A fitted convex combination of linear-in-parameters learners."""

    learners: tuple
    terms: list
    coefficients: list
    weights: np.ndarray

    def predict(self, features: np.ndarray, a: np.ndarray | None) -> np.ndarray:
        out = np.zeros(features.shape[0])
        for terms, beta, w in zip(self.terms, self.coefficients, self.weights):
            if w == 0.0:
                continue
            out = out + w * (_build_design(terms, features, a) @ beta)
        return out

    def population_polynomial(self, features: np.ndarray) -> tuple:
        """Coefficients (c0, c1, c2) of a -> mean_i prediction(F_i, a).

        Every design column factors as g(F) * a^p with p <= 2, so averaging
        the prediction over units collapses to a quadratic in exposure.
        """
        poly = [0.0, 0.0, 0.0]
        for terms, beta, w in zip(self.terms, self.coefficients, self.weights):
            if w == 0.0:
                continue
            for (idxs, power), b in zip(terms, beta):
                g = np.ones(features.shape[0])
                for j in idxs:
                    g = g * features[:, j]
                poly[power] += w * b * float(g.mean())
        return tuple(poly)


def _fit_stack(learners, features, a, target, folds, fold_seed, with_exposure):
    m = target.shape[0]
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > m:
        raise KTooLarge(f"folds={folds} exceeds {m} estimation units")
    q = features.shape[1]
    terms = [_terms_for(name, q, with_exposure) for name in learners]

    rng = np.random.Generator(np.random.Philox(key=fold_seed))
    fold_id = np.empty(m, dtype=int)
    fold_id[rng.permutation(m)] = np.arange(m) % folds

    oof = np.zeros((m, len(learners)))
    for k in range(folds):
        train = fold_id != k
        test = ~train
        for l, term in enumerate(terms):
            design = _build_design(term, features[train], a[train] if a is not None else None)
            beta = least_squares(design, target[train]).coefficients
            design_test = _build_design(term, features[test], a[test] if a is not None else None)
            oof[test, l] = design_test @ beta
    weights = _simplex_weights(oof, target)

    coefficients = []
    for term in terms:
        design = _build_design(term, features, a)
        coefficients.append(least_squares(design, target).coefficients)
    return _Stack(learners=tuple(learners), terms=terms,
                  coefficients=coefficients, weights=weights), fold_id


@dataclass
class NuisanceFit:
    """Fitted outcome-mean and conditional-density models.

    ``learner_weights`` are the outcome stack's simplex weights; the density
    is Normal(mean_stack(features), density_variance).
    """

    adjust: AdjustmentSet
    feature_names: tuple
    outcome_stack: _Stack
    density_stack: _Stack
    density_variance: float
    learner_weights: np.ndarray
    folds: np.ndarray

    def features_for(self, dataset: SpatialDataset,
                     dec: ExposureDecomposition | None) -> np.ndarray:
        return _confounder_features(dataset, self.adjust, dec)

    def outcome_mean(self, features: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self.outcome_stack.predict(features, a)

    def density_mean(self, features: np.ndarray) -> np.ndarray:
        return self.density_stack.predict(features, None)

    def density(self, a: np.ndarray, features: np.ndarray) -> np.ndarray:
        mean = self.density_mean(features)
        var = self.density_variance
        return np.exp(-0.5 * (a - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def _confounder_features(dataset: SpatialDataset, adjust: AdjustmentSet,
                         dec: ExposureDecomposition | None) -> np.ndarray:
    blocks = []
    if adjust.covariates and dataset.covariates is not None:
        blocks.append(dataset.covariates)
    if adjust.coords:
        blocks.append(dataset.coords)
    if adjust.a_c:
        if dec is None:
            raise ValueError("adjustment set includes a_c but no decomposition given")
        blocks.append(dec.a_c[:, None])
    if not blocks:
        return np.empty((dataset.n, 0))
    return np.column_stack(blocks)


def _feature_names(dataset: SpatialDataset, adjust: AdjustmentSet) -> tuple:
    names = []
    if adjust.covariates and dataset.covariates is not None:
        names.extend(dataset.covariate_names)
    if adjust.coords:
        names.extend(["coord_x", "coord_y"])
    if adjust.a_c:
        names.append("a_c")
    return tuple(names)


def fit_nuisances(dataset: SpatialDataset, adjust: AdjustmentSet,
                  dec: ExposureDecomposition | None = None,
                  config: DrConfig = DrConfig()) -> NuisanceFit:
    """Fit the stacked outcome-mean and Gaussian density models.

    Stacking weights come from simplex-constrained least squares on K-fold
    out-of-fold predictions; the final learners are refit on all rows. With an
    empty adjustment set the density model reduces to the marginal normal
    for exposure.
    """
    if dataset.outcome is None:
        raise ValueError("dataset has no outcome; cannot fit nuisance models")
    features = _confounder_features(dataset, adjust, dec)
    if features.shape[1] and np.any(np.var(features, axis=0) == 0.0):
        raise SingularDesign("a confounder feature has zero variance")
    a = dataset.exposure
    y = dataset.outcome

    outcome_stack, fold_id = _fit_stack(
        config.outcome_learners, features, a, y,
        config.folds, config.fold_seed, with_exposure=True,
    )
    density_stack, _ = _fit_stack(
        config.density_learners, features, None, a,
        config.folds, config.fold_seed, with_exposure=False,
    )
    resid = a - density_stack.predict(features, None)
    variance = float(np.mean(resid**2)) * config.density_variance_scale
    variance = max(variance, 1e-12)
    return NuisanceFit(
        adjust=adjust,
        feature_names=_feature_names(dataset, adjust),
        outcome_stack=outcome_stack,
        density_stack=density_stack,
        density_variance=variance,
        learner_weights=outcome_stack.weights,
        folds=fold_id,
    )


@dataclass
class PseudoOutcome:
    """Doubly robust pseudo-outcome on the estimation subpopulation.

    ``xi`` is full length with NaN off the subpopulation; ``mask`` flags the
    units it is defined on. Values are clamped to the observed outcome range
    of the estimation units; near-zero densities are handled by that clamping,
    never by exclusion.
    """

    xi: np.ndarray
    mask: np.ndarray
    c: float | None
    clamped_count: int
    min_density: float


def pseudo_outcome(dataset: SpatialDataset, nf: NuisanceFit, c: float | None,
                   dec: ExposureDecomposition | None = None) -> PseudoOutcome:
    """Map each unit with A >= c through the doubly robust pseudo-outcome.

    For unit j: (Y_j - mu(F_j, A_j)) / pi(A_j | F_j) * avg_i pi(A_j | F_i)
    + avg_i mu(F_i, A_j), with all averages over the A >= c subpopulation
    (the whole sample when c is None). The nuisance fit must come from the
    same subpopulation.
    """
    a = dataset.exposure
    y = dataset.outcome
    mask = np.ones(dataset.n, dtype=bool) if c is None else a >= c
    if not np.any(mask):
        raise EmptySubpopulation(f"no units with exposure >= {c}")
    features = nf.features_for(dataset, dec)[mask]
    a_sub = a[mask]
    y_sub = y[mask]

    own_density = nf.density(a_sub, features)
    min_density = float(own_density.min())
    # average over units i of the density of a_j under unit i's conditional
    density_means = nf.density_mean(features)
    var = nf.density_variance
    pdf_matrix = np.exp(
        -0.5 * (a_sub[:, None] - density_means[None, :]) ** 2 / var
    ) / math.sqrt(2.0 * math.pi * var)
    avg_density = pdf_matrix.mean(axis=1)

    c0, c1, c2 = nf.outcome_stack.population_polynomial(features)
    avg_mu = c0 + c1 * a_sub + c2 * a_sub**2

    own_mu = nf.outcome_mean(features, a_sub)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi_sub = (y_sub - own_mu) / np.maximum(own_density, _TINY_DENSITY) * avg_density + avg_mu

    lo, hi = float(y_sub.min()), float(y_sub.max())
    clipped = np.clip(np.nan_to_num(xi_sub, nan=hi, posinf=hi, neginf=lo), lo, hi)
    clamped_count = int(np.sum(clipped != xi_sub))

    xi = np.full(dataset.n, np.nan)
    xi[mask] = clipped
    return PseudoOutcome(xi=xi, mask=mask, c=c,
                         clamped_count=clamped_count, min_density=min_density)


def default_bandwidth_grid(a: np.ndarray) -> np.ndarray:
    """20 log-spaced bandwidths between 0.05 and 2 times the exposure sd."""
    sd = float(np.std(a))
    if sd == 0.0:
        return np.array([1.0])
    return np.geomspace(0.05 * sd, 2.0 * sd, 20)


def _smoother_matrix(a: np.ndarray, t_points: np.ndarray, bandwidth: float):
    """Local-linear weight rows at each evaluation point; rows sum to one.

    Returns (weights, effective) where ``effective`` is the Kish sample size
    of each row's kernel weights, used for the degenerate-window check. Rows
    whose exposure spread is numerically zero fall back to the kernel mean.
    """
    d = a[None, :] - t_points[:, None]
    z = d / bandwidth
    kernel = np.exp(-0.5 * z * z)
    s0 = kernel.sum(axis=1)
    sq = np.einsum("ij,ij->i", kernel, kernel)
    effective = np.where(sq > 0.0, s0 * s0 / np.maximum(sq, 1e-300), 0.0)
    s1 = np.einsum("ij,ij->i", kernel, d)
    s2 = np.einsum("ij,ij->i", kernel, d * d)
    denom = s0 * s2 - s1 * s1
    scale = s0 * np.maximum(s2, (bandwidth * 1e-8) ** 2)
    weights = np.zeros_like(kernel)
    fallback = (np.abs(denom) <= 1e-12 * scale) & (s0 > 0.0)
    regular = ~fallback & (s0 > 0.0)
    if np.any(regular):
        weights[regular] = (
            kernel[regular] * (s2[regular, None] - d[regular] * s1[regular, None])
            / denom[regular, None]
        )
    if np.any(fallback):
        weights[fallback] = kernel[fallback] / s0[fallback, None]
    return weights, effective


def _loo_score(a: np.ndarray, values: np.ndarray, bandwidth: float):
    """Leave-one-out CV score of the local-linear smoother, or None if any
    fit point has fewer than three effective neighbors."""
    smoother, effective = _smoother_matrix(a, a, bandwidth)
    if np.any(effective < 3.0):
        return None
    fitted = smoother @ values
    denom = 1.0 - np.diag(smoother)
    if np.any(np.abs(denom) < 1e-12):
        return None
    loo = (values - fitted) / denom
    return float(loo @ loo)


def local_linear(values: np.ndarray, a: np.ndarray, bandwidths=None,
                 eval_at: float = 0.0):
    """Gaussian-kernel local-linear regression with LOO bandwidth selection.

    Scans the bandwidth grid ascending and keeps the first strict optimum, so
    ties break toward the smallest bandwidth. Bandwidths that leave a fit
    point with fewer than three effective neighbors are widened past; if the
    whole grid is degenerate a DegenerateWindow error is raised. Returns
    (value_at_eval, bandwidth, weights_at_eval).
    """
    values = np.asarray(values, dtype=float)
    a = np.asarray(a, dtype=float)
    if a.shape[0] < 5:
        raise DegenerateWindow(f"need at least 5 points, got {a.shape[0]}")
    grid = default_bandwidth_grid(a) if bandwidths is None else np.asarray(bandwidths, float)
    if np.any(grid <= 0):
        raise ValueError("bandwidths must be positive")
    grid = np.sort(grid)
    best = None
    for h in grid:
        score = _loo_score(a, values, float(h))
        if score is None:
            continue
        if best is None or score < best[0] - 1e-12 * (1.0 + abs(best[0])):
            best = (score, float(h))
    if best is None:
        raise DegenerateWindow("every bandwidth in the grid is degenerate")
    bandwidth = best[1]
    weights = local_linear_weights(a, float(eval_at), bandwidth, grid)
    return float(weights @ values), bandwidth, weights


def local_linear_weights(a: np.ndarray, t: float, bandwidth: float,
                         grid: np.ndarray) -> np.ndarray:
    """Weights at t for a fixed bandwidth, widening along the grid if degenerate."""
    point = np.array([t])
    rows, effective = _smoother_matrix(a, point, bandwidth)
    idx = int(np.searchsorted(grid, bandwidth))
    while effective[0] < 3.0 and idx + 1 < grid.shape[0]:
        idx += 1
        rows, effective = _smoother_matrix(a, point, float(grid[idx]))
    if effective[0] < 3.0:
        raise DegenerateWindow(f"no admissible bandwidth at evaluation point {t}")
    return rows[0]


@dataclass(frozen=True)
class TruncatedEffectEstimate:
    """The ratio estimate, its four components, and delta-method uncertainty."""

    psi: float
    theta: tuple
    ci: tuple
    se: float
    bandwidth: float
    clamped_count: int
    min_density: float
    cutoff: float


def influence_functions(y: np.ndarray, a: np.ndarray, c: float,
                        pseudo: PseudoOutcome, nu_hat: float,
                        smoother_weights: np.ndarray):
    """Estimated influence functions of the four ratio components.

    phi_1 uses the linear-smoother representation of the pseudo-outcome
    regression: on the A >= c subpopulation it is the smoother-weighted
    residual, scaled by the subpopulation size so its empirical average
    matches the first-order fluctuation of the smoothed value; zero
    elsewhere. phi_2, phi_3, phi_4 are the centered indicator, the centered
    below-cutoff outcome (zero off its subpopulation), and the centered
    outcome.
    """
    n = y.shape[0]
    below = a < c
    mask = pseudo.mask
    n_above = int(mask.sum())

    phi1 = np.zeros(n)
    phi1[mask] = n_above * smoother_weights * (pseudo.xi[mask] - nu_hat)
    phi2 = below.astype(float) - float(below.mean())
    phi3 = np.zeros(n)
    if np.any(below):
        phi3[below] = y[below] - float(y[below].mean())
    phi4 = y - float(y.mean())
    return phi1, phi2, phi3, phi4


def delta_method(phis, theta: tuple, n: int):
    """Delta-method standard error and 95% CI for the four-component ratio.

    psi = (theta1 (1 - theta2) + theta3 theta2) / theta4; the gradient is
    evaluated at the estimates and combined with the empirical covariance of
    the influence functions.
    """
    theta1, theta2, theta3, theta4 = theta
    if theta4 == 0.0:
        raise ZeroDenominator("mean outcome is zero")
    stacked = np.vstack(phis)
    if stacked.shape[1] != n:
        raise ValueError("influence vectors must have length n")
    sigma = np.cov(stacked, ddof=1) if n > 1 else np.zeros((4, 4))
    grad = np.array([
        (1.0 - theta2) / theta4,
        (-theta1 + theta3) / theta4,
        theta2 / theta4,
        -(theta1 * (1.0 - theta2) + theta2 * theta3) / theta4**2,
    ])
    variance = float(grad @ sigma @ grad)
    se = math.sqrt(max(variance, 0.0) / n)
    psi = (theta1 * (1.0 - theta2) + theta3 * theta2) / theta4
    return se, (psi - 1.96 * se, psi + 1.96 * se)


def _subset_dataset(dataset: SpatialDataset, mask: np.ndarray) -> SpatialDataset:
    return SpatialDataset(
        coords=dataset.coords[mask],
        exposure=dataset.exposure[mask],
        outcome=None if dataset.outcome is None else dataset.outcome[mask],
        covariates=None if dataset.covariates is None else dataset.covariates[mask],
        region=None if dataset.region is None else dataset.region[mask],
        ids=dataset.ids[mask],
        covariate_names=dataset.covariate_names,
    )


def _subset_decomposition(dec: ExposureDecomposition | None, mask: np.ndarray):
    if dec is None:
        return None
    return ExposureDecomposition(
        a_c=dec.a_c[mask], a_uc=dec.a_uc[mask],
        basis=dec.basis, projection_rank=dec.projection_rank,
    )


def truncated_effect(dataset: SpatialDataset, adjust: AdjustmentSet, c: float,
                     dec: ExposureDecomposition | None = None,
                     config: DrConfig = DrConfig()) -> TruncatedEffectEstimate:
    """Doubly robust estimate of E(Y(min(A, c))) / E(Y) with a delta-method CI.

    theta1 is the smoothed pseudo-outcome at the cutoff (0 when no unit
    reaches it), theta2 the below-cutoff fraction, theta3 the below-cutoff
    outcome mean (0 when empty), theta4 the overall outcome mean. When every
    unit is below the cutoff the cap is vacuous and the estimate is exactly 1
    with a zero-width interval.
    """
    if dataset.outcome is None:
        raise ValueError("dataset has no outcome")
    y = dataset.outcome
    a = dataset.exposure
    n = dataset.n
    theta2 = float(np.mean(a < c))
    theta4 = float(np.mean(y))
    if theta4 == 0.0:
        raise ZeroDenominator("mean outcome is zero")
    theta3 = float(np.mean(y[a < c])) if theta2 > 0.0 else 0.0

    mask = a >= c
    if not np.any(mask):
        psi = (0.0 * (1.0 - theta2) + theta3 * theta2) / theta4  # == 1 exactly
        theta = (0.0, theta2, theta3, theta4)
        placeholder = PseudoOutcome(
            xi=np.full(n, np.nan), mask=mask, c=c, clamped_count=0,
            min_density=math.nan,
        )
        phis = influence_functions(y, a, c, placeholder, 0.0, np.empty(0))
        se, ci = delta_method(phis, theta, n)
        return TruncatedEffectEstimate(
            psi=psi, theta=theta, ci=ci, se=se, bandwidth=math.nan,
            clamped_count=0, min_density=math.nan, cutoff=c,
        )

    sub_data = _subset_dataset(dataset, mask)
    sub_dec = _subset_decomposition(dec, mask)
    nf = fit_nuisances(sub_data, adjust, sub_dec, config)
    pseudo = pseudo_outcome(dataset, nf, c, dec)

    a_sub = a[mask]
    xi_sub = pseudo.xi[mask]
    grid = (np.sort(np.asarray(config.bandwidth_grid, float))
            if config.bandwidth_grid is not None else default_bandwidth_grid(a_sub))
    nu_hat, bandwidth, weights = local_linear(xi_sub, a_sub, grid, eval_at=c)

    theta1 = float(nu_hat)
    theta = (theta1, theta2, theta3, theta4)
    psi = (theta1 * (1.0 - theta2) + theta3 * theta2) / theta4
    phis = influence_functions(y, a, c, pseudo, theta1, weights)
    se, ci = delta_method(phis, theta, n)
    return TruncatedEffectEstimate(
        psi=psi, theta=theta, ci=ci, se=se, bandwidth=bandwidth,
        clamped_count=pseudo.clamped_count, min_density=pseudo.min_density,
        cutoff=c,
    )


def erc_grid(dataset: SpatialDataset, adjust: AdjustmentSet,
             dec: ExposureDecomposition | None = None,
             grid_spec: GridSpec = GridSpec(),
             config: DrConfig = DrConfig()):
    """Exposure-response curve on a grid with pointwise delta-method CIs.

    The pseudo-outcome is computed on the full sample (no cutoff
    restriction); the default grid is 100 equally spaced points between the
    2.5th and 97.5th exposure percentiles. Returns a list of rows
    (a, nu_hat, ci_lo, ci_hi).
    """
    nf = fit_nuisances(dataset, adjust, dec, config)
    pseudo = pseudo_outcome(dataset, nf, None, dec)
    a = dataset.exposure
    xi = pseudo.xi
    if grid_spec.values is not None:
        grid_points = np.asarray(grid_spec.values, dtype=float)
    else:
        lo = float(np.percentile(a, grid_spec.lo_percentile))
        hi = float(np.percentile(a, grid_spec.hi_percentile))
        if grid_spec.points == 1:
            grid_points = np.array([(lo + hi) / 2.0])
        else:
            grid_points = np.linspace(lo, hi, grid_spec.points)
    bw_grid = (np.sort(np.asarray(config.bandwidth_grid, float))
               if config.bandwidth_grid is not None else default_bandwidth_grid(a))
    _, bandwidth, _ = local_linear(xi, a, bw_grid, eval_at=float(grid_points[0]))
    n = dataset.n
    rows = []
    for t in grid_points:
        weights = local_linear_weights(a, float(t), bandwidth, bw_grid)
        value = float(weights @ xi)
        phi = n * weights * (xi - value)
        se = math.sqrt(max(float(np.var(phi, ddof=1)), 0.0) / n)
        rows.append({
            "a": float(t), "nu_hat": value,
            "ci_lo": value - 1.96 * se, "ci_hi": value + 1.96 * se,
        })
    return rows


def policy_effect(dataset: SpatialDataset, adjust: AdjustmentSet, policy: Policy,
                  dec: ExposureDecomposition | None = None,
                  config: DrConfig = DrConfig()):
    """Outcome-regression plug-in for a modified exposure policy.

    Shift and identity policies report mean mu(F_i, q(A_i)) minus the mean
    outcome; the cap policy reports the ratio form matching the truncated
    effect (plug-in only, no doubly robust correction). Units pushed outside
    the observed exposure range by more than the positivity slack are counted
    and raise a non-fatal PositivityWarning.
    """
    if dataset.outcome is None:
        raise ValueError("dataset has no outcome")
    nf = fit_nuisances(dataset, adjust, dec, config)
    features = nf.features_for(dataset, dec)
    a = dataset.exposure
    moved = policy.apply(a)
    slack = (config.positivity_slack if config.positivity_slack is not None
             else 0.05 * float(np.std(a)))
    lo, hi = float(a.min()) - slack, float(a.max()) + slack
    extrapolating = int(np.sum((moved < lo) | (moved > hi)))
    if extrapolating:
        warnings.warn(
            f"{extrapolating} units moved outside the observed exposure range",
            PositivityWarning,
            stacklevel=2,
        )
    predicted = nf.outcome_mean(features, moved)
    mean_y = float(dataset.outcome.mean())
    if policy.kind == "cap":
        if mean_y == 0.0:
            raise ZeroDenominator("mean outcome is zero")
        estimate = float(predicted.mean()) / mean_y
    else:
        estimate = float(predicted.mean()) - mean_y
    return {"estimate": estimate, "extrapolating_units": extrapolating,
            "policy": policy}


def hausdorff(i1, i2) -> float:
    """Hausdorff distance between two intervals: max endpoint discrepancy."""
    (a1, b1), (a2, b2) = i1, i2
    if a1 > b1 or a2 > b2:
        raise InvalidInterval("interval endpoints must satisfy lo <= hi")
    return max(abs(a1 - a2), abs(b1 - b2))


def avg_hausdorff(pairs) -> float:
    """Mean Hausdorff distance over (interval, interval) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one interval pair")
    return float(np.mean([hausdorff(i1, i2) for i1, i2 in pairs]))
