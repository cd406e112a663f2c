"""Matern Gaussian-process simulation of spatially confounded exposures.

A scenario draws three jointly Gaussian spatial fields on a set of planar
locations: a small-scale exposure component, a large-scale exposure component,
and an unmeasured confounder that is correlated with the large-scale component
(cross-correlation 0.95 by default). Exposure is the sum of the two
components; outcomes follow a linear or nonlinear model in exposure and the
confounder with unit Gaussian noise. Three mechanisms vary the instrument's
spatial range and, in the third, apply the whole process independently within
regions.

Randomness is counter-based (numpy Philox) and every draw is a pure function
of (scenario, seed), so replication batches can run on any schedule and still
produce identical output.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .data import SpatialDataset
from .numkernel import DEFAULT_JITTER_LADDER, DomainError, SymMatrix, bessel_k, cholesky_jittered

__all__ = [
    "SimScenario",
    "SimDraw",
    "OUTCOME_LINEAR",
    "OUTCOME_NONLINEAR",
    "RNG_NAME",
    "matern_corr",
    "joint_covariance",
    "synthetic_layout",
    "synthetic_regions",
    "sample_draw",
    "true_truncated_effect",
    "run_replications",
    "summarize_replications",
]

OUTCOME_LINEAR = "linear"
OUTCOME_NONLINEAR = "nonlinear"

RNG_NAME = "philox4x64"

# Synthetic layout extent in scenario distance units; roughly the aspect of a
# wide southern-US region at 1e6 m scale.
_LAYOUT_EXTENT = (1.2, 0.9)
_REGION_SITE_SEED = 1404

# Outcome mean coefficients: (b0, b_a, b_u, b_au, b_a2, b_a2u) in
# m(a, u) = b0 + b_a*a + b_u*u + b_au*a*u + b_a2*a^2 + b_a2u*a^2*u.
_LINEAR_COEFFS = (-0.5, 1.0, -1.0, -0.5, 0.0, 0.0)
_NONLINEAR_COEFFS = (-0.5, 1.0, -1.0, -0.5, -0.1, 0.1)

_MECHANISM_THETA_UC = {"M1": 0.01, "M2": 0.05, "M3": 0.01}


@dataclass(frozen=True)
class SimScenario:
    """Complete specification of one data-generating process.

    ``theta_uc`` defaults by mechanism (0.01 for M1/M3, 0.05 for M2);
    ``outcome_coeffs`` overrides the preset outcome-model coefficients for
    diagnostic runs and ``outcome_noise_sd=0`` disables outcome noise.
    ``matern_scaled_argument`` switches the Matern argument from d/theta to
    sqrt(2*nu)*d/theta; the choice is recorded in output metadata.
    """

    mechanism: str = "M1"
    outcome_model: str = OUTCOME_LINEAR
    n: int = 503
    seed: int = 0
    theta_uc: float | None = None
    theta_c: float = 0.5
    cross_corr: float = 0.95
    means: tuple = (0.1, -0.2, 0.3)
    coords_file: str | None = None
    n_regions: int = 5
    outcome_noise_sd: float = 1.0
    outcome_coeffs: tuple | None = None
    matern_scaled_argument: bool = False
    jitter_ladder: tuple = DEFAULT_JITTER_LADDER

    def __post_init__(self):
        if self.mechanism not in ("M1", "M2", "M3"):
            raise ValueError(f"mechanism must be M1, M2, or M3, got {self.mechanism!r}")
        if self.outcome_model not in (OUTCOME_LINEAR, OUTCOME_NONLINEAR):
            raise ValueError(f"unknown outcome model {self.outcome_model!r}")
        if self.theta_uc is None:
            object.__setattr__(self, "theta_uc", _MECHANISM_THETA_UC[self.mechanism])
        if self.theta_uc <= 0 or self.theta_c <= 0:
            raise ValueError("Matern ranges must be positive")
        if not -1.0 < self.cross_corr < 1.0:
            raise ValueError("cross correlation must be in (-1, 1)")
        if len(self.means) != 3:
            raise ValueError("means must be (mu_uc, mu_c, mu_u)")
        if self.mechanism == "M3" and self.n_regions < 2:
            raise ValueError("mechanism M3 needs at least 2 regions")
        if self.n < 3:
            raise ValueError("n must be >= 3")

    def coefficients(self) -> tuple:
        if self.outcome_coeffs is not None:
            return tuple(self.outcome_coeffs)
        if self.outcome_model == OUTCOME_LINEAR:
            return _LINEAR_COEFFS
        return _NONLINEAR_COEFFS

    def outcome_mean(self, a, u):
        b0, ba, bu, bau, ba2, ba2u = self.coefficients()
        a = np.asarray(a, dtype=float)
        u = np.asarray(u, dtype=float)
        return b0 + ba * a + bu * u + bau * a * u + ba2 * a * a + ba2u * a * a * u


@dataclass(frozen=True)
class SimDraw:
    """One simulated dataset plus the hidden truth retained for oracle checks."""

    dataset: SpatialDataset
    a_uc: np.ndarray
    a_c: np.ndarray
    u: np.ndarray
    seed: int
    jitter: float


def matern_corr(dist, theta: float, scaled_argument: bool = False):
    """Matern correlation with smoothness nu = 2: rho(d) = (d/theta)^2 K_2(d/theta) / 2.

    Accepts scalars or arrays of nonnegative distances; rho(0) = 1, values in
    (0, 1], strictly decreasing in distance. ``scaled_argument`` replaces
    d/theta with sqrt(2*nu)*d/theta = 2*d/theta.
    """
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    dist_arr = np.asarray(dist, dtype=float)
    scalar = dist_arr.ndim == 0
    dist_arr = np.atleast_1d(dist_arr)
    if np.any(dist_arr < 0) or np.any(~np.isfinite(dist_arr)):
        raise DomainError("distances must be nonnegative and finite")
    x = dist_arr / theta
    if scaled_argument:
        x = 2.0 * x
    out = np.ones_like(x)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        # K_2 underflows past x ~ 700; the correlation is ~1e-300 there
        safe = xp < 690.0
        vals = np.zeros_like(xp)
        if np.any(safe):
            xs = xp[safe]
            vals[safe] = 0.5 * xs * xs * bessel_k(2, xs)
        out[pos] = vals
    return float(out[0]) if scalar else out


def synthetic_layout(n: int) -> np.ndarray:
    """Deterministic low-discrepancy layout on [0, 1.2] x [0, 0.9].

    Halton points in bases 2 and 3 (skipping the degenerate index-0 point),
    scaled to the default extent. Being parameter-free keeps frozen oracle
    truths valid across runs and platforms.
    """

    def radical_inverse(index: int, base: int) -> float:
        inv = 0.0
        denom = 1.0
        while index > 0:
            denom *= base
            index, digit = divmod(index, base)
            inv += digit / denom
        return inv

    pts = np.array(
        [[radical_inverse(i, 2), radical_inverse(i, 3)] for i in range(1, n + 1)]
    )
    return pts * np.array(_LAYOUT_EXTENT)


def synthetic_regions(coords: np.ndarray, n_regions: int) -> np.ndarray:
    """Nearest-site Voronoi labels from deterministically drawn sites."""
    rng = np.random.Generator(np.random.Philox(key=_REGION_SITE_SEED + n_regions))
    sites = rng.random((n_regions, 2)) * np.array(_LAYOUT_EXTENT)
    d2 = np.sum((coords[:, None, :] - sites[None, :, :]) ** 2, axis=-1)
    labels = np.argmin(d2, axis=1)
    return np.array([f"R{k}" for k in labels])


def _load_coords(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = [h.strip() for h in next(reader)]
        if "x" not in header or "y" not in header:
            raise ValueError(f"{path}: coordinate file needs 'x' and 'y' columns")
        xi, yi = header.index("x"), header.index("y")
        pts = [(float(row[xi]), float(row[yi])) for row in reader if row]
    return np.array(pts)


def joint_covariance(coords: np.ndarray, scenario: SimScenario,
                     region: np.ndarray | None = None) -> SymMatrix:
    """The 3n x 3n covariance of (a_uc, a_c, u) stacked in that order.

    Diagonal blocks are Matern correlations at the two ranges; the only
    nonzero cross block ties the large-scale exposure component to the
    confounder with weight ``cross_corr``. For M3 every cross-region entry of
    every block is zeroed, making the process independent across regions.
    """
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    r_uc = matern_corr(dist, scenario.theta_uc, scenario.matern_scaled_argument)
    r_c = matern_corr(dist, scenario.theta_c, scenario.matern_scaled_argument)
    if scenario.mechanism == "M3":
        if region is None:
            raise ValueError("mechanism M3 requires region labels")
        mask = (region[:, None] == region[None, :]).astype(float)
        r_uc = r_uc * mask
        r_c = r_c * mask
    zero = np.zeros((n, n))
    cross = scenario.cross_corr * r_c
    cov = np.block([
        [r_uc, zero, zero],
        [zero, r_c, cross],
        [zero, cross, r_c],
    ])
    return SymMatrix(cov)


@lru_cache(maxsize=8)
def _prepared(scenario: SimScenario):
    """Coordinates, region labels, and the Cholesky factor for a scenario.

    Cached because coordinates (and hence the covariance) are shared by every
    replicate of a scenario; the cache key is the frozen scenario itself.
    """
    if scenario.coords_file is not None:
        coords = _load_coords(scenario.coords_file)
        if coords.shape[0] != scenario.n:
            raise ValueError(
                f"coordinate file has {coords.shape[0]} rows, scenario.n is {scenario.n}"
            )
    else:
        coords = synthetic_layout(scenario.n)
    region = None
    if scenario.mechanism == "M3":
        region = synthetic_regions(coords, scenario.n_regions)
        if len(set(region.tolist())) < 2:
            raise ValueError("region partition produced fewer than 2 occupied regions")
    cov = joint_covariance(coords, scenario, region)
    lower, jitter = cholesky_jittered(cov, scenario.jitter_ladder)
    return coords, region, lower, jitter


def _mean_vector(scenario: SimScenario) -> np.ndarray:
    mu_uc, mu_c, mu_u = scenario.means
    n = scenario.n
    return np.concatenate([
        np.full(n, mu_uc), np.full(n, mu_c), np.full(n, mu_u)
    ])


def sample_draw(scenario: SimScenario) -> SimDraw:
    """Draw one dataset; deterministic given the scenario (including its seed)."""
    coords, region, lower, jitter = _prepared(scenario)
    n = scenario.n
    rng = np.random.Generator(np.random.Philox(key=scenario.seed))
    z = rng.standard_normal(3 * n)
    fields = _mean_vector(scenario) + lower @ z
    a_uc, a_c, u = fields[:n], fields[n:2 * n], fields[2 * n:]
    exposure = a_uc + a_c
    noise = rng.standard_normal(n) * scenario.outcome_noise_sd
    outcome = scenario.outcome_mean(exposure, u) + noise
    dataset = SpatialDataset(
        coords=coords.copy(),
        exposure=exposure,
        outcome=outcome,
        region=None if region is None else region.copy(),
    )
    return SimDraw(dataset=dataset, a_uc=a_uc, a_c=a_c, u=u,
                   seed=scenario.seed, jitter=jitter)


def true_truncated_effect(scenario: SimScenario, c: float, reps: int = 100_000,
                          oracle_seed: int = 202_406):
    """Monte Carlo ground truth of E(Y(min(A, c))) / E(Y) under the scenario.

    Redraws the fields and evaluates the outcome-mean function at capped and
    observed exposure with the confounder held fixed, which the simulator can
    do because it owns the confounder. Outcome noise is mean-zero so it drops
    out of both expectations. Returns (value, mc_standard_error).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    _, _, lower, _ = _prepared(scenario)
    n = scenario.n
    mean_vec = _mean_vector(scenario)
    rng = np.random.Generator(np.random.Philox(key=oracle_seed))
    num = np.empty(reps)
    den = np.empty(reps)
    batch = max(1, min(reps, int(2e8 // (3 * n * 8))))
    done = 0
    while done < reps:
        take = min(batch, reps - done)
        z = rng.standard_normal((3 * n, take))
        fields = mean_vec[:, None] + lower @ z
        a = fields[:n] + fields[n:2 * n]
        u = fields[2 * n:]
        capped = np.minimum(a, c)
        num[done:done + take] = scenario.outcome_mean(capped, u).mean(axis=0)
        den[done:done + take] = scenario.outcome_mean(a, u).mean(axis=0)
        done += take
    num_bar, den_bar = num.mean(), den.mean()
    value = num_bar / den_bar
    grad = np.array([1.0 / den_bar, -num_bar / den_bar**2])
    cov = np.cov(np.vstack([num, den]))
    se = math.sqrt(max(float(grad @ cov @ grad), 0.0) / reps)
    return value, se


def _run_one_replicate(scenario: SimScenario, index: int, estimators):
    draw = sample_draw(replace(scenario, seed=scenario.seed + index))
    rows = []
    for name, fn in estimators:
        row = {
            "replicate": index, "method": name,
            "estimate": math.nan, "ci_lo": math.nan, "ci_hi": math.nan,
            "ok": True, "error": "",
        }
        try:
            result = fn(draw)
            row.update({k: result[k] for k in ("estimate", "ci_lo", "ci_hi") if k in result})
        except Exception as exc:  # flagged, never aborts the batch
            row["ok"] = False
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def run_replications(scenario: SimScenario, m: int, estimators, threads: int = 1):
    """Run ``m`` replicates of every estimator; replicate i uses seed + i.

    ``estimators`` is a sequence of (name, fn) pairs where fn maps a SimDraw
    to a dict with at least an ``estimate`` key and optional ``ci_lo`` /
    ``ci_hi``. Per-replicate failures become flagged rows. Output order and
    content are independent of ``threads``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    estimators = list(estimators)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(
                _run_one_replicate, [scenario] * m, range(m), [estimators] * m
            ))
    else:
        chunks = [_run_one_replicate(scenario, i, estimators) for i in range(m)]
    return [row for chunk in chunks for row in chunk]


def summarize_replications(rows, truth: float):
    """Per-method bias and RMSE against a reference truth, plus failure counts."""
    methods = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    summary = []
    for method in methods:
        estimates = np.array([
            row["estimate"] for row in rows if row["method"] == method and row["ok"]
        ])
        failures = sum(1 for row in rows if row["method"] == method and not row["ok"])
        if estimates.size:
            bias = float(np.mean(estimates) - truth)
            rmse = float(np.sqrt(np.mean((estimates - truth) ** 2)))
        else:
            bias = math.nan
            rmse = math.nan
        summary.append({
            "method": method, "bias": bias, "rmse": rmse,
            "n_ok": int(estimates.size), "n_failed": failures,
        })
    return summary
