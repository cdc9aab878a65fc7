"""Data-driven bandwidth selection for local polynomial RD estimation.

The plug-in MSE-optimal bandwidth minimizes the first-order approximate
MSE of the boundary jump estimator,

    h_mse = C_K * [ sigma2 / (f_c * B_curv^2) * (1/n) ]^(1/(2p+3)),

where the pilot quantities are a two-stage construction: side-wise
global polynomial fits of order p+2 give the curvature B_curv and the
residual variance sigma2 near the cutoff, and a histogram count gives
the score density f_c at the cutoff.  The kernel constant C_K comes
from the boundary bias/variance constants of the local polynomial,
computed by numerical integration of one-sided kernel moment matrices
rather than hard-coded tables.  All pilot values are reported so a run
can be audited.

The CE-optimal bandwidth shrinks h_mse by the standard rule-of-thumb
factor n^(-p/((3+p)(3+2p))).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, fsum, isnan, nan

import numpy as np
from scipy.special import roots_legendre

from .continuity import sharp_estimate
from .dgps import DgpSpec, simulate_sample
from .errors import EmptySide, RankDeficient, TooFewObservations
from .lpoly import kernel_weight
from .parallel import run_indexed
from .rng import substream
from .sample import RdSample

# --------------------------------------------------------------------
# Kernel constants for the boundary local polynomial estimator
# --------------------------------------------------------------------


@lru_cache(maxsize=None)
def _quadrature(nodes: int = 64):
    roots, weights = roots_legendre(nodes)
    # Map from [-1, 1] to [0, 1].
    return (roots + 1.0) / 2.0, weights / 2.0


@lru_cache(maxsize=None)
def kernel_constants(p: int, kernel: str) -> tuple[float, float]:
    """Boundary bias and variance constants (b_K, v_K) for order p.

    With one-sided moment matrices on [0, 1],
      Gamma[j,k] = int K(u) u^(j+k),  theta[j] = int K(u) u^(p+1+j),
      Psi[j,k]   = int K(u)^2 u^(j+k),
    the constants are b_K = e0' Gamma^-1 theta and
    v_K = e0' Gamma^-1 Psi Gamma^-1 e0.  Integrals are evaluated by
    Gauss-Legendre quadrature (exact here: the integrands are
    polynomials of low degree).
    """
    u, w = _quadrature()
    k = kernel_weight(u, kernel)
    powers = np.vander(u, N=2 * p + 3, increasing=True)  # u^0 .. u^(2p+2)
    mom_k = powers.T @ (w * k)          # int K u^j
    mom_k2 = powers.T @ (w * k * k)     # int K^2 u^j
    idx = np.add.outer(np.arange(p + 1), np.arange(p + 1))
    gamma = mom_k[idx]
    psi = mom_k2[idx]
    theta = mom_k[p + 1:2 * p + 2]
    ginv_row0 = np.linalg.solve(gamma, np.eye(p + 1)[0])
    b_k = float(ginv_row0 @ theta)
    v_k = float(ginv_row0 @ psi @ ginv_row0)
    return b_k, v_k


@lru_cache(maxsize=None)
def mse_constant(p: int, kernel: str, two_sided: bool = True) -> float:
    """C_K in the plug-in formula; two_sided doubles the variance term
    because the jump estimator sums two independent side variances."""
    b_k, v_k = kernel_constants(p, kernel)
    mult = 2.0 if two_sided else 1.0
    num = mult * v_k * factorial(p + 1) ** 2
    den = 2.0 * (p + 1) * b_k * b_k
    return float((num / den) ** (1.0 / (2 * p + 3)))


def ce_factor(n: int, p: int) -> float:
    """Coverage-error rescaling factor n^(-p/((3+p)(3+2p)))."""
    if n < 1:
        raise ValueError("n must be positive")
    return float(n ** (-p / ((3.0 + p) * (3.0 + 2.0 * p))))


# --------------------------------------------------------------------
# Plug-in selector
# --------------------------------------------------------------------


@dataclass(frozen=True)
class BandwidthSelection:
    """Plug-in bandwidths plus every pilot quantity used to build them."""

    h_mse: float
    h_ce: float
    pilot_curvature_below: float
    pilot_curvature_above: float
    curvature_difference: float
    pilot_variance: float
    density_at_cutoff: float
    silverman_b: float
    pilot_window: float
    kernel_constant: float
    n_used: int
    p: int
    kernel: str
    degenerate: bool


def _silverman(x: np.ndarray) -> float:
    sd = float(np.std(x))
    q75, q25 = np.percentile(x, (75, 25))
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 1.06 * spread * x.shape[0] ** (-0.2)


def _pilot_fit(xc: np.ndarray, y: np.ndarray, order: int):
    """Unweighted global polynomial fit; returns (coefs, residuals)."""
    design = np.vander(xc, N=order + 1, increasing=True)
    coefs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < order + 1:
        raise RankDeficient(
            f"pilot design of order {order} is rank deficient")
    return coefs, y - design @ coefs


def select_mse_bandwidth(sample: RdSample, p: int = 1,
                         kernel: str = "triangular",
                         side: str | None = None) -> BandwidthSelection:
    """Plug-in MSE-optimal bandwidth for the order-p jump estimator.

    Parameters
    ----------
    side : {None, "below", "above"}
        None selects the bandwidth for the two-sided jump (difference
        of intercepts).  A side name selects for that side's boundary
        level alone (one-sided variance and curvature).

    Notes
    -----
    Degenerate pilots (vanishing curvature or vanishing residual
    variance) fall back to h = range(score)/4 with ``degenerate=True``;
    the MSE criterion has no interior minimum in that case.
    """
    n = sample.n
    if n < 10 * (p + 2):
        raise TooFewObservations(
            f"need at least {10 * (p + 2)} observations for the order-{p} "
            f"plug-in, got {n}")
    xc = sample.centered_score()
    below = xc < 0
    above = ~below
    if not below.any() or not above.any():
        raise EmptySide("both sides of the cutoff must be populated")
    pilot_order = p + 2
    if below.sum() < pilot_order + 1 or above.sum() < pilot_order + 1:
        raise TooFewObservations(
            f"each side needs at least {pilot_order + 1} observations for "
            f"the order-{pilot_order} pilot fit")

    coef_b, resid_b = _pilot_fit(xc[below], sample.outcome[below], pilot_order)
    coef_a, resid_a = _pilot_fit(xc[above], sample.outcome[above], pilot_order)
    deriv_b = factorial(p + 1) * coef_b[p + 1]
    deriv_a = factorial(p + 1) * coef_a[p + 1]

    # Bias-relevant curvature of the jump estimator: the below side's
    # one-sided kernel moments pick up a (-1)^(p+1) sign.
    sign = (-1.0) ** (p + 1)
    if side is None:
        curvature = float(deriv_a - sign * deriv_b)
    elif side == "above":
        curvature = float(deriv_a)
    elif side == "below":
        curvature = float(sign * deriv_b)
    else:
        raise ValueError(f"side must be None, 'below', or 'above', got {side!r}")

    b = _silverman(sample.score)
    score_range = float(sample.score.max() - sample.score.min())
    if score_range <= 0:
        raise RankDeficient("score has zero range")
    if b <= 0:
        b = score_range / 4.0
    density = float(np.sum(np.abs(xc) <= b)) / (2.0 * b * n)

    # Residual variance inside a pilot window wide enough to hold at
    # least 3*(p+2) points per side.
    k_near = 3 * pilot_order
    dist_b = np.sort(np.abs(xc[below]))
    dist_a = np.sort(np.abs(xc[above]))
    w_var = max(b,
                dist_b[min(k_near, dist_b.size) - 1],
                dist_a[min(k_near, dist_a.size) - 1])
    resid = np.concatenate([resid_b[np.abs(xc[below]) <= w_var],
                            resid_a[np.abs(xc[above]) <= w_var]])
    sigma2 = float(np.mean(resid ** 2)) if resid.size else 0.0

    c_k = mse_constant(p, kernel, two_sided=side is None)

    # Degenerate when the pilot curvature or the residual noise is
    # numerically zero relative to the outcome scale; the MSE trade-off
    # has no interior optimum then and the formula would divide noise
    # by noise.
    y_scale = max(float(np.std(sample.outcome)), 1e-300)
    bias_scale = abs(curvature) * score_range ** (p + 1)
    degenerate = (density <= 0.0
                  or sigma2 <= (1e-12 * y_scale) ** 2
                  or bias_scale <= 1e-8 * y_scale)
    if degenerate:
        h_mse = score_range / 4.0
    else:
        h_raw = c_k * (sigma2 / (density * curvature * curvature) / n) \
            ** (1.0 / (2 * p + 3))
        # Keep enough points per side for the order-(p+1) RBC fit.
        h_min = max(dist_b[min(k_near, dist_b.size) - 1],
                    dist_a[min(k_near, dist_a.size) - 1])
        h_mse = float(np.clip(h_raw, min(h_min, score_range), score_range))

    return BandwidthSelection(
        h_mse=float(h_mse), h_ce=float(h_mse * ce_factor(n, p)),
        pilot_curvature_below=float(deriv_b),
        pilot_curvature_above=float(deriv_a),
        curvature_difference=curvature,
        pilot_variance=sigma2, density_at_cutoff=density,
        silverman_b=float(b), pilot_window=float(w_var),
        kernel_constant=float(c_k), n_used=n, p=p, kernel=kernel,
        degenerate=bool(degenerate))


def select_ce_bandwidth(selection: BandwidthSelection, n: int, p: int) -> float:
    """CE-optimal bandwidth: h_mse shrunk by the coverage-error factor."""
    return float(selection.h_mse * ce_factor(n, p))


# --------------------------------------------------------------------
# Monte Carlo oracle (testing aid)
# --------------------------------------------------------------------


@dataclass(frozen=True)
class OracleBandwidth:
    """Grid-search bandwidth oracle output."""

    best_h: float
    grid: np.ndarray
    mse: np.ndarray
    n_failed: np.ndarray
    replications: int


def oracle_mse_bandwidth(dgp: DgpSpec, p: int, kernel: str,
                         grid, n: int, replications: int,
                         seed: int, threads: int = 1) -> OracleBandwidth:
    """Monte Carlo MSE of the jump estimator over a bandwidth grid.

    Each replication draws one sample from its own seed substream and
    evaluates every grid bandwidth on it (common random numbers), so
    the MSE curve is smooth in h and deterministic given the seed no
    matter how replications are scheduled.  Replications where a fit
    fails at some h are skipped for that h and counted.  Per-h squared
    errors are reduced in replication order with exact summation, so
    the curve is invariant to the thread count.
    """
    grid = np.asarray(sorted(float(h) for h in grid))
    if grid.size == 0:
        raise ValueError("bandwidth grid must be non-empty")
    if np.any(grid <= 0):
        raise ValueError("bandwidths must be positive")
    if replications < 100:
        raise ValueError("need at least 100 replications for a usable oracle")
    tau_true = dgp.true_tau()

    def one(r: int) -> list[float]:
        sample = simulate_sample(dgp, n, seed=_oracle_seed(seed, r))
        row = []
        for h in grid:
            try:
                est = sharp_estimate(sample, p=p, kernel=kernel, h_below=h,
                                     h_above=h)
            except (EmptySide, RankDeficient):
                row.append(nan)
                continue
            row.append((est.tau_hat - tau_true) ** 2)
        return row

    rows = run_indexed(one, replications, threads)
    n_failed = np.zeros(grid.size, dtype=int)
    mse = np.zeros(grid.size)
    for g in range(grid.size):
        col = [row[g] for row in rows]
        good = [v for v in col if not isnan(v)]
        n_failed[g] = len(col) - len(good)
        if not good:
            raise TooFewObservations(
                f"every replication failed at bandwidth {grid[g]}")
        mse[g] = fsum(good) / len(good)
    best = float(grid[int(np.argmin(mse))])
    return OracleBandwidth(best_h=best, grid=grid, mse=mse,
                           n_failed=n_failed, replications=replications)


def _oracle_seed(seed: int, replication: int) -> int:
    """Stable per-replication seed for the oracle's samples.

    Exposed so acceptance tests can draw the identical sample sequence
    when comparing the plug-in selector against the oracle curve.
    """
    return int(substream(seed, replication).integers(0, 2 ** 63 - 1))


def oracle_replication_sample(dgp: DgpSpec, n: int, seed: int,
                              replication: int) -> RdSample:
    """The exact sample the oracle used in a given replication."""
    return simulate_sample(dgp, n, seed=_oracle_seed(seed, replication))
