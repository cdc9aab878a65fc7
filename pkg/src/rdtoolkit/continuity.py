"""Continuity-based RD estimation.

Sharp, fuzzy, and kink point estimators from side-wise local polynomial
fits, conventional and robust bias-corrected confidence intervals, the
discrete-score estimand for mass-point designs, and normalize-and-pool
for multi-cutoff samples.

Conventions: the side split is below = score < cutoff, above = score >=
cutoff (ties at the cutoff are treated).  Confidence intervals use normal
quantiles at the requested level.  Robust bias correction follows the
order-increase recipe: the order-(p+1) intercept difference at the same
bandwidth is both the bias-corrected point and the inference target, so
se_robust is the conventional robust standard error of that higher-order
fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import (
    EmptySide,
    InsufficientSideData,
    MissingTreatmentColumn,
    NoBelowNeighbor,
    NoMassAtCutoff,
    RankDeficient,
    WeakFirstStage,
)
from .lpoly import LocalFit, fit_values
from .sample import RdSample, mass_points

WEAK_FIRST_STAGE_THRESHOLD = 0.05


@dataclass(frozen=True)
class RdEstimate:
    """Point estimate with conventional (non-bias-corrected) inference."""

    kind: str
    tau_hat: float
    se_conventional: float
    ci_conventional: tuple[float, float]
    h_below: float
    h_above: float
    n_eff_below: int
    n_eff_above: int
    p: int
    kernel: str
    level: float
    first_stage: float | None = None


@dataclass(frozen=True)
class RbcResult:
    """Robust bias-corrected inference wrapped around a base estimate."""

    base: RdEstimate
    bias_estimate: float
    se_robust: float
    ci_rbc: tuple[float, float]
    inference_order: int

    @property
    def tau_bc(self) -> float:
        return self.base.tau_hat - self.bias_estimate


@dataclass(frozen=True)
class DiscreteEstimate:
    """Jump between the cutoff mass point and its nearest below neighbor."""

    tau_sds: float
    mean_at_c: float
    mean_at_below_neighbor: float
    below_neighbor: float
    n_at_c: int
    n_at_below_neighbor: int


@dataclass(frozen=True)
class CutoffEstimate:
    """Per-cutoff result inside a multi-cutoff analysis."""

    cutoff: float
    n: int
    estimate: RdEstimate | None
    message: str | None = None


@dataclass(frozen=True)
class PooledEstimate:
    """Normalize-and-pool output: pooled estimate plus per-cutoff detail."""

    pooled: RdEstimate
    per_cutoff: tuple[CutoffEstimate, ...]


def _zvalue(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


def _side_fit(x, y, p, kernel, h, side):
    """Fit one side, labeling errors with the side they came from."""
    try:
        return fit_values(x, y, 0.0, p=p, kernel=kernel, h=h)
    except (EmptySide, RankDeficient) as err:
        raise type(err)(f"{side} side: {err}") from None


def _split_sides(sample: RdSample):
    xc = sample.centered_score()
    below = xc < 0
    return xc, below, ~below


def _two_fits(sample: RdSample, p, kernel, h_below, h_above, outcome=None):
    xc, below, above = _split_sides(sample)
    y = sample.outcome if outcome is None else outcome
    fit_b = _side_fit(xc[below], y[below], p, kernel, h_below, "below")
    fit_a = _side_fit(xc[above], y[above], p, kernel, h_above, "above")
    return fit_b, fit_a


def _difference(fit_b: LocalFit, fit_a: LocalFit, nu: int):
    tau = fit_a.derivative(nu) - fit_b.derivative(nu)
    var = fit_a.derivative_variance(nu) + fit_b.derivative_variance(nu)
    return tau, float(np.sqrt(var))


def sharp_estimate(sample: RdSample, p: int = 1, kernel: str = "triangular",
                   h_below: float = None, h_above: float = None,
                   level: float = 0.95, _nu: int = 0,
                   _kind: str = "sharp") -> RdEstimate:
    """Sharp RD effect: difference of side-wise boundary intercepts.

    Parameters
    ----------
    h_below, h_above : float
        Side bandwidths; passing only one uses it on both sides.
    """
    h_below, h_above = _resolve_bandwidths(h_below, h_above)
    fit_b, fit_a = _two_fits(sample, p, kernel, h_below, h_above)
    tau, se = _difference(fit_b, fit_a, _nu)
    z = _zvalue(level)
    return RdEstimate(
        kind=_kind, tau_hat=tau, se_conventional=se,
        ci_conventional=(tau - z * se, tau + z * se),
        h_below=h_below, h_above=h_above,
        n_eff_below=fit_b.n_eff, n_eff_above=fit_a.n_eff,
        p=p, kernel=kernel, level=level)


def kink_estimate(sample: RdSample, p: int = 1, kernel: str = "triangular",
                  h_below: float = None, h_above: float = None,
                  level: float = 0.95) -> RdEstimate:
    """Kink effect: difference of side-wise boundary slopes (requires p >= 1)."""
    if p < 1:
        raise ValueError("kink estimation requires polynomial order p >= 1")
    return sharp_estimate(sample, p=p, kernel=kernel, h_below=h_below,
                          h_above=h_above, level=level, _nu=1, _kind="kink")


def _resolve_bandwidths(h_below, h_above):
    if h_below is None and h_above is None:
        raise ValueError("at least one bandwidth must be given")
    if h_below is None:
        h_below = h_above
    if h_above is None:
        h_above = h_below
    return float(h_below), float(h_above)


def _stacked_side(x, y, d, p, kernel, h, side):
    """Fit outcome and treatment on shared weights; joint intercept cov.

    Returns the two fits plus the covariance between the outcome and
    treatment intercepts from the stacked sandwich (shared bread, cross
    meat from the residual products).
    """
    fit_y = _side_fit(x, y, p, kernel, h, side)
    fit_d = _side_fit(x, d, p, kernel, h, side)
    keep = fit_y.weights > 0
    xk = x[keep]
    wk = fit_y.weights[keep]
    design = np.vander(xk, N=p + 1, increasing=True)
    sw = np.sqrt(wk)
    wz = design * sw[:, None]
    bread = np.linalg.inv(wz.T @ wz)
    cross_rows = design * (wk * fit_y.residuals)[:, None]
    other_rows = design * (wk * fit_d.residuals)[:, None]
    meat = cross_rows.T @ other_rows
    dof = fit_y.n_eff - (p + 1)
    scale = fit_y.n_eff / dof if dof > 0 else 1.0
    cov = bread @ meat @ bread * scale
    return fit_y, fit_d, float(cov[0, 0])


def fuzzy_estimate(sample: RdSample, p: int = 1, kernel: str = "triangular",
                   h_below: float = None, h_above: float = None,
                   level: float = 0.95) -> RdEstimate:
    """Fuzzy RD effect: reduced-form jump over first-stage jump.

    The standard error treats the two intercepts on each side as jointly
    estimated (stacked sandwich on shared kernel weights) and applies the
    delta method to the ratio; the two sides are independent.
    """
    if sample.received is None:
        raise MissingTreatmentColumn(
            "fuzzy estimation requires a received-treatment column")
    h_below, h_above = _resolve_bandwidths(h_below, h_above)
    xc, below, above = _split_sides(sample)
    d = sample.received.astype(float)
    fy_b, fd_b, cov_b = _stacked_side(xc[below], sample.outcome[below],
                                      d[below], p, kernel, h_below, "below")
    fy_a, fd_a, cov_a = _stacked_side(xc[above], sample.outcome[above],
                                      d[above], p, kernel, h_above, "above")

    reduced = fy_a.beta[0] - fy_b.beta[0]
    first_stage = fd_a.beta[0] - fd_b.beta[0]
    if abs(first_stage) < WEAK_FIRST_STAGE_THRESHOLD:
        raise WeakFirstStage(
            f"first-stage jump {first_stage:.4g} is below the "
            f"{WEAK_FIRST_STAGE_THRESHOLD} threshold")
    tau = reduced / first_stage

    var_y = fy_a.cov[0, 0] + fy_b.cov[0, 0]
    var_d = fd_a.cov[0, 0] + fd_b.cov[0, 0]
    cov_yd = cov_a + cov_b
    var = (var_y + tau * tau * var_d - 2.0 * tau * cov_yd) / (first_stage ** 2)
    se = float(np.sqrt(max(var, 0.0)))
    z = _zvalue(level)
    return RdEstimate(
        kind="fuzzy", tau_hat=float(tau), se_conventional=se,
        ci_conventional=(tau - z * se, tau + z * se),
        h_below=h_below, h_above=h_above,
        n_eff_below=fy_b.n_eff, n_eff_above=fy_a.n_eff,
        p=p, kernel=kernel, level=level, first_stage=float(first_stage))


_ESTIMATORS = {"sharp": sharp_estimate, "fuzzy": fuzzy_estimate,
               "kink": kink_estimate}


def rbc_inference(sample: RdSample, p: int = 1, kernel: str = "triangular",
                  h_below: float = None, h_above: float = None,
                  level: float = 0.95, kind: str = "sharp") -> RbcResult:
    """Robust bias-corrected inference by the order-increase recipe.

    The point estimator uses order p; inference uses the order-(p+1)
    estimate at the same bandwidth.  The bias estimate is the difference
    between the two, the bias-corrected point is the order-(p+1) value,
    and the interval is that point plus/minus z times its robust se.
    """
    if kind not in _ESTIMATORS:
        raise ValueError(f"unknown design {kind!r}")
    estimator = _ESTIMATORS[kind]
    base = estimator(sample, p=p, kernel=kernel, h_below=h_below,
                     h_above=h_above, level=level)
    higher = estimator(sample, p=p + 1, kernel=kernel, h_below=h_below,
                       h_above=h_above, level=level)
    bias = base.tau_hat - higher.tau_hat
    se_robust = higher.se_conventional
    z = _zvalue(level)
    center = higher.tau_hat
    return RbcResult(base=base, bias_estimate=float(bias),
                     se_robust=se_robust,
                     ci_rbc=(center - z * se_robust, center + z * se_robust),
                     inference_order=p + 1)


def discrete_estimate(sample: RdSample) -> DiscreteEstimate:
    """Mass-point estimand: mean at the cutoff minus mean at its below
    neighbor (the largest distinct score strictly below the cutoff)."""
    summary = mass_points(sample)
    at_c = sample.score == sample.cutoff
    if not at_c.any():
        raise NoMassAtCutoff(
            f"no observations with score exactly {sample.cutoff:g}")
    if summary.below_neighbor is None:
        raise NoBelowNeighbor("no score value strictly below the cutoff")
    neighbor = summary.below_neighbor
    at_neighbor = sample.score == neighbor
    mean_c = float(sample.outcome[at_c].mean())
    mean_n = float(sample.outcome[at_neighbor].mean())
    return DiscreteEstimate(
        tau_sds=mean_c - mean_n, mean_at_c=mean_c,
        mean_at_below_neighbor=mean_n, below_neighbor=float(neighbor),
        n_at_c=int(at_c.sum()), n_at_below_neighbor=int(at_neighbor.sum()))


def normalize_and_pool(sample: RdSample, p: int = 1,
                       kernel: str = "triangular", h_below: float = None,
                       h_above: float = None, level: float = 0.95,
                       ) -> PooledEstimate:
    """Multi-cutoff analysis on the normalized score X - C with cutoff 0.

    The pooled estimate runs the sharp estimator on the transformed
    sample.  Per-cutoff estimates are attempted on each cutoff's
    subsample and flagged (estimate = None with a message) when that
    subsample cannot support a fit.
    """
    cutoffs = sample.effective_cutoffs()
    normalized = sample.normalized()
    pooled = sharp_estimate(normalized, p=p, kernel=kernel,
                            h_below=h_below, h_above=h_above, level=level)
    per_cutoff = []
    for c in np.unique(cutoffs):
        mask = cutoffs == c
        sub = RdSample(score=sample.score[mask], outcome=sample.outcome[mask],
                       cutoff=float(c))
        try:
            est = sharp_estimate(sub, p=p, kernel=kernel, h_below=h_below,
                                 h_above=h_above, level=level)
            per_cutoff.append(CutoffEstimate(cutoff=float(c),
                                             n=int(mask.sum()), estimate=est))
        except (EmptySide, RankDeficient, InsufficientSideData) as err:
            per_cutoff.append(CutoffEstimate(
                cutoff=float(c), n=int(mask.sum()), estimate=None,
                message=f"insufficient support: {err}"))
    return PooledEstimate(pooled=pooled, per_cutoff=tuple(per_cutoff))
