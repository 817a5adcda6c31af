"""Normalized three-term IPW estimators for ATI, ATT and ATO.

The estimate is the weighted treated mean minus a blend of the weighted
concurrent-control (CC) and external-control (EC) means, blended by the
realized counts ``n10 / (n10 + n2)`` and ``n2 / (n10 + n2)``. Each term is
a ratio estimator, so rescaling ``w1`` or ``w0`` has no effect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .balancing import EstimandKind, check_pi, weights_for
from .core import CombinedDataset
from .errors import DataError, EmptyWeightedGroup

SUPPORTED = (EstimandKind.ATI, EstimandKind.ATT, EstimandKind.ATO)


@dataclass(frozen=True)
class EstimateResult:
    kind: EstimandKind
    tau_hat: float
    term_treated: float
    term_cc: float
    term_ec: float
    blend: tuple[float, float]
    ess_by_group: dict | None = None
    n_extreme: int = 0

    def reconstruct(self) -> float:
        """Recompute the estimate from its terms; skipped groups have zero blend weight."""
        out = self.term_treated
        if self.blend[0] > 0:
            out -= self.blend[0] * self.term_cc
        if self.blend[1] > 0:
            out -= self.blend[1] * self.term_ec
        return out

    def to_dict(self) -> dict:
        return {
            "estimand": self.kind.value,
            "tau_hat": self.tau_hat,
            "term_treated": self.term_treated,
            "term_cc": self.term_cc,
            "term_ec": self.term_ec,
            "blend_cc": self.blend[0],
            "blend_ec": self.blend[1],
            **{f"ess_{k}": v for k, v in (self.ess_by_group or {}).items()},
            "n_extreme": self.n_extreme,
        }


def _weighted_mean(y, w, label):
    total = float(np.sum(w))
    if not total > 0:
        raise EmptyWeightedGroup(f"{label} group has zero total weight")
    return float(np.sum(w * y)) / total


def ipw_contrast(dataset: CombinedDataset, w1, w0):
    """Evaluate the estimator for arbitrary per-subject weight vectors.

    Returns ``(tau_hat, term_treated, term_cc, term_ec, blend)``; a group whose
    blend coefficient is zero is not evaluated and its term is NaN.
    """
    w1 = np.asarray(w1, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    treated, control, ec = dataset.group_masks()
    y = dataset.y
    n10, n2 = dataset.n10, dataset.n2
    blend = (n10 / (n10 + n2), n2 / (n10 + n2))

    term_t = _weighted_mean(y[treated], w1[treated], "RCT treated")
    tau = term_t
    term_cc = term_ec = math.nan
    if n10 > 0:
        term_cc = _weighted_mean(y[control], w1[control], "RCT control")
        tau -= blend[0] * term_cc
    if n2 > 0:
        term_ec = _weighted_mean(y[ec], w0[ec], "external control")
        tau -= blend[1] * term_ec
    return tau, term_t, term_cc, term_ec, blend


def estimate(dataset: CombinedDataset, kind, pi) -> EstimateResult:
    kind = EstimandKind.parse(kind)
    if kind not in SUPPORTED:
        raise DataError(f"no estimator for {kind.value}; choose one of ATI, ATT, ATO")
    pi = check_pi(pi)
    if pi.shape != (len(dataset),):
        raise DataError(f"{pi.size} propensity scores for {len(dataset)} subjects")
    ws = weights_for(kind, pi, dataset)
    tau, t, cc, ec, blend = ipw_contrast(dataset, ws.w1, ws.w0)
    return EstimateResult(kind, tau, t, cc, ec, blend, ws.ess_by_group, ws.n_extreme)


# -- identification identities ---------------------------------------------

@dataclass(frozen=True)
class PopulationDraw:
    a: np.ndarray
    z: np.ndarray
    X: np.ndarray
    pi: np.ndarray
    y: np.ndarray | None = None


@dataclass(frozen=True)
class IdentificationReport:
    kind: EstimandKind | None
    n_mc: int
    residuals: dict = field(default_factory=dict)
    std_errors: dict = field(default_factory=dict)

    def max_abs_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values())


def _mean_se(v):
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def check_identification(sampler, kind=None, n_mc: int = 10**6, seed: int = 0) -> IdentificationReport:
    """Monte Carlo residuals of the weighting identities behind each estimator.

    ``sampler`` must expose ``lam`` (Pr(Z=1)), ``p_treat`` (Pr(A=1|Z=1)) and
    ``draw(n, rng) -> PopulationDraw`` carrying the *true* propensity score.
    ``kind=None`` reports the identities of all three estimands.
    """
    kinds = SUPPORTED if kind is None else (EstimandKind.parse(kind),)
    rng = np.random.default_rng(seed)
    d = sampler.draw(n_mc, rng)
    a = d.a.astype(float)
    z = d.z.astype(float)
    pi = np.asarray(d.pi, dtype=float)
    lam, p1 = float(sampler.lam), float(sampler.p_treat)
    res, se = {}, {}

    def add(name, values, target):
        m, s = _mean_se(values)
        res[name] = m - target
        se[name] = s

    if EstimandKind.ATI in kinds:
        add("E[AZ/pi] - P(A=1|Z=1)", a * z / pi, p1)
        add("E[(1-A)Z/pi] - P(A=0|Z=1)", (1 - a) * z / pi, 1 - p1)
        add("E[(1-A)(1-Z)/(1-pi)] - 1", (1 - a) * (1 - z) / (1 - pi), 1.0)
    if EstimandKind.ATT in kinds:
        add("E[pi(1-A)(1-Z)/(1-pi)] - P(Z=1)", pi * (1 - a) * (1 - z) / (1 - pi), lam)
    if EstimandKind.ATO in kinds:
        # the right-hand side E[pi(1-pi)] is itself estimated; difference the
        # per-draw terms so the reported error covers both sides
        h = pi * (1 - pi)
        add("E[(1-pi)AZ] - P(A=1|Z=1)E[pi(1-pi)]", (1 - pi) * a * z - p1 * h, 0.0)
        add("E[(1-pi)(1-A)Z] - P(A=0|Z=1)E[pi(1-pi)]", (1 - pi) * (1 - a) * z - (1 - p1) * h, 0.0)
        add("E[pi(1-A)(1-Z)] - E[pi(1-pi)]", pi * (1 - a) * (1 - z) - h, 0.0)
    return IdentificationReport(None if kind is None else kinds[0], n_mc, res, se)
