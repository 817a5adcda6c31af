"""Source-membership propensity score, Pr(Z = 1 | X = x), by logistic IRLS.

The fit is Newton-Raphson (equivalently IRLS) on an internally standardized
design, started from zero, with step-halving whenever the log-likelihood
would decrease. Coefficients are reported on the original covariate scale,
intercept first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import CombinedDataset
from .errors import DataError, DimensionMismatch, NoConvergence, Separation, SingularDesign

GRADIENT_TOL = 1e-8
MAX_ITER = 50
COEF_CAP = 30.0

_POWER = re.compile(r"^(\w+)\^(\d+)$")


@dataclass(frozen=True)
class PropensityFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    pi_hat: np.ndarray
    terms: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()
    extra_terms: tuple[str, ...] = ()
    ridge: float = 0.0
    loglik: float = field(default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(c) for c in self.coefficients],
            "converged": self.converged,
            "iterations": self.iterations,
            "max_abs_score": self.max_abs_score,
            "loglik": self.loglik,
            "ridge": self.ridge,
        }


def _term_column(term: str, X: np.ndarray, names: Sequence[str]) -> np.ndarray:
    index = {n: j for j, n in enumerate(names)}
    m = _POWER.match(term)
    if m:
        name, power = m.group(1), int(m.group(2))
        if name not in index:
            raise DataError(f"unknown covariate {name!r} in term {term!r}")
        return X[:, index[name]] ** power
    parts = term.split(":")
    col = np.ones(X.shape[0])
    for part in parts:
        if part not in index:
            raise DataError(f"unknown covariate {part!r} in term {term!r}")
        col = col * X[:, index[part]]
    return col


def design_matrix(X, names: Sequence[str], extra_terms: Sequence[str] = ()) -> np.ndarray:
    """Intercept, main effects, then any extra terms (``a:b`` products, ``a^k`` powers)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cols = [np.ones(X.shape[0]), *X.T]
    cols += [_term_column(t, X, names) for t in extra_terms]
    return np.column_stack(cols)


def _loglik(eta, z):
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)))


def fit_logistic(D, z, *, ridge=0.0, tol=GRADIENT_TOL, max_iter=MAX_ITER, coef_cap=COEF_CAP):
    """Maximum-likelihood logistic regression of ``z`` on design ``D`` (first column = intercept).

    Returns ``(coef, pi_hat, iterations, max_abs_score, loglik)`` with ``coef`` on the
    scale of ``D``. ``ridge`` penalizes the standardized slopes only.
    """
    D = np.asarray(D, dtype=float)
    z = np.asarray(z, dtype=float)
    n, k = D.shape
    center = D[:, 1:].mean(axis=0)
    scale = D[:, 1:].std(axis=0)
    if np.any(scale == 0):
        bad = int(np.argmax(scale == 0)) + 1
        raise SingularDesign(f"design column {bad} is constant")
    Ds = np.column_stack([np.ones(n), (D[:, 1:] - center) / scale])
    if k > 1 and np.linalg.matrix_rank(Ds) < k:
        raise SingularDesign("design matrix is not of full column rank")

    penalty = np.full(k, float(ridge))
    penalty[0] = 0.0

    def objective(b):
        eta = Ds @ b
        return _loglik(eta, z) - 0.5 * float(np.sum(penalty * b * b))

    beta = np.zeros(k)
    ll = objective(beta)
    score = np.inf
    it = 0
    converged = False
    for it in range(max_iter + 1):
        p = expit(Ds @ beta)
        g = Ds.T @ (z - p) - penalty * beta
        score = float(np.max(np.abs(g)))
        if score <= tol:
            converged = True
            break
        if it == max_iter:
            break
        H = (Ds * (p * (1.0 - p))[:, None]).T @ Ds + np.diag(penalty)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise Separation("information matrix became singular; fitted probabilities hit 0 or 1") from None
        t = 1.0
        # near the optimum the likelihood gain is below float resolution
        slack = 1e-12 * (1.0 + abs(ll))
        while True:
            cand = beta + t * step
            ll_new = objective(cand)
            if ll_new >= ll - slack or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if np.max(np.abs(beta)) > coef_cap:
            raise Separation(
                f"standardized coefficient exceeded {coef_cap:g} at iteration {it + 1}; "
                "sources are (quasi-)separated by the covariates"
            )
    if not converged:
        raise NoConvergence(it, score)

    pi_hat = expit(Ds @ beta)
    slopes = beta[1:] / scale
    coef = np.concatenate([[beta[0] - float(np.sum(slopes * center))], slopes])
    return coef, pi_hat, it, score, ll


def fit_propensity(
    dataset: CombinedDataset,
    *,
    extra_terms: Sequence[str] = (),
    ridge: float = 0.0,
    tol: float = GRADIENT_TOL,
    max_iter: int = MAX_ITER,
    coef_cap: float = COEF_CAP,
) -> PropensityFit:
    """Fit logit Pr(Z=1|X) = intercept + main effects (+ optional extra terms)."""
    extra_terms = tuple(extra_terms)
    D = design_matrix(dataset.X, dataset.covariate_names, extra_terms)
    coef, pi_hat, iterations, score, ll = fit_logistic(
        D, dataset.z, ridge=ridge, tol=tol, max_iter=max_iter, coef_cap=coef_cap
    )
    pi_hat.flags.writeable = False
    coef.flags.writeable = False
    return PropensityFit(
        coefficients=coef,
        converged=True,
        iterations=iterations,
        max_abs_score=score,
        pi_hat=pi_hat,
        terms=("(intercept)", *dataset.covariate_names, *extra_terms),
        covariate_names=tuple(dataset.covariate_names),
        extra_terms=extra_terms,
        ridge=float(ridge),
        loglik=ll,
    )


def predict_pi(fit: PropensityFit, x):
    """Fitted probability for one covariate vector (returns float) or an ``(n, p)`` array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    p = len(fit.coefficients) - 1 - len(fit.extra_terms)
    if X.shape[1] != p:
        raise DimensionMismatch(f"expected {p} covariates, got {X.shape[1]}")
    names = fit.covariate_names or tuple(f"x{j + 1}" for j in range(p))
    D = design_matrix(X, names, fit.extra_terms)
    out = expit(D @ fit.coefficients)
    return float(out[0]) if single else out
