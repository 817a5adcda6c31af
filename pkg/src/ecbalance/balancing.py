"""Tilting functions, balancing weights and weighting diagnostics.

For a target population with tilting function h(x), RCT subjects receive
``w1 = h / pi`` and EC subjects ``w0 = h / (1 - pi)``:

============  =============  ===========================
estimand      h(x)           (w1, w0)
============  =============  ===========================
ATI           1              (1/pi, 1/(1-pi))
ATT           pi             (1, pi/(1-pi))
ATEC          1 - pi         ((1-pi)/pi, 1)
ATO           pi (1 - pi)    (1-pi, pi)
============  =============  ===========================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .core import CombinedDataset
from .errors import AllZeroWeights, DataError, DegeneratePi, EmptyGroup

EXTREME_EPS = 0.01


class EstimandKind(str, enum.Enum):
    ATI = "ATI"
    ATT = "ATT"
    ATO = "ATO"
    ATEC = "ATEC"

    @classmethod
    def parse(cls, value) -> "EstimandKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise DataError(f"unknown estimand {value!r}; expected one of {[k.value for k in cls]}") from None

    def __str__(self):
        return self.value


def tilting(kind, pi):
    kind = EstimandKind.parse(kind)
    pi = np.asarray(pi, dtype=float)
    if kind is EstimandKind.ATI:
        return np.ones_like(pi)
    if kind is EstimandKind.ATT:
        return pi
    if kind is EstimandKind.ATEC:
        return 1.0 - pi
    return pi * (1.0 - pi)


def raw_weights(kind, pi):
    """``(w1, w0)`` for every entry of ``pi`` (no validation)."""
    kind = EstimandKind.parse(kind)
    pi = np.asarray(pi, dtype=float)
    if kind is EstimandKind.ATI:
        return 1.0 / pi, 1.0 / (1.0 - pi)
    if kind is EstimandKind.ATT:
        return np.ones_like(pi), pi / (1.0 - pi)
    if kind is EstimandKind.ATEC:
        return (1.0 - pi) / pi, np.ones_like(pi)
    return 1.0 - pi, pi.copy()


def check_pi(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    eps = np.finfo(float).eps
    bad = ~((pi >= eps) & (pi <= 1.0 - eps))
    if bad.any():
        i = int(np.argmax(bad))
        raise DegeneratePi(
            f"{int(bad.sum())} propensity score(s) equal 0 or 1 to machine precision "
            f"(first at subject {i + 1}: {pi[i]!r}); RCT/EC overlap fails in-sample"
        )
    return pi


def effective_sample_size(weights) -> float:
    """Kish effective sample size, (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise DataError("weights must be nonnegative")
    s2 = float(np.sum(w * w))
    if s2 == 0.0:
        raise AllZeroWeights("all weights are zero")
    return float(np.sum(w)) ** 2 / s2


@dataclass(frozen=True)
class WeightSet:
    kind: EstimandKind
    w1: np.ndarray
    w0: np.ndarray
    pi: np.ndarray
    ess_by_group: dict | None
    n_extreme: int

    def subject_weights(self, z) -> np.ndarray:
        """The weight each subject actually carries: w1 in the RCT, w0 in the EC."""
        z = np.asarray(z)
        return np.where(z == 1, self.w1, self.w0)


def weights_for(kind, pi, dataset: CombinedDataset | None = None, eps: float = EXTREME_EPS) -> WeightSet:
    """Balancing weights for ``kind`` plus diagnostics.

    ESS per group needs the group labels, so it is only populated when
    ``dataset`` is given. ``n_extreme`` counts scores outside ``[eps, 1 - eps]``;
    nothing is trimmed.
    """
    kind = EstimandKind.parse(kind)
    pi = check_pi(pi)
    w1, w0 = raw_weights(kind, pi)
    n_extreme = int(np.sum((pi < eps) | (pi > 1.0 - eps)))
    ess = None
    if dataset is not None:
        if len(dataset) != pi.size:
            raise DataError(f"{pi.size} propensity scores for {len(dataset)} subjects")
        treated, control, ec = dataset.group_masks()
        ess = {}
        for name, mask, w in (("rct_treated", treated, w1), ("rct_control", control, w1), ("ec", ec, w0)):
            ess[name] = effective_sample_size(w[mask]) if mask.any() and np.any(w[mask] > 0) else 0.0
    for arr in (w1, w0):
        arr.flags.writeable = False
    return WeightSet(kind, w1, w0, pi, ess, n_extreme)


def weighted_mean_sd(values, weights):
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    m = float(np.sum(w * v) / np.sum(w))
    sd = float(np.sqrt(np.sum(w * (v - m) ** 2) / np.sum(w)))
    return m, sd


def _silverman_grid(values, n_points):
    sd = values.std(ddof=1) if values.size > 1 else 1.0
    pad = 3.0 * (sd if sd > 0 else 1.0)
    return np.linspace(values.min() - pad, values.max() + pad, n_points)


def weighted_density_export(
    dataset: CombinedDataset,
    weightset: WeightSet,
    covariate,
    grid=None,
    bins=None,
    n_points: int = 200,
):
    """Raw and weighted covariate densities per source group.

    Returns a list of dict rows with keys ``covariate, group, estimand, value,
    density_raw, density_weighted``. The default is a Gaussian KDE with
    Silverman's bandwidth (scipy's, using the Kish effective size when
    weighted); passing ``bins`` (an int or edges) switches to a normalized
    histogram, reported at bin centers.
    """
    names = dataset.covariate_names
    if isinstance(covariate, str):
        if covariate not in names:
            raise DataError(f"unknown covariate {covariate!r}")
        j = names.index(covariate)
    else:
        j = int(covariate)
        if not 0 <= j < dataset.p:
            raise DataError(f"covariate index {j} out of range for p = {dataset.p}")
    x = dataset.X[:, j]
    rct = dataset.z == 1
    groups = (("RCT", rct, weightset.w1), ("EC", ~rct, weightset.w0))
    for label, mask, _ in groups:
        if not mask.any():
            raise EmptyGroup(f"{label} group is empty")

    if bins is not None:
        edges = np.histogram_bin_edges(x, bins=bins)
        points = 0.5 * (edges[:-1] + edges[1:])
    else:
        points = np.asarray(grid, dtype=float) if grid is not None else _silverman_grid(x, n_points)

    rows = []
    for label, mask, w in groups:
        xs, ws = x[mask], w[mask]
        if not np.any(ws > 0):
            raise EmptyGroup(f"{label} group carries zero total weight")
        if bins is not None:
            raw, _ = np.histogram(xs, bins=edges, density=True)
            wtd, _ = np.histogram(xs, bins=edges, weights=ws, density=True)
        elif np.ptp(xs) == 0:
            raise DataError(f"{names[j]} is constant within the {label} group; KDE undefined")
        else:
            raw = gaussian_kde(xs, bw_method="silverman")(points)
            wtd = gaussian_kde(xs, bw_method="silverman", weights=ws)(points)
        for v, dr, dw in zip(points, raw, wtd):
            rows.append(
                {
                    "covariate": names[j],
                    "group": label,
                    "estimand": weightset.kind.value,
                    "value": float(v),
                    "density_raw": float(dr),
                    "density_weighted": float(dw),
                }
            )
    return rows
