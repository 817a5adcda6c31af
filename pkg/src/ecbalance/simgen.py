"""Simulation scenarios and synthetic RCT + EC data.

Eighteen outcome/sample-size settings crossed with eight external-control
covariate laws give 144 scenarios. In every scenario X1 ~ Bernoulli(0.5) in
both sources and X2 ~ N(0, 1) in the RCT; the EC law of X2 varies:

    EC1 N(0, 1)    EC2 N(0.5, 1)    EC3 N(1, 1)    EC4 N(2, 1)
    EC5 N(0, 1.5)  EC6 N(0.5, 1.5)  EC7 N(1, 1.5)  EC8 N(2, 1.5)

The second argument of N(., 1.5) is read as a *variance* by default
(sd = sqrt(1.5)); ``scale_reading="sd"`` selects the other reading.

Random numbers come from numpy's PCG64. Per-replicate seeds are derived
from a master seed with ``SeedSequence(master, spawn_key=(setting, ec, rep))``
so every (scenario, replicate) owns an independent, order-free stream.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, replace
from typing import Iterable

import numpy as np

from .core import CombinedDataset
from .errors import InvalidFilterId

RNG_ALGORITHM = "numpy PCG64; replicate seed = SeedSequence(master, spawn_key=(setting, ec, replicate)).generate_state(1, uint64)"

# setting -> (n11, n10, n2, phi)
SETTINGS = {
    1: (100, 100, 100, 0.00), 2: (100, 100, 100, 0.25), 3: (100, 100, 100, 0.50),
    4: (100, 100, 300, 0.00), 5: (100, 100, 300, 0.25), 6: (100, 100, 300, 0.50),
    7: (100, 100, 1000, 0.00), 8: (100, 100, 1000, 0.25), 9: (100, 100, 1000, 0.50),
    10: (150, 50, 50, 0.00), 11: (150, 50, 50, 0.25), 12: (150, 50, 50, 0.50),
    13: (150, 50, 150, 0.00), 14: (150, 50, 150, 0.25), 15: (150, 50, 150, 0.50),
    16: (150, 50, 500, 0.00), 17: (150, 50, 500, 0.25), 18: (150, 50, 500, 0.50),
}

# ec -> (mean, scale parameter as written)
EC_LAWS = {
    1: (0.0, 1.0), 2: (0.5, 1.0), 3: (1.0, 1.0), 4: (2.0, 1.0),
    5: (0.0, 1.5), 6: (0.5, 1.5), 7: (1.0, 1.5), 8: (2.0, 1.5),
}

SCALE_READINGS = ("variance", "sd")
DEFAULT_SCALE_READING = "variance"


@dataclass(frozen=True)
class ScenarioSpec:
    setting_id: int
    ec_id: int
    n11: int
    n10: int
    n2: int
    beta0: float = 0.0
    beta1: float = 1.0
    beta2: float = 1.0
    beta_trt: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0
    ec_x2_mean: float = 0.0
    ec_x2_sd: float = 1.0

    @property
    def n1(self) -> int:
        return self.n11 + self.n10

    @property
    def lam(self) -> float:
        return self.n1 / (self.n1 + self.n2)

    @property
    def has_effect_heterogeneity(self) -> bool:
        return not (self.phi1 == 0 and self.phi2 == 0)

    def to_dict(self) -> dict:
        return {**asdict(self), "lambda": self.lam}

    def with_ec(self, mean: float, sd: float) -> "ScenarioSpec":
        return replace(self, ec_x2_mean=float(mean), ec_x2_sd=float(sd))


def _check_ids(ids, valid, label):
    ids = sorted(set(int(i) for i in ids))
    bad = [i for i in ids if i not in valid]
    if bad:
        raise InvalidFilterId(f"{label} id(s) {bad} out of range {min(valid)}-{max(valid)}")
    return ids


def scenario(setting_id: int, ec_id: int, scale_reading: str = DEFAULT_SCALE_READING) -> ScenarioSpec:
    _check_ids([setting_id], SETTINGS, "setting")
    _check_ids([ec_id], EC_LAWS, "EC")
    if scale_reading not in SCALE_READINGS:
        raise ValueError(f"scale_reading must be one of {SCALE_READINGS}")
    n11, n10, n2, phi = SETTINGS[setting_id]
    mean, scale = EC_LAWS[ec_id]
    sd = math.sqrt(scale) if scale_reading == "variance" else scale
    return ScenarioSpec(setting_id, ec_id, n11, n10, n2, phi1=phi, phi2=phi, ec_x2_mean=mean, ec_x2_sd=sd)


def enumerate_scenarios(settings: Iterable[int] | None = None, ecs: Iterable[int] | None = None,
                        scale_reading: str = DEFAULT_SCALE_READING) -> list[ScenarioSpec]:
    """All requested (setting, EC) pairs, ordered by setting then EC."""
    s_ids = _check_ids(SETTINGS if settings is None else settings, SETTINGS, "setting")
    e_ids = _check_ids(EC_LAWS if ecs is None else ecs, EC_LAWS, "EC")
    if not s_ids or not e_ids:
        raise InvalidFilterId("empty scenario filter")
    return [scenario(s, e, scale_reading) for s in s_ids for e in e_ids]


def parse_id_list(text: str) -> list[int]:
    """Parse ``"1-9"``, ``"1,4,7"`` or ``"1-3,8"`` into a sorted id list."""
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if lo > hi:
                raise InvalidFilterId(f"bad range {part!r}")
            out.update(range(lo, hi + 1))
        elif part.isdigit():
            out.add(int(part))
        else:
            raise InvalidFilterId(f"cannot parse id list {text!r}")
    return sorted(out)


def replicate_seed(master_seed: int, setting_id: int, ec_id: int, replicate: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(setting_id), int(ec_id), int(replicate)))
    return int(ss.generate_state(1, np.uint64)[0])


def generate(spec: ScenarioSpec, seed: int) -> CombinedDataset:
    """One synthetic RCT + EC sample; the first ``n11`` RCT subjects are treated."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    n1, n2 = spec.n1, spec.n2
    x1 = np.concatenate([rng.integers(0, 2, n1), rng.integers(0, 2, n2)]).astype(float)
    x2 = np.concatenate([rng.normal(0.0, 1.0, n1), rng.normal(spec.ec_x2_mean, spec.ec_x2_sd, n2)])
    eps = rng.normal(0.0, 1.0, n1 + n2)
    z = np.concatenate([np.ones(n1, dtype=np.int8), np.zeros(n2, dtype=np.int8)])
    a = np.zeros(n1 + n2, dtype=np.int8)
    a[: spec.n11] = 1

    y0 = spec.beta0 + spec.beta1 * x1 + spec.beta2 * x2 + eps
    y1 = y0 + spec.beta_trt + spec.phi1 * x1 + spec.phi2 * x2
    y = np.where(a == 1, y1, y0)
    return CombinedDataset(y, a, z, np.column_stack([x1, x2]), ("x1", "x2"))
