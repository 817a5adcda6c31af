import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecbalance.core import CombinedDataset
from ecbalance.errors import DataError, DegeneratePi
from ecbalance.estimators import PopulationDraw, check_identification, estimate, ipw_contrast
from ecbalance.oracle import population_sampler
from ecbalance.psmodel import fit_propensity
from ecbalance.simgen import generate, scenario


def _hand_att(y, a, z, pi):
    """Spreadsheet-style evaluation of the three-term estimator with ATT weights."""
    t = [(yi, 1.0) for yi, ai, zi in zip(y, a, z) if zi == 1 and ai == 1]
    c = [(yi, 1.0) for yi, ai, zi in zip(y, a, z) if zi == 1 and ai == 0]
    e = [(yi, p / (1 - p)) for yi, zi, p in zip(y, z, pi) if zi == 0]

    def wmean(pairs):
        return sum(v * w for v, w in pairs) / sum(w for _, w in pairs)

    n10, n2 = len(c), len(e)
    return wmean(t) - n10 / (n10 + n2) * wmean(c) - n2 / (n10 + n2) * wmean(e)


class TestEstimate:
    def test_toy_att(self, toy_dataset, toy_pi):
        res = estimate(toy_dataset, "ATT", toy_pi)
        hand = _hand_att(toy_dataset.y, toy_dataset.a, toy_dataset.z, toy_pi)
        assert hand == pytest.approx(3.5)
        assert res.tau_hat == pytest.approx(hand, abs=1e-12)
        assert (res.term_treated, res.term_cc, res.term_ec) == pytest.approx((6.0, 2.0, 3.0))
        assert res.blend == (0.5, 0.5)
        assert res.reconstruct() == pytest.approx(res.tau_hat, abs=1e-12)

    @pytest.mark.parametrize("kind", ["ATI", "ATT", "ATO"])
    def test_constant_outcomes(self, kind):
        y = [3.0, 3.0, 1.0, 1.0, 1.0, 1.0]
        ds = CombinedDataset(y, [1, 1, 0, 0, 0, 0], [1, 1, 1, 1, 0, 0], np.arange(6.0)[:, None])
        assert estimate(ds, kind, np.full(6, 0.5)).tau_hat == pytest.approx(2.0)

    def test_atec_rejected(self, toy_dataset, toy_pi):
        with pytest.raises(DataError):
            estimate(toy_dataset, "ATEC", toy_pi)

    def test_wrong_length(self, toy_dataset):
        with pytest.raises(DataError):
            estimate(toy_dataset, "ATT", [0.5, 0.5])

    def test_degenerate_pi(self, toy_dataset, toy_pi):
        pi = toy_pi.copy()
        pi[0] = 1.0
        with pytest.raises(DegeneratePi):
            estimate(toy_dataset, "ATI", pi)

    def test_no_external_controls_is_difference_in_means(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=30)
        a = np.r_[np.ones(12, int), np.zeros(18, int)]
        ds = CombinedDataset(y, a, np.ones(30, int), rng.normal(size=(30, 2)))
        res = estimate(ds, "ATT", rng.uniform(0.2, 0.8, 30))
        assert res.tau_hat == y[:12].mean() - y[12:].mean()
        assert math.isnan(res.term_ec) and res.blend == (1.0, 0.0)

    def test_diagnostics_attached(self, toy_dataset, toy_pi):
        res = estimate(toy_dataset, "ATI", toy_pi)
        assert set(res.ess_by_group) == {"rct_treated", "rct_control", "ec"}
        assert res.to_dict()["estimand"] == "ATI"


class TestFiniteSampleProperties:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.05, 0.95))
    def test_constant_pi_all_kinds_agree(self, seed, c):
        ds = generate(scenario(2, 2), seed)
        pi = np.full(len(ds), c)
        vals = [estimate(ds, k, pi).tau_hat for k in ("ATI", "ATT", "ATO")]
        assert vals[1] == pytest.approx(vals[0], abs=1e-12)
        assert vals[2] == pytest.approx(vals[0], abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), c1=st.floats(1e-3, 1e3), c0=st.floats(1e-3, 1e3))
    def test_weight_scale_invariance(self, seed, c1, c0):
        ds = generate(scenario(2, 4), seed)
        pi = fit_propensity(ds).pi_hat
        w1, w0 = 1 / pi, 1 / (1 - pi)
        base = ipw_contrast(ds, w1, w0)[0]
        assert ipw_contrast(ds, c1 * w1, c0 * w0)[0] == pytest.approx(base, abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-100, 100), scale=st.floats(0.01, 100))
    def test_outcome_equivariance(self, seed, shift, scale):
        ds = generate(scenario(3, 8), seed)
        pi = fit_propensity(ds).pi_hat
        moved = CombinedDataset(scale * ds.y + shift, ds.a, ds.z, ds.X)
        for kind in ("ATI", "ATT", "ATO"):
            base = estimate(ds, kind, pi).tau_hat
            assert estimate(moved, kind, pi).tau_hat == pytest.approx(scale * base, rel=1e-12, abs=1e-12 * (1 + abs(shift) + scale))


class TestIdentification:
    def test_setting1_ec1(self):
        rep = check_identification(population_sampler(scenario(1, 1)), n_mc=10**6, seed=1)
        assert len(rep.residuals) == 7
        assert rep.max_abs_residual() <= 0.005

    def test_constant_pi_exact(self):
        class Constant:
            lam, p_treat = 0.6, 0.5

            def draw(self, n, rng):
                n1 = int(self.lam * n)
                z = np.r_[np.ones(n1, int), np.zeros(n - n1, int)]
                a = np.zeros(n, int)
                a[: n1 // 2] = 1
                return PopulationDraw(a, z, np.zeros((n, 1)), np.full(n, self.lam))

        rep = check_identification(Constant(), "ATI", n_mc=1000)
        assert rep.residuals["E[(1-A)(1-Z)/(1-pi)] - 1"] == pytest.approx(0.0, abs=1e-12)
