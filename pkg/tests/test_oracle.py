import math

import numpy as np
import pytest
from scipy.stats import norm

from ecbalance.errors import InvalidLambda
from ecbalance.oracle import (
    closed_form_ati,
    closed_form_att,
    oracle_table,
    read_oracle_csv,
    true_estimand_custom_lambda,
    true_estimands,
    true_pi,
    write_oracle_csv,
)
from ecbalance.simgen import scenario


def _pdf_pi(spec, x2, lam):
    """Direct density-ratio oracle: f1 lam / (f1 lam + f2 (1 - lam))."""
    f1 = norm.pdf(x2, 0.0, 1.0)
    f2 = norm.pdf(x2, spec.ec_x2_mean, spec.ec_x2_sd)
    return f1 * lam / (f1 * lam + f2 * (1 - lam))


class TestTruePi:
    def test_identical_laws(self):
        assert true_pi(scenario(1, 1), [1.0, -0.7]) == pytest.approx(2 / 3)

    def test_against_density_oracle(self):
        spec = scenario(1, 4)
        assert true_pi(spec, [0.0, -1.0]) == pytest.approx(_pdf_pi(spec, -1.0, 2 / 3), rel=1e-12)
        assert true_pi(spec, [1.0, 0.0]) == pytest.approx(0.9366, abs=1e-4)

    @pytest.mark.parametrize("s, e", [(7, 8), (16, 6), (12, 3)])
    def test_vectorized(self, s, e):
        spec = scenario(s, e)
        x = np.column_stack([np.zeros(25), np.linspace(-4, 6, 25)])
        assert true_pi(spec, x) == pytest.approx(_pdf_pi(spec, x[:, 1], spec.lam), rel=1e-10)

    def test_lambda_override(self):
        assert true_pi(scenario(1, 1), [0, 0], lam=0.2) == pytest.approx(0.2)


class TestTrueEstimands:
    def test_no_heterogeneity_is_exactly_zero(self):
        t = true_estimands(scenario(4, 8), n_mc=1000)
        assert (t.tau_ati, t.tau_att, t.tau_ato, t.tau_atec) == (0.0, 0.0, 0.0, 0.0)

    def test_setting2_ec4(self):
        t = true_estimands(scenario(2, 4), n_mc=10**6, seed=3)
        assert t.tau_ati == pytest.approx(closed_form_ati(t.spec), abs=4 * t.se("ATI"))
        assert t.tau_att == pytest.approx(0.125, abs=4 * t.se("ATT"))
        assert (t.tau_ati, t.tau_att, t.tau_ato) == pytest.approx((0.29, 0.12, 0.41), abs=0.01)

    def test_closed_forms(self):
        spec = scenario(9, 8)
        assert closed_form_att(spec) == 0.25
        assert closed_form_ati(spec) == pytest.approx(0.25 + 0.5 * (1000 / 1200) * 2.0)

    def test_override_at_native_lambda_is_noop(self):
        spec = scenario(3, 3)
        a = true_estimands(spec, 2**16, seed=1)
        b = true_estimand_custom_lambda(spec, spec.lam, 2**16, seed=1)
        assert a.csv_row() == b.csv_row()

    def test_lambda_near_one_is_rct_average(self):
        t = true_estimand_custom_lambda(scenario(2, 4), 0.999, n_mc=10**5, seed=2)
        assert t.tau_ati == pytest.approx(0.125, abs=0.01)

    def test_att_free_of_lambda(self):
        spec = scenario(3, 6)
        vals = [true_estimand_custom_lambda(spec, lam, 2**17, seed=4).tau_att for lam in (0.2, 0.5, 0.8)]
        assert np.ptp(vals) < 0.01

    @pytest.mark.parametrize("lam", [0.0, 1.0, -0.5, 1.5])
    def test_invalid_lambda(self, lam):
        with pytest.raises(InvalidLambda):
            true_estimand_custom_lambda(scenario(2, 1), lam)

    def test_standard_error_shrinks_with_n(self):
        spec = scenario(3, 8)
        small = true_estimands(spec, 2**16, seed=5).se("ATO")
        big = true_estimands(spec, 2**18, seed=5).se("ATO")
        assert 1.7 < small / big < 2.3

    def test_reproducible(self):
        spec = scenario(6, 7)
        assert true_estimands(spec, 5000, seed=9).csv_row() == true_estimands(spec, 5000, seed=9).csv_row()


class TestCsv:
    def test_round_trip(self, tmp_path):
        specs = [scenario(2, 1), scenario(3, 8)]
        table = oracle_table(specs, n_mc=5000, seed=1, workers=1)
        path = tmp_path / "truth.csv"
        write_oracle_csv(table, path, {"tool": "test"})
        back = read_oracle_csv(path)
        for key, t in table.items():
            assert back[key].csv_row() == t.csv_row()

    def test_parallel_matches_serial(self):
        specs = [scenario(2, 4), scenario(9, 8)]
        a = oracle_table(specs, n_mc=3000, seed=2, workers=1)
        b = oracle_table(specs, n_mc=3000, seed=2, workers=2)
        assert {k: v.csv_row() for k, v in a.items()} == {k: v.csv_row() for k, v in b.items()}
