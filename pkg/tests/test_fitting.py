import numpy as np
import pytest

from stokeslab.fitting import FitResult, fit_power_law, linear_fit


def test_linear_fit_exact_line():
    x = np.linspace(0, 3, 7)
    alpha, beta, rss, r2 = linear_fit(x, 1.5 - 2 * x)
    assert alpha == pytest.approx(1.5, abs=1e-13)
    assert beta == pytest.approx(-2.0, abs=1e-13)
    assert rss <= 1e-26
    assert r2 == pytest.approx(1.0)


def test_linear_fit_constant_data():
    alpha, beta, rss, r2 = linear_fit([1.0, 2.0, 4.0], [7.0, 7.0, 7.0])
    assert beta == pytest.approx(0.0, abs=1e-14)
    assert r2 == 1.0


@pytest.mark.parametrize("x", [[2.0, 2.0, 2.0], [1.0]])
def test_linear_fit_degenerate(x):
    with pytest.raises(ValueError):
        linear_fit(x, np.ones(len(x)))


def test_linear_fit_rejects_nonfinite():
    with pytest.raises(ValueError):
        linear_fit([1.0, 2.0, 3.0], [1.0, np.nan, 2.0])


def test_power_law_recovers_inverse_t():
    T = np.geomspace(0.05, 0.5, 10)
    p, (alpha, beta, rss, r2), table = fit_power_law(T, 2 + 3 / T)
    assert p == pytest.approx(1.0, abs=1e-8)
    assert beta == pytest.approx(3.0, rel=1e-8)
    assert alpha == pytest.approx(2.0, abs=1e-8)
    assert r2 == pytest.approx(1.0, abs=1e-8)
    assert set(table) == {0.5, 1.0, 2.0, 4.0, 9.0}


def test_power_law_discriminates_fourth_power():
    T = np.geomspace(0.3, 1.2, 10)
    p, _, table = fit_power_law(T, 1 + 0.2 / T**4)
    assert p == pytest.approx(4.0, abs=1e-6)
    assert table[1.0] >= 10 * table[4.0]


def test_power_law_refines_between_candidates():
    T = np.geomspace(0.1, 1.0, 12)
    p, (alpha, beta, _, r2), _ = fit_power_law(T, -1 + 0.7 * T**-1.5)
    assert p == pytest.approx(1.5, abs=1e-6)
    assert beta == pytest.approx(0.7, rel=1e-6)
    assert r2 == pytest.approx(1.0, abs=1e-10)


def test_report_lists_residual_table():
    fit = FitResult("inv-T-power", 1.0, 2.0, 1.0, 0.99, 0.1, 8, (0.1, 0.4), {1.0: 0.1, 4.0: 0.5})
    lines = fit.report().splitlines()
    assert "p = 1.0" in lines
    assert "rss_p4 = 0.5" in lines
    assert fit.residual_ratio(4.0) == pytest.approx(5.0)
    # every line splits cleanly as key = value
    assert all(len(line.split(" = ")) == 2 for line in lines)
