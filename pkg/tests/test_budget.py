import math

import pytest
from hypothesis import given, strategies as st

from ghostfluor.budget import BudgetParams, acquisition_time, budget_report, coincidence_rate_budget

# N0 (1 - exp(-0.04)) 0.25 0.5 0.7 0.7 at 30 digits
RATE_ORACLE = 9606.58740768081368739338


def test_worked_example_rate():
    rate = coincidence_rate_budget(BudgetParams())
    assert rate == pytest.approx(RATE_ORACLE, rel=1e-13)
    assert abs(rate - 10_000) <= 0.05 * 10_000


def test_worked_example_times():
    t = acquisition_time(coincidence_rate_budget(BudgetParams()), 100, 100 * 100)
    assert t.per_pixel == pytest.approx(0.0104095237732440124703618, rel=1e-12)
    assert t.total == pytest.approx(104.095237732440124703618, rel=1e-12)


@pytest.mark.parametrize("field", ["quantum_yield", "collection_efficiency", "bucket_efficiency",
                                   "array_efficiency", "pair_rate", "concentration"])
def test_any_zero_factor_gives_zero(field):
    assert coincidence_rate_budget(BudgetParams(**{field: 0.0})) == 0.0


def test_saturation_limit():
    p = BudgetParams(concentration=1e9, quantum_yield=1, collection_efficiency=1, bucket_efficiency=1,
                     array_efficiency=1)
    assert coincidence_rate_budget(p) == 4e6


def test_acquisition_time_edge_cases():
    assert acquisition_time(1e4, 0, 100) == (0.0, 0.0)
    assert acquisition_time(0.0, 100, 100) == (math.inf, math.inf)
    with pytest.raises(ValueError):
        acquisition_time(-1.0, 1, 1)


@given(st.floats(1e-3, 1e9), st.floats(0, 1e4), st.integers(0, 10**6))
def test_doubling_rate_halves_times(rate, cpp, pixels):
    a = acquisition_time(rate, cpp, pixels)
    b = acquisition_time(2 * rate, cpp, pixels)
    assert b.per_pixel == pytest.approx(a.per_pixel / 2, rel=1e-14)
    assert b.total == pytest.approx(a.total / 2, rel=1e-14)


@pytest.mark.parametrize("kw", [dict(quantum_yield=1.2), dict(array_efficiency=-0.1), dict(window=math.nan)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        BudgetParams(**kw)


def test_report_lists_every_factor():
    text = budget_report(BudgetParams())
    values = {ln.split()[0]: ln.split()[1] for ln in text.splitlines()[1:]}
    assert float(values["coincidence_rate_per_s"]) == pytest.approx(9606.59, abs=0.01)
    assert float(values["absorbed_fraction"]) == pytest.approx(0.039211, abs=1e-6)
    assert float(values["multi_pair_probability"]) == pytest.approx(7.79e-4, abs=1e-6)
    assert float(values["per_pixel_time_s"]) == pytest.approx(0.0104095, rel=1e-5)
    assert float(values["total_time_s"]) == pytest.approx(104.095, rel=1e-5)
    assert "# quoted:" in text
