import json

import numpy as np
import pytest

from glassbox import hdmr, oracles, sensitivity
from glassbox.basis import BasisSpec
from glassbox.measure import ProductMeasure, Uniform

ISHIGAMI_SUBSETS = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


@pytest.fixture(scope="module")
def ishigami_report():
    idx = oracles.ishigami_indices(oracles.IshigamiParams())
    d = np.diag([idx["S1"], idx["S2"], 0.0, 0.0, idx["S13"], 0.0, 0.0])
    return sensitivity.indices_from_covariance(ISHIGAMI_SUBSETS, d, 1.0, 3)


def test_totals_include_singletons(ishigami_report):
    r = ishigami_report
    assert r.T(0) == pytest.approx(r.S((0,)) + r.S((0, 2)))
    assert r.T(2) == pytest.approx(0.24368366, abs=1e-8)
    assert sum(r.R(i) for i in range(3)) == pytest.approx(1.0)


def test_level_set_queries(ishigami_report):
    r = ishigami_report
    assert sensitivity.level_set_query(r, "T_eps", 0.3) == [0, 1]
    assert sensitivity.level_set_query(r, "I_eps", 0.1) == [(0,), (1,)]
    assert sensitivity.level_set_query(r, "X_eps", 0.1) == [(0, 2)]
    assert sensitivity.level_set_query(r, "P_eps", 0.1) == [(0,), (1,), (0, 2)]
    assert sensitivity.level_set_query(r, "reduced_order", 0.3) == 1
    assert sensitivity.level_set_query(r, "reduced_order", 0.01) == 2
    with pytest.raises(sensitivity.QueryError):
        sensitivity.level_set_query(r, "Z_eps", 0.1)


def test_minimal_order():
    assert sensitivity.minimal_order([0.6, 0.3, 0.1], 0.05) == 3
    assert sensitivity.minimal_order([0.6, 0.3, 0.1], 0.1) == 2
    assert sensitivity.minimal_order([0.7, 0.3], 0.0) == 2
    assert sensitivity.minimal_order([0.5, 0.2], 0.1) is None
    with pytest.raises(sensitivity.QueryError):
        sensitivity.minimal_order([1.0], -0.1)


def test_order_shares_match_product_oracle():
    rho = 0.5
    meas = ProductMeasure.iid(Uniform(1 - np.sqrt(3) / 2, 1 + np.sqrt(3) / 2), 3)
    m = hdmr.fit(lambda x: np.prod(x, axis=1), meas, BasisSpec("monomial", 1, 3))
    shares = sensitivity.scsa(m).order_shares()
    np.testing.assert_allclose(shares, oracles.product_shares(3, rho), atol=1e-12)


def test_p_eps_on_model_returns_components():
    p = oracles.GaussPolyParams(rho=0.0)
    m = hdmr.fit(oracles.gauss_poly_target(p), p.measure(), BasisSpec("monomial", 1, 2))
    sel = sensitivity.level_set_query(m, "P_eps", 0.2)
    assert set(sel) == {(0,), (1,), (0, 1)}
    assert sel[(0,)] is m.components[(0,)]


def test_absent_subsets_report_zero(ishigami_report):
    assert ishigami_report.S((0, 1, 2)) == 0.0
    r = sensitivity.indices_from_covariance([(0,)], np.array([[2.0]]), 2.0, 2)
    assert r.S((1,)) == 0.0 and r.Sa((0, 1)) == 0.0


def test_zero_variance_is_degenerate():
    with pytest.raises(sensitivity.DegenerateModelError):
        sensitivity.indices_from_covariance([(0,)], np.zeros((1, 1)), 0.0, 1)


def test_text_table_layout(ishigami_report):
    text = ishigami_report.to_text(tree=[0.3, 0.3, 0.4])
    lines = text.splitlines()
    assert lines[0].split() == ["Subspace", "Variables", "Sa", "Sb", "S", "T", "R", "Tree"]
    assert any(l.startswith("(1, 3)") for l in lines)
    assert lines[-1].split()[0] == "total"
    hidden = ishigami_report.to_text(epsilon=0.01)
    assert "(2, 3)" not in hidden and "(1, 3)" in hidden


def test_report_json(ishigami_report):
    d = json.loads(ishigami_report.to_json())
    assert len(d["subsets"]) == 7
    assert d["variables"][0]["T"] == pytest.approx(ishigami_report.T(0))
