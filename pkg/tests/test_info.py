import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import entropy as sp_entropy

from ldmlab import info
from ldmlab.info import DiscreteJoint, InvalidDistribution

LN2 = math.log(2)


def fair_copies(k):
    """``k`` identical fair bits."""
    pmf = np.zeros((2,) * k)
    pmf[(0,) * k] = pmf[(1,) * k] = 0.5
    return pmf


def labelled(pmf_units_y):
    return DiscreteJoint.from_units(pmf_units_y, labels=True)


def tc_via_entropies(table):
    """Sum of marginal entropies minus joint entropy (independent route)."""
    table = np.asarray(table)
    marg = sum(sp_entropy(table.sum(axis=tuple(a for a in range(table.ndim) if a != i)))
               for i in range(table.ndim))
    return marg - sp_entropy(table.ravel())


# -- hand values ------------------------------------------------------------
def test_entropy_examples():
    assert info.entropy([0.5, 0.5]) == pytest.approx(LN2)
    assert info.entropy([1.0]) == 0.0
    assert info.entropy([0.25, 0.75]) == pytest.approx(0.5623, abs=5e-5)
    assert info.entropy([0.5, 0.5], base=2) == pytest.approx(1.0)


def test_kl_examples():
    assert info.kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert info.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(LN2)
    assert info.kl_divergence([0.4, 0.6], [0.5, 0.5]) == pytest.approx(0.4 * math.log(0.8) + 0.6 * math.log(1.2))
    assert info.kl_divergence([0.4, 0.6], [0.5, 0.5]) == pytest.approx(0.02014, abs=5e-6)
    assert info.kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf


def test_js_examples():
    assert info.js_divergence_exact([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert info.js_divergence_exact([1.0, 0.0], [0.0, 1.0]) == pytest.approx(LN2)
    assert info.js_divergence_exact([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.2158, abs=5e-5)


def test_multivariate_mi_examples():
    assert info.multivariate_mi(np.outer([0.3, 0.7], [0.6, 0.4])) == pytest.approx(0.0, abs=1e-15)
    assert info.multivariate_mi(fair_copies(3)) == pytest.approx(2 * LN2)
    assert info.multivariate_mi(np.array([[0.4, 0.1], [0.1, 0.4]])) == pytest.approx(0.1927, abs=5e-5)


def test_single_unit_has_zero_total_correlation():
    assert info.total_correlation(np.array([0.2, 0.8])) == 0.0


def test_units_equal_to_label():
    # h1 = h2 = Y, fair bit
    pmf = np.zeros((2, 2, 2))
    pmf[0, 0, 0] = pmf[1, 1, 1] = 0.5
    j = labelled(pmf)
    assert info.conditional_multivariate_mi(j) == pytest.approx(0.0, abs=1e-15)
    assert info.d_lb_exact(j) == pytest.approx(LN2)
    assert abs(info.ensemble_decomposition_residual(j)) < 1e-12
    assert info.mutual_information(j.pmf.reshape(-1, 2)) == pytest.approx(LN2)
    assert info.hellman_raviv_check(j) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_conditionally_independent_units():
    # within each class the two units are independent, with class-dependent marginals
    pmf = np.stack([0.5 * np.outer([0.9, 0.1], [0.8, 0.2]), 0.5 * np.outer([0.2, 0.8], [0.3, 0.7])], axis=-1)
    j = labelled(pmf)
    assert info.conditional_multivariate_mi(j) == pytest.approx(0.0, abs=1e-15)
    assert info.d_lb_exact(j) > 0


def test_swapped_correlation_mixture():
    pos = np.array([[0.4, 0.1], [0.1, 0.4]])
    neg = np.array([[0.1, 0.4], [0.4, 0.1]])
    j = labelled(np.stack([0.5 * pos, 0.5 * neg], axis=-1))
    hand = 0.5 * tc_via_entropies(pos) + 0.5 * tc_via_entropies(neg)
    assert info.conditional_multivariate_mi(j) == pytest.approx(hand, rel=1e-12)
    assert info.multivariate_mi(j) == pytest.approx(0.0, abs=1e-15)
    assert info.d_lb_exact(j) == pytest.approx(-hand, rel=1e-12)


def test_xor_joint_has_negative_d_lb():
    # h1, h2 independent fair bits, Y = h1 xor h2
    pmf = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            pmf[a, b, a ^ b] = 0.25
    j = labelled(pmf)
    assert info.multivariate_mi(j) == pytest.approx(0.0, abs=1e-15)
    assert info.conditional_multivariate_mi(j) == pytest.approx(LN2)
    assert info.d_lb_exact(j) == pytest.approx(-LN2)


def test_independent_of_label():
    pmf = np.einsum("a,b,y->aby", [0.3, 0.7], [0.5, 0.5], [0.5, 0.5])
    j = labelled(pmf)
    assert info.d_lb_exact(j) == pytest.approx(0.0, abs=1e-15)
    assert abs(info.ensemble_decomposition_residual(j)) < 1e-15
    bayes, bound = info.hellman_raviv_check(j)
    assert bayes == pytest.approx(0.5) and bound == pytest.approx(0.5)


# -- properties -------------------------------------------------------------
alphabets = st.lists(st.integers(2, 3), min_size=1, max_size=3)


@settings(max_examples=60, deadline=None)
@given(alphabets, st.integers(2, 3), st.integers(0, 2**32 - 1))
def test_random_joint_identities(alph, n_labels, seed):
    j = info.random_joint(np.random.default_rng(seed), alph, n_labels)
    for v in (info.entropy(j.pmf.ravel()), info.multivariate_mi(j), info.conditional_multivariate_mi(j)):
        assert v >= -1e-12
    assert info.multivariate_mi(j) == pytest.approx(tc_via_entropies(j.units()), abs=1e-12)
    assert abs(info.ensemble_decomposition_residual(j)) < 1e-9
    bayes, bound = info.hellman_raviv_check(j)
    assert bayes <= bound + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_js_is_bounded_and_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    js = info.js_divergence_exact(p, q)
    assert -1e-15 <= js <= LN2 + 1e-12
    assert js == pytest.approx(info.js_divergence_exact(q, p), abs=1e-15)


def test_kl_matches_scipy(rng):
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        assert info.kl_divergence(p, q) == pytest.approx(sp_entropy(p, q), rel=1e-12)


# -- validation and file format ---------------------------------------------
@pytest.mark.parametrize("pmf", [[0.5, 0.6], [-0.1, 1.1], [0.5, float("nan")]])
def test_invalid_pmf_rejected(pmf):
    with pytest.raises(InvalidDistribution):
        DiscreteJoint(np.array(pmf), (2,))


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidDistribution):
        DiscreteJoint(np.full(3, 1 / 3), (2,))


def test_json_round_trip(tmp_path, rng):
    j = info.random_joint(rng, (2, 3), 2)
    path = tmp_path / "j.json"
    path.write_text(json.dumps(j.to_json()))
    back = DiscreteJoint.load(path)
    assert back.alphabets == j.alphabets and back.labels == 2
    np.testing.assert_array_equal(back.pmf, j.pmf)


def test_json_parse_error_has_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"alphabets": [2],\n "pmf": [0.5, 0.5,]}')
    with pytest.raises(InvalidDistribution, match=r"line 2 col \d+"):
        DiscreteJoint.load(path)


def test_json_missing_field(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"alphabets": [2]}')
    with pytest.raises(InvalidDistribution, match="pmf"):
        DiscreteJoint.load(path)
