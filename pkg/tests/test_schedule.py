import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from osfrl.schedule import RateParams, alpha, confidence_radius, weight_profile


def test_alpha_values():
    assert alpha(1, 5) == 1.0
    assert alpha(7, 3) == pytest.approx(0.4)
    assert alpha(2, 1) == pytest.approx(2 / 3)


@pytest.mark.parametrize("k,H", [(0, 1), (1, 0), (-2, 3)])
def test_alpha_rejects_nonpositive(k, H):
    with pytest.raises(ValueError):
        alpha(k, H)


def test_weight_profile_examples():
    np.testing.assert_allclose(weight_profile(0, 4), [1.0])
    np.testing.assert_allclose(weight_profile(1, 3), [0.0, 1.0])
    np.testing.assert_allclose(weight_profile(3, 2), [0.0, 0.1, 0.3, 0.6], atol=1e-15)


@given(st.integers(1, 400), st.integers(1, 10))
def test_weight_profile_sums_to_one(t, H):
    w = weight_profile(t, H)
    assert len(w) == t + 1
    assert w[0] == 0.0
    assert abs(w[1:].sum() - 1.0) < 1e-12
    assert np.all(w >= 0)


@given(st.integers(1, 400), st.integers(1, 10))
def test_weight_profile_is_incremental_update(t, H):
    # one more step scales old weights by (1 - alpha) and appends alpha
    w, nxt = weight_profile(t, H), weight_profile(t + 1, H)
    a = alpha(t + 1, H)
    np.testing.assert_allclose(nxt[:-1], w * (1 - a), atol=1e-15)
    assert nxt[-1] == pytest.approx(a)


def test_radius_theory():
    assert math.isinf(confidence_radius(1, RateParams(1, 10, 100, "theory")))
    assert confidence_radius(2, RateParams(1, 10, 100, "theory")) == pytest.approx(63.08, abs=0.01)


def test_radius_experiment():
    assert confidence_radius(4, RateParams(1, 201, 100)) == pytest.approx(1.574, abs=1e-3)
    assert confidence_radius(4, RateParams(1, 201, 100)) == pytest.approx(math.sqrt(math.log(20100) / 4))


@given(st.integers(2, 5000), st.sampled_from(["theory", "experiment"]))
def test_radius_decreasing(k, mode):
    p = RateParams(3, 41, 500, mode)
    assert confidence_radius(k + 1, p) < confidence_radius(k, p)


def test_rate_params_validation():
    with pytest.raises(ValueError):
        RateParams(0, 10, 10)
    with pytest.raises(ValueError):
        RateParams(1, 10, 10, mode="loose")
    assert RateParams(2, 10, 50).T == 100
