import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochqubit.density import (
    AngleState,
    DensityMatrix,
    entropy,
    from_angles,
    mixing_alpha,
    purity,
    spin_z_expectation,
    to_angles,
    von_neumann_entropy,
)
from stochqubit.errors import InvalidState


def test_from_angles_examples():
    r = from_angles(AngleState(0.0, 0.0, 0.0))
    assert (r.rho_pp, r.rho_mm, r.rho_pm) == (1.0, 0.0, 0.0)
    r = from_angles(AngleState(math.pi / 2, 0.0, 1.0))
    assert np.allclose(r.matrix(), 0.5 * np.ones((2, 2)), atol=1e-15)
    r = from_angles(AngleState(math.pi / 2, math.pi / 2, 0.5))
    assert r.rho_pp == pytest.approx(0.5, abs=1e-15)
    assert r.rho_pm == pytest.approx(0.25j, abs=1e-15)


def test_to_angles_examples():
    s = to_angles(DensityMatrix(1.0, 0.0, 0.0))
    assert (s.theta, s.phi, s.r) == (0.0, 0.0, 0.0)
    s = to_angles(DensityMatrix(0.5, 0.5, 0.0))
    assert s.theta == pytest.approx(math.pi / 2)
    assert s.phi == 0.0 and s.r == 0.0 and s.alpha == pytest.approx(0.0, abs=1e-15)
    s = to_angles(DensityMatrix(0.5, 0.5, 0.25j))
    assert (s.theta, s.phi, s.r) == pytest.approx((math.pi / 2, math.pi / 2, 0.5))


def test_invalid_states_rejected():
    with pytest.raises(InvalidState):
        DensityMatrix(0.6, 0.6, 0.0)
    with pytest.raises(InvalidState):
        DensityMatrix(0.5, 0.5, 0.6)
    with pytest.raises(InvalidState):
        AngleState(0.0, 0.0, 0.5)  # alpha > 1


def test_alpha_relations():
    assert mixing_alpha(DensityMatrix(0.5, 0.5, 0.0)) == 0.0
    assert mixing_alpha(from_angles(AngleState.pure(0.7, 1.3))) == pytest.approx(1.0, abs=1e-12)
    s = AngleState(math.pi / 3, 0.0, 0.5)
    a = mixing_alpha(s)
    assert a == pytest.approx(math.sqrt(0.5), abs=1e-15)
    rho = from_angles(s)
    assert rho.det() == pytest.approx((1 - a * a) / 4, abs=1e-10)
    assert purity(rho) == pytest.approx((1 + a * a) / 2, abs=1e-10)


def test_purity_examples():
    assert purity(from_angles(AngleState.pure(0.4, 2.0))) == pytest.approx(1.0, abs=1e-12)
    assert purity(DensityMatrix(0.5, 0.5, 0.0)) == 0.5
    assert purity(from_angles(AngleState.with_alpha(math.pi / 2, 0.0, 0.5))) == pytest.approx(0.625, abs=1e-12)


def test_entropy_examples():
    assert entropy(1.0) == 0.0
    assert entropy(0.0) == pytest.approx(math.log(2), abs=1e-15)
    # oracle: eigenvalues 0.75, 0.25 of an alpha = 0.5 state
    assert entropy(0.5) == pytest.approx(0.562335144618808, abs=1e-12)
    assert von_neumann_entropy(np.diag([0.75, 0.25])) == pytest.approx(entropy(0.5), abs=1e-14)


def test_spin_z_examples():
    assert spin_z_expectation(DensityMatrix(1.0, 0.0, 0.0)) == 1.0
    assert spin_z_expectation(DensityMatrix(0.5, 0.5, 0.0)) == 0.0
    assert spin_z_expectation(from_angles(AngleState.pure(math.pi / 3, 0.0))) == pytest.approx(0.5, abs=1e-15)


angles = st.tuples(
    st.floats(0.0, math.pi), st.floats(0.0, 2 * math.pi, exclude_max=True), st.floats(0.0, 1.0))


@given(angles)
def test_state_relations_hold(v):
    theta, phi, frac = v
    r = frac * math.sin(theta)
    s = AngleState(theta, phi, r)
    rho = from_angles(s)
    a = mixing_alpha(s)
    assert rho.det() == pytest.approx((1 - a * a) / 4, abs=1e-10)
    assert purity(rho) == pytest.approx((1 + a * a) / 2, abs=1e-10)
    assert entropy(a) == pytest.approx(von_neumann_entropy(rho.matrix()), abs=1e-10)
    back = from_angles(to_angles(rho))
    assert np.allclose(back.matrix(), rho.matrix(), atol=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_entropy_monotone(a, b):
    lo, hi = sorted((a, b))
    assert entropy(lo) >= entropy(hi) - 1e-15
