import math

import numpy as np
import pytest

from stochqubit.dynamics import BathParameters
from stochqubit.spectral import (
    Inadmissible,
    LegendreReduction,
    eigenfunction,
    eigenvalue,
    node_count,
    quantization_check,
    relaxation_rate,
    spectral_mode,
    spectrum_table,
)


def test_eigenvalue_examples():
    assert eigenvalue(0, 0) == 0.0
    assert eigenvalue(1, 0) == 4.0
    assert eigenvalue(2, 0) == 16.0
    assert eigenvalue(1, 1) == pytest.approx(2 + 2 * math.sqrt(2))
    assert eigenvalue(2, 2) == pytest.approx(10 + 6 * math.sqrt(5))
    assert isinstance(eigenvalue(0, 1), Inadmissible)
    assert isinstance(eigenvalue(-1, 0), Inadmissible)


def test_eigenvalues_increase_and_are_even_in_m():
    for m in range(4):
        vals = [eigenvalue(n, m) for n in range(1, 6)]
        assert np.all(np.diff(vals) > 0)
        assert eigenvalue(3, m) == eigenvalue(3, -m)
    for n in range(1, 4):
        assert np.all(np.diff([eigenvalue(n, m) for m in range(5)]) > 0)


def test_quantization():
    for n in range(1, 5):
        for m in range(4):
            assert quantization_check(eigenvalue(n, m), m)
            mid = 0.5 * (eigenvalue(n, m) + eigenvalue(n + 1, m))
            assert not quantization_check(mid, m)
    assert quantization_check(0.0, 0)
    assert not quantization_check(-1.0, 0)


def test_legendre_terms():
    lam, m = eigenvalue(2, 3), 3
    red = LegendreReduction.from_eigenvalue(lam, m)
    assert red.degree_term() == pytest.approx((m * m + lam - 1) / 4)
    assert red.order_term() == pytest.approx((1 + m * m) / 4)
    assert red.termination_index() == pytest.approx(1.0)


def test_relaxation_rate():
    assert relaxation_rate(4.0, 2.0) == 4.0
    mode = spectral_mode(1, 0, 0.5)
    assert mode.rate == pytest.approx(0.25)


@pytest.mark.parametrize("n,m,nodes", [(0, 0, 0), (1, 0, 1), (2, 0, 2), (3, 0, 3), (1, 1, 0), (2, 1, 1), (2, 2, 1)])
def test_eigenfunction_nodes(n, m, nodes):
    theta = np.linspace(0.01, math.pi - 0.01, 500)
    s = eigenfunction(n, m, theta)
    assert node_count(s) == nodes
    assert np.abs(s).max() == pytest.approx(1.0)


def test_eigenfunction_m0_is_cosine():
    theta = np.linspace(0.0, math.pi, 200)
    s = eigenfunction(2, 0, theta)
    assert np.allclose(s, np.cos(2 * theta), atol=1e-3)


def test_eigenfunction_endpoint_behaviour():
    m = 1
    s_exp = 0.5 * (1 + math.sqrt(2))
    theta = np.array([0.01, 0.02, 0.04])
    s = eigenfunction(1, m, theta)
    ratio = s / np.sin(theta) ** s_exp
    assert np.ptp(ratio) / abs(ratio.mean()) < 1e-2


def test_spectrum_table_rows():
    rows = spectrum_table(2, 1, BathParameters(1.0, 1.0, 1.0))
    paper = [r for r in rows if r.mode == "paper_fp"]
    assert [(r.n, r.m) for r in paper] == [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)]
    for r in paper[1:]:
        assert r.rel_err < 1e-8
    sde = [r for r in rows if r.mode == "sde_consistent"]
    assert all(math.isnan(r.closed_form) for r in sde)
