import math

import numpy as np
import pytest

from stochqubit.dynamics import BathParameters
from stochqubit.errors import StabilityViolation
from stochqubit.fpe_grid import (
    GridField,
    apply_operator,
    coefficients,
    eigen_spectrum_theta,
    evolve,
    probability_current,
    read_field,
    stable_dt,
    stationary,
    write_field,
)

P = BathParameters(omega=0.7, eta=0.9, e0=1.1)
MODES = ("paper_fp", "sde_consistent")


@pytest.mark.parametrize("mode", MODES)
def test_operator_annihilates_constants(mode):
    f = GridField.uniform(32, 16)
    assert np.abs(apply_operator(f, mode, P).values).max() < 1e-10
    j_theta, _ = probability_current(f, mode, P)
    assert np.all(j_theta == 0.0)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("scheme", ["split", "explicit"])
def test_mass_conservation(mode, scheme):
    f = GridField.point_mass(1.0, 2.0, 32, 16)
    out = evolve(f, mode, P, 0.3, scheme=scheme)
    assert out.total() == pytest.approx(1.0, abs=1e-12)
    assert out.values.min() >= -1e-14


def test_drift_only_translates_toward_decreasing_phi():
    n_phi = 64
    p = BathParameters(omega=1.0, eta=0.0, e0=1.0)
    f = GridField.point_mass(1.0, (10 + 0.5) * 2 * math.pi / n_phi, 16, n_phi)
    shift = 3 * 2 * math.pi / n_phi
    out = evolve(f, "sde_consistent", p, shift / p.omega)
    assert np.allclose(out.values, np.roll(f.values, -3, axis=1), atol=1e-9)
    # paper_fp drifts at omega / 2
    out = evolve(f, "paper_fp", p, 2 * shift / p.omega)
    assert np.allclose(out.values, np.roll(f.values, -3, axis=1), atol=1e-9)


def test_stability_violation():
    f = GridField.uniform(32, 16)
    bound = stable_dt(f, "paper_fp", P)
    with pytest.raises(StabilityViolation):
        evolve(f, "paper_fp", P, 0.1, dt=1.5 * bound)
    assert stable_dt(f, "paper_fp", P, "explicit") < bound


@pytest.mark.parametrize("mode", MODES)
def test_stationary_is_uniform(mode):
    s = stationary(mode, P, 32, 16)
    assert np.abs(s.values - GridField.uniform(32, 16).values).max() < 1e-10


def test_theta_heat_kernel_variance():
    p = BathParameters(omega=0.0, eta=0.5, e0=1.0)
    c = coefficients("paper_fp", p)
    f = GridField.from_function(lambda th, ph: np.exp(-((th - math.pi / 2) ** 2) / (2 * 0.1 ** 2)), 256, 8)
    f = f.normalized()
    t = 0.2

    def var(g):
        m = g.theta_marginal()
        m = m / m.sum()
        mu = np.sum(m * g.theta)
        return np.sum(m * (g.theta - mu) ** 2)

    growth = var(evolve(f, "paper_fp", p, t)) - var(f)
    assert growth == pytest.approx(2 * c.d_theta * t, rel=1e-3)


def test_theta_eigenvalues_m0_and_m1():
    est = eigen_spectrum_theta("paper_fp", 0, 3)
    assert np.allclose(est.values, [0.0, 4.0, 16.0], atol=1e-7)
    est = eigen_spectrum_theta("paper_fp", 1, 2)
    assert est.values[0] == pytest.approx(2 + 2 * math.sqrt(2), rel=1e-8)
    # for m = 0 both operators reduce to -4 d^2 with zero flux
    est = eigen_spectrum_theta("sde_consistent", 0, 3)
    assert np.allclose(est.values, [0.0, 4.0, 16.0], atol=1e-7)


def test_field_round_trip(tmp_path):
    f = GridField.point_mass(1.0, 2.0, 8, 6)
    path = tmp_path / "f.txt"
    with open(path, "w") as fh:
        write_field(f, fh, "paper_fp", P)
    g = read_field(path)
    assert np.array_equal(g.values, f.values)


def test_coarsen_preserves_mass():
    f = GridField.point_mass(1.0, 2.0, 16, 16)
    assert f.coarsen(4, 2).total() == pytest.approx(1.0)
