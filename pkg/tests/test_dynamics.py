import io
import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from stochqubit.density import AngleState, DensityMatrix, from_angles, mixing_alpha, to_angles
from stochqubit.dynamics import (
    BathParameters,
    EnsembleConfig,
    angles_to_bloch,
    default_dt,
    hamiltonian,
    propagator,
    rotate_bloch,
    run_ensemble,
    step_full,
    step_reduced_ito,
    step_unitary,
    uniform_initial,
    write_snapshots,
    read_snapshots,
)
from stochqubit.errors import PoleProximity

P = BathParameters(omega=1.3, eta=0.8, e0=1.25)


def test_propagator_matches_matrix_exponential():
    rng = np.random.default_rng(0)
    for _ in range(20):
        e = complex(*rng.normal(size=2)) * 5
        h = hamiltonian(P, e)
        dt = rng.uniform(1e-4, 0.5)
        assert np.allclose(propagator(h, dt), expm(-1j * h * dt), atol=1e-13)


def test_unitary_free_precession():
    p = BathParameters(omega=2.0, eta=0.0, e0=1.0)
    rho = from_angles(AngleState.pure(1.0, 0.4))
    t = 0.7
    out = step_unitary(rho, p, t, (0.3, -0.2))
    assert out.rho_pp == pytest.approx(rho.rho_pp, abs=1e-15)
    assert out.rho_pm == pytest.approx(rho.rho_pm * np.exp(-1j * p.omega * t), abs=1e-14)


def test_unitary_zero_noise_keeps_diagonal():
    rho = from_angles(AngleState.with_alpha(1.1, 2.0, 0.7))
    out = step_unitary(rho, P, 0.01, (0.0, 0.0))
    assert out.rho_pp == pytest.approx(rho.rho_pp, abs=1e-15)


def test_unitary_preserves_alpha_and_matches_bloch_rotation():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = AngleState.with_alpha(rng.uniform(1.0, 2.0), rng.uniform(0, 2 * np.pi), rng.uniform(0.6, 1.0))
        rho = from_angles(s)
        w = rng.normal(size=2) * 0.1
        out = step_unitary(rho, P, 0.01, w)
        assert abs(mixing_alpha(out) - s.alpha) <= 1e-12
        b = rotate_bloch(*angles_to_bloch(s.theta, s.phi, s.r), P, 0.01, w[0], w[1])
        assert np.allclose(b, out.bloch(), atol=1e-14)
    with pytest.raises(ValueError):
        step_unitary(rho, P, 0.0, (0, 0))


def test_full_deterministic_limit():
    p = BathParameters(omega=1.0, eta=0.0, e0=1.0)
    for interp in ("ito", "stratonovich"):
        th, r, ph = step_full((1.0, 0.5, 2.0), p, 0.01, (0.3, 0.1), interp)
        assert (th, r) == (1.0, 0.5)
        assert ph == pytest.approx(2.0 - 0.01, abs=1e-15)


def _one_step_alpha_defect(interp, dt, n=100_000, seed=5):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((2, n)) * math.sqrt(dt)
    phi = rng.uniform(0, 2 * np.pi, n)
    p = BathParameters(1.0, 1.0, 1.0)
    th, r, _ = step_full((np.full(n, np.pi / 2), np.ones(n), phi), p, dt, (w[0], w[1]), interp)
    return np.mean(np.abs(np.sqrt(np.cos(th) ** 2 + r ** 2) - 1.0))


def test_stratonovich_alpha_defect_is_second_order():
    d = [_one_step_alpha_defect("stratonovich", dt) for dt in (8e-3, 4e-3, 2e-3)]
    slopes = np.log2(np.array(d[:-1]) / np.array(d[1:]))
    assert np.all(np.abs(slopes - 2.0) < 0.2)


def test_ito_alpha_defect_leading_order():
    dt = 2e-3
    assert _one_step_alpha_defect("ito", dt) == pytest.approx(0.5 * dt, rel=0.05)


def test_pole_guards():
    with pytest.raises(PoleProximity):
        step_full((0.0, 0.5, 0.0), P, 0.01, (0.1, 0.1))
    with pytest.raises(PoleProximity):
        step_full((1.0, 0.0, 0.0), P, 0.01, (0.1, 0.1))
    with pytest.raises(PoleProximity):
        step_reduced_ito(math.pi, 0.0, P, 0.01, (0.1, 0.1))


def test_reduced_examples():
    th, ph = step_reduced_ito(1.0, 2.0, P, 0.01, (0.0, 0.0))
    assert th == 1.0 and ph == pytest.approx(2.0 - P.omega * 0.01)
    th, ph = step_reduced_ito(math.pi / 2, 2.0, P, 0.01, (0.2, -0.3))
    assert ph == pytest.approx(2.0 - P.omega * 0.01, abs=1e-15)


def test_reduced_theta_variance():
    p = BathParameters(1.0, 1.0, 1.0)
    cfg = EnsembleConfig(n_traj=20_000, dt=1e-3, n_steps=100, seed=3, scheme="reduced-ito", stride=100,
                         pole_policy="flag")
    ens = run_ensemble(AngleState.pure(math.pi / 2, 0.0), p, cfg)
    theta, _, _ = ens.at(0.1)
    # Var(theta) = g^2 T; sampling error of a variance is sqrt(2/n)
    assert theta.var() == pytest.approx(p.g ** 2 * 0.1, rel=4 * math.sqrt(2 / theta.size))


def test_default_dt_bound():
    assert P.g ** 2 * default_dt(P) == pytest.approx(1e-3)


def test_single_trajectory_free_rotation():
    p = BathParameters(omega=0.9, eta=0.0, e0=1.0)
    cfg = EnsembleConfig(n_traj=1, dt=0.01, n_steps=100, seed=0, stride=10)
    ens = run_ensemble(AngleState.pure(0.8, 0.2), p, cfg)
    expected = np.mod(0.2 - p.omega * ens.times, 2 * np.pi)
    assert np.allclose(ens.phi[0], expected, atol=1e-12)
    assert np.allclose(ens.theta[0], 0.8, atol=1e-12)


@pytest.mark.parametrize("scheme", ["unitary", "reduced-ito", "full-stratonovich", "full-ito"])
def test_worker_count_does_not_change_output(scheme):
    cfg = EnsembleConfig(n_traj=150, dt=1e-3, n_steps=40, seed=9, scheme=scheme, stride=8, block_size=32)
    outs = []
    for workers in (1, 3):
        buf = io.StringIO()
        write_snapshots(run_ensemble(AngleState.pure(1.0, 0.5), P, cfg, workers), buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]


def test_snapshot_round_trip(tmp_path):
    cfg = EnsembleConfig(n_traj=5, dt=1e-3, n_steps=20, seed=1, stride=10)
    ens = run_ensemble(AngleState.with_alpha(1.2, 0.0, 0.6), P, cfg)
    path = tmp_path / "snap.txt"
    with open(path, "w") as fh:
        write_snapshots(ens, fh)
    header, data = read_snapshots(path)
    assert header["seed"] == "1" and header["scheme"] == "unitary"
    assert data.shape == (5 * 3, 7)
    assert np.allclose(data[:, 6], 0.6, atol=1e-10)


def test_unitary_alpha_constant_across_ensemble():
    cfg = EnsembleConfig(n_traj=500, dt=1e-3, n_steps=2000, seed=4, stride=100)
    ens = run_ensemble(AngleState.with_alpha(1.3, 0.0, 0.6), P, cfg)
    assert np.abs(ens.alpha() - 0.6).max() <= 1e-10


def test_uniform_initial_respects_strip():
    theta, phi, r = uniform_initial(1000, 2, alpha=0.5)
    assert np.all(np.abs(np.cos(theta)) <= 0.5 + 1e-12)
    assert np.allclose(np.cos(theta) ** 2 + r ** 2, 0.25)


def _cos_decay(scheme, t=1.0, n=20_000):
    p = BathParameters(0.5, 1.0, 1.0)
    cfg = EnsembleConfig(n_traj=n, dt=1e-3, n_steps=int(t / 1e-3), seed=21, scheme=scheme, stride=int(t / 1e-3))
    ens = run_ensemble(AngleState.pure(0.6, 0.0), p, cfg)
    theta, _, _ = ens.at(t)
    return np.mean(np.cos(theta)), np.std(np.cos(theta)) / math.sqrt(theta.size)


def test_cos_theta_relaxation_rates_by_scheme():
    # unitary and Stratonovich relax <cos theta> at g^2, the reduced Ito system at g^2 / 2
    c0 = math.cos(0.6)
    for scheme, rate in (("unitary", 1.0), ("full-stratonovich", 1.0), ("reduced-ito", 0.5)):
        m, se = _cos_decay(scheme)
        assert abs(m - c0 * math.exp(-rate)) < 4 * se + 2e-3, scheme


def test_full_ito_matches_reduced_at_short_times():
    p = BathParameters(1.0, 1.0, 1.0)
    out = {}
    for scheme in ("full-ito", "reduced-ito"):
        cfg = EnsembleConfig(n_traj=20_000, dt=1e-3, n_steps=100, seed=8 if scheme == "full-ito" else 18,
                             scheme=scheme, stride=100)
        out[scheme] = run_ensemble(AngleState.pure(1.0, 0.0), p, cfg).at(0.1)[0]
    assert stats.ks_2samp(out["full-ito"], out["reduced-ito"]).pvalue > 0.01


@pytest.mark.xfail(strict=True, reason="the reduced Ito system relaxes at half the Stratonovich rate")
def test_reduced_and_stratonovich_agree_in_distribution():
    p = BathParameters(1.0, 1.0, 1.0)
    out = {}
    for scheme in ("full-stratonovich", "reduced-ito"):
        cfg = EnsembleConfig(n_traj=20_000, dt=1e-3, n_steps=1000, seed=31 if scheme == "reduced-ito" else 32,
                             scheme=scheme, stride=1000)
        out[scheme] = run_ensemble(AngleState.pure(0.8, 0.0), p, cfg).at(1.0)[0]
    assert stats.ks_2samp(out["full-stratonovich"], out["reduced-ito"]).pvalue > 0.01
