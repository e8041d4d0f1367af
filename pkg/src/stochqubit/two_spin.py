"""Two non-interacting spins driven by one classical field or by two.

In the shared mode both spins receive the same increments (dw1, dw2) at
every step, which realizes the cross term of the joint generator at the
trajectory level.  In the independent mode spin 2 draws from its own
stream.  Both spins use the unitary scheme.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
import math

import numpy as np

from . import noise
from .density import TWO_PI, AngleState, DensityMatrix, von_neumann_entropy
from .dynamics import (
    EPS_POLE,
    BathParameters,
    EnsembleConfig,
    angles_to_bloch,
    bloch_to_angles,
    initial_arrays,
    rotate_bloch,
)
from .errors import InsufficientSamples, InvalidState, PoleProximity
from .observables import JACKKNIFE_GROUPS, jackknife

BATH_MODES = ("shared", "independent")

PAULI = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
# PAIR[a, b] = sigma_a (x) sigma_b / 4
PAIR = np.einsum("aij,bkl->abikjl", PAULI, PAULI).reshape(4, 4, 4, 4) / 4.0


@dataclass(frozen=True)
class JointState:
    s1: AngleState
    s2: AngleState


def step_joint(j: JointState, p: BathParameters, dt: float, mode: str, w1, w2=None) -> JointState:
    """One unitary step of both spins.

    ``w1`` drives spin 1; spin 2 gets ``w1`` in the shared mode and ``w2``
    in the independent mode.
    """
    if mode not in BATH_MODES:
        raise ValueError(f"mode must be one of {BATH_MODES}, got {mode!r}")
    if mode == "independent" and w2 is None:
        raise ValueError("independent mode needs a second increment w2")
    w2 = w1 if mode == "shared" else w2
    out = []
    for s, w in ((j.s1, w1), (j.s2, w2)):
        b = rotate_bloch(*angles_to_bloch(s.theta, s.phi, s.r), p, dt, w[0], w[1])
        theta, phi, r = (float(v) for v in bloch_to_angles(*b))
        out.append(AngleState(theta, phi, r))
    return JointState(*out)


def short_time_factor(theta1, phi1, theta2, phi2, eta_sq_dt):
    """1 + eta_sq_dt cos(phi1 - phi2) / (tan theta1 tan theta2)."""
    s1, s2 = np.sin(theta1), np.sin(theta2)
    if np.any(np.abs(s1) <= EPS_POLE) or np.any(np.abs(s2) <= EPS_POLE):
        raise PoleProximity("short-time factor evaluated at a pole")
    out = 1.0 + eta_sq_dt * np.cos(np.subtract(phi1, phi2)) * (np.cos(theta1) / s1) * (np.cos(theta2) / s2)
    return float(out) if np.ndim(out) == 0 else out


# -- ensembles -------------------------------------------------------------------

@dataclass
class JointEnsemble:
    config: EnsembleConfig
    params: BathParameters
    bath_mode: str
    steps: np.ndarray
    theta1: np.ndarray
    phi1: np.ndarray
    r1: np.ndarray
    theta2: np.ndarray
    phi2: np.ndarray
    r2: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.config.dt

    @property
    def n_traj(self) -> int:
        return self.theta1.shape[0]

    def snapshot_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 0.5 * self.config.dt + 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t!r}")
        return k

    def at(self, t: float):
        """((theta1, phi1, r1), (theta2, phi2, r2)) at time t."""
        k = self.snapshot_index(t)
        return ((self.theta1[:, k], self.phi1[:, k], self.r1[:, k]),
                (self.theta2[:, k], self.phi2[:, k], self.r2[:, k]))

    def alphas(self):
        a1 = np.sqrt(np.cos(self.theta1) ** 2 + self.r1 ** 2)
        a2 = np.sqrt(np.cos(self.theta2) ** 2 + self.r2 ** 2)
        return a1, a2

    def swapped(self) -> "JointEnsemble":
        return JointEnsemble(self.config, self.params, self.bath_mode, self.steps,
                             self.theta2, self.phi2, self.r2, self.theta1, self.phi1, self.r1)


def joint_initial(n_traj: int, seed: int, theta1: float, theta2: float, phi: str = "uniform",
                  phi1: float = 0.0, phi2: float = 0.0):
    """Pure-state starts at fixed theta; phi either fixed or independent uniform."""
    if phi == "uniform":
        u = noise.uniforms(seed, noise.stream_id(1, noise.INITIAL), 2 * n_traj).reshape(2, n_traj)
        p1, p2 = TWO_PI * u[0], TWO_PI * u[1]
    elif phi == "fixed":
        p1, p2 = np.full(n_traj, phi1), np.full(n_traj, phi2)
    else:
        raise ValueError(f"phi must be 'uniform' or 'fixed', got {phi!r}")
    s1 = (np.full(n_traj, theta1), p1, np.full(n_traj, math.sin(theta1)))
    s2 = (np.full(n_traj, theta2), p2, np.full(n_traj, math.sin(theta2)))
    return s1, s2


def _run_joint_block(task):
    cfg, p, mode, ids, a0, b0 = task
    n = len(ids)
    snap_steps = cfg.snapshot_steps()
    out = np.empty((6, n, len(snap_steps)))
    streams = [noise.stream_id(int(k), noise.SPIN_A) for k in ids]
    if mode == "independent":
        streams += [noise.stream_id(int(k), noise.SPIN_B) for k in ids]
    state = tuple(np.concatenate(pair) for pair in zip(angles_to_bloch(*a0), angles_to_bloch(*b0)))
    sqdt = math.sqrt(cfg.dt)

    def record(k):
        theta, phi, r = bloch_to_angles(*state)
        out[:3, :, k] = theta[:n], phi[:n], r[:n]
        out[3:, :, k] = theta[n:], phi[n:], r[n:]

    snap = 0
    if snap_steps[0] == 0:
        record(0)
        snap = 1
    step = 0
    for normals in noise.block_normals(cfg.seed, streams, cfg.n_steps):
        normals *= sqdt
        if mode == "shared":
            normals = np.concatenate([normals, normals], axis=2)
        for dw in normals:
            state = rotate_bloch(*state, p, cfg.dt, dw[0], dw[1])
            step += 1
            if snap < len(snap_steps) and step == snap_steps[snap]:
                record(snap)
                snap += 1
    return out


def run_joint_ensemble(initial1, initial2, p: BathParameters, cfg: EnsembleConfig, bath_mode: str = "shared",
                       workers: int = 1) -> JointEnsemble:
    """Integrate cfg.n_traj spin pairs with the unitary scheme."""
    if bath_mode not in BATH_MODES:
        raise ValueError(f"bath_mode must be one of {BATH_MODES}, got {bath_mode!r}")
    if cfg.scheme != "unitary":
        raise ValueError("joint ensembles use the unitary scheme only")
    a = initial_arrays(initial1, cfg.n_traj)
    b = initial_arrays(initial2, cfg.n_traj)
    ids = np.arange(cfg.n_traj)
    bounds = list(range(0, cfg.n_traj, cfg.block_size)) + [cfg.n_traj]
    tasks = [
        (cfg, p, bath_mode, ids[lo:hi], tuple(v[lo:hi] for v in a), tuple(v[lo:hi] for v in b))
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_joint_block, tasks))
    else:
        results = [_run_joint_block(t) for t in tasks]
    out = np.concatenate(results, axis=1)
    return JointEnsemble(cfg, p, bath_mode, cfg.snapshot_steps(), *out)


# -- joint density matrix ------------------------------------------------------------

def _pair_features(s1, s2) -> np.ndarray:
    """Per-trajectory (n1, n2, n1 n2^T) flattened to 15 real features."""
    n1 = np.column_stack(angles_to_bloch(*s1))
    n2 = np.column_stack(angles_to_bloch(*s2))
    prod = (n1[:, :, None] * n2[:, None, :]).reshape(-1, 9)
    return np.hstack([n1, n2, prod])


def _joint_matrix(mean_features) -> np.ndarray:
    t = np.empty((4, 4))
    t[0, 0] = 1.0
    t[1:, 0] = mean_features[:3]
    t[0, 1:] = mean_features[3:6]
    t[1:, 1:] = np.reshape(mean_features[6:], (3, 3))
    return np.einsum("ab,abij->ij", t, PAIR)


def joint_mean(ens: JointEnsemble, t: float) -> np.ndarray:
    """4x4 mean of rho1 (x) rho2 over the ensemble."""
    s1, s2 = ens.at(t)
    if s1[0].size == 0:
        raise InsufficientSamples(f"no trajectories at t={t}")
    return _joint_matrix(np.mean(_pair_features(s1, s2), axis=0))


def partial_trace(m, keep: int) -> np.ndarray:
    """Reduced 2x2 state of factor ``keep`` (1 or 2)."""
    r = np.asarray(m).reshape(2, 2, 2, 2)
    return np.einsum("ijkj->ik", r) if keep == 1 else np.einsum("ijil->jl", r)


def _defect_matrix(mean_features) -> np.ndarray:
    m = _joint_matrix(mean_features)
    return m - np.kron(partial_trace(m, 1), partial_trace(m, 2))


@dataclass(frozen=True)
class CorrelationDefect:
    value: float
    stderr: float
    n_samples: int


def correlation_defect(ens: JointEnsemble, t: float, min_samples: int = 2) -> CorrelationDefect:
    """max |<rho1 (x) rho2> - <rho1> (x) <rho2>| over the 4x4 entries.

    The standard error combines the per-entry errors of the covariance in
    quadrature, which bounds the error of the maximum entry from above.
    """
    s1, s2 = ens.at(t)
    n = s1[0].size
    if n < min_samples:
        raise InsufficientSamples(f"{n} trajectories at t={t}, need {min_samples}")
    f = _pair_features(s1, s2)
    d = _defect_matrix(np.mean(f, axis=0))
    # per-trajectory covariance contribution (n1 - <n1>)(n2 - <n2>)^T in the Pauli basis
    n1 = f[:, :3] - f[:, :3].mean(axis=0)
    n2 = f[:, 3:6] - f[:, 3:6].mean(axis=0)
    c = (n1[:, :, None] * n2[:, None, :]).reshape(n, 9)
    se_t = c.std(axis=0, ddof=1) / math.sqrt(n)
    # each Pauli pair contributes |entry| = 1/4 to four matrix entries
    se = 0.25 * math.sqrt(4.0 * np.sum(se_t ** 2))
    return CorrelationDefect(float(np.abs(d).max()), float(se), n)


@dataclass(frozen=True)
class JointEntropyReport:
    s_tot_a: float
    s1_a: float
    s2_a: float
    extensivity_defect: float
    se_defect: float
    defect_corrected: float
    time: float
    n_samples: int

    def as_dict(self) -> dict:
        return asdict(self)


PSD_TOL = 1e-10


def _entropies(mean_features):
    m = _joint_matrix(mean_features)
    lam = np.linalg.eigvalsh(m)
    if lam.min() < -PSD_TOL:
        raise InvalidState(f"mean joint state has eigenvalue {lam.min()!r}")
    s_tot = von_neumann_entropy(m)
    s1 = von_neumann_entropy(partial_trace(m, 1))
    s2 = von_neumann_entropy(partial_trace(m, 2))
    return s_tot, s1, s2


def joint_annealed_entropy(ens: JointEnsemble, t: float, groups: int = JACKKNIFE_GROUPS) -> JointEntropyReport:
    """Annealed entropies of the joint mean and its marginals.

    extensivity_defect = s1_a + s2_a - s_tot_a, with a jackknife standard
    error and a bias-corrected value.
    """
    s1, s2 = ens.at(t)
    if s1[0].size < 2:
        raise InsufficientSamples(f"{s1[0].size} trajectories at t={t}, need 2")
    f = _pair_features(s1, s2)
    s_tot, e1, e2 = _entropies(np.mean(f, axis=0))

    def defect(mf):
        a, b, c = _entropies(mf)
        return b + c - a

    d, se, corr = jackknife(f, defect, groups)
    return JointEntropyReport(s_tot, e1, e2, d, se, corr, float(ens.times[ens.snapshot_index(t)]), int(f.shape[0]))


def negativity(m) -> float:
    """Sum of |negative eigenvalues| of the partial transpose over factor 2."""
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4):
        raise InvalidState(f"expected a 4x4 matrix, got shape {m.shape}")
    if np.abs(m - m.conj().T).max() > PSD_TOL or abs(np.trace(m) - 1.0) > PSD_TOL:
        raise InvalidState("matrix is not Hermitian with unit trace")
    if np.linalg.eigvalsh(m).min() < -PSD_TOL:
        raise InvalidState("matrix is not positive semidefinite")
    pt = m.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    lam = np.linalg.eigvalsh(pt)
    return float(max(0.0, -lam[lam < 0].sum()))


# -- short-time law ------------------------------------------------------------------

@dataclass
class ShortTimeComparison:
    """Per-bin multiplier estimate vs the expansion, binned by the initial phi1 - phi2."""

    eta_sq_dt: float
    centres: np.ndarray
    measured: np.ndarray
    stderr: np.ndarray
    predicted: np.ndarray
    counts: np.ndarray

    def max_deviation(self) -> float:
        return float(np.abs(self.predicted - 1.0).max())

    def relative_error(self) -> np.ndarray:
        return np.abs(self.measured - self.predicted) / self.max_deviation()

    def z_scores(self, reference=None) -> np.ndarray:
        ref = self.predicted if reference is None else reference
        return (self.measured - ref) / self.stderr


def _unwrapped_phi_change(phi: np.ndarray, k: int) -> np.ndarray:
    d = np.diff(phi[:, : k + 1], axis=1)
    d = np.mod(d + math.pi, TWO_PI) - math.pi
    return d.sum(axis=1)


def short_time_multiplier(ens: JointEnsemble, t: float, bins: int = 16) -> ShortTimeComparison:
    """Estimate the short-time density multiplier of the cross term.

    For each pair the phi displacements over [0, t], corrected for the
    deterministic precession, give 1 + dphi1 dphi2, whose conditional mean is
    1 + t * D12 with D12 the cross-diffusion coefficient.  Acting on a density
    that is flat in phi, the cross term multiplies it by exactly this factor.
    Snapshots must be taken at every step so phase unwrapping is unambiguous.
    """
    if ens.config.stride != 1:
        raise ValueError("short-time estimates need stride-1 snapshots")
    k = ens.snapshot_index(t)
    tk = float(ens.times[k])
    drift = ens.params.omega * tk
    d1 = _unwrapped_phi_change(ens.phi1, k) + drift
    d2 = _unwrapped_phi_change(ens.phi2, k) + drift
    x = 1.0 + d1 * d2
    delta0 = np.mod(ens.phi1[:, 0] - ens.phi2[:, 0], TWO_PI)
    g2t = ens.params.g ** 2 * tk
    pred = short_time_factor(ens.theta1[:, 0], ens.phi1[:, 0], ens.theta2[:, 0], ens.phi2[:, 0], g2t)
    idx = np.minimum((delta0 / TWO_PI * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    if counts.min() < 2:
        raise InsufficientSamples(f"a phase bin holds {counts.min()} pairs, need 2")
    meas = np.bincount(idx, weights=x, minlength=bins) / counts
    pred_mean = np.bincount(idx, weights=pred, minlength=bins) / counts
    sq = np.bincount(idx, weights=(x - meas[idx]) ** 2, minlength=bins)
    se = np.sqrt(sq / (counts - 1) / counts)
    centres = (np.arange(bins) + 0.5) * TWO_PI / bins
    return ShortTimeComparison(g2t, centres, meas, se, pred_mean, counts)


def mean_pair_state(ens: JointEnsemble, t: float) -> tuple[DensityMatrix, DensityMatrix]:
    """Averaged one-spin states of each spin."""
    m = joint_mean(ens, t)
    return DensityMatrix.from_matrix(partial_trace(m, 1)), DensityMatrix.from_matrix(partial_trace(m, 2))


def write_joint_snapshots(ens: JointEnsemble, fh, extra: dict | None = None) -> None:
    from . import __version__
    items = {"artifact": "stochqubit", "version": __version__, "bath_mode": ens.bath_mode}
    items.update(asdict(ens.config))
    items.update(asdict(ens.params))
    if extra:
        items.update(extra)
    fh.write("# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n")
    fh.write("# columns: traj_id step t theta1 phi1 r1 theta2 phi2 r2\n")
    n, s = ens.theta1.shape
    cols = np.column_stack([
        np.repeat(np.arange(n), s), np.tile(ens.steps, n), np.tile(ens.times, n),
        ens.theta1.ravel(), ens.phi1.ravel(), ens.r1.ravel(),
        ens.theta2.ravel(), ens.phi2.ravel(), ens.r2.ravel(),
    ])
    np.savetxt(fh, cols, fmt=["%d", "%d"] + ["%.16e"] * 7)


__all__ = [
    "BATH_MODES", "JointState", "JointEnsemble", "step_joint", "short_time_factor", "run_joint_ensemble",
    "joint_initial", "joint_mean", "partial_trace", "correlation_defect", "joint_annealed_entropy",
    "negativity", "short_time_multiplier", "mean_pair_state", "write_joint_snapshots",
]
