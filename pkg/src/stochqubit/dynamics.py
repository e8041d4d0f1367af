"""Stochastic time stepping for a qubit in a classical white-noise field.

The Hamiltonian is H = (omega/2) sz - (eta/2) (s+ E + s- E*) with the
complex field E = e0 (xi1 + i xi2).  Three families of integrators live
here:

* ``unitary``: the field is held constant over each step at
  e0 (dw1 + i dw2) / dt and the 2x2 propagator is exponentiated exactly.
  Trace, spectrum and hence alpha are preserved to round-off.
* ``full-ito`` / ``full-stratonovich``: Euler-Maruyama and Heun steps of the
  three angle equations for (theta, r, phi).
* ``reduced-ito``: Euler-Maruyama for the pure-state pair (theta, phi) with
  r = sin(theta) eliminated.

The ensemble runner gives every trajectory its own counter-addressed noise
stream, so output does not depend on how trajectories are split among
workers.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
import math
from typing import NamedTuple

import numpy as np

from . import noise
from .density import AngleState, DensityMatrix, TWO_PI, from_angles, to_angles, wrap_phase
from .errors import PoleProximity

EPS_POLE = 1e-9
SCHEMES = ("unitary", "full-stratonovich", "full-ito", "reduced-ito")
POLE_POLICIES = ("auto", "flag", "reflect", "raise")


@dataclass(frozen=True)
class BathParameters:
    omega: float = 1.0
    eta: float = 1.0
    e0: float = 1.0

    def __post_init__(self):
        for name in ("omega", "eta", "e0"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    @property
    def g(self) -> float:
        """Effective noise amplitude eta * e0."""
        return self.eta * self.e0


class NoiseIncrement(NamedTuple):
    dw1: float
    dw2: float


def default_dt(p: BathParameters, bound: float = 1e-3) -> float:
    """Largest dt with g^2 dt <= bound (1e-3 when the bath is silent)."""
    g2 = p.g ** 2
    return bound / g2 if g2 > 0 else 1e-3


# -- unitary scheme ---------------------------------------------------------

def field_sample(p: BathParameters, dt: float, w) -> complex:
    """Piecewise-constant field value over one step."""
    return p.e0 * complex(w[0], w[1]) / dt


def hamiltonian(p: BathParameters, e: complex) -> np.ndarray:
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sm = sp.T.copy()
    sz = np.diag([1.0, -1.0]).astype(complex)
    return 0.5 * p.omega * sz - 0.5 * p.eta * (sp * e + sm * np.conj(e))


def propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i h dt) for a traceless 2x2 Hermitian h, in closed form."""
    hz = h[0, 0].real
    hx = h[0, 1].real
    hy = -h[0, 1].imag
    norm = math.sqrt(hx * hx + hy * hy + hz * hz)
    a = norm * dt
    c = math.cos(a)
    s = math.sin(a) / norm if norm > 0 else dt
    # -i s (hx sx + hy sy + hz sz)
    return np.array(
        [[c - 1j * s * hz, -1j * s * (hx - 1j * hy)],
         [-1j * s * (hx + 1j * hy), c + 1j * s * hz]],
        dtype=complex,
    )


def step_unitary(rho: DensityMatrix, p: BathParameters, dt: float, w) -> DensityMatrix:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    u = propagator(hamiltonian(p, field_sample(p, dt, w)), dt)
    m = u @ rho.matrix() @ u.conj().T
    pp = m[0, 0].real
    return DensityMatrix(pp, 1.0 - pp, complex(m[0, 1]))


def rotate_bloch(x, y, z, p: BathParameters, dt: float, dw1, dw2):
    """Vectorized unitary step acting on Bloch components.

    The step propagator is a rotation of the Bloch vector about
    k = (-g dw1, g dw2, omega dt) by the angle |k| (Rodrigues' formula);
    this is the adjoint action of the exact 2x2 propagator.
    """
    kx = -p.g * dw1
    ky = p.g * dw2
    kz = p.omega * dt
    a = np.sqrt(kx * kx + ky * ky + kz * kz)
    inv = 1.0 / np.where(a > 0, a, 1.0)
    s2 = np.sin(0.5 * a)
    c2 = np.cos(0.5 * a)
    # sin(a)/a and (1 - cos a)/a^2, finite as a -> 0
    sinc = np.where(a > 0, 2.0 * s2 * c2 * inv, 1.0)
    c1 = np.where(a > 0, 2.0 * (s2 * inv) ** 2, 0.5)
    cosa = 1.0 - 2.0 * s2 * s2
    dot = (kx * x + ky * y + kz * z) * c1
    return (
        x * cosa + (ky * z - kz * y) * sinc + kx * dot,
        y * cosa + (kz * x - kx * z) * sinc + ky * dot,
        z * cosa + (kx * y - ky * x) * sinc + kz * dot,
    )


def bloch_to_angles(x, y, z):
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    r = np.hypot(x, y)
    phi = wrap_phase(np.arctan2(-y, x))
    phi = np.where(r > 0, phi, 0.0)
    return theta, phi, r


def angles_to_bloch(theta, phi, r):
    return r * np.cos(phi), -r * np.sin(phi), np.cos(theta)


# -- angle schemes -----------------------------------------------------------

def _check_poles(sin_theta, r=None):
    bad = np.abs(sin_theta) <= EPS_POLE
    if r is not None:
        bad = bad | (np.abs(r) <= EPS_POLE)
    return bad


def _full_diffusion(theta, r, phi, g):
    """Noise coefficients of (theta, r, phi) for (dw1, dw2)."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    a1, a2 = -sp, cp
    kt = g * r / st
    kr = g * ct
    kp = -g * ct / r
    return (kt * a1, kt * a2), (kr * a1, kr * a2), (kp * cp, kp * sp)


def _full_increment(theta, r, phi, p, dw1, dw2):
    bt, br, bp = _full_diffusion(theta, r, phi, p.g)
    return (bt[0] * dw1 + bt[1] * dw2, br[0] * dw1 + br[1] * dw2, bp[0] * dw1 + bp[1] * dw2)


def step_full(s, p: BathParameters, dt: float, w, interpretation: str = "stratonovich"):
    """One step of the three-variable angle system for s = (theta, r, phi).

    ``ito`` is Euler-Maruyama; ``stratonovich`` is the Heun predictor-corrector
    on the same coefficients.  Works elementwise on arrays.
    """
    theta, r, phi = (np.asarray(v, dtype=float) for v in s)
    dw1, dw2 = (np.asarray(v, dtype=float) for v in w)
    if np.any(_check_poles(np.sin(theta), r)):
        raise PoleProximity("step_full: sin(theta) or r within the pole guard")
    dt_, dr, dp = _full_increment(theta, r, phi, p, dw1, dw2)
    drift = -p.omega * dt
    if interpretation == "ito":
        out = (theta + dt_, r + dr, phi + drift + dp)
    elif interpretation == "stratonovich":
        tp, rp, pp = theta + dt_, r + dr, phi + drift + dp
        if np.any(_check_poles(np.sin(tp), rp)):
            raise PoleProximity("step_full: Heun predictor entered the pole guard")
        dt2, dr2, dp2 = _full_increment(tp, rp, pp, p, dw1, dw2)
        out = (theta + 0.5 * (dt_ + dt2), r + 0.5 * (dr + dr2), phi + drift + 0.5 * (dp + dp2))
    else:
        raise ValueError(f"interpretation must be 'ito' or 'stratonovich', got {interpretation!r}")
    return _scalarize((out[0], out[1], wrap_phase(out[2])))


def step_reduced_ito(theta, phi, p: BathParameters, dt: float, w):
    """Euler-Maruyama step of the pure-state (theta, phi) system."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    dw1, dw2 = (np.asarray(v, dtype=float) for v in w)
    st = np.sin(theta)
    if np.any(_check_poles(st)):
        raise PoleProximity("step_reduced_ito: theta within the pole guard")
    sp, cp = np.sin(phi), np.cos(phi)
    g = p.g
    new_theta = theta + g * (cp * dw2 - sp * dw1)
    new_phi = phi - p.omega * dt - g * (np.cos(theta) / st) * (sp * dw2 + cp * dw1)
    return _scalarize((new_theta, wrap_phase(new_phi)))


def reflect_theta(theta):
    """Fold theta back into [0, pi] (zero-flux walls at the poles)."""
    t = np.mod(theta, TWO_PI)
    return np.where(t > math.pi, TWO_PI - t, t)


def _scalarize(values):
    if all(np.ndim(v) == 0 for v in values):
        return tuple(float(v) for v in values)
    return values


# -- ensembles ---------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    dt: float
    n_steps: int
    seed: int = 0
    scheme: str = "unitary"
    stride: int = 1
    pole_policy: str = "auto"
    block_size: int = 4096

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.pole_policy not in POLE_POLICIES:
            raise ValueError(f"pole_policy must be one of {POLE_POLICIES}, got {self.pole_policy!r}")
        if self.n_traj < 1 or self.n_steps < 0 or self.stride < 1 or self.block_size < 1:
            raise ValueError("n_traj, stride and block_size must be >= 1 and n_steps >= 0")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")

    @property
    def resolved_pole_policy(self) -> str:
        if self.pole_policy != "auto":
            return self.pole_policy
        return "reflect" if self.scheme == "reduced-ito" else "flag"

    def snapshot_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.stride)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps


@dataclass
class TrajectoryEnsemble:
    config: EnsembleConfig
    params: BathParameters
    steps: np.ndarray
    theta: np.ndarray   # (n_traj, n_snap)
    phi: np.ndarray
    r: np.ndarray
    flagged: np.ndarray  # (n_traj,) bool
    flag_step: np.ndarray  # (n_traj,) int, -1 when never flagged
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.config.dt

    @property
    def n_traj(self) -> int:
        return self.theta.shape[0]

    def alpha(self) -> np.ndarray:
        return np.sqrt(np.cos(self.theta) ** 2 + self.r ** 2)

    def snapshot_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 0.5 * self.config.dt + 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t!r}")
        return k

    def valid(self, t: float | None = None) -> np.ndarray:
        """Trajectories usable at time t (not flagged at or before it)."""
        if t is None:
            return ~self.flagged
        k = self.snapshot_index(t)
        return ~self.flagged | (self.flag_step > self.steps[k])

    def at(self, t: float):
        """(theta, phi, r) of the usable trajectories at time t."""
        k = self.snapshot_index(t)
        ok = self.valid(t)
        return self.theta[ok, k], self.phi[ok, k], self.r[ok, k]


def initial_arrays(initial, n_traj: int):
    """Broadcast an initial state, or validate per-trajectory arrays."""
    if isinstance(initial, DensityMatrix):
        initial = to_angles(initial)
    if isinstance(initial, AngleState):
        return (np.full(n_traj, initial.theta), np.full(n_traj, initial.phi), np.full(n_traj, initial.r))
    theta, phi, r = (np.asarray(v, dtype=float) for v in initial)
    if not (theta.shape == phi.shape == r.shape == (n_traj,)):
        raise ValueError("initial arrays must each have shape (n_traj,)")
    return theta, phi, r


def uniform_initial(n_traj: int, seed: int, alpha: float = 1.0, theta_range=None):
    """Initial angles uniform in (theta, phi) over the strip allowed by alpha."""
    lo, hi = theta_range if theta_range is not None else (math.acos(alpha), math.pi - math.acos(alpha))
    u = noise.uniforms(seed, noise.stream_id(0, noise.INITIAL), 2 * n_traj).reshape(2, n_traj)
    theta = lo + (hi - lo) * u[0]
    phi = TWO_PI * u[1]
    r = np.sqrt(np.clip(alpha * alpha - np.cos(theta) ** 2, 0.0, None))
    return theta, phi, r


def _advance(scheme, state, p, dt, dw1, dw2):
    """One vectorized step; returns (new_state, pole_mask_of_old_state)."""
    if scheme == "unitary":
        return rotate_bloch(*state, p, dt, dw1, dw2), None
    if scheme == "reduced-ito":
        theta, phi = state
        st = np.sin(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        g = p.g
        new = (theta + g * (cp * dw2 - sp * dw1),
               phi - p.omega * dt - g * (np.cos(theta) / st) * (sp * dw2 + cp * dw1))
        return new, _check_poles(st)
    theta, r, phi = state
    bad = _check_poles(np.sin(theta), r) | ~np.isfinite(theta)
    dth, dr, dph = _full_increment(theta, r, phi, p, dw1, dw2)
    drift = -p.omega * dt
    if scheme == "full-ito":
        return (theta + dth, r + dr, phi + drift + dph), bad
    tp, rp, pp = theta + dth, r + dr, phi + drift + dph
    bad |= _check_poles(np.sin(tp), rp)
    dth2, dr2, dph2 = _full_increment(tp, rp, pp, p, dw1, dw2)
    return (theta + 0.5 * (dth + dth2), r + 0.5 * (dr + dr2), phi + drift + 0.5 * (dph + dph2)), bad


def _to_state(scheme, theta, phi, r):
    if scheme == "unitary":
        return angles_to_bloch(theta, phi, r)
    if scheme == "reduced-ito":
        return theta.copy(), phi.copy()
    return theta.copy(), r.copy(), phi.copy()


def _from_state(scheme, state):
    if scheme == "unitary":
        return bloch_to_angles(*state)
    if scheme == "reduced-ito":
        theta, phi = state
        return theta, wrap_phase(phi), np.sin(theta)
    theta, r, phi = state
    return theta, wrap_phase(phi), r


def _run_block(task):
    cfg, p, traj_ids, theta0, phi0, r0 = task
    scheme = cfg.scheme
    policy = cfg.resolved_pole_policy
    snap_steps = cfg.snapshot_steps()
    n = len(traj_ids)
    out = np.empty((3, n, len(snap_steps)))
    flagged = np.zeros(n, dtype=bool)
    flag_step = np.full(n, -1, dtype=np.int64)
    state = _to_state(scheme, theta0, phi0, r0)
    streams = [noise.stream_id(int(k)) for k in traj_ids]
    sqdt = math.sqrt(cfg.dt)
    snap = 0
    if snap_steps[0] == 0:
        out[:, :, 0] = (theta0, wrap_phase(phi0), r0)
        snap = 1
    step = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for normals in noise.block_normals(cfg.seed, streams, cfg.n_steps):
            normals *= sqdt
            for dw in normals:
                new, bad = _advance(scheme, state, p, cfg.dt, dw[0], dw[1])
                if bad is not None:
                    if scheme != "reduced-ito":
                        bad |= ~np.isfinite(new[0]) | ~np.isfinite(new[1])
                    bad &= ~flagged
                    if bad.any():
                        if policy == "raise":
                            k = int(traj_ids[np.argmax(bad)])
                            raise PoleProximity(f"trajectory {k} entered the pole guard at step {step}")
                        flagged |= bad
                        flag_step[bad] = step
                    if scheme == "reduced-ito" and policy == "reflect":
                        new = (reflect_theta(new[0]), new[1])
                    if flagged.any():
                        new = tuple(np.where(flagged, old, nv) for old, nv in zip(state, new))
                    new = new[:-1] + (np.mod(new[-1], TWO_PI),)
                state = new
                step += 1
                if snap < len(snap_steps) and step == snap_steps[snap]:
                    out[:, :, snap] = _from_state(scheme, state)
                    snap += 1
    return out, flagged, flag_step


def run_ensemble(initial, p: BathParameters, cfg: EnsembleConfig, workers: int = 1) -> TrajectoryEnsemble:
    """Integrate cfg.n_traj trajectories from a common or per-trajectory start."""
    theta0, phi0, r0 = initial_arrays(initial, cfg.n_traj)
    ids = np.arange(cfg.n_traj)
    bounds = list(range(0, cfg.n_traj, cfg.block_size)) + [cfg.n_traj]
    tasks = [
        (cfg, p, ids[a:b], theta0[a:b], phi0[a:b], r0[a:b])
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(t) for t in tasks]
    out = np.concatenate([res[0] for res in results], axis=1)
    return TrajectoryEnsemble(
        config=cfg,
        params=p,
        steps=cfg.snapshot_steps(),
        theta=out[0],
        phi=out[1],
        r=out[2],
        flagged=np.concatenate([res[1] for res in results]),
        flag_step=np.concatenate([res[2] for res in results]),
    )


# -- snapshot files ------------------------------------------------------------

def header_lines(ens: TrajectoryEnsemble, extra: dict | None = None) -> list[str]:
    from . import __version__
    items = {"artifact": "stochqubit", "version": __version__}
    items.update(asdict(ens.config))
    items.update(asdict(ens.params))
    if extra:
        items.update(extra)
    lines = [" ".join(f"{k}={v}" for k, v in items.items())]
    flagged = np.flatnonzero(ens.flagged)
    if flagged.size:
        lines.append("flagged=" + ",".join(f"{k}@{ens.flag_step[k]}" for k in flagged))
    lines.append("columns: traj_id step t theta phi r alpha")
    return lines


def write_snapshots(ens: TrajectoryEnsemble, fh, extra: dict | None = None) -> None:
    """Newline-delimited snapshot records, trajectories in index order."""
    for line in header_lines(ens, extra):
        fh.write(f"# {line}\n")
    n_traj, n_snap = ens.theta.shape
    traj = np.repeat(np.arange(n_traj), n_snap)
    steps = np.tile(ens.steps, n_traj)
    keep = ~ens.flagged[traj] | (steps < ens.flag_step[traj])
    cols = np.column_stack([
        traj, steps, steps * ens.config.dt,
        ens.theta.ravel(), ens.phi.ravel(), ens.r.ravel(), ens.alpha().ravel(),
    ])[keep]
    np.savetxt(fh, cols, fmt=["%d", "%d"] + ["%.16e"] * 5)


def read_snapshots(path):
    """Parse a snapshot file into (header dict, records array)."""
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for token in line[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    header[k] = v
    data = np.loadtxt(path, comments="#", ndmin=2)
    return header, data
