"""Finite-volume Fokker-Planck solver on the (theta, phi) cylinder.

Both operators share the form

    L P = d_theta dth^2 P + (d_phi / tan^2 th) dph^2 P + c dph P

with constant coefficients per mode:

    paper_fp        d_theta = eta^2      d_phi = eta^2 / 4    c = omega / 2
    sde_consistent  d_theta = g^2 / 2    d_phi = g^2 / 2      c = omega

``sde_consistent`` is the forward generator of the reduced Ito equations,
``paper_fp`` the operator with the printed coefficients (noise strength
absorbed in eta).  The grid is cell centred, zero-flux in theta and periodic
in phi.  Since no coefficient depends on phi, the drift commutes with the
diffusion; ``evolve`` integrates the diffusion and applies the drift as a
rigid phi shift at output time.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import fft
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .density import TWO_PI
from .dynamics import BathParameters
from .errors import NonConvergence, StabilityViolation

MODES = ("paper_fp", "sde_consistent")

# Test hook: -1 reverses the drift in every solver path (fault injection).
_DRIFT_SIGN = 1.0


@dataclass(frozen=True)
class Coefficients:
    d_theta: float
    d_phi: float
    drift: float
    # dimensionless form kappa * (4 dth^2 - phi_weight * m^2 cot^2)
    kappa: float
    phi_weight: float


def coefficients(mode: str, p: BathParameters) -> Coefficients:
    if mode == "paper_fp":
        e2 = p.eta ** 2
        return Coefficients(e2, e2 / 4.0, _DRIFT_SIGN * p.omega / 2.0, e2 / 4.0, 1.0)
    if mode == "sde_consistent":
        g2 = p.g ** 2
        return Coefficients(g2 / 2.0, g2 / 2.0, _DRIFT_SIGN * p.omega, g2 / 8.0, 4.0)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def rate_scale(mode: str, p: BathParameters) -> float:
    """Factor turning a dimensionless eigenvalue into a decay rate."""
    return coefficients(mode, p).kappa


@dataclass
class GridField:
    """Probability density on cell centres, shape (n_theta, n_phi)."""

    values: np.ndarray
    theta_min: float = 0.0
    theta_max: float = math.pi

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-D (n_theta, n_phi)")
        if not 0.0 <= self.theta_min < self.theta_max <= math.pi:
            raise ValueError("need 0 <= theta_min < theta_max <= pi")

    @property
    def n_theta(self) -> int:
        return self.values.shape[0]

    @property
    def n_phi(self) -> int:
        return self.values.shape[1]

    @property
    def d_theta(self) -> float:
        return (self.theta_max - self.theta_min) / self.n_theta

    @property
    def d_phi(self) -> float:
        return TWO_PI / self.n_phi

    @property
    def theta(self) -> np.ndarray:
        return self.theta_min + (np.arange(self.n_theta) + 0.5) * self.d_theta

    @property
    def phi(self) -> np.ndarray:
        return (np.arange(self.n_phi) + 0.5) * self.d_phi

    @property
    def cell_area(self) -> float:
        return self.d_theta * self.d_phi

    def masses(self) -> np.ndarray:
        return self.values * self.cell_area

    def total(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def normalized(self) -> "GridField":
        return self.like(self.values / self.total())

    def like(self, values) -> "GridField":
        return GridField(values, self.theta_min, self.theta_max)

    def l1_distance(self, other: "GridField") -> float:
        return float(np.abs(self.values - other.values).sum() * self.cell_area)

    def theta_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.d_phi

    def phi_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.d_theta

    def mean(self, f) -> float:
        """Expectation of f(theta, phi) under the field."""
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return float((f(th, ph) * self.values).sum() * self.cell_area)

    def coarsen(self, f_theta: int, f_phi: int) -> "GridField":
        """Sum masses into blocks of f_theta x f_phi cells."""
        nt, nph = self.n_theta // f_theta, self.n_phi // f_phi
        if nt * f_theta != self.n_theta or nph * f_phi != self.n_phi:
            raise ValueError("coarsening factors must divide the grid")
        v = self.values.reshape(nt, f_theta, nph, f_phi).mean(axis=(1, 3))
        return self.like(v)

    @classmethod
    def uniform(cls, n_theta=64, n_phi=64, theta_min=0.0, theta_max=math.pi) -> "GridField":
        v = np.full((n_theta, n_phi), 1.0 / ((theta_max - theta_min) * TWO_PI))
        return cls(v, theta_min, theta_max)

    @classmethod
    def point_mass(cls, theta0, phi0, n_theta=64, n_phi=64, theta_min=0.0, theta_max=math.pi) -> "GridField":
        """Unit mass in the cell containing (theta0, phi0)."""
        f = cls.uniform(n_theta, n_phi, theta_min, theta_max)
        i = min(int((theta0 - theta_min) / f.d_theta), n_theta - 1)
        j = int((phi0 % TWO_PI) / f.d_phi) % n_phi
        v = np.zeros((n_theta, n_phi))
        v[i, j] = 1.0 / f.cell_area
        return f.like(v)

    @classmethod
    def from_function(cls, func, n_theta=64, n_phi=64, theta_min=0.0, theta_max=math.pi) -> "GridField":
        f = cls.uniform(n_theta, n_phi, theta_min, theta_max)
        th, ph = np.meshgrid(f.theta, f.phi, indexing="ij")
        return f.like(np.asarray(func(th, ph), dtype=float) * np.ones_like(th)).normalized()


def _phi_diffusivity(field: GridField, c: Coefficients) -> np.ndarray:
    return c.d_phi / np.tan(field.theta) ** 2


def _theta_flux(v, d_theta, h):
    f = np.zeros((v.shape[0] + 1, v.shape[1]))
    f[1:-1] = d_theta * np.diff(v, axis=0) / h
    return f


def probability_current(field: GridField, mode: str, p: BathParameters):
    """Currents on cell faces; dP/dt = d_theta J_theta + d_phi J_phi.

    J_theta has shape (n_theta + 1, n_phi) with zero rows at the walls.
    J_phi[:, j] sits on the face between phi cells j and j + 1 (periodic).
    """
    c = coefficients(mode, p)
    v = field.values
    j_theta = _theta_flux(v, c.d_theta, field.d_theta)
    right = np.roll(v, -1, axis=1)
    dphi = _phi_diffusivity(field, c)[:, None]
    j_phi = dphi * (right - v) / field.d_phi + c.drift * 0.5 * (v + right)
    return j_theta, j_phi


def apply_operator(field: GridField, mode: str, p: BathParameters) -> GridField:
    """Discrete L P in flux form (central drift)."""
    j_theta, j_phi = probability_current(field, mode, p)
    div = np.diff(j_theta, axis=0) / field.d_theta + (j_phi - np.roll(j_phi, 1, axis=1)) / field.d_phi
    return field.like(div)


def stable_dt(field: GridField, mode: str, p: BathParameters, scheme: str = "split") -> float:
    """Largest forward-Euler step that keeps the scheme positive."""
    c = coefficients(mode, p)
    rate = 2.0 * c.d_theta / field.d_theta ** 2
    if scheme == "explicit":
        rate += 2.0 * float(_phi_diffusivity(field, c).max()) / field.d_phi ** 2
    elif scheme != "split":
        raise ValueError(f"scheme must be 'split' or 'explicit', got {scheme!r}")
    return math.inf if rate == 0 else 1.0 / rate


def _phi_symbol(field: GridField) -> np.ndarray:
    k = np.arange(field.n_phi // 2 + 1)
    return (4.0 / field.d_phi ** 2) * np.sin(math.pi * k / field.n_phi) ** 2


def _phi_propagator(field: GridField, c: Coefficients, tau: float) -> np.ndarray:
    """rfft multipliers of exp(tau * D_phi(theta) * discrete d_phi^2), per theta row."""
    return np.exp(-tau * _phi_diffusivity(field, c)[:, None] * _phi_symbol(field)[None, :])


def _theta_step(v, c: Coefficients, h, dt):
    f = _theta_flux(v, c.d_theta, h)
    return v + dt * np.diff(f, axis=0) / h


def shift_phi(field: GridField, distance: float) -> GridField:
    """Translate the field by -distance in phi: P(phi) <- P(phi + distance).

    Linear interpolation between neighbouring cells; conserves mass and
    positivity.
    """
    s = distance / field.d_phi
    k = math.floor(s)
    f = s - k
    v = field.values
    out = (1.0 - f) * np.roll(v, -k, axis=1) + f * np.roll(v, -(k + 1), axis=1)
    return field.like(out)


def evolve(p0: GridField, mode: str, params: BathParameters, t: float, dt: float | None = None,
           scheme: str = "split", frame: str = "lab") -> GridField:
    """Advance p0 by time t.

    ``split``: explicit flux-form theta step with the exact exponential of the
    phi diffusion (Strang ordering); only the theta diffusion limits dt.
    ``explicit``: forward Euler in both directions.
    ``frame="comoving"`` skips the final drift shift, returning the
    drift-free density on phi + c t.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    c = coefficients(mode, params)
    bound = stable_dt(p0, mode, params, scheme)
    if dt is None:
        dt = 0.9 * bound if math.isfinite(bound) else max(t, 1.0)
    elif dt > bound * (1 + 1e-12):
        raise StabilityViolation(f"dt={dt!r} exceeds the stable bound {bound!r} for scheme {scheme!r}")
    v = p0.values.copy()
    n = int(math.ceil(t / dt - 1e-9)) if t > 0 else 0
    has_diffusion = c.d_theta > 0 or c.d_phi > 0
    if n and has_diffusion:
        h = p0.d_theta
        step = t / n
        if scheme == "split":
            half = _phi_propagator(p0, c, 0.5 * step)
            full = half * half
            v = fft.irfft(fft.rfft(v, axis=1) * half, n=p0.n_phi, axis=1)
            for i in range(n):
                v = _theta_step(v, c, h, step)
                v = fft.irfft(fft.rfft(v, axis=1) * (full if i < n - 1 else half), n=p0.n_phi, axis=1)
        else:
            for _ in range(n):
                v = v + step * apply_operator(p0.like(v), mode, _diffusion_only(params, mode)).values
    out = p0.like(v)
    if frame == "lab":
        out = shift_phi(out, c.drift * t)
    elif frame != "comoving":
        raise ValueError(f"frame must be 'lab' or 'comoving', got {frame!r}")
    return out


def _diffusion_only(p: BathParameters, mode: str) -> BathParameters:
    return BathParameters(omega=0.0, eta=p.eta, e0=p.e0)


def _exact_theta_propagator(field: GridField, c: Coefficients, tau: float) -> np.ndarray:
    k = np.arange(field.n_theta)
    lam = (4.0 / field.d_theta ** 2) * np.sin(math.pi * k / (2 * field.n_theta)) ** 2
    return np.exp(-tau * c.d_theta * lam)[:, None]


def stationary(mode: str, params: BathParameters, n_theta: int = 64, n_phi: int = 64,
               theta_min: float = 0.0, theta_max: float = math.pi, tol: float = 1e-12,
               max_iter: int = 10_000, start: GridField | None = None) -> GridField:
    """Stationary density by power iteration of a large-step propagator.

    Each iteration applies the exact theta-diffusion (cosine transform) and
    exact phi-diffusion (Fourier) propagators over a step equal to the
    inverse of the slowest theta rate; the drift shift commutes with both and
    is omitted.
    """
    c = coefficients(mode, params)
    if start is None:
        start = GridField.from_function(
            lambda th, ph: 1.0 + 0.5 * np.cos(th) + 0.3 * np.sin(th) * np.cos(ph) + 0.2 * np.cos(3 * th),
            n_theta, n_phi, theta_min, theta_max)
    if c.d_theta <= 0:
        raise NonConvergence("no theta diffusion: the stationary density is not unique")
    f = start.normalized()
    lam1 = c.d_theta * (4.0 / f.d_theta ** 2) * math.sin(math.pi / (2 * f.n_theta)) ** 2
    tau = 1.0 / lam1
    t_prop = _exact_theta_propagator(f, c, tau)
    p_prop = _phi_propagator(f, c, tau)
    v = f.values
    for _ in range(max_iter):
        w = fft.idct(fft.dct(v, type=2, axis=0, norm="ortho") * t_prop, type=2, axis=0, norm="ortho")
        w = fft.irfft(fft.rfft(w, axis=1) * p_prop, n=f.n_phi, axis=1)
        change = np.abs(w - v).sum() * f.cell_area
        v = w
        if change <= tol:
            return f.like(v).normalized()
    raise NonConvergence(f"power iteration did not reach L1 change {tol} in {max_iter} iterations")


# -- per-m eigenproblem ------------------------------------------------------------

def _pole_exponent(m: int, phi_weight: float) -> float:
    """Exponent s of the regular pole behaviour S ~ sin^s(theta) for m != 0."""
    if m == 0:
        return 0.0
    return 0.5 * (1.0 + math.sqrt(1.0 + phi_weight * m * m))


def _theta_problem(n_theta: int, m: int, phi_weight: float):
    """Symmetric tridiagonal form of -(4 S'' - w m^2 cot^2 S) = Lambda S.

    With S = sin^s(theta) u and 4 s (s - 1) = w m^2 the problem becomes
    -4 (q u')' + 4 s q u = Lambda q u with q = sin^(2s): smooth on the
    whole interval, so the cell-centred scheme keeps second order for every
    m.  Face weights vanish at the walls (zero flux).
    """
    h = math.pi / n_theta
    centres = (np.arange(n_theta) + 0.5) * h
    faces = np.arange(n_theta + 1) * h
    s = _pole_exponent(m, phi_weight)
    qf = np.abs(np.sin(faces)) ** (2 * s)
    qf[0] = qf[-1] = 0.0
    qc = np.sin(centres) ** (2 * s)
    diag = (4.0 * (qf[:-1] + qf[1:]) / h ** 2 + 4.0 * s * qc) / qc
    off = -4.0 * qf[1:-1] / h ** 2 / np.sqrt(qc[:-1] * qc[1:])
    return centres, diag, off, qc, s


def theta_eigenpairs(mode: str, m: int, k: int, n_theta: int):
    """k smallest eigenvalues and eigenfunctions S(theta) on cell centres."""
    w = coefficients(mode, BathParameters()).phi_weight
    centres, diag, off, qc, s = _theta_problem(n_theta, m, w)
    try:
        lam, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    except LinAlgError as exc:
        raise NonConvergence(f"tridiagonal eigensolver failed for m={m}: {exc}") from exc
    u = vec / np.sqrt(qc)[:, None]
    return lam, u * (np.sin(centres) ** s)[:, None], centres


def theta_eigenvalues(mode: str, m: int, k: int, n_theta: int) -> np.ndarray:
    w = coefficients(mode, BathParameters()).phi_weight
    _, diag, off, _, _ = _theta_problem(n_theta, m, w)
    try:
        return eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1), eigvals_only=True)
    except LinAlgError as exc:
        raise NonConvergence(f"tridiagonal eigensolver failed for m={m}: {exc}") from exc


@dataclass
class SpectrumEstimate:
    mode: str
    m: int
    resolutions: list
    raw: np.ndarray        # (levels, k)
    values: np.ndarray     # Richardson-extrapolated, (k,)
    error: np.ndarray      # estimated error of the extrapolated values
    order: np.ndarray      # observed order from the three finest levels; nan if unresolved


def eigen_spectrum_theta(mode: str, m: int, k: int, n_theta: int = 100, levels: int = 3) -> SpectrumEstimate:
    """k smallest dimensionless eigenvalues Lambda for azimuthal number m.

    The decay rate of a mode is ``rate_scale(mode, params) * Lambda``.
    Resolutions n_theta * 2**i, i < levels; Richardson extrapolation uses the
    two finest.
    """
    if k < 1 or levels < 2:
        raise ValueError("need k >= 1 and levels >= 2")
    res = [n_theta * 2 ** i for i in range(levels)]
    raw = np.array([theta_eigenvalues(mode, m, k, n) for n in res])
    fine, coarse = raw[-1], raw[-2]
    values = (4.0 * fine - coarse) / 3.0
    # round-off level of the finest matrix (its norm grows like 16 / h^2)
    floor = 100.0 * np.finfo(float).eps * 16.0 * (res[-1] / math.pi) ** 2
    error = np.abs(fine - coarse) / 3.0 + floor
    order = np.full(k, np.nan)
    if levels >= 3:
        d1 = raw[-3] - raw[-2]
        d2 = raw[-2] - raw[-1]
        ok = (np.abs(d2) > 10.0 * floor) & (d1 * d2 > 0)
        order[ok] = np.log2(d1[ok] / d2[ok])
    return SpectrumEstimate(mode, m, res, raw, values, error, order)


# -- field dumps -------------------------------------------------------------------

def write_field(field: GridField, fh, mode: str, params: BathParameters, extra: dict | None = None) -> None:
    from . import __version__
    items = {"artifact": "stochqubit", "version": __version__, "mode": mode,
             "omega": params.omega, "eta": params.eta, "e0": params.e0,
             "n_theta": field.n_theta, "n_phi": field.n_phi,
             "theta_min": repr(field.theta_min), "theta_max": repr(field.theta_max)}
    if extra:
        items.update(extra)
    fh.write("# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n")
    fh.write("# columns: theta phi value\n")
    th, ph = np.meshgrid(field.theta, field.phi, indexing="ij")
    np.savetxt(fh, np.column_stack([th.ravel(), ph.ravel(), field.values.ravel()]), fmt="%.16e")


def read_field(path) -> GridField:
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for token in line[1:].split():
                if "=" in token:
                    key, val = token.split("=", 1)
                    header[key] = val
    data = np.loadtxt(path, comments="#", ndmin=2)
    nt, nph = int(header["n_theta"]), int(header["n_phi"])
    return GridField(data[:, 2].reshape(nt, nph), float(header["theta_min"]), float(header["theta_max"]))
