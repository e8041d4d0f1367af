"""Closed-form relaxation spectrum of the drift-free Fokker-Planck operator.

Separating Q = S(theta) exp(i m phi) and writing S = y(cos theta) sin^(1/2)
gives a Legendre-type equation of degree nu = sqrt(Lambda + m^2)/2 - 1/2
and order mu = sqrt(1 + m^2)/2.  Regular solutions need nu - mu to be a
nonnegative integer n - 1, which yields

    Lambda_nm = (2n - 1)^2 + 2 (2n - 1) sqrt(1 + m^2) + 1,   n >= 1,

plus the stationary value Lambda_00 = 0.  Rates are eta^2 Lambda / 4.
Eigenfunctions are taken from the grid eigensolver, not from special
functions.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .dynamics import BathParameters
from .errors import NoMatch
from .fpe_grid import MODES, eigen_spectrum_theta, rate_scale, theta_eigenpairs


@dataclass(frozen=True)
class Inadmissible:
    """Typed outcome for (n, m) pairs outside the admissible set."""

    n: int
    m: int
    reason: str


def eigenvalue(n: int, m: int) -> float | Inadmissible:
    if n < 0:
        return Inadmissible(n, m, "n must be >= 0")
    if n == 0:
        if m == 0:
            return 0.0
        return Inadmissible(n, m, "n = 0 is admissible only with m = 0")
    k = 2 * n - 1
    return k * k + 2 * k * math.sqrt(1 + m * m) + 1.0


def is_admissible(n: int, m: int) -> bool:
    return not isinstance(eigenvalue(n, m), Inadmissible)


@dataclass(frozen=True)
class LegendreReduction:
    nu: float
    mu: float

    @classmethod
    def from_eigenvalue(cls, lam: float, m: int) -> "LegendreReduction":
        return cls(0.5 * math.sqrt(lam + m * m) - 0.5, 0.5 * math.sqrt(1 + m * m))

    def degree_term(self) -> float:
        """nu (nu + 1), equal to (m^2 + Lambda - 1) / 4."""
        return self.nu * (self.nu + 1)

    def order_term(self) -> float:
        """mu^2, equal to (1 + m^2) / 4."""
        return self.mu ** 2

    def termination_index(self) -> float:
        return self.nu - self.mu


def quantization_check(lam: float, m: int, tol: float = 1e-9) -> bool:
    """True iff (lam, m) satisfies the regularity condition at x = +-1."""
    if lam < 0:
        return False
    if m == 0 and abs(lam) <= tol:
        return True
    k = LegendreReduction.from_eigenvalue(lam, m).termination_index()
    return k > -tol and abs(k - round(k)) <= tol


def relaxation_rate(mode, eta: float) -> float:
    """eta^2 Lambda / 4 for a SpectralMode or a bare Lambda."""
    lam = mode.lambda_cap if isinstance(mode, SpectralMode) else float(mode)
    return eta * eta * lam / 4.0


@dataclass
class SpectralMode:
    n: int
    m: int
    lambda_cap: float
    rate: float
    theta: np.ndarray | None = None
    eigenfunction: np.ndarray | None = None


def _sector_index(n: int, m: int) -> int:
    return n if m == 0 else n - 1


def eigenfunction(n: int, m: int, theta_grid, n_theta: int = 400) -> np.ndarray:
    """S(theta) of mode (n, m) sampled on theta_grid, normalized to max |S| = 1.

    The grid eigenvector is selected by matching its eigenvalue to the
    closed form within the grid's own error estimate.
    """
    lam = eigenvalue(n, m)
    if isinstance(lam, Inadmissible):
        raise ValueError(f"({n}, {m}) is not admissible: {lam.reason}")
    idx = _sector_index(n, m)
    est = eigen_spectrum_theta("paper_fp", m, idx + 2, n_theta=n_theta // 4, levels=3)
    fine = est.raw[-1]
    tol = 2.0 * est.error
    hits = np.flatnonzero(np.abs(fine - lam) <= tol)
    if hits.size == 0:
        raise NoMatch(f"no grid eigenvalue within {tol[idx]:.3g} of Lambda={lam:.12g} for m={m}")
    which = int(hits[np.argmin(np.abs(fine[hits] - lam))])
    _, vecs, centres = theta_eigenpairs("paper_fp", m, which + 1, est.resolutions[-1])
    s_exp = 0.0 if m == 0 else 0.5 * (1.0 + math.sqrt(1.0 + m * m))
    sin_c = np.sin(centres) ** s_exp
    u = vecs[:, which] / sin_c
    theta_grid = np.asarray(theta_grid, dtype=float)
    s = np.interp(theta_grid, centres, u) * np.abs(np.sin(theta_grid)) ** s_exp
    if u[0] < 0:
        s = -s
    peak = np.abs(s).max()
    return s / peak if peak > 0 else s


def node_count(values, rel_tol: float = 1e-8) -> int:
    """Interior sign changes, ignoring samples below rel_tol * max."""
    v = np.asarray(values, dtype=float)
    v = v[np.abs(v) > rel_tol * np.abs(v).max()]
    return int(np.count_nonzero(np.diff(np.sign(v)) != 0))


def spectral_mode(n: int, m: int, eta: float, theta_grid=None) -> SpectralMode:
    lam = eigenvalue(n, m)
    if isinstance(lam, Inadmissible):
        raise ValueError(f"({n}, {m}) is not admissible: {lam.reason}")
    s = None if theta_grid is None else eigenfunction(n, m, theta_grid)
    return SpectralMode(n, m, lam, relaxation_rate(lam, eta), None if theta_grid is None else np.asarray(theta_grid), s)


@dataclass
class SpectrumRow:
    mode: str
    n: int
    m: int
    closed_form: float
    grid: float
    rel_err: float
    rate: float
    order: float


def spectrum_table(n_max: int, m_max: int, params: BathParameters, modes=MODES,
                   n_theta: int = 100, levels: int = 3) -> list[SpectrumRow]:
    """Closed-form vs grid eigenvalues for n <= n_max, 0 <= m <= m_max."""
    rows = []
    for mode in modes:
        kappa = rate_scale(mode, params)
        for m in range(m_max + 1):
            ns = [n for n in range(n_max + 1) if is_admissible(n, m)]
            if not ns:
                continue
            est = eigen_spectrum_theta(mode, m, _sector_index(max(ns), m) + 1, n_theta, levels)
            for n in ns:
                i = _sector_index(n, m)
                grid = float(est.values[i])
                if mode == "paper_fp":
                    cf = float(eigenvalue(n, m))
                    rel = abs(grid - cf) / cf if cf != 0 else abs(grid - cf)
                else:
                    cf = rel = math.nan
                rows.append(SpectrumRow(mode, n, m, cf, grid, rel, kappa * grid, float(est.order[i])))
    return rows


def write_spectrum(rows, fh, params: BathParameters, extra: dict | None = None) -> None:
    from . import __version__
    items = {"artifact": "stochqubit", "version": __version__,
             "omega": params.omega, "eta": params.eta, "e0": params.e0}
    if extra:
        items.update(extra)
    fh.write("# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n")
    fh.write("# columns: mode n m Lambda_closed_form Lambda_grid rel_err rate\n")
    for r in rows:
        zero_closed = r.closed_form == 0.0
        fh.write(f"{r.mode} {r.n:d} {r.m:d} {_fixed(r.closed_form)} {_fixed(0.0 if zero_closed and abs(r.grid) < 1e-8 else r.grid)} "
                 f"{_fixed(r.rel_err)} {_fixed(r.rate)}\n")


def _fixed(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.12f}"
