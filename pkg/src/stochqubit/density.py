"""Single two-level density matrices, their angle chart and entropy.

A state is stored through its independent entries (rho_pp, rho_mm, rho_pm);
rho_mp is the conjugate of rho_pm.  The angle chart is

    rho_pp = (1 + cos theta) / 2,  rho_mm = (1 - cos theta) / 2,
    rho_pm = (r / 2) exp(i phi),

and the mixing parameter alpha = sqrt(cos^2 theta + r^2) is invariant under
unitary evolution.  Entropies are in nats.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import xlogy

from .errors import InvalidState

TRACE_TOL = 1e-12
PSD_TOL = 1e-12
ALPHA_TOL = 1e-12

TWO_PI = 2.0 * math.pi

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class DensityMatrix:
    rho_pp: float
    rho_mm: float
    rho_pm: complex

    def __post_init__(self):
        trace = self.rho_pp + self.rho_mm
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidState(f"trace {trace!r} differs from 1")
        if not (-PSD_TOL <= self.rho_pp <= 1 + PSD_TOL and -PSD_TOL <= self.rho_mm <= 1 + PSD_TOL):
            raise InvalidState("diagonal entries must lie in [0, 1]")
        if self.det() < -PSD_TOL:
            raise InvalidState(f"determinant {self.det()!r} is negative")

    def det(self) -> float:
        return self.rho_pp * self.rho_mm - abs(self.rho_pm) ** 2

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.rho_pp, self.rho_pm], [np.conj(self.rho_pm), self.rho_mm]],
            dtype=complex,
        )

    @classmethod
    def from_matrix(cls, a) -> "DensityMatrix":
        a = np.asarray(a, dtype=complex)
        if a.shape != (2, 2):
            raise InvalidState(f"expected a 2x2 matrix, got shape {a.shape}")
        if abs(a[0, 1] - np.conj(a[1, 0])) > 1e-10 or abs(a[0, 0].imag) > 1e-10 or abs(a[1, 1].imag) > 1e-10:
            raise InvalidState("matrix is not Hermitian")
        return cls(float(a[0, 0].real), float(a[1, 1].real), complex(a[0, 1]))

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "DensityMatrix":
        """rho = (I + x sx + y sy + z sz) / 2."""
        return cls(0.5 * (1.0 + z), 0.5 * (1.0 - z), complex(0.5 * x, -0.5 * y))

    def bloch(self) -> tuple[float, float, float]:
        return (2.0 * self.rho_pm.real, -2.0 * self.rho_pm.imag, self.rho_pp - self.rho_mm)


@dataclass(frozen=True)
class AngleState:
    theta: float
    phi: float
    r: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise InvalidState(f"theta={self.theta!r} outside [0, pi]")
        if not 0.0 <= self.phi < TWO_PI:
            raise InvalidState(f"phi={self.phi!r} outside [0, 2 pi)")
        if not 0.0 <= self.r <= 1.0 + ALPHA_TOL:
            raise InvalidState(f"r={self.r!r} outside [0, 1]")
        if math.cos(self.theta) ** 2 + self.r ** 2 > 1.0 + ALPHA_TOL:
            raise InvalidState("cos^2(theta) + r^2 exceeds 1")

    @property
    def alpha(self) -> float:
        return math.sqrt(math.cos(self.theta) ** 2 + self.r ** 2)

    @classmethod
    def pure(cls, theta: float, phi: float) -> "AngleState":
        return cls(theta, wrap_phase(phi), math.sin(theta))

    @classmethod
    def with_alpha(cls, theta: float, phi: float, alpha: float) -> "AngleState":
        """State on the level set alpha; needs |cos theta| <= alpha."""
        r2 = alpha * alpha - math.cos(theta) ** 2
        if r2 < -ALPHA_TOL:
            raise InvalidState(f"theta={theta!r} lies outside the strip allowed by alpha={alpha!r}")
        return cls(theta, wrap_phase(phi), math.sqrt(max(r2, 0.0)))


def wrap_phase(phi):
    """Map an angle (scalar or array) into [0, 2 pi)."""
    w = np.mod(phi, TWO_PI)
    w = np.where(w >= TWO_PI, 0.0, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def strip_edge(alpha: float) -> float:
    """Lower edge Theta0 of the allowed theta strip, cos Theta0 = alpha."""
    return math.acos(min(max(alpha, 0.0), 1.0))


def from_angles(s: AngleState) -> DensityMatrix:
    c = math.cos(s.theta)
    return DensityMatrix(0.5 * (1.0 + c), 0.5 * (1.0 - c), 0.5 * s.r * complex(math.cos(s.phi), math.sin(s.phi)))


def to_angles(rho: DensityMatrix) -> AngleState:
    """Inverse chart.  phi is set to 0 when the off-diagonal entry vanishes."""
    if abs(rho.rho_pm) > 0.5 + PSD_TOL:
        raise InvalidState(f"|rho_pm|={abs(rho.rho_pm)!r} exceeds 1/2")
    z = min(max(rho.rho_pp - rho.rho_mm, -1.0), 1.0)
    r = min(2.0 * abs(rho.rho_pm), 1.0)
    phi = wrap_phase(math.atan2(rho.rho_pm.imag, rho.rho_pm.real)) if r > 0.0 else 0.0
    return AngleState(math.acos(z), phi, r)


def mixing_alpha(state) -> float:
    """alpha for an AngleState or a DensityMatrix."""
    if isinstance(state, AngleState):
        return state.alpha
    if isinstance(state, DensityMatrix):
        z = state.rho_pp - state.rho_mm
        return math.sqrt(min(z * z + 4.0 * abs(state.rho_pm) ** 2, 1.0))
    raise TypeError(f"expected AngleState or DensityMatrix, got {type(state).__name__}")


def purity(rho: DensityMatrix) -> float:
    m = rho.matrix()
    return float(np.trace(m @ m).real)


def entropy(alpha: float) -> float:
    """von Neumann entropy of any state with mixing parameter alpha."""
    a = min(max(float(alpha), 0.0), 1.0)
    return 0.5 * (2.0 * math.log(2.0) - xlogy(1.0 + a, 1.0 + a) - xlogy(1.0 - a, 1.0 - a))


def von_neumann_entropy(m) -> float:
    """-tr(m ln m) by Hermitian eigen-decomposition; any dimension."""
    p = np.linalg.eigvalsh(np.asarray(m, dtype=complex))
    p = np.clip(p, 0.0, None)
    return float(-np.sum(xlogy(p, p)))


def spin_z_expectation(rho: DensityMatrix) -> float:
    return float(np.trace(rho.matrix() @ SIGMA_Z).real)
