"""Ensemble statistics: histograms, averaged density matrices, entropies, fits.

Every trajectory reduction uses ``np.mean``/``np.sum`` over arrays in index
order, so results do not depend on how the ensemble was partitioned.
Uncertainties of nonlinear functionals come from a delete-a-group jackknife
over contiguous trajectory blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import stats
from scipy.special import xlogy

from .density import DensityMatrix, entropy
from .dynamics import TrajectoryEnsemble, angles_to_bloch
from .errors import FitFailure, InsufficientSamples
from .fpe_grid import GridField

JACKKNIFE_GROUPS = 20


# -- histograms --------------------------------------------------------------

@dataclass
class EnsembleDistribution:
    """Normalized (theta, phi) histogram with per-bin multinomial errors."""

    histogram: GridField
    stderr: GridField
    counts: np.ndarray
    count: int
    time: float

    def masses(self) -> np.ndarray:
        return self.counts / self.count

    def aggregate_se(self) -> float:
        """Sum over bins of the multinomial standard error of the bin mass."""
        p = self.masses()
        return float(np.sum(np.sqrt(p * (1.0 - p) / self.count)))

    def l1_distance(self, field: GridField) -> float:
        """L1 distance of bin masses to a normalized field on the same or a finer grid."""
        f = _match_grid(field, self.histogram)
        return float(np.abs(self.masses() - f.normalized().masses()).sum())

    def chi2_uniform(self) -> tuple[float, float]:
        """Pearson chi-square statistic and p-value against equal bin masses."""
        res = stats.chisquare(self.counts.ravel())
        return float(res.statistic), float(res.pvalue)

    def occupied_bins(self) -> int:
        return int(np.count_nonzero(self.counts))


def _match_grid(field: GridField, target: GridField) -> GridField:
    if field.values.shape == target.values.shape:
        return field
    ft, rt = divmod(field.n_theta, target.n_theta)
    fp, rp = divmod(field.n_phi, target.n_phi)
    if rt or rp or ft < 1 or fp < 1:
        raise ValueError(f"cannot map a {field.values.shape} grid onto {target.values.shape}")
    return field.coarsen(ft, fp)


def histogram(theta, phi, n_theta: int = 64, n_phi: int = 64,
              theta_min: float = 0.0, theta_max: float = math.pi) -> np.ndarray:
    """Bin counts on the cell-centred grid used by the Fokker-Planck solver."""
    counts, _, _ = np.histogram2d(
        theta, np.mod(phi, 2.0 * math.pi), bins=(n_theta, n_phi),
        range=((theta_min, theta_max), (0.0, 2.0 * math.pi)))
    return counts


def estimate_distribution(ens: TrajectoryEnsemble, t: float, n_theta: int = 64, n_phi: int = 64,
                          min_samples: int = 1) -> EnsembleDistribution:
    theta, phi, _ = ens.at(t)
    n = theta.size
    if n < max(min_samples, 1):
        raise InsufficientSamples(f"{n} usable trajectories at t={t}, need {max(min_samples, 1)}")
    counts = histogram(theta, phi, n_theta, n_phi)
    grid = GridField.uniform(n_theta, n_phi)
    p = counts / n
    dens = grid.like(p / grid.cell_area)
    se = grid.like(np.sqrt(p * (1.0 - p) / n) / grid.cell_area)
    return EnsembleDistribution(dens, se, counts, n, float(ens.times[ens.snapshot_index(t)]))


# -- jackknife -----------------------------------------------------------------

def jackknife(features, fn, groups: int = JACKKNIFE_GROUPS):
    """Delete-a-group jackknife for a function of feature means.

    Parameters
    ----------
    features : array, shape (n, k)
        Per-trajectory feature vectors.
    fn : callable
        Maps a mean vector of length k to a scalar.
    groups : int
        Number of contiguous index blocks.

    Returns
    -------
    value, se, corrected
        fn of the full mean, jackknife standard error, and the
        bias-corrected estimate G*value - (G-1)*mean(leave-one-out).
    """
    x = np.asarray(features, dtype=float)
    n = x.shape[0]
    g = min(groups, n)
    if g < 2:
        raise InsufficientSamples(f"jackknife needs at least 2 samples, got {n}")
    edges = np.linspace(0, n, g + 1).astype(int)
    sums = np.stack([x[a:b].sum(axis=0) for a, b in zip(edges[:-1], edges[1:])])
    sizes = np.diff(edges)
    total = sums.sum(axis=0)
    value = fn(np.mean(x, axis=0))
    loo = np.array([fn((total - s) / (n - k)) for s, k in zip(sums, sizes)])
    se = math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2))
    corrected = g * value - (g - 1) * loo.mean()
    return float(value), float(se), float(corrected)


# -- density matrices ------------------------------------------------------------

def bloch_features(theta, phi, r) -> np.ndarray:
    """Per-trajectory Bloch vectors, rho = (I + x sx + y sy + z sz) / 2."""
    return np.column_stack(angles_to_bloch(theta, phi, r))


def mean_bloch(ens: TrajectoryEnsemble, t: float):
    """Mean Bloch vector and its per-component standard error."""
    b = bloch_features(*ens.at(t))
    if b.shape[0] == 0:
        raise InsufficientSamples(f"no usable trajectories at t={t}")
    se = b.std(axis=0, ddof=1) / math.sqrt(b.shape[0]) if b.shape[0] > 1 else np.full(3, np.inf)
    return np.mean(b, axis=0), se


def mean_density_matrix(ens: TrajectoryEnsemble, t: float) -> DensityMatrix:
    """Entrywise ensemble mean of the per-trajectory density matrices."""
    theta, phi, r = ens.at(t)
    if theta.size == 0:
        raise InsufficientSamples(f"no usable trajectories at t={t}")
    c = np.cos(theta)
    pp = float(np.mean(0.5 * (1.0 + c)))
    pm = complex(np.mean(0.5 * r * np.cos(phi)), np.mean(0.5 * r * np.sin(phi)))
    return DensityMatrix(pp, 1.0 - pp, pm)


def _annealed(mean_b) -> float:
    return entropy(min(float(np.linalg.norm(mean_b)), 1.0))


@dataclass(frozen=True)
class EntropyReport:
    s_quenched: float
    s_annealed: float
    alpha: float
    time: float
    se_annealed: float
    s_annealed_corrected: float
    n_samples: int

    def as_dict(self) -> dict:
        return asdict(self)


def entropy_report(ens: TrajectoryEnsemble, t: float, groups: int = JACKKNIFE_GROUPS) -> EntropyReport:
    """Quenched and annealed entropies at time t.

    ``s_quenched`` averages the per-trajectory entropy; ``s_annealed`` is the
    entropy of the averaged state, with a jackknife standard error and a
    bias-corrected value.
    """
    theta, phi, r = ens.at(t)
    if theta.size < 2:
        raise InsufficientSamples(f"{theta.size} usable trajectories at t={t}, need 2")
    alpha = np.sqrt(np.cos(theta) ** 2 + r ** 2)
    s_q = float(np.mean(entropies(alpha)))
    s_a, se, corr = jackknife(bloch_features(theta, phi, r), _annealed, groups)
    return EntropyReport(s_q, s_a, float(np.mean(alpha)), float(ens.times[ens.snapshot_index(t)]),
                         se, corr, int(theta.size))


def entropies(alpha) -> np.ndarray:
    """Vectorized entropy(alpha)."""
    a = np.clip(np.asarray(alpha, dtype=float), 0.0, 1.0)
    return math.log(2.0) - 0.5 * (xlogy(1.0 + a, 1.0 + a) + xlogy(1.0 - a, 1.0 - a))


def quenched_entropy_series(ens: TrajectoryEnsemble) -> np.ndarray:
    """s_quenched at every snapshot."""
    out = np.empty(len(ens.steps))
    for k, t in enumerate(ens.times):
        theta, _, r = ens.at(t)
        out[k] = np.mean(entropies(np.sqrt(np.cos(theta) ** 2 + r ** 2)))
    return out


COMMUTATION_TOL = 1e-14


def average_commutation_check(ens: TrajectoryEnsemble, t: float) -> tuple[float, float]:
    """sigma_z averaged per trajectory vs evaluated on the averaged state.

    Raises ``AssertionError`` if the two differ by more than 1e-14.
    """
    theta, _, _ = ens.at(t)
    if theta.size == 0:
        raise InsufficientSamples(f"no usable trajectories at t={t}")
    c = np.cos(theta)
    pp = 0.5 * (1.0 + c)
    mm = 0.5 * (1.0 - c)
    quenched = float(np.mean(pp - mm))
    annealed = float(np.mean(pp) - np.mean(mm))
    if abs(quenched - annealed) > COMMUTATION_TOL:
        raise AssertionError(f"quenched {quenched!r} and annealed {annealed!r} sigma_z differ")
    return quenched, annealed


# -- decay fits --------------------------------------------------------------------

def fit_decay_rate(t, values, baseline: float = 0.0) -> tuple[float, float]:
    """Rate of value ~ A exp(-rate t) by linear least squares on log(value - baseline).

    Returns (rate, standard error of the slope).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float) - baseline
    if t.size < 10 or y.size != t.size:
        raise FitFailure(f"need at least 10 matching points, got {t.size}")
    if not np.all(y > 0):
        raise FitFailure("series is not positive after baseline subtraction")
    res = stats.linregress(t, np.log(y))
    return float(-res.slope), float(res.stderr)


def write_report(fh, records: dict, header: dict | None = None) -> None:
    """key=value records, one per line, after a '#' header echo."""
    from . import __version__
    items = {"artifact": "stochqubit", "version": __version__}
    if header:
        items.update(header)
    fh.write("# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n")
    for k, v in records.items():
        fh.write(f"{k}={_fmt(v)}\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)
