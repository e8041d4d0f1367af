"""End-to-end validation suite: one check per acceptance criterion.

Each criterion returns a :class:`CriterionResult` with measured values,
tolerances and its runtime.  Ensembles shared between criteria are built
once per suite.  Data files (written under ``<out>/data``) contain only
seeded, worker-independent numbers; runtimes go to the report files.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field, asdict
import hashlib
import io
import json
import math
from pathlib import Path
import time

import numpy as np
from scipy import stats

from . import __version__, fpe_grid, spectral
from .density import AngleState, entropy
from .dynamics import SCHEMES, BathParameters, EnsembleConfig, TrajectoryEnsemble, run_ensemble, write_snapshots
from .fpe_grid import GridField, MODES, eigen_spectrum_theta, evolve, probability_current, rate_scale
from .observables import (
    average_commutation_check,
    entropy_report,
    estimate_distribution,
    fit_decay_rate,
    quenched_entropy_series,
)
from .two_spin import (
    correlation_defect,
    joint_annealed_entropy,
    joint_initial,
    joint_mean,
    negativity,
    run_joint_ensemble,
    short_time_multiplier,
    write_joint_snapshots,
)

LN2 = math.log(2.0)

PRESETS = {
    # tiny sizes; exercises every code path in seconds (determinism checks)
    "smoke": dict(
        block=128, c1_traj=64, c1_steps=500,
        red_traj=1000, red_dt=2e-3, red_t=8.0, fpe_n=64, hist_n=32,
        uni_traj=1000, uni_dt=4e-3, uni_t=16.0,
        st_traj=4000, joint_traj=400, grid_n=32, probe_traj=200, probe_block=64,
    ),
    "quick": dict(
        block=4096, c1_traj=1000, c1_steps=10_000,
        red_traj=20_000, red_dt=2e-3, red_t=8.0, fpe_n=128, hist_n=64,
        uni_traj=20_000, uni_dt=2e-3, uni_t=16.0,
        st_traj=50_000, joint_traj=5000, grid_n=64, probe_traj=300, probe_block=64,
    ),
    "full": dict(
        block=4096, c1_traj=1000, c1_steps=10_000,
        red_traj=100_000, red_dt=2e-3, red_t=8.0, fpe_n=128, hist_n=64,
        uni_traj=100_000, uni_dt=2e-3, uni_t=16.0,
        st_traj=200_000, joint_traj=10_000, grid_n=64, probe_traj=300, probe_block=64,
    ),
}

RUNTIME_LIMITS = {1: 60.0, 2: 60.0, 3: 600.0, 6: 600.0, 10: 600.0}

NAMES = {
    1: "alpha persistence",
    2: "eigenvalue reproduction",
    3: "unique stationary state",
    4: "stationary currents",
    5: "Liouville transport",
    6: "MC-FPE consistency",
    7: "relaxation-rate law",
    8: "entropy endpoints and persistence",
    9: "linear-functional commutation",
    10: "two-spin short-time law",
    11: "non-extensive annealed entropy",
    12: "determinism",
}

# Nominal drift speeds, independent of the solver's sign convention.
NOMINAL_DRIFT = {"paper_fp": 0.5, "sde_consistent": 1.0}

THETA_DELTA = 1.2
UNITARY_THETA0 = math.pi / 4
SNAP_DT = 0.25
FPE_TIMES = (0.25, 1.0, 4.0)
FIT_T_MAX = 3.0


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: dict
    tolerance: dict
    runtime_s: float = 0.0
    notes: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.id:2d} [{status}] {self.name} ({self.runtime_s:.1f} s)"


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


@contextmanager
def drift_fault():
    """Reverse the Fokker-Planck drift for the duration of the block."""
    old = fpe_grid._DRIFT_SIGN
    fpe_grid._DRIFT_SIGN = -old
    try:
        yield
    finally:
        fpe_grid._DRIFT_SIGN = old


def _circular_mean_phi(field: GridField) -> float:
    m = field.phi_marginal()
    return math.atan2(float(np.sum(m * np.sin(field.phi))), float(np.sum(m * np.cos(field.phi))))


class Suite:
    """Runs criteria against one preset, seed and worker count."""

    def __init__(self, preset: str = "quick", seed: int = 12345, workers: int = 1, out_dir=None,
                 params: BathParameters | None = None):
        if preset not in PRESETS:
            raise ValueError(f"preset must be one of {tuple(PRESETS)}, got {preset!r}")
        self.preset = preset
        self.cfg = PRESETS[preset]
        self.seed = int(seed)
        self.workers = int(workers)
        self.params = params or BathParameters(1.0, 1.0, 1.0)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._cache: dict = {}

    # -- output ----------------------------------------------------------------

    def _data_path(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        d = self.out_dir / "data"
        d.mkdir(parents=True, exist_ok=True)
        return d / name

    def _header(self, **extra) -> str:
        p = self.params
        items = {"artifact": "stochqubit", "version": __version__, "preset": self.preset, "seed": self.seed,
                 "omega": p.omega, "eta": p.eta, "e0": p.e0}
        items.update(extra)
        return "# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n"

    def _write_table(self, name: str, columns: str, rows, fmt="%.16e", **extra) -> None:
        path = self._data_path(name)
        if path is None:
            return
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self._header(**extra))
            fh.write(f"# columns: {columns}\n")
            np.savetxt(fh, np.atleast_2d(np.asarray(rows, dtype=float)), fmt=fmt)

    # -- shared ensembles ------------------------------------------------------------

    def _ens_cfg(self, n_traj, dt, t_end, scheme, stride_t=None, seed_offset=0) -> EnsembleConfig:
        n_steps = int(round(t_end / dt))
        stride = max(1, int(round((stride_t or t_end) / dt)))
        return EnsembleConfig(n_traj=n_traj, dt=dt, n_steps=n_steps, seed=self.seed + seed_offset,
                              scheme=scheme, stride=stride, block_size=self.cfg["block"])

    def delta_start(self) -> tuple[float, float]:
        """Cell centre of the finest Fokker-Planck grid nearest (1.2, pi)."""
        n = self.cfg["fpe_n"]
        h = math.pi / n
        theta0 = (math.floor(THETA_DELTA / h) + 0.5) * h
        hp = 2 * math.pi / n
        phi0 = (math.floor(math.pi / hp) + 0.5) * hp
        return theta0, phi0

    def reduced_ensemble(self) -> TrajectoryEnsemble:
        if "reduced" not in self._cache:
            c = self.cfg
            theta0, phi0 = self.delta_start()
            cfg = self._ens_cfg(c["red_traj"], c["red_dt"], c["red_t"], "reduced-ito", SNAP_DT, 1)
            self._cache["reduced"] = run_ensemble(AngleState.pure(theta0, phi0), self.params, cfg, self.workers)
        return self._cache["reduced"]

    def unitary_ensemble(self) -> TrajectoryEnsemble:
        if "unitary" not in self._cache:
            c = self.cfg
            cfg = self._ens_cfg(c["uni_traj"], c["uni_dt"], c["uni_t"], "unitary", SNAP_DT, 2)
            self._cache["unitary"] = run_ensemble(AngleState.pure(UNITARY_THETA0, 0.0), self.params, cfg,
                                                  self.workers)
        return self._cache["unitary"]

    def persistence_ensembles(self) -> dict:
        if "persistence" not in self._cache:
            c = self.cfg
            out = {}
            for k, (alpha0, theta0) in enumerate(((0.0, math.pi / 2), (0.5, THETA_DELTA), (1.0, THETA_DELTA))):
                cfg = EnsembleConfig(n_traj=c["c1_traj"], dt=1e-3, n_steps=c["c1_steps"], seed=self.seed + 10 + k,
                                     scheme="unitary", stride=max(1, c["c1_steps"] // 20), block_size=c["block"])
                out[alpha0] = run_ensemble(AngleState.with_alpha(theta0, 0.3, alpha0), self.params, cfg, self.workers)
            self._cache["persistence"] = out
        return self._cache["persistence"]

    # -- criteria ------------------------------------------------------------------------

    def c1(self) -> CriterionResult:
        rows = []
        ok = True
        for alpha0, ens in self.persistence_ensembles().items():
            dev = float(np.abs(ens.alpha() - alpha0).max())
            ok &= dev <= 1e-10 and not ens.flagged.any()
            rows.append((alpha0, dev))
        self._write_table("c1_alpha_deviation.txt", "alpha0 max_abs_deviation", rows)
        n = self.cfg["c1_traj"]
        return CriterionResult(1, NAMES[1], ok, {"max_deviation": {a: d for a, d in rows}},
                               {"max_deviation": 1e-10, "n_traj": n, "n_steps": self.cfg["c1_steps"]})

    def c2(self) -> CriterionResult:
        worst_rel, orders, exact = 0.0, [], 0
        rows = []
        for m in range(-3, 4):
            est = eigen_spectrum_theta("paper_fp", m, 4, n_theta=100, levels=3)
            for n in range(4):
                lam = spectral.eigenvalue(n, m)
                if isinstance(lam, spectral.Inadmissible):
                    continue
                i = n if m == 0 else n - 1
                grid = float(est.values[i])
                rel = abs(grid - lam) / lam if lam else abs(grid)
                worst_rel = max(worst_rel, rel)
                if math.isnan(est.order[i]):
                    exact += 1
                else:
                    orders.append(float(est.order[i]))
                rows.append((n, m, lam, grid, rel, est.order[i]))
        self._write_table("c2_eigenvalues.txt", "n m Lambda_closed_form Lambda_grid rel_err order", rows)
        path = self._data_path("spectrum.txt")
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                spectral.write_spectrum(spectral.spectrum_table(3, 3, self.params), fh, self.params)
        ok = worst_rel <= 1e-3 and all(abs(o - 2.0) <= 0.2 for o in orders)
        return CriterionResult(2, NAMES[2], ok,
                               {"max_rel_err": worst_rel, "order_min": min(orders), "order_max": max(orders),
                                "n_resolved_to_roundoff": exact},
                               {"rel_err": 1e-3, "order": "2 +- 0.2"},
                               notes="modes discretized exactly (Lambda_00 and every n = 1, m != 0 mode) "
                                     "converge to round-off at all levels and carry no order")

    def _relaxation_fields(self, n):
        return {
            "point": GridField.point_mass(1.0, 2.0, n, n),
            "bump": GridField.from_function(
                lambda th, ph: np.exp(2.0 * np.cos(ph - 1.0) - (th - 2.2) ** 2 / 0.1), n, n),
            "tilt": GridField.from_function(lambda th, ph: 1.0 + 0.9 * np.cos(th), n, n),
        }

    def c3(self) -> CriterionResult:
        n = self.cfg["grid_n"]
        measured, ok = {}, True
        rows = []
        for mode in MODES:
            slowest = rate_scale(mode, self.params) * 4.0
            t_relax = 20.0 / slowest
            for k, (name, f0) in enumerate(self._relaxation_fields(n).items()):
                l1 = evolve(f0, mode, self.params, t_relax).l1_distance(GridField.uniform(n, n))
                measured[f"l1_{mode}_{name}"] = l1
                ok &= l1 <= 1e-6
                rows.append((MODES.index(mode), k, t_relax, l1))
            second = float(eigen_spectrum_theta(mode, 0, 2).values[1])
            measured[f"second_m0_eigenvalue_{mode}"] = second
            ok &= second > 3.0
        self._write_table("c3_grid_relaxation.txt", "mode_index field_index t l1_to_uniform", rows)
        ens = self.reduced_ensemble()
        dist = estimate_distribution(ens, ens.times[-1], self.cfg["hist_n"], self.cfg["hist_n"])
        chi2, p = dist.chi2_uniform()
        measured.update(chi2=chi2, chi2_p=p, n_samples=dist.count, t_mc=float(ens.times[-1]))
        ok &= p > 0.01
        self._write_table("c3_histogram_final.txt", "counts (theta rows, phi columns)", dist.counts, fmt="%d",
                          t=float(ens.times[-1]), n_traj=ens.n_traj)
        return CriterionResult(3, NAMES[3], ok, measured,
                               {"l1": 1e-6, "chi2_p": "> 0.01", "second_m0_eigenvalue": "> 3"})

    def c4(self) -> CriterionResult:
        f = GridField.uniform(64, 64)
        j_theta, j_phi = probability_current(f, "paper_fp", self.params)
        jt = float(np.abs(j_theta).max())
        dev = float(np.abs(j_phi - 0.5 * self.params.omega * f.values).max())
        ok = jt <= 1e-12 and dev <= 1e-12
        return CriterionResult(4, NAMES[4], ok, {"max_abs_j_theta": jt, "max_abs_j_phi_minus_half_omega_p": dev},
                               {"abs": 1e-12})

    def c5(self) -> CriterionResult:
        p0 = BathParameters(self.params.omega, 0.0, self.params.e0)
        f0 = GridField.from_function(lambda th, ph: np.exp(3.0 * np.cos(ph - 1.0) - (th - 1.5) ** 2 / 0.2), 64, 64)
        measured, ok = {}, True
        rows = []
        for mode in MODES:
            expected = -NOMINAL_DRIFT[mode] * self.params.omega
            period = 2.0 * math.pi / abs(expected)
            ts = np.linspace(0.0, period, 41)
            peaks = np.unwrap([_circular_mean_phi(evolve(f0, mode, p0, t)) for t in ts])
            speed = float(stats.linregress(ts, peaks).slope)
            err = abs(speed - expected) / abs(expected)
            measured[f"speed_{mode}"] = speed
            measured[f"expected_{mode}"] = expected
            measured[f"rel_err_{mode}"] = err
            ok &= err <= 0.01
            rows += [(MODES.index(mode), t, pk) for t, pk in zip(ts, peaks)]
        self._write_table("c5_peak_tracks.txt", "mode_index t peak_phi", rows)
        return CriterionResult(5, NAMES[5], ok, measured, {"rel_err": 0.01},
                               notes="density moves toward decreasing phi, matching dphi = -omega dt")

    def c6(self) -> CriterionResult:
        ens = self.reduced_ensemble()
        theta0, phi0 = self.delta_start()
        n, h = self.cfg["fpe_n"], self.cfg["hist_n"]
        start = GridField.point_mass(theta0, phi0, n, n)
        measured, ok = {}, True
        rows = []
        for t in FPE_TIMES:
            f = evolve(start, "sde_consistent", self.params, t)
            dist = estimate_distribution(ens, t, h, h)
            l1 = dist.l1_distance(f)
            se = dist.aggregate_se()
            measured[f"t={t}"] = {"l1": l1, "aggregate_se": se, "ratio": l1 / se}
            ok &= l1 <= 3.0 * se
            rows.append((t, l1, se))
        self._write_table("c6_mc_vs_fpe.txt", "t l1 aggregate_se", rows, n_traj=ens.n_traj,
                          theta0=repr(theta0), phi0=repr(phi0))
        return CriterionResult(6, NAMES[6], ok, measured, {"l1": "<= 3 aggregate_se"})

    def _grid_decay(self, mode: str):
        n = self.cfg["grid_n"]
        f = GridField.point_mass(1.0, 0.5, n, n)
        step = 0.1
        t_max = 2.0 / (rate_scale(mode, self.params) * 4.0)
        ts = np.arange(0.0, t_max + 1e-12, step)
        vals = []
        for k, t in enumerate(ts):
            if k:
                f = evolve(f, mode, self.params, step)
            vals.append(f.mean(lambda th, ph: np.cos(th)))
        return ts, np.array(vals)

    def c7(self) -> CriterionResult:
        ens = self.unitary_ensemble()
        ts = ens.times
        sel = ts <= FIT_T_MAX + 1e-12
        series = np.array([np.mean(np.cos(ens.at(t)[0])) for t in ts])
        rate_mc, unc_mc = fit_decay_rate(ts[sel], series[sel])
        lam = {m: float(eigen_spectrum_theta(m, 0, 2).values[1]) for m in MODES}
        target = rate_scale("sde_consistent", self.params) * lam["sde_consistent"]
        rel_mc = abs(rate_mc - target) / target
        paper_rate = rate_scale("paper_fp", self.params) * lam["paper_fp"]
        measured = {"rate_mc_unitary": rate_mc, "rate_mc_stderr": unc_mc, "rate_sde_consistent_eigen": target,
                    "rel_err_mc": rel_mc, "rate_paper_fp_eigen": paper_rate,
                    "rel_err_mc_vs_paper_fp": abs(rate_mc - paper_rate) / paper_rate}
        ok = rel_mc <= 0.10
        rows = [(0, t, v) for t, v in zip(ts, series)]
        for k, mode in enumerate(MODES):
            gts, gvals = self._grid_decay(mode)
            rate_g, _ = fit_decay_rate(gts, gvals)
            eig = rate_scale(mode, self.params) * lam[mode]
            rel = abs(rate_g - eig) / eig
            measured[f"rate_grid_{mode}"] = rate_g
            measured[f"rel_err_grid_{mode}"] = rel
            ok &= rel <= 0.02
            rows += [(k + 1, t, v) for t, v in zip(gts, gvals)]
        self._write_table("c7_cos_theta_decay.txt", "source(0=mc,1=paper_fp,2=sde_consistent) t mean_cos_theta", rows)
        return CriterionResult(7, NAMES[7], ok, measured, {"rel_err_mc": 0.10, "rel_err_grid": 0.02},
                               notes="the unitary scheme relaxes cos(theta) at g^2, twice the reduced-Ito "
                                     "(sde_consistent) rate g^2/2; it agrees with the paper_fp rate instead")

    def c8(self) -> CriterionResult:
        measured, ok = {}, True
        e1, e0 = entropy(1.0), entropy(0.0)
        measured.update(entropy_1=e1, entropy_0_minus_ln2=e0 - LN2)
        ok &= abs(e1) <= 1e-12 and abs(e0 - LN2) <= 1e-12
        ens = self.unitary_ensemble()
        sq = quenched_entropy_series(ens)
        measured["s_quenched_range"] = float(np.ptp(sq))
        ok &= np.ptp(sq) <= 1e-8
        rep = entropy_report(ens, ens.times[-1])
        z = (rep.s_annealed_corrected - LN2) / rep.se_annealed
        measured.update(s_annealed=rep.s_annealed, s_annealed_corrected=rep.s_annealed_corrected,
                        se_annealed=rep.se_annealed, z_vs_ln2=z, s_quenched=rep.s_quenched)
        ok &= abs(z) <= 2.0
        spread = (rep.s_annealed - rep.s_quenched) / rep.se_annealed
        measured["annealed_minus_quenched_in_se"] = spread
        ok &= spread > 3.0
        mixed = self.persistence_ensembles()[0.0]
        gap = 0.0
        for t in mixed.times:
            r = entropy_report(mixed, t)
            gap = max(gap, abs(r.s_quenched - r.s_annealed), abs(r.s_annealed - LN2))
        measured["alpha0_max_gap"] = gap
        ok &= gap <= 1e-12
        rows = []
        for t, q in zip(ens.times, sq):
            r = entropy_report(ens, t)
            rows.append((t, q, r.s_annealed, r.se_annealed))
        self._write_table("c8_entropies.txt", "t s_quenched s_annealed se_annealed", rows, n_traj=ens.n_traj)
        return CriterionResult(8, NAMES[8], ok, measured,
                               {"endpoints": 1e-12, "s_quenched_range": 1e-8, "z_vs_ln2": 2.0,
                                "annealed_minus_quenched_in_se": "> 3", "alpha0_gap": 1e-12},
                               notes="stationary check uses the jackknife bias-corrected annealed entropy")

    def c9(self) -> CriterionResult:
        ensembles = {"unitary": self.unitary_ensemble(), "reduced": self.reduced_ensemble()}
        ensembles.update({f"persistence_alpha={a}": e for a, e in self.persistence_ensembles().items()})
        worst, ok, count = 0.0, True, 0
        for ens in ensembles.values():
            for t in ens.times:
                try:
                    q, a = average_commutation_check(ens, t)
                except AssertionError:
                    ok = False
                    continue
                worst = max(worst, abs(q - a))
                count += 1
        return CriterionResult(9, NAMES[9], ok and worst <= 1e-14, {"max_abs_difference": worst, "snapshots": count},
                               {"abs": 1e-14})

    def c10(self) -> CriterionResult:
        n = self.cfg["st_traj"]
        g2 = self.params.g ** 2
        dt = 1e-3 / g2
        cfg = EnsembleConfig(n_traj=n, dt=dt, n_steps=10, seed=self.seed + 3, scheme="unitary", stride=1,
                             block_size=self.cfg["block"])
        a, b = joint_initial(n, self.seed + 3, math.pi / 4, math.pi / 4)
        shared = run_joint_ensemble(a, b, self.params, cfg, "shared", self.workers)
        indep = run_joint_ensemble(a, b, self.params, cfg, "independent", self.workers)
        measured, ok = {}, True
        rows = []
        for x in (0.005, 0.01):
            t = x / g2
            cs = short_time_multiplier(shared, t)
            ci = short_time_multiplier(indep, t)
            rel = float(cs.relative_error().max())
            chi2 = float(np.sum(ci.z_scores(np.ones_like(ci.measured)) ** 2))
            p = float(stats.chi2.sf(chi2, len(ci.measured)))
            measured[f"eta2dt={x}"] = {"shared_max_rel_err": rel, "independent_chi2": chi2, "independent_p": p}
            ok &= rel <= 0.10 and p > 0.01
            rows += [(x, c, ms, ss, pr, mi, si) for c, ms, ss, pr, mi, si in
                     zip(cs.centres, cs.measured, cs.stderr, cs.predicted, ci.measured, ci.stderr)]
        self._write_table("c10_short_time.txt",
                          "eta2dt dphi0_centre shared_mult shared_se predicted indep_mult indep_se", rows, n_traj=n)
        return CriterionResult(10, NAMES[10], ok, measured,
                               {"shared_rel_err": "<= 0.10 of max predicted deviation", "independent_p": "> 0.01"},
                               notes="multiplier per pair is 1 + dphi1 dphi2 (precession removed), binned by "
                                     "the initial phase difference; eta^2 dt read as g^2 dt")

    def c11(self) -> CriterionResult:
        n = self.cfg["joint_traj"]
        cfg = self._ens_cfg(n, self.cfg["uni_dt"], 8.0, "unitary", None, 4)
        a, b = joint_initial(n, self.seed + 4, math.pi / 4, math.pi / 4, phi="fixed")
        measured, ok = {}, True
        rows = []
        for k, mode in enumerate(("shared", "independent")):
            ens = run_joint_ensemble(a, b, self.params, cfg, mode, self.workers)
            t = float(ens.times[-1])
            rep = joint_annealed_entropy(ens, t)
            cd = correlation_defect(ens, t)
            neg = negativity(joint_mean(ens, t))
            d = rep.defect_corrected
            measured[mode] = {"s_tot_a": rep.s_tot_a, "s1_a": rep.s1_a, "s2_a": rep.s2_a,
                              "defect": rep.extensivity_defect, "defect_corrected": d, "se": rep.se_defect,
                              "correlation_defect": cd.value, "correlation_se": cd.stderr, "negativity": neg}
            if mode == "shared":
                ok &= d >= 0 and d > 3.0 * rep.se_defect
            else:
                ok &= abs(d) <= 2.0 * rep.se_defect
            rows.append((k, rep.s_tot_a, rep.s1_a, rep.s2_a, rep.extensivity_defect, d, rep.se_defect,
                         cd.value, cd.stderr, neg))
        self._write_table("c11_joint_entropy.txt",
                          "mode(0=shared,1=independent) s_tot_a s1_a s2_a defect defect_corrected se "
                          "correlation_defect correlation_se negativity", rows, n_traj=n)
        return CriterionResult(11, NAMES[11], ok, measured,
                               {"shared": "defect >= 0 and > 3 se", "independent": "|defect| <= 2 se"},
                               notes="defects are jackknife bias-corrected; negativity is reported, not asserted")

    def determinism_probe(self, workers: int) -> dict:
        """Snapshot files of every engine for a small multi-block ensemble."""
        n, blk = self.cfg["probe_traj"], self.cfg["probe_block"]
        out = {}
        for scheme in SCHEMES:
            cfg = EnsembleConfig(n_traj=n, dt=1e-3, n_steps=50, seed=self.seed + 5, scheme=scheme, stride=10,
                                 block_size=blk)
            buf = io.StringIO()
            write_snapshots(run_ensemble(AngleState.pure(1.0, 0.5), self.params, cfg, workers), buf)
            out[f"probe_{scheme}.txt"] = buf.getvalue()
        cfg = EnsembleConfig(n_traj=n, dt=1e-3, n_steps=50, seed=self.seed + 5, stride=10, block_size=blk)
        a, b = joint_initial(n, self.seed + 5, 1.0, 2.0)
        for mode in ("shared", "independent"):
            buf = io.StringIO()
            write_joint_snapshots(run_joint_ensemble(a, b, self.params, cfg, mode, workers), buf)
            out[f"probe_joint_{mode}.txt"] = buf.getvalue()
        return out

    def c12(self) -> CriterionResult:
        w_alt = 2 if self.workers == 1 else 1
        first = self.determinism_probe(self.workers)
        second = self.determinism_probe(w_alt)
        digests = {k: hashlib.sha256(v.encode()).hexdigest() for k, v in first.items()}
        same = {k: first[k] == second[k] for k in first}
        for k, text in first.items():
            path = self._data_path(k)
            if path is not None:
                path.write_text(text, encoding="utf-8")
        return CriterionResult(12, NAMES[12], all(same.values()),
                               {"identical": same, "sha256": digests, "workers": [self.workers, w_alt]},
                               {"identical": True},
                               notes="compares engine outputs across worker counts; full data-directory "
                                     "comparisons are done by running validate twice")

    # -- driver --------------------------------------------------------------------

    def run(self, ids=None) -> list[CriterionResult]:
        results = []
        for k in ids or sorted(NAMES):
            results.append(self.run_one(k))
        return results

    def run_one(self, k: int) -> CriterionResult:
        t0 = time.perf_counter()
        res = getattr(self, f"c{k}")()
        res.runtime_s = time.perf_counter() - t0
        limit = RUNTIME_LIMITS.get(k)
        if limit is not None:
            res.tolerance["runtime_s"] = limit
            if res.runtime_s > limit:
                res.passed = False
                res.notes = (res.notes + "; " if res.notes else "") + "runtime limit exceeded"
        return res


def write_reports(results, out_dir, meta: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = dict(meta, all_passed=all(r.passed for r in results), results=[asdict(r) for r in results])
    (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items())]
    for r in results:
        lines.append(f"criterion_{r.id}.passed={str(r.passed).lower()}")
        lines.append(f"criterion_{r.id}.runtime_s={r.runtime_s:.3f}")
        for key, val in _flatten(r.measured).items():
            lines.append(f"criterion_{r.id}.{key}={val}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def run_validation(preset: str = "quick", seed: int = 12345, workers: int = 1, out_dir=None, ids=None,
                   fault: str | None = None, params: BathParameters | None = None, echo=None):
    """Run the suite; returns the results and writes reports when out_dir is set."""
    suite = Suite(preset, seed, workers, out_dir, params)
    results = []

    def go():
        for k in ids or sorted(NAMES):
            res = suite.run_one(k)
            results.append(res)
            if echo is not None:
                echo(res.line())

    if fault is None:
        go()
    elif fault == "drift-sign":
        with drift_fault():
            go()
    else:
        raise ValueError(f"unknown fault {fault!r}")
    if out_dir is not None:
        meta = {"artifact": "stochqubit", "version": __version__, "preset": preset, "seed": seed,
                "workers": workers, "fault": fault or "none"}
        write_reports(results, out_dir, meta)
    return results
