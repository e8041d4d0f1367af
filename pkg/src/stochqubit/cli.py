"""Command-line entry point.

Exit status: 0 success, 1 validation failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .density import AngleState
from .dynamics import EnsembleConfig, run_ensemble, uniform_initial, write_snapshots
from .errors import (
    ConfigError,
    FitFailure,
    InsufficientSamples,
    InvalidState,
    NoMatch,
    NonConvergence,
    PoleProximity,
    StabilityViolation,
)
from .fpe_grid import GridField, evolve, stationary, write_field
from .observables import average_commutation_check, entropy_report
from .spectral import spectrum_table, write_spectrum
from .two_spin import (
    correlation_defect,
    joint_annealed_entropy,
    joint_initial,
    joint_mean,
    negativity,
    run_joint_ensemble,
    write_joint_snapshots,
)
from .validate import PRESETS, run_validation

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (PoleProximity, StabilityViolation, NonConvergence, NoMatch, InsufficientSamples,
                    FitFailure, InvalidState, FloatingPointError)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    parser.add_argument("--preset", choices=tuple(PRESETS), default="quick",
                        help="validation preset (used by validate)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochqubit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate a trajectory ensemble and write snapshots",
        "fpe-evolve": "evolve a point-mass density on the (theta, phi) grid",
        "stationary": "compute the stationary grid density",
        "spectrum": "closed-form and grid eigenvalues for both operator modes",
        "entropy": "quenched and annealed entropies along an ensemble",
        "two-spin": "two spins in a shared or independent bath",
        "validate": "run the acceptance suite",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "spectrum":
            p.add_argument("--n-max", type=int, help="largest n (overrides n_max)")
            p.add_argument("--m-max", type=int, help="largest m (overrides m_max)")
        if name == "validate":
            p.add_argument("--fault", choices=("drift-sign",), help="inject a known fault")
            p.add_argument("--criteria", help="comma-separated criterion ids (default: all)")
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "output_dir": str(args.out) if args.out is not None else None}
    for key in ("n_max", "m_max"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if args.workers < 1:
        raise ConfigError("workers", "must be >= 1")
    if args.config is not None and not args.config.is_file():
        raise ConfigError("config", f"file {str(args.config)!r} not found")
    return load_config(args.config, overrides)


def _outdir(cfg: ExperimentConfig) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo(cfg: ExperimentConfig) -> dict:
    return {k: v for k, v in cfg.echo().items() if k != "output_dir"}


def _ensemble(cfg: ExperimentConfig, workers: int):
    ecfg = EnsembleConfig(n_traj=cfg.n_traj, dt=cfg.dt, n_steps=cfg.n_steps, seed=cfg.seed, scheme=cfg.scheme,
                          stride=cfg.snapshot_stride, pole_policy=cfg.pole_policy, block_size=cfg.block_size)
    if cfg.initial == "uniform":
        initial = uniform_initial(cfg.n_traj, cfg.seed, cfg.alpha0)
    else:
        initial = AngleState(cfg.theta0, cfg.phi0, cfg.r0)
    return run_ensemble(initial, cfg.params, ecfg, workers)


def cmd_simulate(cfg: ExperimentConfig, workers: int) -> int:
    ens = _ensemble(cfg, workers)
    path = _outdir(cfg) / "trajectories.txt"
    with open(path, "w", encoding="utf-8") as fh:
        write_snapshots(ens, fh, {"config." + k: v for k, v in _echo(cfg).items()})
    print(f"wrote {path}")
    return EXIT_OK


def cmd_fpe_evolve(cfg: ExperimentConfig, workers: int) -> int:
    start = GridField.point_mass(cfg.theta0, cfg.phi0, cfg.n_theta, cfg.n_phi)
    field = evolve(start, cfg.operator_mode, cfg.params, cfg.t_end, scheme=cfg.fpe_scheme)
    path = _outdir(cfg) / "field.txt"
    with open(path, "w", encoding="utf-8") as fh:
        write_field(field, fh, cfg.operator_mode, cfg.params,
                    {"t": cfg.t_end, "theta0": cfg.theta0, "phi0": cfg.phi0, "scheme": cfg.fpe_scheme})
    print(f"wrote {path}")
    return EXIT_OK


def cmd_stationary(cfg: ExperimentConfig, workers: int) -> int:
    field = stationary(cfg.operator_mode, cfg.params, cfg.n_theta, cfg.n_phi)
    path = _outdir(cfg) / "stationary.txt"
    with open(path, "w", encoding="utf-8") as fh:
        write_field(field, fh, cfg.operator_mode, cfg.params)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, workers: int) -> int:
    rows = spectrum_table(cfg.n_max, cfg.m_max, cfg.params)
    path = _outdir(cfg) / "spectrum.txt"
    with open(path, "w", encoding="utf-8") as fh:
        write_spectrum(rows, fh, cfg.params, {"n_max": cfg.n_max, "m_max": cfg.m_max})
    print(f"wrote {path}")
    return EXIT_OK


def _header(cfg: ExperimentConfig, **extra) -> str:
    items = {"artifact": "stochqubit", "version": __version__}
    items.update(_echo(cfg))
    items.update(extra)
    return "# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n"


def cmd_entropy(cfg: ExperimentConfig, workers: int) -> int:
    ens = _ensemble(cfg, workers)
    rows = []
    for t in ens.times:
        rep = entropy_report(ens, t)
        sz_q, sz_a = average_commutation_check(ens, t)
        rows.append((t, rep.s_quenched, rep.s_annealed, rep.se_annealed, rep.s_annealed_corrected, sz_q, sz_a))
    path = _outdir(cfg) / "entropy.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_header(cfg))
        fh.write("# columns: t s_quenched s_annealed se_annealed s_annealed_corrected sz_quenched sz_annealed\n")
        np.savetxt(fh, np.array(rows), fmt="%.16e")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_two_spin(cfg: ExperimentConfig, workers: int) -> int:
    if cfg.scheme != "unitary":
        raise ConfigError("scheme", "two-spin runs use the unitary scheme")
    if cfg.alpha0 != 1.0:
        raise ConfigError("alpha0", "two-spin runs start from pure states (alpha0 = 1)")
    theta2 = cfg.theta1 if cfg.theta1 is not None else cfg.theta0
    if cfg.initial == "uniform":
        a, b = joint_initial(cfg.n_traj, cfg.seed, cfg.theta0, theta2, phi="uniform")
    else:
        a, b = joint_initial(cfg.n_traj, cfg.seed, cfg.theta0, theta2, phi="fixed", phi1=cfg.phi0, phi2=cfg.phi0)
    ecfg = EnsembleConfig(n_traj=cfg.n_traj, dt=cfg.dt, n_steps=cfg.n_steps, seed=cfg.seed,
                          stride=cfg.snapshot_stride, block_size=cfg.block_size)
    ens = run_joint_ensemble(a, b, cfg.params, ecfg, cfg.bath_mode, workers)
    out = _outdir(cfg)
    with open(out / "two_spin_trajectories.txt", "w", encoding="utf-8") as fh:
        write_joint_snapshots(ens, fh, {"config." + k: v for k, v in _echo(cfg).items()})
    rows = []
    for t in ens.times:
        rep = joint_annealed_entropy(ens, t)
        cd = correlation_defect(ens, t)
        rows.append((t, rep.s_tot_a, rep.s1_a, rep.s2_a, rep.extensivity_defect, rep.se_defect,
                     cd.value, cd.stderr, negativity(joint_mean(ens, t))))
    with open(out / "two_spin_report.txt", "w", encoding="utf-8") as fh:
        fh.write(_header(cfg))
        fh.write("# columns: t s_tot_a s1_a s2_a extensivity_defect se_defect correlation_defect "
                 "correlation_se negativity\n")
        np.savetxt(fh, np.array(rows), fmt="%.16e")
    print(f"wrote {out / 'two_spin_trajectories.txt'} and {out / 'two_spin_report.txt'}")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, workers: int, preset: str, fault=None, criteria=None) -> int:
    ids = None
    if criteria:
        try:
            ids = sorted({int(x) for x in criteria.split(",")})
        except ValueError:
            raise ConfigError("criteria", "must be comma-separated integers") from None
        if any(not 1 <= k <= 12 for k in ids):
            raise ConfigError("criteria", "ids must lie in 1..12")
    out = _outdir(cfg)
    results = run_validation(preset, cfg.seed, workers, out, ids, fault, cfg.params, echo=print)
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed; report in {out / 'report.json'}")
    return EXIT_OK if passed else EXIT_VALIDATION


COMMANDS = {
    "simulate": cmd_simulate,
    "fpe-evolve": cmd_fpe_evolve,
    "stationary": cmd_stationary,
    "spectrum": cmd_spectrum,
    "entropy": cmd_entropy,
    "two-spin": cmd_two_spin,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "validate":
            return cmd_validate(cfg, args.workers, args.preset, args.fault, args.criteria)
        with np.errstate(over="raise", invalid="ignore", divide="ignore"):
            return COMMANDS[args.command](cfg, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc.key}: {exc.constraint}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
