import json
import math

import numpy as np
import pytest

from stochqubit.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from stochqubit.config import ExperimentConfig, dump_config, load_config, parse_text
from stochqubit.errors import ConfigError


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_text_types_and_comments():
    vals = parse_text("omega = 2.5  # inline\n# full line\nn_traj = 12\nallow_large_dt = yes\ntheta1 = none\n")
    assert vals == {"omega": 2.5, "n_traj": 12, "allow_large_dt": True, "theta1": None}


@pytest.mark.parametrize("text,key", [
    ("bogus = 1\n", "bogus"),
    ("omega = fast\n", "omega"),
    ("eta = -1\n", "eta"),
    ("alpha0 = 1.5\n", "alpha0"),
    ("scheme = euler\n", "scheme"),
    ("dt = 0.5\n", "dt"),
    ("t_end = 0.0015\n", "t_end"),
    ("alpha0 = 0.1\ntheta0 = 0.2\n", "theta0"),
    ("omega = nan\n", "omega"),
    ("n_theta = 2\n", "n_theta"),
])
def test_config_rejections_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, text))
    assert info.value.key == key
    assert info.value.constraint


def test_large_dt_allowed_explicitly(tmp_path):
    cfg = load_config(_write(tmp_path, "dt = 0.5\nt_end = 1\nallow_large_dt = true\n"))
    assert cfg.n_steps == 2


def test_dump_round_trip(tmp_path):
    cfg = ExperimentConfig(omega=0.3, seed=7, theta1=1.0)
    assert load_config(_write(tmp_path, dump_config(cfg))) == cfg


def test_exit_codes(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(_write(tmp_path, "eta = -2\n"))]) == EXIT_CONFIG
    pole = _write(tmp_path, "theta0 = 0\nscheme = reduced-ito\npole_policy = raise\nn_traj = 2\n"
                            "t_end = 0.01\nsnapshot_stride = 1\n", "pole.cfg")
    assert main(["simulate", "--config", str(pole), "--out", str(tmp_path / "p")]) == EXIT_NUMERICAL


def test_simulate_is_reproducible_with_constant_alpha(tmp_path):
    cfg = _write(tmp_path, "alpha0 = 0.6\ntheta0 = 1.2\nn_traj = 20\nt_end = 0.1\nsnapshot_stride = 10\n")
    outs = []
    for k, workers in enumerate(("1", "2")):
        d = tmp_path / f"o{k}"
        assert main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(d), "--workers", workers]) == EXIT_OK
        outs.append((d / "trajectories.txt").read_bytes())
    assert outs[0] == outs[1]
    data = np.loadtxt(tmp_path / "o0" / "trajectories.txt", comments="#")
    assert np.abs(data[:, -1] - 0.6).max() < 1e-10


def test_spectrum_file(tmp_path):
    assert main(["spectrum", "--n-max", "2", "--m-max", "1", "--out", str(tmp_path)]) == EXIT_OK
    lines = [l.split() for l in (tmp_path / "spectrum.txt").read_text().splitlines() if not l.startswith("#")]
    paper = [l for l in lines if l[0] == "paper_fp"]
    assert [(int(l[1]), int(l[2])) for l in paper] == [(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)]
    assert float(paper[1][3]) == 4.0
    assert all(l[3] == "nan" for l in lines if l[0] == "sde_consistent")


def test_grid_commands(tmp_path):
    cfg = _write(tmp_path, "n_theta = 16\nn_phi = 8\nt_end = 0.1\n")
    assert main(["stationary", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    data = np.loadtxt(tmp_path / "stationary.txt", comments="#")
    assert np.allclose(data[:, 2], 1 / (2 * math.pi ** 2))
    assert main(["fpe-evolve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    data = np.loadtxt(tmp_path / "field.txt", comments="#")
    assert data.shape == (128, 3)


def test_entropy_and_two_spin_commands(tmp_path):
    cfg = _write(tmp_path, "n_traj = 40\nt_end = 0.05\nsnapshot_stride = 25\n")
    assert main(["entropy", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    ent = np.loadtxt(tmp_path / "entropy.txt", comments="#")
    assert ent.shape == (3, 7)
    assert np.allclose(ent[:, 1], 0.0, atol=1e-10)
    assert main(["two-spin", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    rep = np.loadtxt(tmp_path / "two_spin_report.txt", comments="#")
    assert rep.shape == (3, 9)
    bad = _write(tmp_path, "scheme = reduced-ito\n", "bad.cfg")
    assert main(["two-spin", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_validate_drift_fault_is_detected(tmp_path):
    args = ["validate", "--preset", "smoke", "--criteria", "4,5", "--out"]
    assert main(args + [str(tmp_path / "ok")]) == EXIT_OK
    assert main(args + [str(tmp_path / "bad"), "--fault", "drift-sign"]) == EXIT_VALIDATION
    report = json.loads((tmp_path / "bad" / "report.json").read_text())
    assert [r["passed"] for r in report["results"]] == [False, False]
    assert main(["validate", "--criteria", "13", "--out", str(tmp_path)]) == EXIT_CONFIG
