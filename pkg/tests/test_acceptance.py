"""Acceptance criteria 1-12 at their stated tolerances (full preset).

Each test prints one pass/fail line; the lines are repeated in the
terminal summary.  Runs take a few minutes on one core.
"""
import filecmp
import json

import pytest

from stochqubit.cli import main
from stochqubit.validate import Suite


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    return Suite("full", seed=12345, workers=1, out_dir=tmp_path_factory.mktemp("acceptance"))


def _check(suite, k, lines):
    res = suite.run_one(k)
    line = res.line()
    print(line)
    lines.append(line)
    assert res.passed, json.dumps({"measured": res.measured, "tolerance": res.tolerance}, default=str)[:2000]


@pytest.mark.parametrize("k", range(1, 12))
def test_criterion(suite, acceptance_lines, k):
    _check(suite, k, acceptance_lines)


def test_criterion_12(suite, acceptance_lines, tmp_path):
    # engine probes across worker counts
    res = suite.run_one(12)
    # whole validate runs: the data directories must match byte for byte
    dirs = []
    for workers in ("1", "2"):
        out = tmp_path / f"w{workers}"
        main(["validate", "--preset", "smoke", "--workers", workers, "--out", str(out)])
        dirs.append(out / "data")
    cmp = filecmp.dircmp(dirs[0], dirs[1])
    names = sorted(p.name for p in dirs[0].iterdir())
    _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    same_runs = not (mismatch or errors or cmp.left_only or cmp.right_only)
    res.passed = res.passed and same_runs
    line = res.line() + f" [validate data files identical: {same_runs}]"
    print(line)
    acceptance_lines.append(line)
    assert res.passed, f"probe: {res.measured['identical']}; mismatched files: {mismatch + errors}"
