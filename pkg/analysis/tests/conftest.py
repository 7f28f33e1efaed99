"""Fixtures: real study output directories produced by the `hydro` CLI.

The analysis package consumes the primary only through its external
interfaces, so the fixtures shell out to the installed console script.
"""

import json
import subprocess

import pytest


def run_hydro(spec: dict, tmp_path, name: str) -> str:
    spec_path = tmp_path / name
    spec_path.write_text(json.dumps(spec))
    proc = subprocess.run(["hydro", "run", "--spec", str(spec_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr or proc.stdout
    return spec["output_dir"]


@pytest.fixture(scope="session")
def profiles_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("profiles_study")
    spec = {
        "chain": {"n": 8, "gamma": 1.0, "t_minus": 1.0, "f_bar": 1.0},
        "init": {"kind": "local_gibbs", "profile": "1 + u/2", "mean_r": "0*u"},
        "sim": {"t_end": 0.1, "record_times": [0.05, 0.1]},
        "grid": {"m": 64, "dt_macro": 0.0005},
        "study": "converge_profiles",
        "study_params": {"n_values": [8, 16], "dt_ode": 0.05},
        "output_dir": str(tmp / "out"),
    }
    return run_hydro(spec, tmp, "spec.json")


@pytest.fixture(scope="session")
def work_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("work_study")
    spec = {
        "chain": {"n": 8, "gamma": 1.0, "t_minus": 1.0, "f_bar": 1.0,
                  "theta": 6.283185307179586,
                  "forcing_modes": [{"ell": 1, "re": 1.0, "im": 0.0}]},
        "study": "converge_work",
        "study_params": {"n_values": [8, 16, 32, 64],
                         "times": [0.25, 0.5, 1.0]},
        "grid": {"m": 128, "dt_macro": 0.0005},
        "output_dir": str(tmp / "out"),
    }
    return run_hydro(spec, tmp, "spec.json")


@pytest.fixture(scope="session")
def equipartition_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("equi_study")
    spec = {
        "chain": {"n": 8, "gamma": 1.0, "t_minus": 1.0, "f_bar": 1.0},
        "init": {"kind": "local_gibbs", "profile": "1 + u/2"},
        "sim": {"t_end": 0.1},
        "study": "equipartition",
        "study_params": {"n_values": [8, 16], "dt_ode": 0.05},
        "output_dir": str(tmp / "out"),
    }
    return run_hydro(spec, tmp, "spec.json")
