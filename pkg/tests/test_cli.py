import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hydrochain import cli


def write_spec(tmp_path, doc, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def base_chain(n=6):
    return {"n": n, "gamma": 1.0, "t_minus": 1.0}


class TestValidate:
    def test_well_formed(self, tmp_path):
        doc = {"chain": base_chain(), "study": "wq",
               "output_dir": str(tmp_path / "out")}
        assert cli.validate_spec(doc) == []
        path = write_spec(tmp_path, doc)
        assert cli.main(["validate", "--spec", path]) == 0

    def test_schema_violation(self, tmp_path):
        doc = {"chain": {"n": 0, "gamma": 1.0, "t_minus": 1.0}, "study": "wq",
               "output_dir": "x"}
        errs = cli.validate_spec(doc)
        assert errs and "minimum" in errs[0]["message"]
        path = write_spec(tmp_path, doc)
        assert cli.main(["validate", "--spec", path]) == 2

    def test_unknown_key_rejected(self):
        doc = {"chain": base_chain(), "study": "wq", "output_dir": "x",
               "unexpected": 1}
        assert cli.validate_spec(doc)

    def test_study_requirements(self):
        doc = {"chain": base_chain(), "study": "micro", "output_dir": "x"}
        errs = cli.validate_spec(doc)
        assert any("requires section" in e["message"] for e in errs)
        doc2 = {"chain": base_chain(), "study": "converge_work",
                "output_dir": "x"}
        errs2 = cli.validate_spec(doc2)
        assert any("n_values" in e["message"] for e in errs2)


class TestRun:
    def test_wq_no_modes_writes_zero(self, tmp_path):
        out = tmp_path / "out"
        doc = {"chain": base_chain(), "study": "wq", "output_dir": str(out)}
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        body = json.loads((out / "wq.json").read_text())
        assert body["wq"] == 0.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert "wq.json" in manifest["files"]
        assert manifest["config_hash"]

    def test_micro_rerun_byte_identical(self, tmp_path):
        out = tmp_path / "m"
        doc = {
            "chain": base_chain(),
            "init": {"kind": "gibbs"},
            "sim": {"dt": 0.02, "t_end": 0.02, "record_times": [0.0, 0.02],
                    "ensemble_size": 20, "seed": 5},
            "study": "micro",
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        first = (out / "micro.csv").read_bytes()
        assert cli.main(["run", "--spec", path]) == 0
        assert (out / "micro.csv").read_bytes() == first

    def test_seed_override_changes_output(self, tmp_path):
        out = tmp_path / "m2"
        doc = {
            "chain": base_chain(),
            "init": {"kind": "gibbs"},
            "sim": {"dt": 0.02, "t_end": 0.02, "record_times": [0.02],
                    "ensemble_size": 20, "seed": 5},
            "study": "micro",
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        first = (out / "micro.csv").read_bytes()
        assert cli.main(["run", "--spec", path, "--seed", "6"]) == 0
        assert (out / "micro.csv").read_bytes() != first

    def test_mean_study(self, tmp_path):
        out = tmp_path / "mean"
        doc = {
            "chain": dict(base_chain(), f_bar=1.0),
            "init": {"mean_r": "0*u"},
            "sim": {"t_end": 0.1, "record_times": [0.05, 0.1]},
            "study": "mean",
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        lines = (out / "mean.csv").read_text().strip().splitlines()
        assert lines[0] == "time,u,r_bar,p_bar,emech"
        assert len(lines) == 1 + 2 * 7

    def test_pde_study(self, tmp_path):
        out = tmp_path / "pde"
        doc = {
            "chain": dict(base_chain(), f_bar=1.0),
            "init": {"mean_r": "u", "profile": "1 + u/2"},
            "sim": {"t_end": 0.05, "record_times": [0.05]},
            "grid": {"m": 32, "dt_macro": 0.001},
            "study": "pde",
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        audit = json.loads((out / "pde_audit.json").read_text())
        assert audit["max_abs_residual"] < 1e-3   # O(du^2) at m=32

    def test_covariance_study(self, tmp_path):
        out = tmp_path / "cov"
        doc = {
            "chain": base_chain(),
            "init": {"kind": "local_gibbs", "profile": "1 + u/2"},
            "sim": {"t_end": 0.05},
            "study": "covariance",
            "study_params": {"dt_ode": 0.02},
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        report = json.loads((out / "covariance_report.json").read_text())
        assert report["fd_max_abs"] < 1e-4

    def test_converge_work_study(self, tmp_path):
        out = tmp_path / "cw"
        doc = {
            "chain": dict(base_chain(), f_bar=1.0),
            "study": "converge_work",
            "study_params": {"n_values": [8, 16], "times": [0.5]},
            "grid": {"m": 64, "dt_macro": 0.001},
            "output_dir": str(out),
        }
        path = write_spec(tmp_path, doc)
        assert cli.main(["run", "--spec", path]) == 0
        lines = (out / "work.csv").read_text().strip().splitlines()
        assert lines[0] == "n,t,w_n,w_limit,abs_err"
        assert len(lines) == 3


class TestOracleCommands:
    def test_lyapunov(self, tmp_path):
        out = tmp_path / "ly.json"
        assert cli.main(["oracle", "lyapunov", "--n", "4", "--seed", "1",
                         "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert np.array(doc["s_p"]).shape == (5, 5)

    def test_wq_quadrature(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "n": 8, "gamma": 1.0, "t_minus": 1.0, "f_bar": 0.0,
            "theta": 6.283185307179586,
            "forcing_modes": [{"ell": 1, "re": 1.0, "im": 0.0}]}))
        out = tmp_path / "wq.json"
        assert cli.main(["oracle", "wq-quadrature", "--config", str(cfg_path),
                         "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert abs(doc["wq_quadrature"] - 0.84037240246801) < 1e-9

    def test_heat_series(self, tmp_path):
        out = tmp_path / "hs.json"
        assert cli.main(["oracle", "heat-series", "--m", "32", "--t", "0.3",
                         "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert len(doc["r"]) == 33

    def test_damped_oscillator(self, tmp_path):
        out = tmp_path / "do.json"
        assert cli.main(["oracle", "damped-oscillator", "--gamma", "1.0",
                         "--lam", "2.0", "--tau", "0.7",
                         "--output", str(out)]) == 0
        assert "z" in json.loads(out.read_text())

    def test_quotient_hp(self, tmp_path):
        out = tmp_path / "q.json"
        assert cli.main(["oracle", "quotient-hp", "--gamma", "1.0",
                         "--lam", "2.0", "--tau", "0.7",
                         "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert abs(complex(doc["re"], doc["im"])) > 0

    def test_unknown_oracle_rejected(self):
        with pytest.raises(SystemExit):
            cli.main(["oracle", "nope"])


def test_console_script_entrypoint(tmp_path):
    # the installed `hydro` executable resolves and runs
    doc = {"chain": base_chain(), "study": "wq",
           "output_dir": str(tmp_path / "out")}
    path = write_spec(tmp_path, doc)
    proc = subprocess.run([sys.executable, "-m", "hydrochain.cli", "run",
                           "--spec", path], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
