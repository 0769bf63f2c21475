"""CLI contract: schemas, exit codes, artifact generation, reproducibility."""

import json
import math

import numpy as np
import pytest

from nsbox.cli import (
    EXIT_CONFIG,
    EXIT_INTEGRITY,
    EXIT_OK,
    apply_env_overrides,
    main,
)
from nsbox.io import read_snapshot, write_snapshot

TWO_PI = 2.0 * np.pi


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


class TestConfigValidation:
    def test_unknown_key_named_in_message(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"solver": {"viscocity": 1.0}})
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == EXIT_CONFIG
        assert "viscocity" in capsys.readouterr().err

    def test_bad_value_rejected(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"solver": {"nu": -1.0}})
        rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == EXIT_CONFIG
        assert "solver.nu" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        rc = main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert rc == EXIT_CONFIG

    def test_env_override(self):
        cfg = {"solver": {"nu": 1.0}}
        out = apply_env_overrides(cfg, {"NSBOX_SOLVER_NU": "2.5"})
        assert out["solver"]["nu"] == 2.5
        out2 = apply_env_overrides(cfg, {"NSBOX_SOLVER_SCHEME": "rk3-imex"})
        assert out2["solver"]["scheme"] == "rk3-imex"


class TestSimulate:
    def test_zero_data_run(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            {
                "system": "base2d",
                "grid": {"L": TWO_PI, "N": 8},
                "solver": {"nu": 1.0, "dt": 0.05, "t_end": 0.5},
                "initial": {"kind": "zero"},
                "forcing": {"family": "zero"},
            },
        )
        out = tmp_path / "out"
        rc = main(["simulate", "--config", cfg, "--out", str(out)])
        assert rc == EXIT_OK
        series = (out / "series.csv").read_text().strip().split("\n")
        cols = series[0].split(",")
        idx = cols.index("l2_sq")
        assert all(float(line.split(",")[idx]) == 0.0 for line in series[1:])

    def test_taylor_green_preset_spot_value(self, tmp_path):
        # L2 energy at t=1 (nu=1) equals exp(-4) x initial within 1e-6 relative
        cfg = write_cfg(
            tmp_path,
            {
                "system": "base2d",
                "grid": {"L": TWO_PI, "N": 32},
                "solver": {"nu": 1.0, "dt": 1e-3, "t_end": 1.0},
                "initial": {"kind": "taylor_green", "amplitude": 1.0},
                "forcing": {"family": "zero"},
            },
        )
        out = tmp_path / "out"
        rc = main(["simulate", "--config", cfg, "--out", str(out)])
        assert rc == EXIT_OK
        series = (out / "series.csv").read_text().strip().split("\n")
        cols = series[0].split(",")
        i_t, i_e = cols.index("t"), cols.index("l2_sq")
        rows = [line.split(",") for line in series[1:]]
        e0 = float(rows[0][i_e])
        efinal = float([r for r in rows if abs(float(r[i_t]) - 1.0) < 1e-12][0][i_e])
        assert abs(efinal / (e0 * math.exp(-4.0)) - 1.0) < 1e-6

    def test_solver_abort_exit4(self, tmp_path, capsys):
        # unstable configuration fails fast; the CLI maps it to exit 4
        cfg = write_cfg(
            tmp_path,
            {
                "system": "base2d",
                "grid": {"L": TWO_PI, "N": 16},
                "solver": {"nu": 1e-8, "dt": 0.9, "t_end": 90.0},
                "initial": {"kind": "random", "amplitude": 50.0, "seed": 99, "band": [1, 5]},
                "forcing": {"family": "zero"},
            },
        )
        with np.errstate(all="ignore"):
            rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 4
        assert "abort" in capsys.readouterr().err

    def test_snapshot_artifacts_readable(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            {
                "system": "base2d",
                "grid": {"L": TWO_PI, "N": 8},
                "solver": {"nu": 1.0, "dt": 0.1, "t_end": 0.2},
                "initial": {"kind": "taylor_green", "amplitude": 0.1},
            },
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
        snaps = sorted(out.glob("state_*.snap"))
        assert snaps
        st = read_snapshot(snaps[0])
        assert st.field.grid.N == 8


class TestCertify:
    def test_zero_data_membership(self, tmp_path):
        for T, expect in ((5.0, True), (2.0, False)):
            cfg = write_cfg(
                tmp_path,
                {
                    "certificate": {"nu": 1.0, "L": TWO_PI, "T": T, "N": 8},
                    "forcing": {"family": "zero"},
                    "initial_norms": {"l2_sq": 0.0, "grad_sq": 0.0, "grad2_sq": 0.0},
                },
                name=f"c{T}.json",
            )
            out = tmp_path / f"out{T}"
            assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
            doc = json.loads((out / "certificate.json").read_text())
            assert doc["abar_chain"]["abar3_sq"] == pytest.approx(1.0)
            # membership iff T >= t_star and T > 1
            assert doc["abar_chain"]["member"] is expect

    def test_example1_reports_infinite_time_bound(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            {
                "certificate": {"nu": 1.0, "L": TWO_PI, "T": 6.0, "N": 16},
                "forcing": {"family": "example1", "constant": [1.0, 0.0],
                            "amplitude": 1.0, "rate": 1.0, "mode": [1, 1]},
                "initial_norms": {"l2_sq": 0.0, "grad_sq": 0.0, "grad2_sq": 0.0},
            },
        )
        out = tmp_path / "out"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "certificate.json").read_text())
        # profile has unit L2 norm and |k|^2 = 2, so the all-time H1 integral
        # of the fluctuation is (1 + 2) * 1 / (2 * rate)... reported bound uses
        # the H1 norm of the stored profile
        assert doc["inputs"]["abar1_sq_upper"] == pytest.approx(3.0 / 2.0, rel=1e-12)
        assert doc["a_chain"]["a9"] == "inf"

    def test_unit_h1_mode_gives_half(self, tmp_path):
        # unit-H1 fluctuation with rate 1: the reported all-time bound is 1/2
        cfg = write_cfg(
            tmp_path,
            {
                "certificate": {"nu": 1.0, "L": TWO_PI, "T": 6.0, "N": 16},
                "forcing": {"family": "example1", "constant": [1.0, 0.0],
                            "amplitude": 1.0, "rate": 1.0, "mode": [1, 1],
                            "normalize": "h1"},
                "initial_norms": {"l2_sq": 0.0, "grad_sq": 0.0, "grad2_sq": 0.0},
            },
        )
        out = tmp_path / "outh1"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "certificate.json").read_text())
        assert doc["inputs"]["abar1_sq_upper"] == pytest.approx(0.5, rel=1e-12)

    def test_gamma_violation_in_report(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            {
                "certificate": {"nu": 1.0, "L": TWO_PI, "T": 6.0, "N": 8, "gamma": 0.9,
                                "constants_mode": "empirical_calibrated",
                                "calibration_fields": 40},
                "forcing": {"family": "zero"},
                "initial_norms": {"l2_sq": 0.0, "grad_sq": 0.0, "grad2_sq": 0.0},
                "perturbation_norms": {"l2_sq": 0.0},
            },
        )
        out = tmp_path / "out"
        assert main(["certify", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "certificate.json").read_text())
        assert doc["gamma_hypothesis"] == "violated"
        assert main(["report", "--config",
                     write_cfg(tmp_path, {"path": str(out / "certificate.json")}, "r.json"),
                     "--out", str(out)]) == EXIT_OK


class TestStability:
    def _scn_cfg(self, **over):
        scn = {
            "N": 8, "T": 4.0, "windows": 1, "dt": 0.02, "calibration_fields": 40,
        }
        scn.update(over)
        return {"scenario": scn, "perturbation": {"gamma": 1e-4, "seed": 3, "band": [1, 2]}}

    def test_run_and_artifacts(self, tmp_path):
        cfg = write_cfg(tmp_path, self._scn_cfg())
        out = tmp_path / "out"
        rc = main(["stability", "--config", cfg, "--out", str(out), "--svg"])
        assert rc == EXIT_OK
        doc = json.loads((out / "report.json").read_text())
        assert doc["barrier"]["never_exceeded"] is True
        assert (out / "series.csv").exists()
        assert (out / "windows.csv").exists()
        assert (out / "x2_vs_gamma.svg").exists()

    def test_rerun_reproducible_modulo_timestamp(self, tmp_path):
        cfg = write_cfg(tmp_path, self._scn_cfg())
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["stability", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["stability", "--config", cfg, "--out", str(out2)]) == EXIT_OK
        d1 = json.loads((out1 / "report.json").read_text())
        d2 = json.loads((out2 / "report.json").read_text())
        assert d1["content_hash"] == d2["content_hash"]
        d1.pop("timestamp"), d2.pop("timestamp")
        assert d1 == d2
        assert (out1 / "series.csv").read_bytes() == (out2 / "series.csv").read_bytes()

    def test_corrupted_resume_snapshot_exit3(self, tmp_path, capsys):
        # build a valid perturbation snapshot, then corrupt it
        from nsbox.experiments import PerturbationSpec, make_perturbation
        from nsbox.spectral import PeriodicGrid

        g3 = PeriodicGrid(L=TWO_PI, dim=3, N=8)
        u0 = make_perturbation(g3, PerturbationSpec(gamma=1e-4, seed=3, band=(1, 2)))
        snap = tmp_path / "u0.snap"
        write_snapshot(snap, u0)
        blob = bytearray(snap.read_bytes())
        blob[-3] ^= 0x55
        snap.write_bytes(bytes(blob))
        cfg_doc = self._scn_cfg(resume=str(snap))
        cfg = write_cfg(tmp_path, cfg_doc)
        rc = main(["stability", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == EXIT_INTEGRITY
        assert "integrity" in capsys.readouterr().err

    def test_sweep_multiple_scenarios(self, tmp_path):
        doc = {"scenarios": [self._scn_cfg(), self._scn_cfg(T=5.0, dt=0.025)]}
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "sweep"
        assert main(["stability", "--config", cfg, "--out", str(out), "--jobs", "2"]) == EXIT_OK
        for i in range(2):
            doc_i = json.loads((out / f"scenario_{i:03d}" / "report.json").read_text())
            assert doc_i["barrier"]["never_exceeded"] is True
