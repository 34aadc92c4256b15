"""End-to-end runs of the command line on a tiny road."""

import json
import os

import numpy as np
import pandas as pd
import pytest
import yaml

from lwrinfer.main import main

SMALL_CONFIG = """
grid:
  road_length: 1.0
  n_cells: 20
  t_final: 6.0
  bc_dt: 0.025
ou:
  mu_in_knots: [[0.0, 30.0], [6.0, 35.0]]
  mu_out_knots: [[0.0, 30.0], [6.0, 40.0]]
sampler:
  n_walkers: 6
  truncation: 2
  n_iters: 20
  thin: 5
  snapshot_every: 10
  betas: [1.0, 0.5]
  omega_in: [0.2, 0.3]
  omega_out: [0.1, 0.2]
  seed: 11
data:
  burn_in: 1
twin:
  detector_positions: [0.0, 0.5, 1.0]
  obs_minutes: 7
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_CONFIG)
    return str(path)


def _output(capsys):
    return json.loads(capsys.readouterr().out)


class TestSolveCommand:
    def test_constant_scenario(self, small_config, tmp_path, capsys):
        out = tmp_path / "solve"
        assert main(["-c", small_config, "solve", "--scenario", "constant", "--scenario-args", "30", "-o", str(out)]) == 0
        result = _output(capsys)
        assert result["result"] is True
        assert result["data"]["max_mass_imbalance"] < 1e-9
        field = pd.read_csv(out / "density_field.csv")
        assert list(field.columns)[:2] == ["x_km", "t=0"]
        np.testing.assert_allclose(field.iloc[:, 1:].to_numpy(), 30.0, atol=1e-9)

    def test_missing_boundary_file(self, small_config, tmp_path, capsys):
        code = main(["-c", small_config, "solve", "--ic", str(tmp_path / "ic.csv"), "--bc-in", str(tmp_path / "in.csv"),
                     "--bc-out", str(tmp_path / "out.csv"), "-o", str(tmp_path / "solve")])
        assert code == 2
        result = _output(capsys)
        assert result["result"] is False
        assert result["error"]["type"] == "ConfigurationError"

    def test_wrong_scenario_arguments(self, small_config, tmp_path, capsys):
        assert main(["-c", small_config, "solve", "--scenario", "riemann", "-o", str(tmp_path / "solve")]) == 2


class TestGlobalOptions:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["-c", str(tmp_path / "absent.yaml"), "synthesize", "-o", str(tmp_path / "twin")]) == 2

    def test_workers_must_be_positive(self, small_config, tmp_path, capsys):
        assert main(["-c", small_config, "--workers", "0", "synthesize", "-o", str(tmp_path / "twin")]) == 2

    def test_resume_without_checkpoint(self, small_config, tmp_path, capsys):
        code = main(["-c", small_config, "infer", "--resume", "-o", str(tmp_path / "run")])
        assert code == 2


class TestTwinWorkflow:
    def test_synthesize_infer_diagnose(self, small_config, tmp_path, capsys):
        twin = tmp_path / "twin"
        run = tmp_path / "run"

        assert main(["-c", small_config, "synthesize", "-o", str(twin)]) == 0
        assert _output(capsys)["data"]["n_times"] == 7
        for name in ("observations.csv", "detectors.csv", "ground_truth.json", "bc_in.csv", "bc_out.csv"):
            assert (twin / name).exists()

        observations = str(twin / "observations.csv")
        assert main(["-c", small_config, "infer", "--observations", observations, "-o", str(run)]) == 0
        manifest = _output(capsys)["data"]
        assert manifest["betas"] == [1.0, 0.5]
        for name in ("chains.npz", "config.yaml", "observations.csv", "manifest.json",
                     "bc_snapshots_inlet.csv", "bc_snapshots_outlet.csv"):
            assert (run / name).exists()
        resolved = yaml.safe_load((run / "config.yaml").read_text())
        assert os.path.isabs(resolved["data"]["observations_path"])
        assert os.path.exists(resolved["data"]["observations_path"])
        assert (run / "chains" / "chain_T0_W0.csv").exists()
        trace = pd.read_csv(run / "chains" / "chain_T1_W5.csv")
        assert trace["iteration"].tolist() == [5, 10, 15, 20]

        code = main(["-c", small_config, "infer", "--observations", observations, "--iterations", "30",
                     "--resume", "-o", str(run)])
        assert code == 0
        assert len(pd.read_csv(run / "chains" / "chain_T0_W0.csv")) == 6
        capsys.readouterr()

        assert main(["diagnose", "--run", str(run), "--draws", "2", "--flow", "20"]) == 0
        files = _output(capsys)["data"]["files"]
        assert {"ess.csv", "rhat.csv", "acceptance.csv", "intervals.csv", "fd_curves.csv", "posterior_mean_bc.csv"} <= set(files)
        intervals = pd.read_csv(run / "diagnostics" / "intervals.csv")
        assert intervals["param"].tolist() == ["z", "rho_j", "u", "omega"]
        assert os.path.exists(run / "diagnostics" / "density_pairs.csv")


TWIN_CONFIG = """
grid:
  road_length: 1.0
  n_cells: 20
  t_final: 6.0
  bc_dt: 0.025
  second_order: false
ou:
  mu_in_knots: [[0.0, 30.0], [6.0, 45.0]]
  mu_out_knots: [[0.0, 35.0], [6.0, 50.0]]
sampler:
  n_walkers: 10
  truncation: 2
  n_iters: 2000
  thin: 10
  move_probs: [0.4, 0.2, 0.2, 0.2]
  betas: [1.0, 0.6]
  omega_in: [0.3, 0.4]
  omega_out: [0.3, 0.4]
  seed: 17
data:
  burn_in: 1
twin:
  detector_positions: [0.0, 0.333, 0.667, 1.0]
  obs_minutes: 7
"""


class TestTwinCoverage:
    @pytest.mark.slow
    def test_credible_intervals_cover_true_fd(self, tmp_path, capsys):
        config = tmp_path / "twin.yaml"
        config.write_text(TWIN_CONFIG)
        twin = tmp_path / "twin"
        run = tmp_path / "run"

        assert main(["-c", str(config), "synthesize", "-o", str(twin)]) == 0
        assert _output(capsys)["data"]["n_detectors"] == 4
        assert main(["-c", str(config), "infer", "--observations", str(twin / "observations.csv"), "-o", str(run)]) == 0
        assert main(["diagnose", "--run", str(run), "--burn", "0.5", "--draws", "2"]) == 0
        capsys.readouterr()

        truth = json.loads((twin / "ground_truth.json").read_text())["fd"]
        intervals = pd.read_csv(run / "diagnostics" / "intervals.csv").set_index("param")
        for name in ("z", "rho_j", "u", "omega"):
            assert intervals.loc[name, "lower"] <= truth[name] <= intervals.loc[name, "upper"], name
