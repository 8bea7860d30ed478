import json

import pytest

from cardiowave.cli import EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, main

SCENARIO = """
[mesh.slab]
dim = 2
lengths = [0.02, 0.01]
divisions = [10, 5]

[network.tree]
depth = 2
segment_length = 0.004
branch_angle_deg = 30.0
root = [0.002, 0.005, 0.0]
"""


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "scenario.toml"
    p.write_text(SCENARIO)
    return p


class TestGenerators:
    def test_gen_slab_then_mesh_info(self, tmp_path, capsys):
        mesh_path = tmp_path / "slab.txt"
        assert main([
            "gen-slab", "--dim", "2", "--lengths", "0.01", "0.02",
            "--divisions", "4", "8", "--output", str(mesh_path),
        ]) == EXIT_OK
        assert mesh_path.exists()
        assert main(["mesh-info", str(mesh_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "vertices: 45" in out
        assert "cells: 64" in out

    def test_gen_tree_then_network_info(self, tmp_path, capsys):
        net_path = tmp_path / "tree.txt"
        assert main([
            "gen-tree", "--depth", "3", "--segment-length", "0.004",
            "--output", str(net_path),
        ]) == EXIT_OK
        assert main(["network-info", str(net_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "nodes: 15" in out
        assert "terminals: 8" in out

    def test_gen_slab_bad_arguments(self, tmp_path):
        code = main([
            "gen-slab", "--dim", "2", "--lengths", "0.01",
            "--divisions", "4", "8", "--output", str(tmp_path / "x.txt"),
        ])
        assert code == EXIT_VALIDATION

    def test_mesh_info_missing_file(self, tmp_path, capsys):
        assert main(["mesh-info", str(tmp_path / "nope.txt")]) == EXIT_VALIDATION
        assert "error" in capsys.readouterr().err


class TestValidate:
    def test_valid_scenario(self, scenario, capsys):
        assert main(["validate", str(scenario)]) == EXIT_OK
        assert "OK" in capsys.readouterr().out

    def test_invalid_scenario(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text("[solver]\nwhatever = 1\n")
        assert main(["validate", str(p)]) == EXIT_VALIDATION
        assert "whatever" in capsys.readouterr().err


class TestRun:
    def test_run_writes_all_outputs(self, scenario, tmp_path, capsys):
        out_dir = tmp_path / "results"
        assert main(["run", str(scenario), "--output-dir", str(out_dir)]) == EXIT_OK
        for name in (
            "effective_config.toml",
            "activation.vtk",
            "activation.csv",
            "pmj_classification.csv",
            "network_activation.csv",
            "summary.json",
        ):
            assert (out_dir / name).exists(), name
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["iterations"] >= 1
        assert sum(summary["pmj_counts"].values()) == 4
        stdout = capsys.readouterr().out
        assert "TAT:" in stdout and "PMJs:" in stdout

    def test_run_is_deterministic(self, scenario, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", str(scenario), "--output-dir", str(a)]) == EXIT_OK
        assert main(["run", str(scenario), "--output-dir", str(b)]) == EXIT_OK
        for name in ("activation.csv", "pmj_classification.csv",
                     "network_activation.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_mode_override_echoed(self, scenario, tmp_path):
        out_dir = tmp_path / "classic"
        assert main([
            "run", str(scenario), "--mode", "classic",
            "--output-dir", str(out_dir),
        ]) == EXIT_OK
        echoed = (out_dir / "effective_config.toml").read_text()
        assert 'mode = "classic"' in echoed

    def test_n_max_override_echoed(self, scenario, tmp_path):
        out_dir = tmp_path / "nmax"
        assert main([
            "run", str(scenario), "--n-max", "1", "--output-dir", str(out_dir),
        ]) == EXIT_OK
        assert "n_max = 1" in (out_dir / "effective_config.toml").read_text()

    def test_solver_failure_exit_code(self, scenario, tmp_path, capsys):
        # u_init below every stimulus time: nothing ever activates
        p = tmp_path / "broken.toml"
        p.write_text(SCENARIO + "\n[solver]\nu_init = -1.0\nmax_pseudo_steps = 50\n")
        assert main([
            "run", str(p), "--output-dir", str(tmp_path / "o"),
        ]) == EXIT_SOLVER
        assert "solver error" in capsys.readouterr().err

    def test_config_error_exit_code(self, tmp_path, capsys):
        p = tmp_path / "empty.toml"
        p.write_text("")
        assert main(["run", str(p), "--output-dir", str(tmp_path / "o")]) == EXIT_VALIDATION
        assert "error" in capsys.readouterr().err
