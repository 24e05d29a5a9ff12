import csv
import json
from pathlib import Path

import numpy as np
import pytest

from levelpinn.cli import (
    RunConfig,
    UsageError,
    main,
    parse_config_file,
    preset,
)

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


# ------------------------------------------------------------ config parsing

def test_preset_fields_match_reference_settings():
    cfg = preset("fisher_branch")
    assert cfg.grid_n == 75
    assert cfg.width == 30
    assert cfg.lr == 5e-3
    assert cfg.criteria == {"z_f": 5e-3, "b_f": 1e-2, "r_f": 1e-2}
    cfg2 = preset("elastic_pipe")
    assert cfg2.width == 50 and cfg2.lr == 1e-3
    assert cfg2.criteria["b_f"] == 5e-3 and cfg2.criteria["z_f"] == 2.5e-3


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[run]\n"
        "problem = disk2d\n"
        "method = penalty\n"
        "grid_n = 40\n"
        "seed = 7\n"
        "out = results\n"
        "[network]\n"
        "width = 10\n"
        "[train]\n"
        "lr = 1e-3\n"
        "epochs = 50\n"
        "[method_params]\n"
        "beta = 100\n"
    )
    cfg = parse_config_file(path)
    assert cfg.problem == "disk2d"
    assert cfg.method == "penalty"
    assert cfg.grid_n == 40
    assert cfg.seed == 7
    assert cfg.width == 10
    assert cfg.hidden_layers == 2  # preset default preserved
    assert cfg.method_params == {"beta": 100.0}


def test_config_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nproblem = disk2d\nfrobnicate = 1\n")
    with pytest.raises(UsageError):
        parse_config_file(path)


def test_config_unknown_problem_rejected():
    with pytest.raises(UsageError):
        RunConfig(problem="mystery", method="al",
                  criteria={"b_f": 1e-2}).validate()


def test_criteria_only_for_al():
    with pytest.raises(UsageError):
        RunConfig(problem="disk2d", method="penalty",
                  criteria={"b_f": 1e-2}).validate()
    with pytest.raises(UsageError):
        RunConfig(problem="disk2d", method="al").validate()


def test_unknown_problem_exit_code(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nproblem = warpdrive\n")
    assert main(["solve", "--config", str(path)]) == 2


def test_missing_config_exit_code():
    assert main(["solve"]) == 2


# ------------------------------------------------------------ geom-check

def test_geom_check_sphere(tmp_path):
    rc = main(["geom-check", "--preset", "sphere_check", "--out", str(tmp_path)])
    assert rc == 0
    report = json.loads((tmp_path / "geometry.json").read_text())
    assert report["n_interior"] > 0
    assert report["normal_closure"] <= 1e-3
    assert abs(report["volume_estimate"] - 4 / 3 * np.pi * 0.4**3) < 0.01
    mesh_text = (tmp_path / "mesh.vtk").read_text().splitlines()
    assert mesh_text[0].startswith("# vtk DataFile")
    assert "DATASET POLYDATA" in mesh_text[3]


# ------------------------------------------------------------ solve artifacts

@pytest.fixture(scope="module")
def small_solve(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    cfg_path = out / "run.ini"
    cfg_path.write_text(
        "[run]\n"
        "problem = disk2d\n"
        "method = penalty\n"
        "grid_n = 30\n"
        "seed = 1\n"
        f"out = {out / 'artifacts'}\n"
        "[network]\nwidth = 8\n"
        "[train]\nlr = 5e-3\nepochs = 40\n"
        "[method_params]\nbeta = 10\n"
    )
    rc = main(["solve", "--config", str(cfg_path)])
    return rc, out / "artifacts", cfg_path


def test_solve_exit_code(small_solve):
    rc, _, _ = small_solve
    assert rc == 0


def test_history_row_count_contract(small_solve):
    _, art, _ = small_solve
    with open(art / "history.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 40
    assert set(rows[0]) == {"epoch", "outer_iter", "objective", "grad_norm",
                            "boundary_error", "interior_error", "beta_max"}
    assert float(rows[0]["beta_max"]) == 10.0


def test_summary_schema(small_solve):
    _, art, _ = small_solve
    summary = json.loads((art / "summary.json").read_text())
    for key in ("problem", "method", "interior_error", "boundary_error",
                "epochs", "wall_time_seconds", "converged", "config"):
        assert key in summary
    assert summary["problem"] == "disk2d"
    assert summary["epochs"] == 40
    assert summary["config"]["seed"] == 1


def test_fields_vtk_schema(small_solve):
    _, art, _ = small_solve
    lines = (art / "fields.vtk").read_text().splitlines()
    assert "DATASET UNSTRUCTURED_GRID" in lines[3]
    names = {ln.split()[1] for ln in lines if ln.startswith("SCALARS")}
    assert {"u_hat", "u_exact", "abs_error"} <= names


def test_solve_deterministic_summary(tmp_path):
    def run(out):
        cfg = tmp_path / "d.ini"
        cfg.write_text(
            "[run]\nproblem = disk2d\nmethod = penalty\ngrid_n = 25\nseed = 3\n"
            f"out = {out}\n[network]\nwidth = 6\n[train]\nepochs = 15\n"
            "[method_params]\nbeta = 5\n"
        )
        assert main(["solve", "--config", str(cfg)]) == 0
        payload = json.loads(Path(out, "summary.json").read_text())
        del payload["wall_time_seconds"]
        del payload["config"]["output_dir"]
        return json.dumps(payload, sort_keys=True)

    assert run(tmp_path / "a") == run(tmp_path / "b")


def test_solve_al_small(tmp_path):
    cfg = tmp_path / "al.ini"
    cfg.write_text(
        "[run]\nproblem = disk2d\nmethod = al\ngrid_n = 25\nseed = 0\n"
        f"out = {tmp_path / 'art'}\n[network]\nwidth = 8\n"
        "[train]\nlr = 5e-3\nmax_epochs = 60\n"
        "[criteria]\nz_f = 5e-3\nb_f = 1e-2\nr_f = 1e-2\n"
    )
    rc = main(["solve", "--config", str(cfg)])
    # tiny budget: safeguard fires, reported distinctly via exit code 4
    assert rc == 4
    summary = json.loads((tmp_path / "art" / "summary.json").read_text())
    assert summary["converged"] is False
    assert summary["stop_reason"] == "max_epochs"


# ------------------------------------------------------------ bar1d

def test_bar1d_artifacts(tmp_path):
    rc = main(["bar1d", "--preset", "bar1d", "--epochs", "30",
               "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "solutions.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1001
    assert float(rows[0]["u_exact"]) == pytest.approx(0.0, abs=1e-8)
    assert float(rows[-1]["u_exact"]) == pytest.approx(0.0, abs=1e-8)
    with open(tmp_path / "losses.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 30
    assert {"epoch", "strong_loss", "weak_loss"} == set(rows[0])


# ------------------------------------------------------------ study2d

@pytest.mark.slow
def test_study2d_smoke(tmp_path):
    cfg = tmp_path / "study.ini"
    cfg.write_text(
        "[run]\nproblem = disk2d\nmethod = al\ngrid_n = 30\nseed = 0\n"
        f"out = {tmp_path}\n[network]\nwidth = 8\n"
        "[train]\nlr = 5e-3\nepochs = 120\n"
        "[criteria]\nz_f = 5e-3\nb_f = 1e-2\nr_f = 1e-2\n"
    )
    rc = main(["study2d", "--config", str(cfg)])
    assert rc == 0
    with open(tmp_path / "table.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["method"] for r in rows] == [
        "penalty_beta1", "penalty_beta100", "lra", "sa", "minmax", "al",
    ]
    for r in rows:
        assert np.isfinite(float(r["interior_error"]))
        assert np.isfinite(float(r["boundary_error"]))
