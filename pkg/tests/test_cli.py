import subprocess
import sys

import numpy as np
import pytest
import scipy.io

from polystokes.cli import main
from polystokes.driver import CSV_COLUMNS
from polystokes.mesh import read_mesh


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_count_reports_known_sizes(capsys):
    code, out, _ = run_cli(capsys, "count", "--mesh", "trapz:128", "--all", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    keys = lines[0].split(",")
    dofs = [int(line.split(",")[keys.index("dofs")]) for line in lines[1:]]
    assert dofs == [755712, 428032, 280576, 396288, 491520]


def test_count_markdown(capsys):
    code, out, _ = run_cli(capsys, "count", "--mesh", "tri:2", "--scheme", "dg", "--k", "1")
    assert code == 0 and out.startswith("| ") and "dg" in out


def test_run_on_one_element(capsys):
    code, out, _ = run_cli(capsys, "run", "--mesh", "trapz:1", "--k", "2", "--format", "csv", "--no-timings")
    assert code == 0
    header, row = out.splitlines()
    assert header.split(",") == list(CSV_COLUMNS)
    fields = dict(zip(CSV_COLUMNS, row.split(",")))
    assert fields["cells"] == "1" and fields["t_sol_s"] == "-"
    assert float(fields["e_u"]) < 1.0


def test_study_is_reproducible(capsys, tmp_path):
    argv = ["study", "--family", "trapz", "--sizes", "2,4", "--k", "1", "--no-timings"]
    md_path = tmp_path / "s.md"
    csv_path = tmp_path / "s.csv"
    code, first, _ = run_cli(capsys, *argv, "--md", str(md_path), "--csv", str(csv_path))
    assert code == 0
    _, second, _ = run_cli(capsys, *argv)
    assert first == second == md_path.read_text()
    assert csv_path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scheme: dg\nk: 1\nlevels: [1]\nouter:\n  rtol: 1.0e-10\n")
    code, out, _ = run_cli(capsys, "run", "--mesh", "tri:1", "--config", str(cfg), "--format", "csv")
    assert code == 0
    cfg.write_text("scheme: dg\nk: 1\nsmoother:\n  iterations: 2\n")
    with pytest.raises(SystemExit) as exc:
        run_cli(capsys, "run", "--mesh", "tri:1", "--config", str(cfg))
    assert exc.value.code == 2
    assert "smoother.iters" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--mesh", "trapz:1", "--bogus"],
    ["run", "--mesh", "trapz1"],
    ["run", "--mesh", "trapz:1", "--k", "2", "--levels", "3,1"],
    ["study", "--family", "hexagons"],
    ["frobnicate"],
])
def test_bad_input_exits_with_usage(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_mesh_gen_round_trip(capsys, tmp_path):
    out = tmp_path / "g.mesh"
    assert main(["mesh", "gen", "--mesh", "delaunay:3", "--seed", "4", "--out", str(out)]) == 0
    m = read_mesh(out)
    code, text, _ = run_cli(capsys, "count", "--mesh", f"file:{out}", "--format", "csv")
    assert code == 0 and m.n_elements > 0
    cells = int(text.splitlines()[1].split(",")[text.splitlines()[0].split(",").index("cells")])
    assert cells == m.n_elements


def test_export_matrix(capsys, tmp_path):
    mtx, rhs = tmp_path / "a.mtx", tmp_path / "b.txt"
    code, out, _ = run_cli(capsys, "export-matrix", "--mesh", "trapz:2", "--k", "1", "--out", str(mtx), "--rhs", str(rhs))
    assert code == 0 and "wrote" in out
    A = scipy.io.mmread(str(mtx)).tocsr()
    b = np.loadtxt(rhs)
    assert A.shape == (len(b), len(b))
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "polystokes", "--help"], capture_output=True, text=True, check=True)
    assert "export-matrix" in res.stdout
