import math

import numpy as np
import pytest

from conftest import trapezoid_mesh
from polystokes.discretize import assemble_system
from polystokes.driver import (
    CONFIG_KEYS,
    CSV_COLUMNS,
    ConfigError,
    RunConfig,
    StudyRow,
    _exact_scales,
    config_from_mapping,
    convergence_study,
    fill_rates,
    format_csv,
    format_markdown,
    load_config,
    make_mesh,
    mesh_from_spec,
    mesh_size,
    observed_rate,
    parse_int_list,
    run_case,
)
from polystokes.manufactured import ManufacturedCase, error_norms
from polystokes.mesh import DIRICHLET, NEUMANN, write_mesh


def test_exact_fields_at_known_points():
    case = ManufacturedCase()
    u, G, p = case.exact_fields(np.array([[0.0, 0.0], [1.0, np.pi / 2]]))
    np.testing.assert_allclose(u[0], [0.0, 0.0], atol=1e-15)
    assert p[0] == 0.0
    e = math.e
    np.testing.assert_allclose(u[1], [-e, e * np.pi / 2], rtol=1e-14)
    assert p[1] == pytest.approx(2 * e, rel=1e-14)


def test_exact_fields_solve_stokes(rng):
    case = ManufacturedCase()
    x = rng.uniform(-1, 1, (1000, 2))
    G = case.velocity_gradient(x)
    assert np.abs(G[:, 0, 0] + G[:, 1, 1]).max() <= 1e-13
    h = 1e-5
    for a in range(2):
        dx = np.zeros(2)
        dx[a] = h
        fd = (case.velocity(x + dx) - case.velocity(x - dx)) / (2 * h)
        np.testing.assert_allclose(fd, G[:, a, :], atol=1e-8)
    # -Lap u + grad p = 0 and f = 0
    lap = np.zeros((len(x), 2))
    gp = np.zeros((len(x), 2))
    for a in range(2):
        dx = np.zeros(2)
        dx[a] = h
        lap += (case.velocity_gradient(x + dx)[:, a, :] - case.velocity_gradient(x - dx)[:, a, :]) / (2 * h)
        gp[:, a] = (case.pressure(x + dx) - case.pressure(x - dx)) / (2 * h)
    np.testing.assert_allclose(-lap + gp, 0.0, atol=1e-7)
    assert not case.f(x).any()


@pytest.mark.parametrize("scheme,strategy", [("hho-dp", "uncond"), ("dg", None)])
def test_zero_solution_error_is_exact_norm(scheme, strategy):
    # without condensation a zero global vector is the zero discrete field
    case = ManufacturedCase()
    s = assemble_system(trapezoid_mesh(2), scheme, strategy, 2, data=case)
    errs = error_norms(s, np.zeros(s.n), case)
    scales = _exact_scales(case)
    for key in ("e_u", "e_Gu", "e_p"):
        assert errs[key] == pytest.approx(scales[key], rel=1e-10)
    assert errs["e_Du"] == 0.0


def test_observed_rate():
    assert observed_rate(1e-2, 2.5e-3, 0.5, 0.25) == pytest.approx(2.0)
    assert math.isnan(observed_rate(1e-20, 1e-21, 0.5, 0.25))
    assert math.isnan(observed_rate(1e-2, 1e-3, 0.5, 0.5))
    rows = [StudyRow(cells=4, h=1.0, e_u=1.0, e_Gu=1.0, e_p=1.0), StudyRow(cells=16, h=0.5, e_u=0.125, e_Gu=0.25, e_p=0.25)]
    fill_rates(rows)
    assert math.isnan(rows[0].rate_u)
    assert (rows[1].rate_u, rows[1].rate_Gu, rows[1].rate_p) == pytest.approx((3.0, 2.0, 2.0))


def test_mesh_size_conventions():
    m = make_mesh("graded-tri", 4)
    assert mesh_size(m, "graded-tri") == pytest.approx(m.n_elements ** -0.5)
    u = make_mesh("uniform", 4)
    assert mesh_size(u, "uniform") == pytest.approx(np.sqrt(2) * 0.5)


def test_mesh_spec(tmp_path):
    m = mesh_from_spec("trapz:3")
    assert m.n_elements == 9 and m.count_tag(NEUMANN) == 3
    path = tmp_path / "m.txt"
    m = make_mesh("uniform", 2)
    tags = m.face_tag.copy()
    tags[tags == NEUMANN] = DIRICHLET
    plain = m.with_tags(tags)
    write_mesh(plain, path)
    assert mesh_from_spec(f"file:{path}").count_tag(NEUMANN) == 2
    for bad in ("trapz", "trapz:x", "hexagons:4"):
        with pytest.raises(ConfigError):
            mesh_from_spec(bad)


def test_config_validation_and_mapping(tmp_path):
    cfg = config_from_mapping({"smoother": {"iters": 3}, "coarse.kind": "gmres-ilu", "levels": "3,1", "sizes": [2, 4]})
    assert (cfg.smoother_iters, cfg.coarse_kind, cfg.levels, cfg.sizes) == (3, "gmres-ilu", (3, 1), (2, 4))
    lc = cfg.level_config()
    assert lc.degrees == (3, 1) and lc.smoother_iters == 3 and lc.coarse == "gmres-ilu"
    assert RunConfig().strategy == "v-cond"
    with pytest.raises(ConfigError, match="smoother.iters"):
        config_from_mapping({"smoother": {"iter": 3}})
    with pytest.raises(ConfigError):
        RunConfig(k=2, levels=(3, 1))
    with pytest.raises(ConfigError):
        RunConfig(scheme="dg", k=0)
    with pytest.raises(ValueError):
        RunConfig(scheme="hho-dp", strategy="w-cond")
    assert parse_int_list("6, 3,1") == (6, 3, 1)
    path = tmp_path / "c.yaml"
    path.write_text("scheme: hho-dp\nk: 2\nouter:\n  rtol: 1.0e-10\n")
    cfg = config_from_mapping(load_config(path))
    assert (cfg.k, cfg.outer_rtol) == (2, 1e-10)
    assert "outer.maxit" in CONFIG_KEYS


def test_run_case_records_solver_data():
    cfg = RunConfig(k=2, sizes=(2,))
    row = run_case(make_mesh("trapz", 2), cfg)
    assert row.converged and not row.error
    assert row.its <= 10 and row.its_coarse == 0
    assert row.dofs > 0 and row.mnzs > 0 and row.t_asm_s >= 0
    assert row.e_u < 1e-1


def test_run_case_reports_non_convergence():
    row = run_case(make_mesh("trapz", 4), RunConfig(k=2, outer_maxit=1, outer_rtol=1e-14))
    assert not row.converged and "not converged" in row.error
    md = format_markdown([row], timings=False)
    assert "1*" in md and "not converged" in md


def test_study_rates_and_formats():
    cfg = RunConfig(k=1, sizes=(2, 4, 8), timings=False)
    report = convergence_study(cfg)
    rows = report.rows
    assert [r.cells for r in rows] == [4, 16, 64]
    # the reported velocity is the degree k+1 reconstruction
    assert rows[-1].rate_u == pytest.approx(3.0, abs=0.4)
    assert rows[-1].rate_Gu == pytest.approx(2.0, abs=0.4)
    csv_text = report.to_csv()
    lines = csv_text.splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 4
    assert all(line.split(",")[-2:] == ["-", "-"] for line in lines[1:])
    assert convergence_study(cfg).to_csv() == csv_text
    md = report.to_markdown().splitlines()
    assert md[0].startswith("|") and set(md[1]) <= set("|-:")
    assert format_csv(rows, True).splitlines()[1].split(",")[-1] != "-"
