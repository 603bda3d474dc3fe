import copy
import csv
import json

import numpy as np
import pytest

from varietyfd.cli import main
from varietyfd.errors import ConfigError, NumericalError
from varietyfd.harness import (
    ConvergenceReport,
    ConvergenceRow,
    atomic_write,
    compute_linf_error,
    emit_plot_data,
    observed_order,
    run_convergence,
    solve,
)
from varietyfd.problem import bundled_configs, load_problem, problem_from_dict

BASE = {
    "schema_version": 1,
    "name": "circle_test",
    "dimension": 1,
    "polynomial": "x^2 + y^2 - 1",
    "c": "1",
    "f": "2*x",
    "exact_solution": "x",
    "seed": [1, 0],
    "defaults": {"method": "local", "stencil": 3, "Ns": [40, 80]},
}


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


# ---------------------------------------------------------------- configs

def test_bundled_configs_load():
    names = bundled_configs()
    assert {"circle_manufactured", "lemniscate", "cardioid", "horn_torus", "sphere",
            "ellipse_global_a50", "ellipsoid_a10", "rational_circle"} <= set(names)
    for name in names:
        p = load_problem(name)
        assert p.name == name
        assert p.is_curve == (p.dimension == 1)


def test_lemniscate_intro_exact_solution_is_consistent():
    # rational c and f = pi x: u = x must solve it; check through a solve
    sol = solve(load_problem("lemniscate_intro"), 320, "local", 3)
    assert sol.linf_error < 1e-3


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.pop("polynomial"), "polynomial"),
    (lambda d: d.update(dimension=3), "dimension"),
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d.update(polynomial="x^2 + w"), "unknown"),
    (lambda d: d.update(c="exp(x)"), "c"),
    (lambda d: d.pop("exact_solution"), "exact"),
    (lambda d: d.update(seed=[1, 0, 0]), "seed"),
    (lambda d: d.update(singularities=[{"location": [1.0, 0.0]}]), "singular"),
])
def test_config_errors(mutate, match):
    data = copy.deepcopy(BASE)
    mutate(data)
    with pytest.raises(ConfigError, match=match):
        problem_from_dict(data)


def test_surface_needs_generator():
    data = dict(BASE, dimension=2, polynomial="x^2 + y^2 + z^2 - 1", exact_solution="x")
    data.pop("seed")
    with pytest.raises(ConfigError, match="generator"):
        problem_from_dict(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_problem(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_problem(bad)


# ---------------------------------------------------------------- harness

def test_observed_order():
    assert observed_order(4.0, 1.0, 10, 20) == pytest.approx(2.0)
    assert observed_order(9.0, 1.0, 10, 30) == pytest.approx(2.0)


def test_run_convergence_exact(tmp_path):
    rep = run_convergence(problem_from_dict(BASE), Ns=[40, 80, 160])
    assert rep.Ns == [40, 80, 160]
    assert rep.orders[0] is None
    assert all(o == pytest.approx(2.0, abs=0.05) for o in rep.orders[1:])
    table = rep.format_table()
    assert "L_inf Error" in table and "Order" in table
    path = rep.write_csv(tmp_path / "conv.csv")
    rows = list(csv.DictReader(open(path)))
    assert [int(r["N"]) for r in rows] == [40, 80, 160]
    assert rep.to_dict()["problem"] == "circle_test"


def test_run_convergence_records_failures():
    # N = 4 is below the mesh minimum: recorded as a failed row, not raised
    rep = run_convergence(problem_from_dict(BASE), Ns=[4, 40, 80])
    assert rep.rows[0].status == "failed" and rep.rows[0].error is None
    assert rep.rows[1].order is None and rep.rows[2].order is not None
    assert "failed" in rep.format_table()


def test_refined_reference_interpolates_local_nodes():
    problem = load_problem("ellipse_a50")
    sol = solve(problem, 160, "local", 3)
    err = compute_linf_error(sol, "refined", problem)
    assert err == pytest.approx(2.459e-3, rel=0.01)


def test_exact_reference_requires_exact_solution():
    sol = solve(load_problem("ellipse_a50"), 160, "local", 3)
    with pytest.raises(ConfigError):
        compute_linf_error(sol, "exact")


def test_surface_reference_requires_nested_grids():
    problem = load_problem("sphere")
    coarse, other = solve(problem, 20), solve(problem, 30)
    with pytest.raises(NumericalError, match="nest"):
        compute_linf_error(coarse, other, problem)
    assert compute_linf_error(coarse, coarse, problem) == 0.0


def test_surface_method_restrictions():
    with pytest.raises(ConfigError):
        solve(load_problem("sphere"), 20, "global")
    with pytest.raises(ConfigError):
        solve(load_problem("sphere"), 20, stencil=5)


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"

    def boom(p):
        open(p, "w").write("half")
        raise RuntimeError("disk full")

    with pytest.raises(RuntimeError):
        atomic_write(target, boom)
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []


def test_emit_plot_data_curve_and_surface(tmp_path):
    lem = load_problem("lemniscate")
    files = emit_plot_data(solve(lem, 80, "local", 3), lem, tmp_path)
    manifest = json.load(open(files["manifest"]))
    assert manifest["problem"] == "lemniscate"
    assert len(manifest["singular_values"]) == 1
    sph = load_problem("sphere")
    files = emit_plot_data(solve(sph, 20), sph, tmp_path, system_json=True)
    assert {"solution", "mesh", "adjacency", "system", "manifest"} <= set(files)
    assert all(p.exists() for p in files.values())


def test_report_dataclasses():
    rep = ConvergenceReport("p", "local", 3, "exact", [ConvergenceRow(10, 1e-2), ConvergenceRow(20, 2.5e-3, 2.0)])
    assert rep.errors == [1e-2, 2.5e-3] and rep.orders == [None, 2.0]


# ---------------------------------------------------------------- CLI

def test_cli_solve(tmp_path, capsys):
    cfg = write_cfg(tmp_path, BASE)
    code = main(["solve", "--config", str(cfg), "--n", "80", "--out", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "L_inf error vs exact reference" in out
    sol = list(csv.DictReader(open(tmp_path / "o" / "circle_test_N80_solution.csv")))
    assert len(sol) == 80
    assert max(float(r["abs_error"]) for r in sol) < 1e-3


def test_cli_mesh_and_converge(tmp_path, capsys):
    cfg = write_cfg(tmp_path, BASE)
    assert main(["mesh", "--config", str(cfg), "--n", "40", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "circle_test_N40_mesh.csv").exists()
    assert main(["converge", "--config", str(cfg), "--ns", "40,80", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "2.0" in out
    assert (tmp_path / "circle_test_local3_convergence.csv").exists()


def test_cli_surface_mesh(tmp_path):
    assert main(["mesh", "--config", "sphere", "--n", "20", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sphere_N20_adjacency.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = dict(BASE, polynomial="x^2 + w")
    assert main(["solve", "--config", str(write_cfg(tmp_path, bad)), "--n", "40"]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["converge", "--config", str(write_cfg(tmp_path, BASE)), "--ns", "a,b"]) == 2


def test_cli_numerical_error_exit_code(tmp_path, capsys):
    # 5-point stencils on a coarse a = 50 ellipse leave the tangential chart
    cfg = dict(BASE, polynomial="x^2 + 50*y^2 - 1", exact_solution="x")
    path = write_cfg(tmp_path, cfg)
    code = main(["solve", "--config", str(path), "--n", "16", "--stencil", "5",
                 "--out", str(tmp_path)])
    assert code == 3
    assert "StencilError" in capsys.readouterr().err
    code = main(["converge", "--config", str(path), "--ns", "16,32", "--stencil", "5",
                 "--out", str(tmp_path)])
    assert code == 3


def test_cli_refined_reference_on_exact_config(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    assert main(["solve", "--config", str(cfg), "--n", "40", "--reference", "refined",
                 "--out", str(tmp_path)]) == 2


def test_cli_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_solution_values_round_trip(tmp_path):
    cfg = write_cfg(tmp_path, BASE)
    main(["solve", "--config", str(cfg), "--n", "40", "--out", str(tmp_path)])
    rows = list(csv.DictReader(open(tmp_path / "circle_test_N40_solution.csv")))
    sol = solve(problem_from_dict(BASE), 40)
    np.testing.assert_array_equal([float(r["u"]) for r in rows], sol.values)
