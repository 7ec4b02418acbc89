import filecmp
import json
import sys

import pytest

from hslab import cli

# operations each module exposes; every one must be reachable from some subcommand
MODULE_OPERATIONS = {
    "bubbles": {
        "critical_exponent", "cns", "bubble_eval", "best_constant_quadrature", "normalization_check",
        "gamma_integral_identity", "rayleigh_ratio_identity", "pde_residual",
    },
    "geometry": {"sphere_moment2", "sphere_moment4", "christoffel", "curvature_identities", "cartan_residual"},
    "radial_solver": {
        "energy", "minimize", "sweep_threshold", "pointwise_bound_check", "gradient_bound_check",
        "green_profile_check",
    },
    "pohozaev": {
        "pohozaev_terms", "calpha_asymptotic", "log_moment_lemma", "dalpha_asymptotic", "n3_bound_check",
    },
    "green_mass": {"solve_green", "mass", "mass_zero_root"},
    "cli": {"run"},
}

COVERAGE_RUNS = [
    {"command": "constants", "n": 4, "s": 1.0},
    {"command": "bubble-verify", "n": 5, "s": 1.0},
    {"command": "sphere-moments", "n": 4},
    {"command": "curvature", "n": 4},
    {"command": "solve", "n": 4, "s": 1.0, "a": 1.0},
    {"command": "solve", "n": 4, "s": 1.0, "mu_ladder": "0.1,0.05"},
    {"command": "sweep", "n": 4, "s": 1.0, "a_grid": "0.5,1.0"},
    {"command": "pohozaev", "n": 4, "s": 1.0},
    {"command": "pohozaev-asymptotics", "n": 4, "s": 1.0, "manifold": "sphere:1"},
    {"command": "pohozaev-asymptotics", "n": 3, "s": 0.5, "mu_ladder": "1e-2,1e-3"},
    {"command": "mass", "h": 1.0},
    {"command": "mass-root"},
]


def _cfg(**kw):
    cfg = dict(cli.DEFAULTS)
    cfg.update(kw)
    return cli.validate(cfg)


def test_every_module_operation_is_reachable_from_a_subcommand():
    reached = set()

    def tracer(frame, event, arg):
        if event == "call":
            code = frame.f_code
            fn = code.co_filename.replace("\\", "/")
            if "/hslab/" in fn:
                reached.add((fn.rsplit("/", 1)[-1][:-3], code.co_name))

    sys.setprofile(tracer)
    try:
        for kw in COVERAGE_RUNS:
            cli.run(_cfg(**kw))
    finally:
        sys.setprofile(None)
    missing = sorted(f"{mod}.{op}" for mod, ops in MODULE_OPERATIONS.items() for op in ops if (mod, op) not in reached)
    assert not missing, f"operations not reached by any subcommand: {missing}"
    assert set(kw["command"] for kw in COVERAGE_RUNS) | {"acceptance"} == set(cli.COMMANDS)


def test_constants_report(tmp_path, capsys):
    out = tmp_path / "c"
    assert cli.main(["constants", "--n", "4", "--s", "1", "--out", str(out)]) == cli.EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["results"]["cns_fraction"] == "1/6"
    assert (out / "constants.csv").read_text().startswith("name,value\n")
    assert "timing" not in rep and (out / "timing.json").exists()
    assert "checks passed" in capsys.readouterr().out


def test_bubble_verify_passes(tmp_path):
    assert cli.main(["bubble-verify", "--n", "5", "--s", "1", "--out", str(tmp_path)]) == cli.EXIT_OK


def test_identical_config_gives_identical_bytes(tmp_path):
    args = ["sphere-moments", "--n", "3", "--seed", "7"]
    cli.main(args + ["--out", str(tmp_path / "a")])
    cli.main(args + ["--out", str(tmp_path / "b")])
    for name in ("report.json", "moments.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_seed_changes_monte_carlo_column(tmp_path):
    cli.main(["sphere-moments", "--n", "3", "--seed", "1", "--out", str(tmp_path / "a")])
    cli.main(["sphere-moments", "--n", "3", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "moments.csv").read_text() != (tmp_path / "b" / "moments.csv").read_text()


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--a-grid", ""],
        ["sweep", "--a-grid", "2,1"],
        ["solve", "--n", "4", "--manifold", "torus", "--a", "1"],
        ["constants", "--n", "2"],
        ["solve", "--mu-ladder", "0.1,-0.1"],
        ["acceptance", "--criteria", "99"],
        ["curvature", "--n", "4", "--manifold", "sphere:1", "--config", "/nonexistent.json"],
    ],
)
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 4, "colour": "blue"}))
    assert cli.main(["constants", "--config", str(cfg), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "colour: unknown key" in capsys.readouterr().err


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 5, "s": 0.25, "mu-ladder": "0.1,0.2"}))
    out = tmp_path / "o"
    cli.main(["constants", "--config", str(cfg), "--s", "1", "--out", str(out)])
    echo = json.loads((out / "report.json").read_text())["config"]
    assert echo["n"] == 5 and echo["s"] == 1.0 and echo["mu_ladder"] == [0.1, 0.2]


def test_failing_checks_exit_1(tmp_path):
    # the round sphere has a quartic Cartan residual, so the cubic-order check fails
    assert cli.main(["curvature", "--n", "4", "--out", str(tmp_path)]) == cli.EXIT_FAIL


def test_numerical_failure_becomes_failed_check(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sweep", "--n", "4", "--s", "1", "--a-grid", "0.5,1.0", "--out", str(out)]) == cli.EXIT_FAIL
    rep = json.loads((out / "report.json").read_text())
    assert rep["checks"][0]["name"] == "evaluation"
    assert "ThresholdBracketError" in rep["checks"][0]["note"]


def test_parse_grid_forms():
    assert cli.parse_grid("0:1:3", "g") == [0.0, 0.5, 1.0]
    assert cli.parse_grid("1,2.5", "g") == [1.0, 2.5]
    with pytest.raises(cli.ConfigError, match="empty grid"):
        cli.parse_grid(" ", "g")
    with pytest.raises(cli.ConfigError):
        cli.parse_grid("1:2", "g")


def test_help_documents_csv_columns(capsys):
    with pytest.raises(SystemExit):
        cli.main(["solve", "--help"])
    assert "solve.csv: a, lambda, mu" in capsys.readouterr().out


def test_acceptance_subset(tmp_path, capsys):
    out = tmp_path / "acc"
    assert cli.main(["acceptance", "--criteria", "1,3", "--out", str(out)]) == cli.EXIT_OK
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("[PASS]") or l.startswith("[FAIL]")]
    assert len(lines) == 2
    rep = json.loads((out / "report.json").read_text())
    names = [c["name"] for c in rep["checks"]]
    assert len(names) == len(set(names))
