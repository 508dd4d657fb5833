import csv
import json
import math

import numpy as np
import pytest

from thrustmip import cli, harness
from thrustmip.scenario import BUNDLED, ScenarioError, bundled_path, load_scenario
from thrustmip.truth import SimulationAbort

SHORT = ["scenario.t_end=0.3", "scheduler.t_mpc_enable=0.1", "scenario.settle_time=0.05"]


def _write(tmp_path, text, name="s.scenario"):
    path = tmp_path / name
    path.write_text(text)
    return path


# scenario files --------------------------------------------------------------------------

@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load(name):
    sc = load_scenario(bundled_path(name))
    assert sc.name == name
    assert sc.plant == "compliant"
    assert sc.mpc.Q == (10.0, 10000.0, 5.0, 25.0)
    assert sc.mpc.R == (5.0, 0.5)


def test_scenario_sections_and_defaults(tmp_path):
    path = _write(tmp_path, """
[scenario]
t_end = 1.0   # seconds
[params]
beta_deg = 15
[mpc]
n_h = 8
""")
    sc = load_scenario(path)
    assert sc.name == "s"
    assert sc.plant == "reduced"
    assert sc.params.beta == pytest.approx(math.radians(15.0))
    assert sc.mpc.n_h == 8
    assert sc.n_steps == 200
    assert sc.slip_threshold == pytest.approx(5.0 * sc.ground.v_reg)


def test_thrust_disable_forces_zero_thrust_bounds(tmp_path):
    path = _write(tmp_path, "[scheduler]\nthrust_enable = false\n[reference]\nthrust_allocation = 5\n")
    sc = load_scenario(path)
    assert sc.mpc.u_max[1] == 0.0 and sc.mpc.u_min[1] == 0.0
    assert sc.profile.thrust_allocation == 0.0


@pytest.mark.parametrize("text,match", [
    ("[scenario]\nplant = rigid\n", "plant"),
    ("[scenario]\nbogus = 1\n", "unknown"),
    ("[mpc]\nweights = 1\n", "unknown key"),
    ("[mpc]\nn_h = 0\n", "n_h"),
    ("[scenario]\nt_end = 1.0\ncontrol_dt = 0.003\n", "divide"),
    ("[scenario]\nplant = compliant\ndt_physics = 1e-3\n", "dt_physics"),
    ("[mpc]\ndt = 0.01\n", "control period"),
    ("[params]\nm_b = -1\n", "parameters"),
    ("[scenario]\nparams = missing.params\n", "does not exist"),
    ("[initial]\ntheta = up\n", "initial"),
    ("[scheduler]\nthrust_enable = maybe\n", "boolean"),
    ("[ground]\nk_ground = -5\n", "ground"),
    ("no section header\n", "no section"),
])
def test_scenario_errors(tmp_path, text, match):
    with pytest.raises(ScenarioError, match=match):
        load_scenario(_write(tmp_path, text))


def test_missing_scenario_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.scenario")


def test_overrides(tmp_path):
    path = bundled_path("incline15_mpc")
    sc = load_scenario(path, overrides=["mpc.n_h=5", "params.beta_deg=20", "reference.cruise_speed=2"],
                       plant="reduced", output_dir=tmp_path)
    assert sc.mpc.n_h == 5
    assert sc.params.beta == pytest.approx(math.radians(20.0))
    assert sc.profile.cruise_speed == 2.0
    assert sc.plant == "reduced"
    assert sc.output_dir == tmp_path
    with pytest.raises(ScenarioError, match="section.key"):
        load_scenario(path, overrides=["n_h=5"])
    with pytest.raises(ScenarioError):
        load_scenario(path, overrides=["mpc.n_h=abc"])


# runs ------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def flat_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("flat")
    sc = load_scenario(bundled_path("flat_balance"), overrides=SHORT, output_dir=out)
    return harness.run_scenario(sc)


def test_trajectory_header_and_schema(flat_run):
    path = flat_run.out_dir / harness.TRAJECTORY
    with open(path) as fh:
        assert fh.readline().rstrip("\n") == harness.SCHEMA_LINE
        header = next(csv.reader(fh))
    assert tuple(header[:19]) == harness.BASE_COLUMNS
    assert tuple(header[19:21]) == ("v_slip", "penetration")
    assert tuple(header) == harness.COLUMNS
    cols = harness.read_trajectory(path)
    assert len(cols["t"]) == 60
    np.testing.assert_allclose(np.diff(cols["t"]), 0.005, atol=1e-12)
    assert set(cols["active_controller"]) == {"pid", "mpc"}
    pid_rows = [i for i, a in enumerate(cols["active_controller"]) if a == "pid"]
    assert all(cols["solver_status"][i] == "" for i in pid_rows)
    assert np.all(np.isnan(cols["J"][pid_rows]))
    assert np.all(np.isfinite(cols["h1_sim"]))
    # solve times live in their own file unless requested
    assert np.all(np.isnan(cols["solve_ms"]))
    with open(flat_run.out_dir / harness.TIMING) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == flat_run.metrics.solve_ms["count"] == 40


def test_run_artifacts(flat_run):
    out = flat_run.out_dir
    for name in ("run.json", "metrics.json", "series/states.csv", "series/inputs.csv",
                 "series/constraints.csv", "series/cost.csv"):
        assert (out / name).exists(), name
    man = json.loads((out / "run.json").read_text())
    assert man["plant"] == "compliant"
    assert man["window_start"] == pytest.approx(0.15)
    assert man["aborted"] is None


def test_metrics_recompute_from_csv(flat_run):
    again = harness.metrics_from_dir(flat_run.out_dir)
    assert again.to_dict() == flat_run.metrics.to_dict()
    stored = json.loads((flat_run.out_dir / harness.METRICS).read_text())
    assert stored == json.loads(json.dumps(flat_run.metrics.to_dict()))
    m = flat_run.metrics
    assert m.mpc_steps == 40
    assert m.slip_events == 0
    assert m.max_h1_sim < 0.0


def test_csv_roundtrip_is_exact(flat_run):
    cols = harness.read_trajectory(flat_run.out_dir / harness.TRAJECTORY)
    for k, row in enumerate(flat_run.rows):
        for name in ("theta", "u_m", "h1_model", "h2_sim"):
            assert cols[name][k] == row[name]


def test_runs_are_byte_identical(tmp_path):
    texts = []
    for i in range(2):
        sc = load_scenario(bundled_path("flat_balance"), overrides=SHORT,
                           plant="reduced", output_dir=tmp_path / str(i))
        harness.run_scenario(sc)
        texts.append((tmp_path / str(i) / harness.TRAJECTORY).read_bytes())
    assert texts[0] == texts[1]


def test_compare_contact_single_run(flat_run):
    rep = harness.compare_contact(flat_run.out_dir)
    assert rep["window_start"] == pytest.approx(0.15)
    assert rep["samples"] == 30
    for key in ("h1", "h2", "f_gx", "f_gn"):
        assert set(rep[key]) == {"rms_rel", "max_rel", "rms_abs"}
    assert rep["passed"] == (rep["h1"]["rms_rel"] < 0.05 and rep["h2"]["rms_rel"] < 0.05)


def test_compare_contact_errors(flat_run, tmp_path):
    sc = load_scenario(bundled_path("flat_balance"), overrides=SHORT, plant="reduced",
                       output_dir=tmp_path / "reduced")
    harness.run_scenario(sc)
    with pytest.raises(harness.CompareError, match="simulator"):
        harness.compare_contact(tmp_path / "reduced")
    # reduced model channels against the compliant run's simulator channels
    rep = harness.compare_contact(tmp_path / "reduced", flat_run.out_dir)
    assert rep["samples"] == 30
    sc = load_scenario(bundled_path("flat_balance"), overrides=["scenario.t_end=0.2"],
                       plant="reduced", output_dir=tmp_path / "short")
    harness.run_scenario(sc)
    with pytest.raises(harness.CompareError, match="time grids"):
        harness.compare_contact(tmp_path / "short", flat_run.out_dir)
    with pytest.raises(harness.CompareError, match="window"):
        harness.compare_contact(flat_run.out_dir, t_from=99.0)
    with pytest.raises(FileNotFoundError):
        harness.compare_contact(tmp_path)


def test_fall_writes_partial_log_then_aborts(tmp_path):
    sc = load_scenario(bundled_path("flat_balance"),
                       overrides=["initial.theta_offset=1.4", "pid.kp_pitch=0", "pid.kd_pitch=0",
                                  "pid.ki_pitch=0", "scenario.t_end=2.0"],
                       plant="reduced", output_dir=tmp_path)
    with pytest.raises(SimulationAbort, match="ground"):
        harness.run_scenario(sc)
    man = json.loads((tmp_path / "run.json").read_text())
    assert man["aborted"].startswith("nonphysical")
    m = harness.metrics_from_dir(tmp_path)
    assert 0 < m.n_steps < 400


# CLI -------------------------------------------------------------------------------------

def test_cli_run_metrics_compare(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["run", "flat_balance", "--out", str(out), "--plant", "reduced"]
    for o in SHORT:
        args += ["--override", o]
    assert cli.main(args) == 0
    assert (out / harness.TRAJECTORY).exists()
    capsys.readouterr()
    assert cli.main(["metrics", str(out)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["n_steps"] == 60
    # reduced run: no simulator channels to compare
    assert cli.main(["compare-contact", str(out)]) == 1


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.scenario")]) == 1
    assert cli.main(["run", "flat_balance", "--override", "mpc.n_h=-1"]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "flat_balance", "--plant", "rigid"])
    assert exc.value.code == 1
    assert cli.main(["metrics", str(tmp_path)]) == 1
    code = cli.main(["run", "flat_balance", "--plant", "reduced", "--out", str(tmp_path / "fall"),
                     "--override", "initial.theta_offset=1.4", "--override", "pid.kp_pitch=0",
                     "--override", "pid.kd_pitch=0", "--override", "pid.ki_pitch=0",
                     "--override", "scenario.t_end=2.0"])
    assert code == 3


def test_cli_solver_fatal_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise harness.SolverFatal("singular")

    monkeypatch.setattr(harness, "run_scenario", boom)
    assert cli.main(["run", "flat_balance", "--out", str(tmp_path)]) == 2
