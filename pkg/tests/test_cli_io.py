import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from affine_mqs.cli import main
from affine_mqs.pipeline import read_trajectory_csv
from affine_mqs.scenario import ScenarioError, dumps_scenario, load_scenario, parse_scenario
from affine_mqs.topology import Formation

MINI = {
    "name": "mini",
    "formation": {"positions": [[0, 0, 0], [4, 0, 0], [0, 4, 0], [1, 1, 0]], "leader_ids": [0, 1, 2]},
    "d0": [1, 1, 0],
    "target": {"d_f": [6, 1, 0], "lambda_f": [1, 0.9, 1]},
    "safety": {"delta": 0.2, "epsilon": 0.1, "r_max": 5},
    "vehicle": {"mass": 1.0, "gains": {"pole": 2.0}},
    "solver": {"dt": 0.005},
}


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def errors_of(data):
    with pytest.raises(ScenarioError) as ei:
        parse_scenario(data)
    return ei.value.errors


def test_minimal_scenario_infers_dimension():
    scn = parse_scenario(copy.deepcopy(MINI))
    assert scn.n == 2 and scn.N == 4
    F = Formation.build(scn.positions, scn.leader_ids)
    assert F.interior_ids == (3,) and set(F.boundary_ids) == {0, 1, 2}


def test_collinear_leaders_rejected():
    d = copy.deepcopy(MINI)
    d["formation"]["positions"] = [[0, 0, 0], [4, 0, 0], [8, 0, 0], [1, 1, 0]]
    d["formation"]["n"] = 2
    assert any("rank condition" in e and e.startswith("formation.leader_ids") for e in errors_of(d))


def test_inconsistent_final_matrix_rejected():
    d = copy.deepcopy(MINI)
    d["target"] = {"d_f": [6, 1, 0], "theta_f": [1, 1, 1, 0, 0, 0, 0, 0, 0],
                   "Q_f": [[1, 0, 0], [0, 2, 0], [0, 0, 1]]}
    assert any(e.startswith("target.Q_f: inconsistent") for e in errors_of(d))
    d["target"]["Q_f"] = np.eye(3).tolist()
    assert parse_scenario(d).Q_f is not None


def test_all_errors_reported_together():
    d = copy.deepcopy(MINI)
    d["safety"] = {"delta": -1, "epsilon": 0.1, "r_max": 5}
    d["solver"] = {"bogus": 1, "rho": 2.0}
    d["formation"]["leader_ids"] = [0, 1, 9]
    errs = errors_of(d)
    for prefix in ("safety.delta", "solver.bogus", "solver.rho", "formation.leader_ids"):
        assert any(e.startswith(prefix) for e in errs), (prefix, errs)


def test_missing_sections():
    errs = errors_of({"formation": {}})
    assert {"target: missing section", "safety: missing section", "vehicle: missing section"} <= set(errs)


def test_round_trip(tmp_path):
    scn = load_scenario(Path(__file__).parents[1] / "scenarios" / "nine_agent.json")
    p = tmp_path / "again.json"
    p.write_text(dumps_scenario(scn))
    again = load_scenario(p)
    assert np.array_equal(again.positions, scn.positions) and again.leader_ids == scn.leader_ids
    assert again.delta == scn.delta and np.array_equal(again.grid.occupied, scn.grid.occupied)
    assert np.allclose(again.gains.position, scn.gains.position)


def test_bad_json_exit_code(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["run", "--scenario", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 2


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    p = write(tmp, MINI)
    rc = main(["run", "--scenario", str(p), "--out", str(tmp / "out"), "--quiet"])
    return rc, tmp / "out", p


def test_run_outputs(full_run):
    rc, out, _ = full_run
    assert rc == 0
    man = json.loads((out / "MANIFEST.json").read_text())
    assert man["status"] == "complete" and man["failed_stage"] is None
    for f in ("trajectory.csv", "deviation.csv", "thrust.csv", "roll.csv", "pitch.csv",
              "pos_x.csv", "pos_y.csv", "pos_z.csv", "audit.json", "topology.json", "plan.json"):
        assert f in man["files"] and (out / f).exists()


def test_csv_layout(full_run):
    _, out, _ = full_run
    with open(out / "deviation.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "agent_0", "agent_1", "agent_2", "agent_3"]
    traj = read_trajectory_csv(out / "trajectory.csv")
    dev = np.array(rows[1:], float)
    assert np.array_equal(dev[:, 0], traj["t"]) and np.array_equal(dev[:, 1:], traj["dev"])
    px = np.loadtxt(out / "pos_x.csv", delimiter=",", skiprows=1)
    assert np.array_equal(px[:, 1:], traj["positions"][:, :, 0])


def test_reaudit_matches(full_run):
    _, out, p = full_run
    first = json.loads((out / "audit.json").read_text())
    assert main(["audit", "--scenario", str(p), "--out", str(out), "--quiet"]) == 0
    again = json.loads((out / "audit.json").read_text())
    assert again["pass"] and again["checks"]["deviation"]["worst"] <= first["checks"]["deviation"]["worst"] + 1e-12


def test_plan_only_writes_no_trajectory(tmp_path):
    p = write(tmp_path, MINI)
    assert main(["run", "--plan-only", "--scenario", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    man = json.loads((tmp_path / "o" / "MANIFEST.json").read_text())
    assert man["completed_stages"][-1] == "plan" and "trajectory.csv" not in man["files"]


def test_fixed_final_time_skips_search_and_can_fail_audit(tmp_path):
    p = write(tmp_path, MINI)
    rc = main(["run", "--tf", "1.5", "--scenario", str(p), "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == 4
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["stages"]["travel_time"]["fixed"] and rep["tf_star"] == 1.5
    assert not json.loads((tmp_path / "o" / "audit.json").read_text())["checks"]["deviation"]["pass"]


def test_failed_stage_manifest(tmp_path):
    d = copy.deepcopy(MINI)
    d["solver"]["tf_cap"] = 2.0
    p = write(tmp_path, d)
    assert main(["solve-time", "--scenario", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == 3
    man = json.loads((tmp_path / "o" / "MANIFEST.json").read_text())
    assert man["status"] == "failed" and man["failed_stage"] == "travel_time"
    assert man["completed_stages"][-1] == "plan" and "cap" in man["error"]


def test_output_dir_from_environment(tmp_path):
    p = write(tmp_path, MINI)
    env = {"AFFINE_MQS_OUT": str(tmp_path / "env_out"), "PATH": "/usr/bin:/bin"}
    r = subprocess.run([sys.executable, "-m", "affine_mqs.cli", "plan", "--scenario", str(p)],
                       env=env, capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "env_out" / "plan.json").exists()
