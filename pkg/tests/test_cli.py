import csv
import io
import json

import pytest

from stlplan.bench import generate_scenario
from stlplan.cli import InputError, load_config, main
from stlplan.geometry import read_trajectory_csv, save_scenario


def run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture
def scen_file(tmp_path):
    p = tmp_path / "scen.json"
    p.write_bytes(save_scenario(generate_scenario(5, "single-F")))
    return p


def test_parse(capsys):
    rc, out, _ = run(capsys, "parse", "F[0,5](in(A)) & G[2,3](!in(B))")
    doc = json.loads(out)
    assert rc == 0 and doc["nodes"] == 6
    assert doc["formula"] == "F[0,5](in(A)) & G[2,3](!in(B))"


def test_parse_error_is_input_error(capsys):
    rc, _, err = run(capsys, "parse", "F[5,2](in(A))")
    assert rc == 2 and "error" in err


def test_validate(capsys):
    rc, out, _ = run(capsys, "validate", "F[0,5](in(A)) | G[1,2](in(B))", "--horizon", "10")
    doc = json.loads(out)
    assert rc == 0 and doc["in_fragment"] and doc["tokens"]
    rc, out, _ = run(capsys, "validate", "!(F[0,5](in(A)))", "--horizon", "10")
    assert rc == 2 and not json.loads(out)["in_fragment"]


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["validate", "F[0,1](in(A))"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_gen_nominal_monitor_repair_roundtrip(capsys, tmp_path, scen_file):
    rc, _, _ = run(capsys, "gen", "--template", "single-F", "--seed", "5", "-o", str(tmp_path / "g.json"))
    assert rc == 0 and (tmp_path / "g.json").read_bytes() == scen_file.read_bytes()

    traj = tmp_path / "nom.csv"
    assert run(capsys, "nominal", "--scenario", str(scen_file), "-o", str(traj))[0] == 0
    assert len(read_trajectory_csv(traj.read_text())) == 81

    rc, out, _ = run(capsys, "monitor", "--scenario", str(scen_file), "--traj", str(traj), "--smooth", "50")
    doc = json.loads(out)
    assert rc == 0
    assert doc["satisfied"] == (doc["robustness"] > 0)
    assert abs(doc["smooth_robustness"] - doc["robustness"]) <= doc["smoothing_bound"] + 1e-12

    rep_csv, rep_json = tmp_path / "rep.csv", tmp_path / "rep.json"
    rc, _, _ = run(capsys, "repair", "--scenario", str(scen_file), "--traj", str(traj), "--seed", "1",
                   "-o", str(rep_csv), "--report", str(rep_json))
    assert rc == 0
    report = json.loads(rep_json.read_text())
    assert set(report) >= {"triggers", "success"}
    for trig in report["triggers"]:
        assert set(trig) >= {"t", "kind", "attempts_used", "cost"}
    rc, out, _ = run(capsys, "monitor", "--scenario", str(scen_file), "--traj", str(rep_csv))
    if report["success"]:
        assert json.loads(out)["robustness"] > 0


def test_gradcheck(capsys, tmp_path, scen_file):
    traj = tmp_path / "nom.csv"
    run(capsys, "nominal", "--scenario", str(scen_file), "-o", str(traj))
    rc, out, _ = run(capsys, "gradcheck", "--scenario", str(scen_file), "--traj", str(traj), "-k", "300")
    doc = json.loads(out)
    assert doc["within_tolerance"] == (rc == 0)
    assert rc in (0, 3)


def test_missing_file_is_input_error(capsys, tmp_path, scen_file):
    rc, _, err = run(capsys, "monitor", "--scenario", str(tmp_path / "nope.json"), "--traj", "x.csv")
    assert rc == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"world": 1}')
    assert run(capsys, "nominal", "--scenario", str(bad), "-o", str(tmp_path / "o.csv"))[0] == 2


def test_horizon_mismatch_is_input_error(capsys, tmp_path, scen_file):
    short = tmp_path / "short.csv"
    short.write_text("t,x,y,theta\n0,0,0,0\n1,1,0,0\n")
    assert run(capsys, "monitor", "--scenario", str(scen_file), "--traj", str(short))[0] == 2


def test_route_csv(capsys):
    rc, out, _ = run(capsys, "route", "--formula", "F[0,9](in(A)) & G[10,20](in(B))", "--horizon", "20", "-K", "3")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 20
    assert list(rows[0]) == ["t", "op_family", "band", "bucket", "top1_expert", "gate_entropy"]
    assert {int(r["bucket"]) for r in rows} <= set(range(6))
    assert rows[0]["op_family"] == "F" and rows[-1]["op_family"] == "G"


def test_bench_small_and_threshold(capsys, tmp_path):
    out = tmp_path / "r.json"
    rc, _, err = run(capsys, "bench", "--templates", "single-F,only-OR", "--n", "2", "--seed", "3",
                     "-o", str(out), "--plots", str(tmp_path / "plots"), "--artifacts", str(tmp_path / "art"))
    assert rc == 0
    report = json.loads(out.read_text())
    assert len(report["records"]) == 4
    assert len(list((tmp_path / "plots").glob("*.svg"))) == 4
    assert len(list((tmp_path / "art").glob("*.repaired.csv"))) == 4
    rc, _, _ = run(capsys, "bench", "--templates", "single-F", "--n", "0", "-o", str(out), "--min-uplift", "1")
    assert rc == 3


def test_bench_unknown_template(capsys, tmp_path):
    assert run(capsys, "bench", "--templates", "single-X", "--n", "1", "-o", str(tmp_path / "r.json"))[0] == 2


def test_config_sections_and_flat(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"repair": {"H": 5}, "d_max": 2.0, "generator": {"n_obstacles": [0, 0]}}))
    cfg = load_config(str(p))
    assert cfg["repair"].H == 5 and cfg["repair"].d_max == 2.0 and cfg["loss"].d_max == 2.0
    assert cfg["generator"].n_obstacles == (0, 0)
    p.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(InputError):
        load_config(str(p))
    p.write_text(json.dumps({"repair": {"H": 0}}))
    with pytest.raises(InputError):
        load_config(str(p))


def test_config_flag_applies(capsys, tmp_path, scen_file):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"generator": {"n_obstacles": [0, 0]}}))
    out = tmp_path / "s.json"
    assert run(capsys, "--config", str(c), "gen", "--template", "only-AND", "--seed", "1", "-o", str(out))[0] == 0
    assert json.loads(out.read_text())["obstacles"] == []
