import csv
import io
import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from cvkit.cli import main

SPECS = Path(__file__).resolve().parent.parent / "specs"
EX1 = str(SPECS / "power_weighted.json")
EX2 = str(SPECS / "log_power_weighted.json")
EX3 = str(SPECS / "additive_separable.json")
ECON2 = ["--p", "1,2", "--m", "9", "--z1", "1,4"]


def schema(name):
    return json.loads(resources.files("cvkit").joinpath("schemas", name).read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("path", [EX1, EX2, EX3])
def test_shipped_specs_validate(path):
    jsonschema.validate(json.loads(Path(path).read_text()), schema("utility_spec.schema.json"))


def test_eval_reports_demand(capsys):
    code, out, _ = run(capsys, "eval", "--spec", EX1, "--p", "1,2", "--m", "12", "--z1", "1,4")
    assert code == 0
    data = json.loads(out)
    assert data["ump"]["demand"] == pytest.approx([4 / 3, 16 / 3], rel=1e-6)
    assert data["closed_form"]["demand"] == pytest.approx([4 / 3, 16 / 3], rel=1e-12)
    jsonschema.validate(data["spec"], schema("utility_spec.schema.json"))


def test_eval_csv(capsys):
    code, out, _ = run(capsys, "eval", "--spec", EX1, "--p", "1,2", "--m", "12", "--z1", "1,4", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["quantity", "numerical", "closed_form"]
    assert float(rows[3][1]) == pytest.approx(4 / 3, rel=1e-6)


def test_eval_usage_errors(capsys, tmp_path):
    assert run(capsys, "eval", "--spec", str(tmp_path / "none.json"), *ECON2)[0] == 2
    assert run(capsys, "eval", "--spec", EX1, "--p", "1,2", "--m", "0", "--z1", "1,4")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"family": "PowerWeighted", "alpha": 3}')
    assert run(capsys, "eval", "--spec", str(bad), *ECON2)[0] == 2
    assert run(capsys, "eval", "--spec", EX1, "--p", "1,2,3", "--m", "1", "--z1", "1,4")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_verify_log_family(capsys):
    code, out, _ = run(capsys, "verify", "--spec", EX2, *ECON2)
    assert code == 0
    data = json.loads(out)
    ids = {r["property_id"] for r in data["reports"]}
    assert {"expenditure_public", "hicksian_public", "mrs_ray", "marshallian_invariance"} <= ids
    for report in data["reports"]:
        jsonschema.validate(report, schema("property_report.schema.json"))
        assert report["passed"]


def test_verify_separable_expected_failure(capsys):
    code, out, _ = run(capsys, "verify", "--spec", EX3, "--p", "1,1", "--m", "4", "--z1", "0.5,0.5",
                       "--checks", "expenditure_public")
    assert code == 0
    (report,) = json.loads(out)["reports"]
    assert report["passed"] is False and report["expected_to_pass"] is False


def test_verify_check_list_errors(capsys):
    assert run(capsys, "verify", "--spec", EX2, *ECON2, "--checks", "")[0] == 2
    assert run(capsys, "verify", "--spec", EX2, *ECON2, "--checks", "nope")[0] == 2
    assert run(capsys, "verify", "--spec", EX2, *ECON2, "--checks", "indirect_joint")[0] == 2


def test_cv_from_phi(capsys):
    code, out, _ = run(capsys, "cv", "--phi", "-1", "--t", "2", "--m", "100")
    assert code == 0
    data = json.loads(out)
    assert data["cv_closed_form"] == -50.0
    jsonschema.validate(data, schema("cv_result.schema.json"))
    code, out, _ = run(capsys, "cv", "--phi", "-1", "--t", "1", "--m", "100")
    assert json.loads(out)["cv_closed_form"] == 0.0


def test_cv_from_spec_csv(capsys):
    code, out, err = run(capsys, "cv", "--spec", EX2, *ECON2, "--t", "0.5,2", "--format", "csv")
    assert code == 0 and "warning" not in err
    rows = list(csv.DictReader(io.StringIO(out)))
    row = rows[1]
    assert float(row["cv_closed"]) == pytest.approx(-6.75)
    assert float(row["cv_brute"]) == pytest.approx(-6.75, abs=1e-3)
    assert float(row["cv_1"]) + float(row["cv_2"]) == pytest.approx(-6.75, abs=1e-3)


def test_cv_spec_json_validates(capsys):
    code, out, _ = run(capsys, "cv", "--spec", EX2, *ECON2, "--t", "0.5,2,4")
    for row in json.loads(out):
        jsonschema.validate(row, schema("cv_result.schema.json"))


def test_cv_warns_without_phi(capsys):
    code, out, err = run(capsys, "cv", "--spec", EX3, "--p", "1,1", "--m", "4", "--z1", "0.5,0.5", "--t", "2")
    assert code == 0 and "warning" in err
    assert json.loads(out)["cv_closed_form"] is None


def test_estimate_noiseless(capsys):
    code, out, _ = run(capsys, "estimate", "--spec", EX2, *ECON2)
    assert code == 0
    data = json.loads(out)
    jsonschema.validate(data, schema("estimation_result.schema.json"))
    for reg in data["regressions"]:
        assert reg["phi_hat"] == pytest.approx(-2.0, abs=1e-6)
        assert reg["agreement"]


def test_estimate_single_t_is_usage_error(capsys):
    assert run(capsys, "estimate", "--spec", EX2, *ECON2, "--t-grid", "2,2")[0] == 2


def test_estimate_seeded_reproducible(capsys, tmp_path):
    args = ["estimate", "--spec", EX2, *ECON2, "--noise", "0.05", "--n", "60", "--seed", "7"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_text() == b.read_text()
    assert main(args + ["--out", str(a)]) == 0
    assert a.read_text() == b.read_text()
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_panel_csv(capsys, tmp_path):
    out = tmp_path / "panel.csv"
    assert main(["panel", "--spec", EX2, *ECON2, "--n", "8", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,m_before,m_after,x_before_1,x_before_2,x_after_1,x_after_2,noise"
    assert len(lines) == 9
    first = lines[1].split(",")
    assert first[0] == "0.25" and float(first[2]) == pytest.approx(144.0, rel=1e-9)


def test_numerical_failure_exit_code(capsys):
    # u2(t z1) exceeds the baseline utility at t = 8: the target is unattainable.
    code, _, err = run(capsys, "cv", "--spec", EX3, "--p", "1,1", "--m", "4", "--z1", "1,1", "--t", "8")
    assert code == 1 and "numerical failure" in err
