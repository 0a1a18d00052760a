import json
import math
from pathlib import Path

import pytest
import yaml

from helixforms import cli

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

BASIC = {
    "schema_version": 1,
    "name": "basic",
    "domain": {"outer": {"center": [0, 0], "radius": 2},
               "holes": [{"center": [0, 0], "radius": 1}]},
    "omega": "1",
    "H": "(4 - x^2 - y^2)/3",
    "gauge": [1, 1],
    "quadrature": {"level": 2, "n_t": 8},
}


def _write(tmp_path, data, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _with(**changes):
    d = json.loads(json.dumps(BASIC))
    d.update(changes)
    return d


def test_load_valid(tmp_path):
    s = cli.load_scenario(_write(tmp_path, BASIC))
    assert s.domain.d == 2
    assert s.gauge == (1, 1)
    assert s.quad.level == 2


def test_shipped_scenarios_load():
    for p in sorted(SCEN.glob("*.yaml")):
        cli.load_scenario(p)


def test_non_constant_H_names_circle(tmp_path):
    with pytest.raises(cli.ScenarioError, match="S_2"):
        cli.load_scenario(_write(tmp_path, _with(H="x")))


def test_H_must_vanish_on_outer(tmp_path):
    with pytest.raises(cli.ScenarioError, match="S_1"):
        cli.load_scenario(_write(tmp_path, _with(H="1")))


def test_missing_omega(tmp_path):
    d = _with()
    del d["omega"]
    with pytest.raises(cli.ScenarioError, match="omega"):
        cli.load_scenario(_write(tmp_path, d))


@pytest.mark.parametrize("changes, match", [
    ({"schema_version": 2}, "schema_version"),
    ({"H": "x +* y"}, "offset 3"),
    ({"omega": "t"}, "omega"),
    ({"omega": "x"}, "positive"),
    ({"gauge": [1, 3]}, "gauge"),
    ({"domain": {"outer": {"center": [0, 0], "radius": 1},
                 "holes": [{"center": [0, 0], "radius": 2}]}}, "domain"),
    ({"diffeo": {"family": "warp"}}, "family"),
    ({"diffeo": {"family": "shear", "g": "0.1*x"}}, None),
])
def test_scenario_errors(tmp_path, changes, match):
    d = _with(**changes)
    if match is None:
        cli.load_scenario(_write(tmp_path, d))
        return
    with pytest.raises(cli.ScenarioError, match=match):
        cli.load_scenario(_write(tmp_path, d))


def test_yaml_parse_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("schema_version: [1\n")
    assert cli.main(["invariants", str(p)]) == 2


def test_missing_file_exit_code(tmp_path):
    assert cli.main(["invariants", str(tmp_path / "nope.yaml")]) == 2


def test_invariants_report(tmp_path):
    d = _with(expected={"flux": [3 * math.pi, -1.0], "helicity": -3 * math.pi,
                        "calabi": 1.5 * math.pi},
              diffeo={"family": "rotation", "angle": "(r - 1)^2*(2 - r)^2"})
    out = tmp_path / "r.json"
    code = cli.main(["invariants", str(_write(tmp_path, d)), "--report", str(out), "--matrix"])
    rep = json.loads(out.read_text())
    assert code == 0 and rep["status"] == "PASS"
    v = rep["values"]
    assert v["flux"][0] == pytest.approx(3 * math.pi, rel=1e-4)
    assert v["helicity"] == pytest.approx(-3 * math.pi, rel=1e-4)
    assert v["calabi"] == pytest.approx(1.5 * math.pi, rel=1e-4)
    assert v["error_estimate"]["compared_level"] == 1
    assert len(v["helicity_matrix"]) == 2
    assert any(c["name"].startswith("rotation") for c in rep["checks"])


def test_zero_H(tmp_path):
    out = tmp_path / "r.json"
    cli.main(["invariants", str(_write(tmp_path, _with(H="0"))), "--report", str(out)])
    v = json.loads(out.read_text())["values"]
    assert v["helicity"] == pytest.approx(0.0, abs=1e-12)
    assert v["calabi"] == 0.0


def test_report_deterministic(tmp_path):
    p = _write(tmp_path, BASIC)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["invariants", str(p), "--report", str(a)])
    cli.main(["invariants", str(p), "--report", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_gauge_option(tmp_path):
    out = tmp_path / "r.json"
    p = _write(tmp_path, BASIC)
    cli.main(["invariants", str(p), "--gauge", "2,2", "--report", str(out)])
    assert json.loads(out.read_text())["values"]["helicity"] == pytest.approx(3 * math.pi,
                                                                            rel=1e-4)
    assert cli.main(["invariants", str(p), "--gauge", "1,5"]) == 2
    assert cli.main(["invariants", str(p), "--gauge", "x"]) == 2


def test_failing_check_exit_code(tmp_path):
    d = _with(expected={"helicity": 1.0})
    assert cli.main(["invariants", str(_write(tmp_path, d))]) == 1


def test_unknown_suite(tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["verify", str(_write(tmp_path, BASIC)), "--suite", "nope"])
    assert err.value.code == 2
    with pytest.raises(cli.ScenarioError):
        cli.cmd_verify(cli.load_scenario(_write(tmp_path, BASIC)), "nope")


def test_verify_gauge_shift(tmp_path):
    s = cli.load_scenario(_write(tmp_path, BASIC))
    rep = cli.cmd_verify(s, "gauge-shift")
    assert rep.passed and len(rep.data["checks"]) == 20


def test_verify_invariance(tmp_path):
    s = cli.load_scenario(_write(tmp_path, BASIC))
    rep = cli.cmd_verify(s, "invariance")
    assert rep.passed
    names = {c["name"].split(":")[0] for c in rep.data["checks"]}
    assert names == {"shear", "fiber", "rotation"}


def test_path_check_csv(tmp_path):
    d = _with(path={"H1": "(4 - x^2 - y^2)*(x^2 + y^2 + 1)/10", "omega1": "1 + 0.3*x^2"},
              quadrature={"level": 3, "n_t": 8})
    p = _write(tmp_path, d)
    csv_path = tmp_path / "p.csv"
    for lemma in ("1a", "1b"):
        code = cli.main(["path-check", str(p), "--lemma", lemma, "--samples", "5",
                         "--csv", str(csv_path), "--report", str(tmp_path / "r.json")])
        assert code == 0
        rows = csv_path.read_text().splitlines()
        assert rows[0] == "u,helicity" and len(rows) == 6


def test_derivative_flux(tmp_path):
    d = _with(quadrature={"level": 3, "n_t": 8})
    out = tmp_path / "r.json"
    code = cli.main(["derivative", str(_write(tmp_path, d)), "--functional", "flux:1",
                     "--probes", "3", "--report", str(out)])
    assert code == 0
    assert cli.main(["derivative", str(_write(tmp_path, d)), "--functional", "flux:9"]) == 2
    assert cli.main(["derivative", str(_write(tmp_path, d)), "--functional", "energy"]) == 2
