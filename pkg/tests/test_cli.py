import csv
import io
import json
from pathlib import Path

import pytest

from sclab import cli

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

FLAT = {"kind": "connection-check", "dimension": 2, "points": 5, "seed": 3}


def _write(tmp_path, obj, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def test_parse_minimal():
    sc = cli.parse_scenario(FLAT)
    assert sc.kind == "connection-check" and sc.seed == 3
    assert sc.tol == cli.DEFAULT_TOL["connection-check"]


@pytest.mark.parametrize(
    "obj,fragment",
    [
        ({"kind": "nope"}, "$.kind"),
        ({**FLAT, "seed": -1}, "$.seed"),
        ({**FLAT, "dimension": 3}, "$.dimension"),
        ({"kind": "reduce", "A": [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]]}, "sp(Omega') membership"),
        ({"kind": "reduce", "A": {"rho": [[1.0, 0], [0, 1.0]], "u": [0, 0], "f": 0}}, "sp(2n) membership"),
        ({"kind": "wkb", "thetas": [0.1]}, "$.thetas"),
        ({"kind": "induce", "base": {"type": "cubic", "n": 1}, "spec": "other"}, "$.spec"),
    ],
)
def test_parse_errors_name_field(obj, fragment):
    with pytest.raises(cli.ScenarioError, match=None) as e:
        cli.parse_scenario(obj)
    assert fragment in str(e.value)


def test_unknown_function_lists_known():
    with pytest.raises(cli.ScenarioError) as e:
        cli.parse_expr({"fn": "frobnicate", "arg": {"var": 0}}, "$.omega[0][1]")
    msg = str(e.value)
    assert "$.omega[0][1]" in msg and "frobnicate" in msg and "sin" in msg


def test_json_error_position(tmp_path):
    p = _write(tmp_path, '{"kind": "koszul",\n  "seed": }')
    with pytest.raises(cli.ScenarioError, match="line 2 column"):
        cli.load_scenario(p)


def test_save_roundtrip(tmp_path):
    sc = cli.load_scenario(SCEN / "wkb_expansion.json")
    p = tmp_path / "again.json"
    cli.save_scenario(sc, p)
    back = cli.load_scenario(p)
    assert back.data["thetas"] == [0.4, 0.2, 0.1, 0.05]
    assert back.to_json() == sc.to_json()


def test_flat_scenario_passes(tmp_path, capsys):
    p = _write(tmp_path, FLAT)
    assert cli.main(["connection-check", "--scenario", str(p)]) == cli.EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["schema_version"] == cli.SCHEMA_VERSION and out["passed"]
    names = {c["name"].split("[")[0] for c in out["checks"]}
    assert {"torsion", "nabla_omega", "bianchi"} <= names


def test_reduce_j0_certifies():
    rep = cli.run(cli.load_scenario(SCEN / "reduce_N4_j0.json"))
    assert rep.passed
    names = [c.name for c in rep.checks]
    assert any(n.startswith("cert_rho") for n in names)
    assert any(n.startswith("K_constant") for n in names)


def test_roundtrip_reports_gamma():
    sc = cli.parse_scenario({"kind": "roundtrip", "base": {"type": "cubic", "n": 1, "scale": 0.5}, "points": 5, "seed": 2})
    rep = cli.run(sc)
    assert rep.passed
    gamma = [c for c in rep.checks if c.name.startswith("gamma_recovery")]
    assert gamma and all(c.measured < 1e-7 for c in gamma)


def test_exit_codes(tmp_path, capsys):
    p = _write(tmp_path, FLAT)
    # the cubic base induces a curved connection, so expecting flat must fail
    wrong = _write(tmp_path, {"kind": "induce", "base": {"type": "cubic", "n": 1, "scale": 0.5}, "expect": "flat", "points": 2}, "w.json")
    assert cli.main(["induce", "--scenario", str(wrong), "--out", str(tmp_path / "w_out.json")]) == cli.EXIT_FAIL
    assert "FAIL curvature_P_flat" in capsys.readouterr().err
    assert cli.main(["connection-check", "--scenario", str(tmp_path / "missing.json")]) == cli.EXIT_INPUT
    assert cli.main(["connection-check", "--scenario", str(p), "--tol", "-1"]) == cli.EXIT_INPUT
    bad = _write(tmp_path, {"kind": "koszul", "dimensions": [0]}, "bad.json")
    assert cli.main(["koszul", "--scenario", str(bad)]) == cli.EXIT_INPUT


def test_kind_mismatch(tmp_path, capsys):
    p = _write(tmp_path, FLAT)
    assert cli.main(["koszul", "--scenario", str(p)]) == cli.EXIT_INPUT
    assert "$.kind" in capsys.readouterr().err


def test_csv_output(tmp_path):
    p = _write(tmp_path, FLAT)
    out = tmp_path / "r.csv"
    assert cli.main(["connection-check", "--scenario", str(p), "--format", "csv", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and set(rows[0]) == {"kind", "seed", "name", "measured", "comparison", "threshold", "pass", "identity"}
    assert all(r["pass"] in ("true", "True", "1") for r in rows)


def test_figures(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    p = _write(tmp_path, FLAT)
    figdir = tmp_path / "figs"
    assert cli.main(["connection-check", "--scenario", str(p), "--figures", str(figdir), "--out", str(tmp_path / "r.json")]) == 0
    assert (figdir / "connection-check_checks.png").stat().st_size > 0


def test_seed_override_and_determinism(tmp_path):
    sc = cli.load_scenario(SCEN / "koszul.json")
    a = cli.emit(cli.run(sc))
    b = cli.emit(cli.run(cli.load_scenario(SCEN / "koszul.json")))
    assert a == b
    p = _write(tmp_path, FLAT)
    out1, out2 = tmp_path / "1.json", tmp_path / "2.json"
    cli.main(["connection-check", "--scenario", str(p), "--seed", "11", "--out", str(out1)])
    cli.main(["connection-check", "--scenario", str(p), "--seed", "11", "--out", str(out2)])
    assert out1.read_bytes() == out2.read_bytes()
    assert json.loads(out1.read_text())["seed"] == 11


def test_every_check_has_registered_identity():
    rep = cli.run(cli.load_scenario(SCEN / "twistor_4d.json"))
    for c in rep.checks:
        assert c.identity in cli.REGISTRY.values()
