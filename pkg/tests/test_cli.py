import json
from fractions import Fraction

import jsonschema
import pytest

from hesszeta.cli import load_schema, main, parse_matrix, parse_scalar


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_helpers():
    assert parse_scalar("1/2") == Fraction(1, 2)
    assert parse_scalar("0.2,0.5") == complex(0.2, 0.5)
    assert parse_scalar("0.2,0") == 0.2
    assert parse_scalar("3") == 3
    assert parse_matrix("1,0;0,2") == [[1.0, 0.0], [0.0, 2.0]]


def test_theorem2_check(capsys):
    code, out, err = run(capsys, "theorem2", "--check")
    assert code == 0
    assert "6/6 PASS" in err
    assert out.count("(a)") == 1


def test_theorem2_json_and_latex(capsys):
    code, out, _ = run(capsys, "theorem2", "--format", "json", "--check")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, load_schema("theorem2"))
    assert set(d["patterns"]) == set("abcdef")
    code, out, _ = run(capsys, "theorem2", "--format", "latex")
    assert out.startswith(r"\documentclass") and r"\end{document}" in out


def test_theorem2_threads_deterministic(capsys):
    _, a, _ = run(capsys, "theorem2")
    _, b, _ = run(capsys, "--threads", "3", "theorem2")
    assert a == b


def test_manifest_written(capsys, tmp_path):
    path = tmp_path / "m.json"
    run(capsys, "--manifest", str(path), "theorem2")
    m = json.loads(path.read_text())
    jsonschema.validate(m, load_schema("manifest"))
    assert m["config"]["command"] == "theorem2"
    assert "numpy" in m["versions"]


def test_manifest_on_stderr_and_precision_env(capsys, monkeypatch):
    monkeypatch.setenv("HESSZETA_PRECISION", "extended")
    _, _, err = run(capsys, "theorem2")
    m = json.loads(err.splitlines()[0])
    assert m["precision"] == "extended"


def test_us_builtin(capsys):
    code, out, _ = run(capsys, "us", "--builtin", "conformal", "--n", "3", "--s", "0",
                       "--xi", "1,0,0", "--h", "1,0,0;0,-1,0;0,0,0", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["symmetric"]
    assert d["matrix"][1][1] == pytest.approx(-0.00041322479263751683, rel=1e-10)


def test_us_complex_and_rational_s(capsys):
    code, out, _ = run(capsys, "us", "--builtin", "laplacian", "--n", "2", "--s", "0.2,0.1",
                       "--xi", "1,0.5", "--h", "1,0;0,1", "--format", "json")
    assert code == 0
    assert isinstance(json.loads(out)["matrix"][0][0], list)
    code, _, _ = run(capsys, "us", "--builtin", "laplacian", "--n", "2", "--s", "1/3",
                     "--xi", "1,0.5", "--h", "1,0;0,1")
    assert code == 0


def test_us_spec_file(capsys, tmp_path):
    from hesszeta.operators import linearize_scalar_family, save_operator_spec
    path = tmp_path / "op.json"
    save_operator_spec(linearize_scalar_family(3, 1), path)
    _, a, _ = run(capsys, "us", "--spec", str(path), "--s", "0", "--xi", "1,0,0",
                  "--h", "1,0,0;0,-1,0;0,0,0")
    _, b, _ = run(capsys, "us", "--builtin", "conformal", "--n", "3", "--s", "0",
                  "--xi", "1,0,0", "--h", "1,0,0;0,-1,0;0,0,0")
    assert a == b


def test_us_errors(capsys):
    code, _, err = run(capsys, "us", "--builtin", "laplacian", "--n", "3", "--s", "5/2",
                       "--xi", "1,0,0", "--h", "1,0,0;0,1,0;0,0,1")
    assert code != 0 and "pole" in err
    code, _, err = run(capsys, "us", "--builtin", "laplacian", "--n", "3", "--s", "0.2",
                       "--xi", "0,0,0", "--h", "1,0,0;0,1,0;0,0,1")
    assert code != 0 and "xi" in err


def test_verify_rejects_unknown_suite(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["verify", "nothing"])


def test_verify_torus(capsys):
    code, out, _ = run(capsys, "verify", "torus", "--format", "json")
    d = json.loads(out)
    jsonschema.validate(d, load_schema("verify"))
    assert code == d["failures"] == 0
    assert len(d["checks"]) >= 7


def test_verify_identities(capsys):
    code, out, _ = run(capsys, "verify", "identities")
    assert code == 0
    assert out.strip().endswith("passed")


def test_torus_hessian(capsys):
    code, out, _ = run(capsys, "torus-hessian", "--K", "32", "--m", "3", "--fd", "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["hessian"] == pytest.approx(d["finite_difference"], rel=1e-6)


def test_heat_trace_csv(capsys):
    code, out, _ = run(capsys, "heat-trace", "--format", "csv", "--t", "1e-2,1e-3")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "t,scaled_trace,prediction,rel_dev"
    assert float(lines[2].split(",")[3]) < 0.02


def test_split(capsys):
    code, out, _ = run(capsys, "split", "--kernel", "exp", "--s", "1.2", "--format", "json")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, load_schema("split"))
    assert d["u"][0] == pytest.approx(1.298055332647558, rel=1e-12)
