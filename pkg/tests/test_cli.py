import json
import subprocess
import sys

import pytest

from hamgeom import cli


def _run(tmp_path, config, *extra, capsys):
    path = tmp_path / "job.json"
    path.write_text(config if isinstance(config, str) else json.dumps(config))
    code = cli.main(["run", "--config", str(path), *extra])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_curvature_of_sho(tmp_path, capsys):
    cfg = {"model": {"builtin": "sho", "params": {"omega": 2}},
           "command": {"curvature": {"q": [0], "p": [0]}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 0
    res = json.loads(out)
    assert res["R"] == [[4.0]] and res["ricci"] == 4.0 and res["schema"] == 1


def test_free_eikonal(tmp_path, capsys):
    cfg = {"model": {"builtin": "free", "params": {"n": 1}},
           "command": {"eikonal": {"pairs": [{"Q": [1], "Q_prime": [0], "E": 0.5}]}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 0
    assert json.loads(out)["sigma"] == pytest.approx(1.0, rel=1e-9)


def test_expression_model(tmp_path, capsys):
    cfg = {"model": {"expression": "p1^2/2 + w^2*q1^2/2", "n": 1, "params": {"w": 3}},
           "command": {"curvature": {"q": [0.2], "p": [0.1]}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 0
    assert json.loads(out)["ricci"] == pytest.approx(9.0, rel=1e-12)


def test_fields_model_density(tmp_path, capsys):
    cfg = {"model": {"fields": {"n": 1, "phi": "k*q1^2/2", "params": {"k": 1.5}}},
           "command": {"ricci-density": {"q": [[0.4]]}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 0
    import math
    assert json.loads(out)["value"][0] == pytest.approx(1.5 * math.exp(-0.75 * 0.16), rel=1e-9)


def test_stability_report(tmp_path, capsys):
    cfg = {"command": {"stability": {"k1": -3, "k2": -0.5, "k3": 3.5, "B": 8 ** 0.5}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    res = json.loads(out)
    assert code == 0
    assert res["sufficient_criterion_met"] and res["spectrally_stable"] and not res["curvature_positive"]


def test_stability_grid_as_csv(tmp_path, capsys):
    cfg = {"command": {"stability": {"grid": {"k1": [-1, 1], "k2": [-1], "k3": [1], "B": [2]}}}}
    code, out, _ = _run(tmp_path, cfg, "--format", "csv", capsys=capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("# schema=1")
    assert lines[1].split(",")[:4] == ["k1", "k2", "k3", "B"]
    assert len(lines) == 4


def test_malformed_json_exits_two(tmp_path, capsys):
    code, out, _ = _run(tmp_path, '{"model": ', capsys=capsys)
    assert code == 2
    err = json.loads(out)
    assert err["error"] == "ConfigInvalid" and err["location"] and err["detail"]


@pytest.mark.parametrize("cfg, where", [
    ({"command": {"curvature": {"q": [0], "p": [0]}}}, "/model"),
    ({"model": {"builtin": "sho"}, "command": {"curvature": {"q": [0]}}}, "/command"),
    ({"model": {"builtin": "sho"}, "command": {"curvature": {"q": [0], "p": [0]}, "verify": {}}},
     "/command"),
    ({"model": {"builtin": "nope"}, "command": {"verify": {}}}, "/model"),
])
def test_schema_violations_exit_two(cfg, where, tmp_path, capsys):
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 2
    err = json.loads(out)
    assert err["error"] == "ConfigInvalid"
    assert err["location"].startswith(where)


def test_module_error_exits_one(tmp_path, capsys):
    cfg = {"model": {"builtin": "free", "params": {"n": 1}},
           "command": {"eikonal": {"pairs": [{"Q": [0.3], "Q_prime": [0.3]}]}}}
    code, out, _ = _run(tmp_path, cfg, capsys=capsys)
    assert code == 1
    assert json.loads(out)["error"] == "NoBracketError"


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert json.loads(capsys.readouterr().out)["error"] == "ConfigInvalid"


def test_verify_filter(capsys):
    assert cli.main(["verify", "--filter", "magnetic"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["names"] and all("magnetic" in n for n in res["names"])


def test_verify_over_tight_tolerance_fails(capsys):
    assert cli.main(["verify", "--filter", "sho", "--tolerance", "1e-15"]) == 1
    captured = capsys.readouterr()
    assert not json.loads(captured.out)["passed"]
    assert "FAIL" in captured.err


def test_output_file_is_byte_identical(tmp_path, capsys):
    cfg = {"model": {"fields": {"n": 2, "metric": [["1 + q1^2/4", "0"], ["0", "1"]], "phi": "q2/3"}},
           "command": {"ricci-density": {"q": [[0.1, 0.2]],
                                         "quadrature": {"method": "monte_carlo", "samples": 300}}},
           "seed": 11}
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(tmp_path, cfg, "--output", str(a), capsys=capsys)[0] == 0
    assert _run(tmp_path, cfg, "--output", str(b), capsys=capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.json"
    _run(tmp_path, cfg, "--output", str(c), "--seed", "12", capsys=capsys)
    assert c.read_bytes() != a.read_bytes()


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "hamgeom", "verify", "--filter", "free"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"]
