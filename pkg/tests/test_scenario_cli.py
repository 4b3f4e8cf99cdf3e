import json

import pytest

from sdesym.cli import main
from sdesym.pipeline import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_PASS, Settings, run_find, run_verify
from sdesym.scenario import Scenario, ScenarioError, bundled_names, bundled_path, load_bundled, loads

ALL = bundled_names()


def raw(name):
    return json.loads(bundled_path(name).read_text())


def write(tmp_path, d, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def test_nine_bundled():
    assert len(ALL) == 9 and "counterexample" in ALL


@pytest.mark.parametrize("name", ALL)
def test_round_trip(name):
    sc = load_bundled(name)
    again = loads(sc.dumps())
    assert again.to_dict() == sc.to_dict()
    assert again.dumps() == sc.dumps()


class TestErrors:
    def test_unknown_name_in_drift(self):
        d = raw("kp1d")
        d["sde"]["mu"] = ["lam*x+hmm"]
        with pytest.raises(ScenarioError, match="hmm"):
            Scenario.from_dict(d)

    def test_unknown_name_in_symmetry(self):
        d = raw("kp2d")
        d["symmetries"][0]["y"] = ["q", "0"]
        with pytest.raises(ScenarioError, match="'q'"):
            Scenario.from_dict(d)

    def test_parse_error_is_input_error(self):
        d = raw("kp1d")
        d["sde"]["mu"] = ["lam*(x"]
        with pytest.raises(ScenarioError, match="drift"):
            Scenario.from_dict(d)

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("sde"),
            lambda d: d.update(version=7),
            lambda d: d["sde"].update(vars=["x", "x"]),
            lambda d: d["sde"].update(mu=["0", "0"]),
            lambda d: d["sde"]["params"].update(x=1.0),
        ],
    )
    def test_malformed(self, mutate):
        d = raw("kp1d")
        mutate(d)
        with pytest.raises(ScenarioError):
            Scenario.from_dict(d)

    def test_invalid_json(self):
        with pytest.raises(ScenarioError, match="JSON"):
            loads("{")
        with pytest.raises(ScenarioError):
            loads("[]")

    def test_unknown_bundled(self):
        with pytest.raises(ScenarioError, match="no bundled"):
            load_bundled("nope")

    def test_unknown_symmetry_name(self):
        with pytest.raises(ScenarioError):
            load_bundled("kp2d").symmetry_named("V9")


class TestCli:
    def test_list(self, capsys):
        assert main(["list"]) == EXIT_PASS
        assert capsys.readouterr().out.split() == ALL

    @pytest.mark.parametrize("name", ["kp2d", "singular", "sabr"])
    def test_verify_pass(self, capsys, name):
        assert main(["verify", name]) == EXIT_PASS
        assert "exit 0" in capsys.readouterr().out

    def test_find_pass(self):
        assert main(["find", "counterexample"]) == EXIT_PASS

    def test_assertion_failure(self, tmp_path, capsys):
        d = raw("mechanics-oscillator")
        for s in d["symmetries"]:
            s["expect"] = "pass"
        assert main(["verify", write(tmp_path, d)]) == EXIT_FAIL
        assert "fail" in capsys.readouterr().out

    def test_inconclusive(self, tmp_path):
        d = raw("kp1d")
        d["find"] = {"basis": ["1", "x", "2*x"]}
        assert main(["find", write(tmp_path, d)]) == EXIT_INCONCLUSIVE

    def test_input_errors(self, tmp_path, capsys):
        assert main(["verify", "no-such-scenario"]) == EXIT_INPUT
        assert main(["verify", str(tmp_path / "missing.json")]) == EXIT_INPUT
        (tmp_path / "bad.json").write_text("{not json")
        assert main(["verify", str(tmp_path / "bad.json")]) == EXIT_INPUT
        assert main(["verify"]) == EXIT_INPUT
        assert main(["find", "kp2d"]) == EXIT_INPUT
        assert "input error" in capsys.readouterr().err

    def test_bad_flags(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "kp2d", "--level", "2"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit):
            main(["verify", "kp2d", "--dt", "-1"])

    def test_json_and_out(self, tmp_path, capsys):
        assert main(["verify", "kp2d", "--json", "--out", str(tmp_path)]) == EXIT_PASS
        printed = json.loads(capsys.readouterr().out)
        written = json.loads((tmp_path / "kp2d.verify.json").read_text())
        assert printed == written
        assert written["schema"] == "sdesym.report" and written["exit_code"] == 0

    def test_small_pipeline(self, tmp_path):
        code = main(["pipeline", "singular", "--paths", "200", "--dt", "0.001", "--out", str(tmp_path)])
        assert code == EXIT_PASS
        rep = json.loads((tmp_path / "singular.pipeline.json").read_text())
        assert [s["stage"] for s in rep["stages"]][-1] == "alive"
        assert any(p.suffix == ".csv" for p in tmp_path.iterdir())


@pytest.mark.parametrize("runner, name", [(run_verify, "sabr"), (run_find, "kp1d"), (run_find, "counterexample")])
def test_reports_are_deterministic(runner, name):
    a = runner(load_bundled(name), Settings(seed=5))
    b = runner(load_bundled(name), Settings(seed=5))
    assert a == b
