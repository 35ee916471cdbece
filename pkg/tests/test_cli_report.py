import json

import pytest

from kkholonomy import report as rep
from kkholonomy.cli import main
from kkholonomy.config import ConfigError, RunConfig, from_mapping, load_document, parse_tolerance, resolve
from kkholonomy.holonomy import LogarithmError


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(scenario="hopf", suites=["nope"])
    with pytest.raises(ConfigError):
        RunConfig(scenario="hopf", tolerances={"nope": 1e-3})
    with pytest.raises(ConfigError):
        RunConfig(scenario="hopf", grid=0)
    with pytest.raises(ConfigError):
        from_mapping({"scenario": "hopf", "colour": 1})
    assert RunConfig(scenario="hopf", suites="all").suites == list(rep.SUITES)
    assert parse_tolerance("holonomy=1e-3") == ("holonomy", 1e-3)


def test_yaml_and_json_documents(tmp_path):
    y = tmp_path / "run.yaml"
    y.write_text("scenario: torus-recurrent\nsuites: [recurrent]\ntolerances: {recurrent: 1.0e-6}\ngrid: 8\n")
    cfg = resolve(str(y))
    assert cfg.suites == ["recurrent"] and cfg.grid == 8 and cfg.tolerances == {"recurrent": 1e-6}
    j = tmp_path / "run.json"
    j.write_text(json.dumps({"scenario": "hopf", "suites": "brackets"}))
    assert resolve(str(j), grid=6).grid == 6
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    with pytest.raises(ConfigError):
        load_document(bad)


def test_inline_scenario_document(tmp_path):
    doc = {
        "name": "plane-strip",
        "base": {"coordinates": ["x", "y"], "metric": [[1, 0], [0, 1]], "box": [[0, 1], [0, 1]]},
        "killing": [1, 0],
        "sigma": 1,
        "recurrent": {"epsilon": 1},
    }
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    out = tmp_path / "r.json"
    assert main(["--scenario", str(p), "--suite", "recurrent", "--grid", "6", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["scenario"]["name"] == "plane-strip"


@pytest.mark.parametrize("argv", [["--scenario", "nope"], ["--scenario", "cpn"], ["--scenario", "hopf", "--suite", "x"],
                                  ["--scenario", "hopf", "--tol", "brackets"], [], ["--bogus"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_negative_control_exit_1(tmp_path, capsys):
    out = tmp_path / "bk.json"
    assert main(["--scenario", "broken-killing", "--out", str(out)]) == 1
    r = json.loads(out.read_text())
    assert r["scenario"]["rejected_precondition"] == "xi is a Killing field"
    assert r["suites"]["recurrent"]["status"] == "fail"
    assert "xi is a Killing field" in capsys.readouterr().out


def test_report_schema_and_sidecar(tmp_path):
    out = tmp_path / "ft.json"
    assert main(["--scenario", "flat-torus", "--suite", "all", "--out", str(out)]) == 0
    r = json.loads(out.read_text())
    assert r["schema_version"] == rep.SCHEMA_VERSION
    assert r["verdict"] == "pass" and r["partial"] is False
    assert r["config"]["tolerance_defaults"] == rep.DEFAULT_TOLERANCES
    table = rep.anchor_table()
    for suite in r["suites"].values():
        for e in suite["entries"]:
            assert e["anchor"] in table
            if e["kind"] == "residual":
                assert e["max_residual"] < 1e-9
    timings = json.loads((tmp_path / "ft.json.timings.json").read_text())
    assert set(timings) == set(rep.SUITES)
    assert not list(tmp_path.glob("*.tmp"))


def test_tolerance_override_applies_to_whole_suite(tmp_path):
    cfg = RunConfig(scenario="torus-recurrent", suites=["recurrent"], tolerances={"recurrent": 1e-40})
    report, code, _ = rep.run(cfg)
    entries = report["suites"]["recurrent"]["entries"]
    assert all(e["tolerance"] == 1e-40 for e in entries if e["kind"] == "residual")
    # exact zeros still pass, roundoff-level residuals do not
    assert code == 1


def test_indeterminate_exit_3(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise LogarithmError("forced")

    monkeypatch.setattr(rep, "loop_holonomy", boom)
    out = tmp_path / "x.json"
    assert main(["--scenario", "round-s2", "--suite", "holonomy", "--out", str(out)]) == 3
    r = json.loads(out.read_text())
    assert r["partial"] is True and r["suites"]["holonomy"]["status"] == "indeterminate"


def test_gap_failure_is_indeterminate():
    entries = [rep.value_entry("dim", "houses 𝔥𝔬𝔩^D_o", "top", 2, 2, indeterminate=True)]
    assert rep.suite_status(entries) == "indeterminate"
    assert rep.verdict({"holonomy": {"status": "indeterminate"}}) == ("indeterminate", 3)
    assert rep.verdict({"a": {"status": "indeterminate"}, "b": {"status": "fail"}}) == ("fail", 1)


def test_unknown_anchor_rejected():
    with pytest.raises(rep.AnchorError):
        rep.check_anchors([{"identity": "x", "anchor": "made up"}])


def test_plot_data(tmp_path):
    cfg = RunConfig(scenario="torus-recurrent", suites=["brackets", "holonomy"], grid=8)
    report, _, _ = rep.run(cfg)
    rows = rep.grid_study(cfg)
    paths = rep.emit_plot_data(report, tmp_path, rows)
    res = (tmp_path / "residuals.tsv").read_text().splitlines()
    assert res[0].split("\t") == list(rep.RESIDUAL_HEADER)
    assert {int(l.split("\t")[3]) for l in res[1:]} == {4, 8}
    sv = (tmp_path / "singular_values.tsv").read_text().splitlines()
    assert sv[0].split("\t") == list(rep.SPECTRUM_HEADER)
    n = 3
    assert len([l for l in sv[1:] if l.startswith("ambrose_singer\t")]) <= n * n
    # residuals of exact identities do not grow beyond the roundoff floor under refinement
    by_id = {}
    for l in res[1:]:
        s, c, i, g, r = l.split("\t")
        by_id.setdefault((s, c, i), []).append(float(r))
    assert all(max(v) < 1e-12 for v in by_id.values())
    assert set(paths) == {"residuals", "singular_values"}


def test_empty_suite_gives_header_only(tmp_path):
    cfg = RunConfig(scenario="round-s2", suites=["recurrent"])
    report, code, _ = rep.run(cfg)
    assert code == 0 and report["suites"]["recurrent"]["entries"] == []
    rep.emit_plot_data(report, tmp_path)
    assert (tmp_path / "residuals.tsv").read_text() == "\t".join(rep.RESIDUAL_HEADER) + "\n"
    assert (tmp_path / "singular_values.tsv").read_text() == "\t".join(rep.SPECTRUM_HEADER) + "\n"


def test_report_bytes_stable_in_process():
    cfg = RunConfig(scenario="torus-recurrent", suites=["all"])
    a = rep.dumps(rep.run(cfg)[0])
    b = rep.dumps(rep.run(cfg)[0])
    assert a == b
