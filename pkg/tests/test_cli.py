import csv
import io
import json
import re
import subprocess
import sys
from pathlib import Path

import pytest

from imattract.analysis import dumps_report, run_analysis
from imattract.cli import main
from imattract.config import load_config, load_config_dict
from imattract.criterion import TubeConfig, sample_tube
from imattract.errors import ConfigError, ImattractError
from imattract.geometry import Equilibrium, Rect, VectorField
from imattract.svg import emit_svg, render_svg

FOCUS_CFG = {
    "system": "focus",
    "field": {"fx": "-x + y", "fy": "-x - y"},
    "manifolds": [{"name": "origin", "kind": "equilibrium", "point": [0, 0]}],
    "tube": {"n_base": 16},
    "oracle": {"T": 3},
}


def _write(tmp_path: Path, doc, name="cfg.json") -> Path:
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2), encoding="utf-8")
    return p


def test_syntax_error_in_field_exits_1(tmp_path, capsys):
    doc = dict(FOCUS_CFG, field={"fx": "x +", "fy": "y"})
    assert main(["analyze", str(_write(tmp_path, doc))]) == 1
    err = capsys.readouterr().err
    assert "field.fx" in err and "offset 3" in err
    assert "line 4" in err


def test_syntax_error_subprocess(tmp_path):
    doc = dict(FOCUS_CFG, field={"fx": "x +", "fy": "y"})
    proc = subprocess.run(
        [sys.executable, "-m", "imattract.cli", "analyze", str(_write(tmp_path, doc))],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
    assert "offset 3" in proc.stderr


def test_config_error_offset_attribute():
    with pytest.raises(ConfigError) as info:
        load_config_dict(dict(FOCUS_CFG, field={"fx": "x +", "fy": "y"}))
    assert info.value.field == "field.fx"
    assert info.value.offset == 3


def test_invalid_json_reports_line(tmp_path, capsys):
    assert main(["analyze", str(_write(tmp_path, '{\n  "system": "x",\n  oops\n}'))]) == 1
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize(
    "patch, where",
    [
        ({"manifolds": []}, "manifolds"),
        ({"manifolds": [{"kind": "blob"}]}, "manifolds[0].kind"),
        ({"manifolds": [{"kind": "graph", "y": "x", "x": "y"}]}, "manifolds[0]"),
        ({"manifolds": [{"kind": "graph", "y": "y"}]}, "manifolds[0].y"),
        ({"manifolds": [{"kind": "parametric", "x": "t", "y": "t", "t_range": [1, 0]}]}, "manifolds[0].t_range"),
        ({"tube": {"eps_min": 0.5, "eps_max": 0.1}}, "tube"),
        ({"tube": {"n_base": "many"}}, "tube.n_base"),
        ({"oracle": {"h": -1}}, "oracle"),
        ({"oracle": {"window": [0, 1, 2]}}, "oracle.window"),
        ({"force": "yes"}, "force"),
    ],
)
def test_config_validation(patch, where):
    with pytest.raises(ConfigError) as info:
        load_config_dict(dict(FOCUS_CFG, **patch))
    assert info.value.field == where


def test_missing_field_section():
    doc = {k: v for k, v in FOCUS_CFG.items() if k != "field"}
    with pytest.raises(ConfigError, match="field"):
        load_config_dict(doc)


def test_t_range_accepts_constant_expressions():
    doc = dict(
        FOCUS_CFG,
        manifolds=[{"kind": "parametric", "x": "cos(t)", "y": "sin(t)", "t_range": [0, "2*pi"], "closed": True}],
    )
    cfg = load_config_dict(doc)
    assert cfg.manifolds[0].spec.t_range[1] == pytest.approx(6.283185307179586, abs=0)
    assert cfg.manifolds[0].name == "parametric_0"


def test_all_fixtures_load_and_echo_round_trips(fixtures_dir):
    for path in sorted(fixtures_dir.glob("*.json")):
        cfg = load_config(path)
        echoed = json.loads(json.dumps(cfg.to_dict()))
        assert load_config_dict(echoed) == cfg, path.name


def test_report_contents(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["analyze", str(_write(tmp_path, FOCUS_CFG)), "--report", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["tool"]["name"] == "imattract"
    assert report["tool"]["version"]
    (m,) = report["manifolds"]
    assert m["invariance"]["pass"] is True
    assert m["criterion"]["overall"] == "attractive"
    side = m["criterion"]["per_side"]["radial"]
    assert side["witness_attract"]["ip"] < 0 and side["witness_repel"] is None
    assert "tube" in m["criterion"]["claim_scope"]
    assert m["oracle"]["verdict"] == "attractive"
    assert m["agreement"] is True
    assert set(report["timings"]) == {"total_s", "manifolds"}
    assert "origin: invariance pass" in capsys.readouterr().err


def test_report_to_stdout_when_no_path(tmp_path, capsys):
    assert main(["analyze", str(_write(tmp_path, FOCUS_CFG))]) == 0
    assert json.loads(capsys.readouterr().out)["system"] == "focus"


def test_outputs_resolved_next_to_config(tmp_path):
    doc = dict(FOCUS_CFG, outputs={"report": "r.json", "samples": "s.csv"})
    assert main(["analyze", str(_write(tmp_path, doc))]) == 0
    assert (tmp_path / "r.json").exists()
    rows = list(csv.DictReader(io.StringIO((tmp_path / "s.csv").read_text(encoding="utf-8"))))
    assert len(rows) == 16 * 8
    assert all(float(r["ip"]) < 0 for r in rows)


def test_invariance_gate(fixtures_dir, tmp_path, capsys):
    out = tmp_path / "r.json"
    path = str(fixtures_dir / "non_invariant.json")
    assert main(["analyze", path, "--report", str(out)]) == 2
    m = json.loads(out.read_text())["manifolds"][0]
    assert m["status"] == "not_invariant" and m["criterion"] is None
    assert m["invariance"]["max_residual"] >= 0.1
    assert main(["analyze", path, "--force", "--report", str(out)]) == 0
    m = json.loads(out.read_text())["manifolds"][0]
    assert m["status"] == "forced" and m["criterion"] is not None
    assert main(["check-invariance", path]) == 2
    assert main(["check-invariance", str(fixtures_dir / "real_im.json")]) == 0


def test_deterministic_reports(tmp_path):
    cfg = load_config(_write(tmp_path, FOCUS_CFG))

    def strip(text):
        doc = json.loads(text)
        doc.pop("timings")
        return json.dumps(doc)

    a = dumps_report(run_analysis(cfg).report())
    b = dumps_report(run_analysis(cfg).report())
    assert strip(a) == strip(b)


def test_orbit_command(fixtures_dir, tmp_path, capsys):
    out = tmp_path / "orbit.csv"
    args = ["orbit", str(fixtures_dir / "saddle_manifolds.json"), "--seed", "1,0.5", "--T", "1", "--csv", str(out)]
    assert main(args) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["t", "x", "y", "dist"]
    assert rows[1] == ["0", "1", "0.5", "0.5"]
    assert float(rows[-1][0]) == pytest.approx(1.0)
    assert main(["orbit", str(fixtures_dir / "saddle_manifolds.json"), "--seed", "0.1,0.1", "--T", "0.01", "--manifold", "y_axis"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "0,0.1,0.1,0.1"


def test_orbit_rejects_bad_seed(fixtures_dir):
    with pytest.raises(SystemExit):
        main(["orbit", str(fixtures_dir / "center.json"), "--seed", "1;2"])


def test_unknown_manifold_name(fixtures_dir):
    assert main(["orbit", str(fixtures_dir / "center.json"), "--seed", "1,0", "--manifold", "nope"]) == 1


# -- drawings --------------------------------------------------------------


def _ticks(svg: str) -> set[tuple[str, str]]:
    return set(re.findall(r'class="tick (\w+)"[^>]*stroke="(\w+)"', svg))


def test_hopf_svg_has_one_closed_path_and_only_blue_ticks(fixtures_dir, tmp_path):
    svg_path = tmp_path / "hopf.svg"
    cfg = fixtures_dir / "limit_cycle.json"
    assert main(["analyze", str(cfg), "--svg", str(svg_path), "--report", str(tmp_path / "r.json")]) == 0
    svg = svg_path.read_text(encoding="utf-8")
    assert svg.count('class="manifold"') == 1
    assert svg.count(' Z"') == 1 and 'stroke="black"' in svg
    assert _ticks(svg) == {("attract", "blue")}
    assert 'class="trace"' in svg and 'stroke="green"' in svg
    assert 'viewBox="' in svg


def test_zero_field_ticks_gray(tmp_path):
    field = VectorField.from_text("0", "0")
    m = Equilibrium(0, 0)
    samples = sample_tube(field, m, TubeConfig(n_base=8))
    emit_svg(field, m, samples, [], tmp_path / "z.svg", Rect(-1, 1, -1, 1))
    assert _ticks((tmp_path / "z.svg").read_text()) == {("zero", "gray")}


def test_saddle_svg_mixes_colors():
    field = VectorField.from_text("x", "-2*y")
    m = Equilibrium(0, 0)
    svg = render_svg([(m, sample_tube(field, m, TubeConfig()), [])], Rect(-1, 1, -1, 1), field)
    assert {("attract", "blue"), ("repel", "red")} <= _ticks(svg)


def test_svg_viewbox_follows_window():
    svg = render_svg([(Equilibrium(0, 0), [], [])], Rect(-2, 3, -1, 4))
    # y is flipped, so the top edge is -ymax
    assert 'viewBox="-2 -4 5 5"' in svg


def test_svg_write_error_names_path(tmp_path):
    field = VectorField.from_text("0", "0")
    bad = tmp_path / "missing" / "x.svg"
    with pytest.raises(ImattractError, match="missing"):
        emit_svg(field, Equilibrium(0, 0), [], [], bad)
