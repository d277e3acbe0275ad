import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from ctstereo import __version__
from ctstereo.cli import main
from ctstereo.imageio import read_pfm, write_pfm

SCENE = textwrap.dedent("""\
    [material]
    k_d_r = 0.4
    k_d_g = 0.4
    k_d_b = 0.4
    k_s = 0.3
    m = 0.3

    [lights]
    light1 = directional 0.8 0.0 1.0
    light2 = directional -0.4 0.7 1.0
    light3 = directional -0.4 -0.7 1.0

    [surface]
    name = gauss_bump
    size = 32

    [ron]
    max_sweeps = 3
    """)


def _write(path, text):
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    d = tmp_path_factory.mktemp("render")
    cfg = _write(d / "scene.ini", SCENE)
    assert main(["render", str(cfg), "--out", str(d / "data")]) == 0
    return d / "data"


def test_render_outputs(rendered):
    for name in ("I1.png", "I2.pfm", "I3.pfm", "normals_gt.pfm", "depth_gt.pfm", "mask.png",
                 "scene.ini"):
        assert (rendered / name).is_file()


def test_render_is_deterministic(rendered, tmp_path):
    cfg = _write(tmp_path / "scene.ini", SCENE)
    main(["render", str(cfg), "--out", str(tmp_path / "again")])
    for name in ("I1.pfm", "I2.pfm", "I3.pfm", "normals_gt.pfm", "depth_gt.pfm"):
        assert (rendered / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_render_missing_lights(tmp_path, capsys):
    cfg = _write(tmp_path / "s.ini", "[surface]\nname = sphere\n")
    assert main(["render", str(cfg)]) == 2
    assert "[lights]" in capsys.readouterr().err


def test_bad_config_line_number(tmp_path, capsys):
    cfg = _write(tmp_path / "s.ini", SCENE + "wobble = 3\n")
    assert main(["render", str(cfg)]) == 2
    assert "s.ini:19:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def reconstructed(rendered):
    outs = {}
    for solver in ("dogleg", "lm"):
        out = rendered.parent / f"recon_{solver}"
        assert main(["reconstruct", str(rendered / "scene.ini"), "--solver", solver,
                     "--out", str(out)]) == 0
        outs[solver] = out
    return outs


def test_reconstruct_outputs(reconstructed):
    out = reconstructed["dogleg"]
    for name in ("normals.pfm", "depth.pfm", "albedo.pfm", "report.txt"):
        assert (out / name).is_file()
    rep = json.loads((out / "report.txt").read_text())
    assert rep["sweeps"] <= rep["max_sweeps"] == 3
    assert rep["solver"] == "dogleg" and rep["m"] > 0


def test_solver_reports_differ_only_in_solver_fields(reconstructed):
    a, b = (json.loads((reconstructed[s] / "report.txt").read_text()) for s in ("dogleg", "lm"))
    iterate_fields = {"solver", "mean_objective_per_sweep", "solver_status", "mean_albedo",
                      "m", "sweeps", "stop_reason"}
    assert set(a) == set(b)
    for k in set(a) - iterate_fields:
        assert a[k] == b[k], k


def test_threads_do_not_change_bytes(rendered, reconstructed, tmp_path):
    out = tmp_path / "t2"
    assert main(["reconstruct", str(rendered / "scene.ini"), "--threads", "2",
                 "--out", str(out)]) == 0
    for name in ("normals.pfm", "depth.pfm", "albedo.pfm", "report.txt"):
        assert (out / name).read_bytes() == (reconstructed["dogleg"] / name).read_bytes()


def test_evaluate(rendered, reconstructed, tmp_path, capsys):
    assert main(["evaluate", str(rendered), str(rendered)]) == 0
    assert capsys.readouterr().out.strip() == "MAEN_deg=0.0 MSED=0.0"
    neg = tmp_path / "neg"
    neg.mkdir()
    write_pfm(neg / "normals.pfm", -read_pfm(rendered / "normals_gt.pfm"))
    write_pfm(neg / "depth.pfm", read_pfm(rendered / "depth_gt.pfm"))
    assert main(["evaluate", str(neg), str(rendered)]) == 0
    assert capsys.readouterr().out.startswith("MAEN_deg=180.0 ")
    assert main(["evaluate", str(reconstructed["dogleg"]), str(rendered)]) == 0
    line = capsys.readouterr().out.strip()
    vals = dict(kv.split("=") for kv in line.split())
    assert float(vals["MAEN_deg"]) < 1.0 and float(vals["MSED"]) < 1e-4


def test_evaluate_errors(rendered, tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "normals.pfm").write_bytes(b"P7\n1 1\n-1\n")
    write_pfm(bad / "depth.pfm", np.zeros((2, 2), np.float32))
    assert main(["evaluate", str(bad), str(rendered)]) == 2
    assert "normals.pfm" in capsys.readouterr().err
    assert main(["evaluate", str(tmp_path / "nowhere"), str(rendered)]) == 2


def test_reconstruct_input_errors(rendered, tmp_path):
    text = (rendered / "scene.ini").read_text()
    two = text.replace("I1.pfm, I2.pfm, I3.pfm", "I1.pfm, I2.pfm")
    assert two != text
    assert main(["reconstruct", str(_write(rendered / "two.ini", two))]) == 2
    flat = text
    for i, v in ((1, "1.0 0.0 0.0"), (2, "0.0 1.0 0.0"), (3, "1.0 1.0 0.0")):
        line = next(l for l in text.splitlines() if l.startswith(f"light{i} ="))
        flat = flat.replace(line, f"light{i} = directional {v} 1.0")
    assert main(["reconstruct", str(_write(rendered / "flat.ini", flat)),
                 "--out", str(tmp_path / "x")]) == 3


def test_version_and_module_entry(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and __version__ in capsys.readouterr().out
    r = subprocess.run([sys.executable, "-m", "ctstereo.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "reconstruct" in r.stdout
