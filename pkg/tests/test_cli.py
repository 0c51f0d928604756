import math
import shutil
import subprocess
import sys

import pytest

from detreflect.cli import main
from detreflect.kernels import format_kernel_spec, knudsen_kernel, retro_kernel, specular_kernel
from detreflect.scenefile import format_rays, format_scene, load_scene, parse_trace_output
from detreflect.tracer import Guard, MirrorScene, Status
from detreflect.verify import parse_report


@pytest.fixture()
def files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_synthesize_retro_gives_circles_in_depth(files, tmp_path):
    spec = files("retro.txt", format_kernel_spec(retro_kernel()))
    out = str(tmp_path / "scene.txt")
    assert main(["synthesize", spec, "--level", "2", "--eps0", "0.1", "--depth-n", "10", "--out", out]) == 0
    scene, prov = load_scene(out)
    assert scene.arcs and all(a.focus1 == a.focus2 for a in scene.arcs)
    assert all(-0.1 < a.bbox()[1] and a.bbox()[3] < 0 for a in scene.arcs)
    assert scene.guard == Guard(0.1, (0.0, 1.0))
    assert prov["variant"] == "retro" and prov["m"] == "2"


def test_synthesize_is_byte_deterministic(files, tmp_path):
    spec = files("spec.txt", format_kernel_spec(specular_kernel()))
    a, b = str(tmp_path / "a.txt"), str(tmp_path / "b.txt")
    for out in (a, b):
        assert main(["synthesize", spec, "--level", "1", "--eps0", "0.2", "--max-gen", "2", "--out", out]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_synthesize_rejects_bad_config(files, tmp_path):
    spec = files("k.txt", format_kernel_spec(knudsen_kernel()))
    assert main(["synthesize", spec, "--eps0", "1.5", "--out", str(tmp_path / "s")]) == 2
    assert main(["synthesize", spec, "--level", "-1", "--out", str(tmp_path / "s")]) == 2


def test_synthesize_names_failing_stage(files, tmp_path, capsys, monkeypatch):
    import detreflect.synthesize as synth
    from detreflect.transposer import InfeasibleBundle

    def boom(*a, **k):
        raise InfeasibleBundle("no scale found")
    monkeypatch.setattr(synth, "assemble", boom)
    spec = files("k.txt", format_kernel_spec(knudsen_kernel()))
    out = tmp_path / "s"
    assert main(["synthesize", spec, "--out", str(out)]) == 2
    assert "stage assemble" in capsys.readouterr().err
    assert not out.exists()


def test_synthesize_bad_spec(files, capsys):
    spec = files("bad.txt", "detreflect-kernel 1\nvariant = nope\n")
    assert main(["synthesize", spec]) == 2
    assert "error" in capsys.readouterr().err


def test_trace_flat_floor(files, tmp_path):
    scene = files("floor.txt", format_scene(MirrorScene(guard=Guard(0.25))))
    rays = files("rays.txt", format_rays([0.3], [-2.0]))
    out = str(tmp_path / "out.txt")
    assert main(["trace", scene, rays, "--out", out]) == 0
    ((st, y, b, nb),) = parse_trace_output(open(out).read())
    assert st is Status.RETURNED and nb == 1
    assert y == pytest.approx(0.3 - 0.5 / math.tan(-2.0), abs=1e-12)
    assert b == pytest.approx(-math.pi + 2.0, abs=1e-12)


def test_trace_empty_ray_file(files, tmp_path):
    scene = files("floor.txt", format_scene(MirrorScene(guard=Guard(0.25))))
    rays = files("rays.txt", "")
    out = tmp_path / "out.txt"
    assert main(["trace", scene, rays, "--out", str(out)]) == 0
    assert out.read_text() == ""


def test_trace_parse_error_has_line(files, capsys):
    scene = files("floor.txt", format_scene(MirrorScene(guard=Guard(0.25))))
    rays = files("rays.txt", "0 -1\n0 1\n")
    assert main(["trace", scene, rays]) == 2
    assert "line 2" in capsys.readouterr().err


def test_trace_paths_and_render(files, tmp_path):
    scene = files("box.txt", format_scene(MirrorScene(guard=Guard(0.1, (0.0, 1.0)))))
    rays = files("rays.txt", format_rays([0.9], [-0.5]))
    paths, svg = str(tmp_path / "p.txt"), str(tmp_path / "s.svg")
    assert main(["trace", scene, rays, "--out", str(tmp_path / "o"), "--paths", paths]) == 0
    assert len(open(paths).read().split()) == 2 * 4  # start, floor, wall, exit
    assert main(["render", scene, "--paths", paths, "--out", svg]) == 0
    assert open(svg).read().startswith("<svg")


def test_verify_flat_floor_against_specular(files, tmp_path):
    scene = files("floor.txt", format_scene(MirrorScene(guard=Guard(1e-3))))
    spec = files("spec.txt", format_kernel_spec(specular_kernel()))
    out = str(tmp_path / "r.txt")
    args = ["verify", scene, spec, "--level", "2", "--rays", "20000", "--reverse", "500", "--eps0", "0.1",
            "--out", out]
    assert main(args) == 0
    rep = parse_report(open(out).read())
    assert rep["passed"] == "true"
    first = open(out).read()
    assert main(args) == 0
    assert open(out).read() == first


def test_verify_failure_exit_code(files, tmp_path, capsys):
    scene = files("floor.txt", format_scene(MirrorScene(guard=Guard(1e-3)), {"kernel_sha256": "00"}))
    spec = files("k.txt", format_kernel_spec(knudsen_kernel()))
    assert main(["verify", scene, spec, "--level", "2", "--rays", "5000", "--reverse", "100",
                 "--out", str(tmp_path / "r")]) == 1
    assert "different kernel" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("detreflect")
    cmd = [exe] if exe else [sys.executable, "-m", "detreflect.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "synthesize" in res.stdout
