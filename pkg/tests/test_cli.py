import subprocess
import sys

import pytest

from lsregen.benchmark import build_mixtures, quadrant_layouts
from lsregen.cli import main
from lsregen.io import read_json, read_jsonl, to_display, write_layout, write_ppm
from lsregen.scene import render_template


@pytest.fixture
def layout_file(tmp_path):
    path = tmp_path / "layout.json"
    write_layout(quadrant_layouts()[0], path)
    return path


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text("[sampler]\nnum_sample_steps = 20\n")
    return path


def test_generate_outputs(tmp_path, layout_file):
    out = tmp_path / "run"
    assert main(["generate", "--layout", str(layout_file), "--out", str(out), "--dump-trajectory"]) == 0
    assert {p.name for p in out.iterdir()} == {"image.ppm", "manifest.json", "trajectory.gdt"}
    manifest = read_json(out / "manifest.json")
    for key in ("config", "layout", "seeds", "git_describe", "wall_time_s", "metrics", "outputs"):
        assert key in manifest
    assert manifest["metrics"]["adherence_rate"] == 1.0
    assert manifest["guided_steps"] == [1000, 980, 960, 940, 920]


def test_generate_deterministic(tmp_path, layout_file, fast_config):
    args = ["generate", "--layout", str(layout_file), "--config", str(fast_config), "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "image.ppm").read_bytes() == (tmp_path / "b" / "image.ppm").read_bytes()
    assert read_json(tmp_path / "a" / "manifest.json")["metrics"] == read_json(tmp_path / "b" / "manifest.json")["metrics"]


def test_missing_layout(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["generate", "--layout", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_bad_config(tmp_path, layout_file, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[guidance]\ngama = 1\n")
    assert main(["generate", "--layout", str(layout_file), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "gama" in capsys.readouterr().err


def test_invalid_layout(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"canvas":[16,16],"boxes":[{"x":0.9,"y":0,"w":0.3,"h":0.2,"label":"car"}]}')
    assert main(["generate", "--layout", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "boxes[0]" in capsys.readouterr().err


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["generate"])
    assert info.value.code == 2


def test_ablate(tmp_path, layout_file, fast_config):
    out = tmp_path / "abl"
    code = main(["ablate", "--layout", str(layout_file), "--config", str(fast_config), "--knob", "fraction",
                 "--grid", "0.0,0.1", "--seeds", "8", "--out", str(out)])
    assert code == 0
    rows = read_jsonl(out / "runs.jsonl")
    assert len(rows) == 16 and {r["value"] for r in rows} == {0.0, 0.1}
    per_value = read_json(out / "manifest.json")["metrics"]["per_value"]
    assert per_value[1]["adherence_rate"] >= per_value[0]["adherence_rate"]
    trend = read_json(out / "trend.json")
    assert trend["knob"] == "fraction" and {t["metric"] for t in trend["trends"]} == {"adherence_rate", "template_rms"}


def test_ablate_bad_grid(tmp_path, layout_file):
    assert main(["ablate", "--layout", str(layout_file), "--knob", "steps", "--grid", "10",
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["ablate", "--layout", str(layout_file), "--knob", "gamma", "--grid", "a,b",
                 "--out", str(tmp_path / "o")]) == 2


class TestEval:
    def test_ground_truth(self, tmp_path, layout_file):
        images = tmp_path / "imgs"
        images.mkdir()
        write_ppm(render_template(quadrant_layouts()[0].with_canvas((48, 48))), images / "native.ppm", to_display)
        _, m_large = build_mixtures(quadrant_layouts())
        write_ppm(m_large.means[0], images / "template.ppm", to_display)
        out = tmp_path / "ev"
        assert main(["eval", "--images", str(images), "--layout", str(layout_file), "--out", str(out)]) == 0
        rows = {r["file"]: r for r in read_jsonl(out / "eval.jsonl")}
        assert rows["native.ppm"]["adherence"]["adherence_rate"] == 1.0
        assert rows["template.ppm"]["adherence"]["adherence_rate"] == 1.0
        # Quantisation to 8 bits on the display scale is at most 1/255 on the signed scale.
        assert rows["template.ppm"]["fidelity"]["template_rms"] <= 1 / 255

    def test_empty_dir(self, tmp_path, layout_file):
        (tmp_path / "empty").mkdir()
        assert main(["eval", "--images", str(tmp_path / "empty"), "--layout", str(layout_file),
                     "--out", str(tmp_path / "ev")]) == 2

    def test_corrupt_file(self, tmp_path, layout_file):
        images = tmp_path / "imgs"
        images.mkdir()
        write_ppm(render_template(quadrant_layouts()[0].with_canvas((48, 48))), images / "a.ppm", to_display)
        (images / "b.ppm").write_bytes(b"P6\n4 4\n255\n\x00")
        out = tmp_path / "ev"
        assert main(["eval", "--images", str(images), "--layout", str(layout_file), "--out", str(out)]) == 1
        rows = {r["file"]: r for r in read_jsonl(out / "eval.jsonl")}
        assert "error" in rows["b.ppm"] and rows["a.ppm"]["adherence"]["adherence_rate"] == 1.0


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "lsregen.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("lsregen ")
