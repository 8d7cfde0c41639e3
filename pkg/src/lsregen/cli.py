"""Command-line driver: ``lsregen generate | ablate | eval``.

Exit codes: 0 success, 1 runtime failure, 2 usage, config or layout error.
Every successful command writes ``manifest.json`` into its output directory.
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import build_mixtures, run_batch
from .evaluation import FidelityReport, adherence, diversity, template_rms, trend_report
from .exceptions import ConfigError, FormatError, LayoutError, NoMatchingLayoutError
from .io import (
    from_display,
    layout_to_dict,
    read_layout,
    read_ppm,
    to_display,
    write_json,
    write_jsonl,
    write_ppm,
    write_tensor,
)
from .pipeline import lsregen_run
from .config import load_config
from .scene import symmetry_family

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
KNOBS = {
    "gamma": ("guidance.gamma", float),
    "fraction": ("guidance.guided_fraction", float),
    "steps": ("sampler.num_sample_steps", int),
}


class UsageError(Exception):
    """Bad inputs detected after argument parsing (exit code 2)."""


def git_describe():
    """``git describe`` of the source tree, or ``"unknown"`` outside a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _load_inputs(args):
    overrides = {}
    if getattr(args, "reference", None):
        overrides["pipeline.reference"] = args.reference
    if getattr(args, "extractor", None):
        overrides["guidance.extractor"] = args.extractor
    if getattr(args, "seed", None) is not None:
        overrides["pipeline.seed"] = args.seed
    cfg = load_config(args.config)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    try:
        layout = read_layout(args.layout)
    except OSError as exc:
        raise UsageError(f"cannot read layout {args.layout}: {exc.strerror or exc}") from None
    return cfg, layout


def _scene(cfg, layout):
    """Schedule, small layout, family and mixtures for a run config."""
    s = cfg.schedule.build()
    pc = cfg.pipeline
    small_layout = layout.with_canvas(pc.small_canvas)
    family = symmetry_family(small_layout)
    m_small, m_large = build_mixtures(family, pc.scale, cfg.scene.pixel_sigma_small, cfg.scene.pixel_sigma_large,
                                      cfg.scene.grain, cfg.scene.supersample)
    return s, small_layout, family, m_small, m_large


def _manifest(command, cfg, layout, start, metrics, outputs, extra=None):
    doc = {
        "tool": "lsregen",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "layout": layout_to_dict(layout),
        "seeds": {"run": cfg.seed},
        "git_describe": git_describe(),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "metrics": metrics,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    return doc


def cmd_generate(args):
    start = time.perf_counter()
    cfg, layout = _load_inputs(args)
    s, small_layout, _, m_small, m_large = _scene(cfg, layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = lsregen_run(small_layout, m_small, m_large, cfg.pipeline, s, cfg.seed)
    large_layout = layout.with_canvas(cfg.pipeline.large_canvas)
    adh = adherence(rec.image, large_layout)
    metrics = {
        "adherence_rate": adh.adherence_rate,
        "mean_iou": adh.mean_iou,
        "detection_rate": adh.detection_rate,
        "template_rms": template_rms(rec.image, m_large),
    }
    write_ppm(rec.image, out / "image.ppm", to_display)
    outputs = ["image.ppm", "manifest.json"]
    extra = {"seeds": {k: int(v) for k, v in rec.seeds.items()}, "guided_steps": rec.guided_steps}
    if args.dump_trajectory:
        write_tensor(rec.trajectory.stacked(), out / "trajectory.gdt")
        extra["trajectory_timesteps"] = list(rec.trajectory.timesteps)
        outputs.insert(1, "trajectory.gdt")
    write_json(_manifest("generate", cfg, layout, start, metrics, outputs, extra), out / "manifest.json")
    print(f"wrote {out / 'image.ppm'} (adherence {adh.adherence_rate:.2f})")
    return EXIT_OK


def _parse_grid(knob, text):
    key, kind = KNOBS[knob]
    try:
        values = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--grid values must be {kind.__name__}s, got {text!r}") from None
    if len(values) < 2:
        raise UsageError("--grid needs at least two values")
    return key, values


def cmd_ablate(args):
    start = time.perf_counter()
    key, values = _parse_grid(args.knob, args.grid)
    cfg, layout = _load_inputs(args)
    if args.seeds < 1:
        raise UsageError("--seeds must be positive")
    s, _, family, m_small, m_large = _scene(cfg, layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    records, grouped, summary = [], [], []
    for value in values:
        run_cfg = cfg.with_overrides({key: value})
        results = run_batch(family, m_small, m_large, run_cfg.pipeline, s, seeds, args.jobs)
        for r in results:
            records.append({"knob": args.knob, "value": value, **r.to_dict()})
        grouped.append(({args.knob: value}, [r.adherence for r in results], [r.fidelity for r in results]))
        summary.append({"value": value,
                        "adherence_rate": float(np.mean([r.adherence.adherence_rate for r in results])),
                        "template_rms": float(np.mean([r.fidelity.template_rms for r in results]))})
    write_jsonl(records, out / "runs.jsonl")
    trend = [v.to_dict() for v in trend_report(grouped)]
    write_json({"knob": args.knob, "grid": values, "trends": trend}, out / "trend.json")
    write_json(_manifest("ablate", cfg, layout, start, {"per_value": summary},
                         ["runs.jsonl", "trend.json", "manifest.json"],
                         {"knob": args.knob, "grid": values, "seeds": {"run_seeds": seeds}}), out / "manifest.json")
    for row in summary:
        print(f"{args.knob}={row['value']}: adherence {row['adherence_rate']:.3f} template_rms {row['template_rms']:.4f}")
    return EXIT_OK


def cmd_eval(args):
    start = time.perf_counter()
    cfg = load_config(args.config)
    try:
        layout = read_layout(args.layout)
    except OSError as exc:
        raise UsageError(f"cannot read layout {args.layout}: {exc.strerror or exc}") from None
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        raise UsageError(f"images directory not found: {images_dir}")
    files = sorted(images_dir.glob("*.ppm"))
    if not files:
        raise UsageError(f"no .ppm files in {images_dir}")
    _, _, family, _, m_large = _scene(cfg, layout)
    records, ok_images, failures = [], [], 0
    for path in files:
        try:
            img = from_display(read_ppm(path))
        except (FormatError, OSError) as exc:
            failures += 1
            records.append({"file": path.name, "error": str(exc)})
            continue
        target = layout.with_canvas(img.shape[1:])
        adh = adherence(img, target)
        rec = {"file": path.name, "adherence": adh.to_dict()}
        if img.shape == m_large.shape:
            rec["fidelity"] = FidelityReport(template_rms(img, m_large)).to_dict()
        records.append(rec)
        ok_images.append(img)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out / "eval.jsonl")
    rates = [r["adherence"]["adherence_rate"] for r in records if "adherence" in r]
    same_shape = [x for x in ok_images if x.shape == ok_images[0].shape] if ok_images else []
    metrics = {
        "files": len(files),
        "failed": failures,
        "mean_adherence_rate": float(np.mean(rates)) if rates else None,
        "diversity": diversity(same_shape),
    }
    write_json(_manifest("eval", cfg, layout, start, metrics, ["eval.jsonl", "manifest.json"]), out / "manifest.json")
    print(f"evaluated {len(files) - failures}/{len(files)} images; mean adherence {metrics['mean_adherence_rate']}")
    if failures:
        print(f"error: {failures} file(s) could not be read", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lsregen", description="Guided large-scale layout-to-image sampling.")
    parser.add_argument("--version", action="version", version=f"lsregen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--layout", required=True, help="layout JSON file")
        p.add_argument("--config", help="run config file (INI); defaults when omitted")
        p.add_argument("--out", required=True, help=out_help)

    def run_flags(p):
        p.add_argument("--seed", type=int, help="run seed (overrides [pipeline] seed)")
        p.add_argument("--reference", choices=("invert", "noise"), help="how reference latents are built")
        p.add_argument("--extractor", choices=("identity", "lowpass"), help="guidance feature extractor")

    g = sub.add_parser("generate", help="generate one large image for a layout")
    common(g, "output directory")
    run_flags(g)
    g.add_argument("--dump-trajectory", action="store_true", help="also write trajectory.gdt")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("ablate", help="sweep one knob over several seeds")
    common(a, "output directory")
    run_flags(a)
    a.add_argument("--knob", required=True, choices=sorted(KNOBS))
    a.add_argument("--grid", required=True, help="comma-separated values, at least two")
    a.add_argument("--seeds", type=int, default=20, help="runs per grid value (default 20)")
    a.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    a.set_defaults(func=cmd_ablate)

    e = sub.add_parser("eval", help="score a directory of PPM images against a layout")
    e.add_argument("--images", required=True, help="directory of .ppm files")
    common(e, "output directory")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, LayoutError, NoMatchingLayoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
