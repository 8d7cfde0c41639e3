"""The two-box quadrant benchmark and a batch runner for seeds and grids.

Four layouts place two boxes in opposite quadrants of the canvas. The small
scene family renders them at 16x16 with a fine pixel-parity grain (the
detail a small model produces but a nearest upsample cannot represent).
The large family is the clean small templates upsampled by the scale
factor, so small and large families describe the same scenes.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .evaluation import AdherenceReport, FidelityReport, adherence, lowband_correlation, pearson, template_rms
from .pipeline import lsregen_run
from .scene import BoundingBox, LayoutSpec, mixture_from_layouts, upscale_mixture

QUADRANTS = ((0.05, 0.05), (0.55, 0.05), (0.55, 0.55), (0.05, 0.55))


def quadrant_layouts(canvas=(16, 16), size=0.4, labels=("person", "car")):
    """Four layouts; layout ``i`` puts ``labels[0]`` in quadrant ``i`` and
    ``labels[1]`` in the opposite quadrant."""
    out = []
    for i in range(4):
        (ax, ay), (bx, by) = QUADRANTS[i], QUADRANTS[(i + 2) % 4]
        out.append(LayoutSpec((BoundingBox(ax, ay, size, size, labels[0]),
                               BoundingBox(bx, by, size, size, labels[1])), canvas))
    return out


def build_mixtures(layouts, scale=3, pixel_sigma_small=0.01, pixel_sigma_large=0.1, grain=0.05,
                   supersample=4, mode="nearest"):
    """Small family (with grain) and the large family upsampled from clean small renders."""
    clean = mixture_from_layouts(layouts, pixel_sigma_small, supersample=supersample)
    m_small = mixture_from_layouts(layouts, pixel_sigma_small, grain=grain, supersample=supersample)
    m_large = upscale_mixture(clean, scale, pixel_sigma_large, mode)
    return m_small, m_large


@dataclass
class RunResult:
    """Metrics of one pipeline run (arrays dropped to keep results picklable and small)."""

    seed: int
    target: int
    adherence: AdherenceReport
    fidelity: FidelityReport
    small_component: int
    hook_calls: int

    def to_dict(self):
        return {
            "seed": self.seed,
            "target": self.target,
            "adherence": self.adherence.to_dict(),
            "fidelity": self.fidelity.to_dict(),
            "small_component": self.small_component,
            "hook_calls": self.hook_calls,
        }


def run_one(layout, m_small, m_large, pc, s, seed, target=0, band_cutoff=0.2):
    """One generation plus its metrics.

    ``fidelity.lowband_corr`` is the low-band correlation between the final
    image and the upsampled small image.
    """
    rec = lsregen_run(layout, m_small, m_large, pc, s, seed)
    large_layout = layout.with_canvas(pc.large_canvas)
    adh = adherence(rec.image, large_layout)
    try:
        lb = lowband_correlation(rec.image, rec.reference_image, band_cutoff)
    except ArithmeticError:
        lb = None
    fid = FidelityReport(template_rms(rec.image, m_large), 0.0, lb)
    return RunResult(int(seed), int(target), adh, fid, rec.small_component, rec.hook_calls)


def _run_task(args):
    return run_one(*args)


def run_batch(layouts, m_small, m_large, pc, s, seeds, jobs=1):
    """Run seed ``seeds[i]`` on layout ``layouts[seeds[i] % len(layouts)]``.

    Results are identical for any ``jobs``; ``jobs > 1`` uses a process pool.
    """
    tasks = [(layouts[seed % len(layouts)], m_small, m_large, pc, s, seed, seed % len(layouts)) for seed in seeds]
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def reference_band_correlations(record, cutoff=0.2):
    """Low-band and full-band correlation of each guided reference latent with the reference image."""
    rows = []
    for t in record.guided_steps:
        z = record.reference.at(t)
        rows.append((t, lowband_correlation(z, record.reference_image, cutoff), pearson(z, record.reference_image)))
    return rows


def rates(results):
    return np.array([r.adherence.adherence_rate for r in results])


def rms_values(results):
    return np.array([r.fidelity.template_rms for r in results])
