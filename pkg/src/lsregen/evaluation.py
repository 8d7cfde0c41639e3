"""Layout adherence, fidelity, diversity and spectral metrics."""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, stats
from scipy.spatial.distance import pdist

from .exceptions import InvalidArgumentError, UndefinedCorrelationError
from .guidance import LowpassExtractor
from .scene import BoundingBox, box_iou, default_palette

DETECTION_THRESHOLD = 0.5


def detect_box(img, label, palette=None, threshold=DETECTION_THRESHOLD):
    """Threshold the projection onto a label's colour and box the largest blob.

    Args:
        img: (C, H, W) grid.
        label: Label to look for.
        palette: Label to unit colour mapping; defaults to the package palette.
        threshold: Projection threshold in (0, 1).

    Returns:
        ``(mask, box)`` where ``mask`` is the boolean mask of the largest
        connected component (4-connectivity) and ``box`` its tight bounding
        rectangle in normalised coordinates, or ``(mask, None)`` when nothing
        exceeds the threshold. Ties in component size go to the first in
        raster order.

    Raises:
        InvalidArgumentError: Unknown label or threshold outside (0, 1).
    """
    palette = default_palette() if palette is None else palette
    if label not in palette:
        raise InvalidArgumentError(f"unknown label {label!r}")
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    img = np.asarray(img, dtype=np.float64)
    proj = np.tensordot(np.asarray(palette[label], dtype=np.float64), img, axes=1)
    above = proj > threshold
    labelled, n = ndimage.label(above)
    if n == 0:
        return above, None
    sizes = ndimage.sum_labels(above, labelled, index=np.arange(1, n + 1))
    mask = labelled == int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(mask)
    H, W = mask.shape
    x0, y0 = xs.min() / W, ys.min() / H
    box = BoundingBox(x0, y0, (xs.max() + 1) / W - x0, (ys.max() + 1) / H - y0, label)
    return mask, box


@dataclass
class BoxResult:
    label: str
    detected: bool
    centroid_in_box: bool
    iou: float
    placed: bool


@dataclass
class AdherenceReport:
    """Per-box detection results and their aggregates.

    Attributes:
        boxes: One :class:`BoxResult` per layout box.
        adherence_rate: Fraction of boxes detected with IoU >= the threshold.
        mean_iou: Mean IoU (0 for undetected boxes).
        detection_rate: Fraction of boxes with any detection.
    """

    boxes: list = field(default_factory=list)
    adherence_rate: float = 0.0
    mean_iou: float = 0.0
    detection_rate: float = 0.0

    def to_dict(self):
        return asdict(self)


def adherence(img, layout, palette=None, iou_threshold=0.5, threshold=DETECTION_THRESHOLD):
    """Check every layout box against the detector.

    A box counts as placed when its label is detected and the fitted box has
    IoU of at least ``iou_threshold`` with it.
    """
    results = []
    for box in layout.boxes:
        mask, fitted = detect_box(img, box.label, palette, threshold)
        if fitted is None:
            results.append(BoxResult(box.label, False, False, 0.0, False))
            continue
        ys, xs = np.nonzero(mask)
        H, W = mask.shape
        cx, cy = (xs.mean() + 0.5) / W, (ys.mean() + 0.5) / H
        inside = box.x <= cx <= box.x + box.w and box.y <= cy <= box.y + box.h
        iou = box_iou(fitted, box)
        results.append(BoxResult(box.label, True, bool(inside), float(iou), bool(iou >= iou_threshold)))
    n = len(results)
    if n == 0:
        return AdherenceReport()
    return AdherenceReport(
        boxes=results,
        adherence_rate=sum(r.placed for r in results) / n,
        mean_iou=float(np.mean([r.iou for r in results])),
        detection_rate=sum(r.detected for r in results) / n,
    )


def template_rms(img, m):
    """RMS distance from ``img`` to the nearest template of mixture ``m``."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != m.shape:
        raise InvalidArgumentError(f"image shape {img.shape} does not match templates {m.shape}")
    d = np.sqrt(((m.means - img[None]) ** 2).mean(axis=(1, 2, 3)))
    return float(d.min())


def diversity(images):
    """Mean pairwise RMS distance between images (0 for fewer than two)."""
    flat = np.asarray([np.ravel(x) for x in images], dtype=np.float64)
    if len(flat) < 2:
        return 0.0
    return float(np.mean(pdist(flat, "euclidean")) / np.sqrt(flat.shape[1]))


def pearson(a, b):
    """Pearson correlation of two equally shaped arrays.

    Raises:
        UndefinedCorrelationError: Either input has zero variance.
    """
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1.0)
    if na <= 1e-12 * scale or nb <= 1e-12 * scale:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance input")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def lowband_correlation(a, b, cutoff_fraction=0.2):
    """Pearson correlation of the low-pass filtered inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    lp = LowpassExtractor(cutoff_fraction)
    return pearson(lp.extract(a), lp.extract(b))


@dataclass
class FidelityReport:
    """Fidelity proxies; reported side by side, never merged into one score."""

    template_rms: float
    diversity: float = 0.0
    lowband_corr: float | None = None

    def to_dict(self):
        return asdict(self)


# Trend analysis over ablation grids

METRICS = {
    "adherence_rate": lambda adh, fid: adh.adherence_rate,
    "mean_iou": lambda adh, fid: adh.mean_iou,
    "template_rms": lambda adh, fid: fid.template_rms,
}


@dataclass
class GroupSummary:
    value: object
    n: int
    mean: float
    ci_low: float
    ci_high: float


@dataclass
class TrendVerdict:
    """Direction of one metric along the varied knob.

    ``verdict`` is ``"increasing"``/``"decreasing"`` when at least one
    consecutive pair of groups has separated confidence intervals and none
    goes the other way, ``"flat"`` when every pair overlaps, and
    ``"mixed"`` otherwise.
    """

    knob: str
    metric: str
    groups: list
    verdict: str

    def to_dict(self):
        return asdict(self)


def bootstrap_ci(values, confidence=0.95, n_resamples=2000, seed=0):
    """Percentile bootstrap interval for the mean."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2 or np.all(values == values[0]):
        m = float(values.mean()) if len(values) else float("nan")
        return m, m
    res = stats.bootstrap((values,), np.mean, confidence_level=confidence, n_resamples=n_resamples,
                          method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def summarize(values, value=None, confidence=0.95, seed=0):
    lo, hi = bootstrap_ci(values, confidence, seed=seed)
    return GroupSummary(value, len(values), float(np.mean(values)), lo, hi)


def _pair_direction(a, b):
    if b.ci_low > a.ci_high:
        return 1
    if b.ci_high < a.ci_low:
        return -1
    return 0


def _verdict(groups):
    dirs = [_pair_direction(a, b) for a, b in zip(groups, groups[1:])]
    if all(d == 0 for d in dirs):
        return "flat"
    if all(d >= 0 for d in dirs):
        return "increasing"
    if all(d <= 0 for d in dirs):
        return "decreasing"
    return "mixed"


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def varied_knob(configs):
    """Name of the single config key whose value differs across configs, or None."""
    keys = sorted(set().union(*(c.keys() for c in configs)))
    varied = [k for k in keys if len({repr(c.get(k)) for c in configs}) > 1]
    if len(varied) > 1:
        raise InvalidArgumentError(f"configs vary in more than one knob: {varied}")
    return varied[0] if varied else None


def trend_report(runs, metrics=("adherence_rate", "template_rms"), confidence=0.95):
    """Monotonicity verdicts with bootstrap intervals for an ablation grid.

    Args:
        runs: Sequence of ``(config, adherence_reports, fidelity_reports)``,
            one entry per grid value. ``config`` is a flat dict; exactly one
            key may differ between entries (the knob). Reports may be single
            objects or lists over seeds.
        metrics: Names from ``METRICS``.
        confidence: Interval level.

    Returns:
        List of :class:`TrendVerdict`, one per metric, with groups ordered
        by knob value.

    Raises:
        InvalidArgumentError: Fewer than two entries or several varied knobs.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise InvalidArgumentError("trend_report needs at least two configs")
    knob = varied_knob([dict(cfg) for cfg, _, _ in runs])
    if knob is not None:
        runs = sorted(runs, key=lambda r: r[0][knob])
    out = []
    for metric in metrics:
        if metric not in METRICS:
            raise InvalidArgumentError(f"unknown metric {metric!r}")
        groups = []
        for cfg, adh, fid in runs:
            adh, fid = _as_list(adh), _as_list(fid)
            if len(adh) != len(fid):
                raise InvalidArgumentError("adherence and fidelity report counts differ")
            vals = [METRICS[metric](a, f) for a, f in zip(adh, fid)]
            groups.append(summarize(vals, cfg.get(knob) if knob else None, confidence))
        out.append(TrendVerdict(knob or "", metric, groups, _verdict(groups)))
    return out
