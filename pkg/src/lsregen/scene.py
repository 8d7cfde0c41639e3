"""Layouts, the template renderer, and Gaussian-mixture scene distributions.

A scene distribution is a mixture of isotropic Gaussians whose means are
rendered layout templates. Every label owns a unit colour vector; the
default palette uses the eight vertices of the cube ``{-1, 1}^3 / sqrt(3)``
so that any two colours have inner product at most 1/3.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_random_state
from .exceptions import InvalidArgumentError
from .resample import upsample

VOCABULARY = ("person", "car", "dog", "cat", "bird", "boat", "chair", "tree")
MAX_BOXES = 8
# Radius (as a fraction of the inscribed ellipse) where the cosine taper starts.
FLAT_RADIUS = 0.9
_EDGE_TOL = 1e-9


def default_palette():
    """Map each vocabulary label to a distinct unit colour in 3 channels."""
    signs = itertools.product((1.0, -1.0), repeat=3)
    return {label: np.array(s) / math.sqrt(3.0) for label, s in zip(VOCABULARY, signs)}


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalised canvas coordinates (top-left origin)."""

    x: float
    y: float
    w: float
    h: float
    label: str

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise InvalidArgumentError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidArgumentError(f"{name} must be finite")
            object.__setattr__(self, name, float(value))
        if not (0.0 <= self.x < 1.0 and 0.0 <= self.y < 1.0):
            raise InvalidArgumentError(f"box origin ({self.x}, {self.y}) outside [0, 1)")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise InvalidArgumentError(f"box size ({self.w}, {self.h}) outside (0, 1]")
        if self.x + self.w > 1.0 + _EDGE_TOL or self.y + self.h > 1.0 + _EDGE_TOL:
            raise InvalidArgumentError("box extends past the canvas (x+w or y+h > 1)")
        if not isinstance(self.label, str) or not self.label:
            raise InvalidArgumentError(f"label must be a non-empty string, got {self.label!r}")

    @property
    def area(self):
        return self.w * self.h

    @property
    def center(self):
        return (self.x + self.w / 2, self.y + self.h / 2)

    def shifted(self, dx, dy):
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h, self.label)


@dataclass(frozen=True)
class LayoutSpec:
    """Boxes plus the pixel canvas ``(height, width)`` they are drawn on.

    The constructor accepts an empty box list (useful for rendering a bare
    background); :meth:`validate` enforces the full 1..8 box invariant and
    is applied by the file reader and the generation pipeline.
    """

    boxes: tuple
    canvas: tuple

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not all(isinstance(b, BoundingBox) for b in boxes):
            raise InvalidArgumentError("boxes must be BoundingBox instances")
        if len(boxes) > MAX_BOXES:
            raise InvalidArgumentError(f"at most {MAX_BOXES} boxes allowed, got {len(boxes)}")
        canvas = tuple(self.canvas)
        if len(canvas) != 2 or any(isinstance(c, bool) or int(c) != c or c < 1 for c in canvas):
            raise InvalidArgumentError(f"canvas must be two positive integers, got {self.canvas!r}")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "canvas", (int(canvas[0]), int(canvas[1])))

    def validate(self):
        if not 1 <= len(self.boxes) <= MAX_BOXES:
            raise InvalidArgumentError(f"layout needs 1..{MAX_BOXES} boxes, got {len(self.boxes)}")
        return self

    @property
    def labels(self):
        return sorted(b.label for b in self.boxes)

    def with_canvas(self, canvas):
        return LayoutSpec(self.boxes, canvas)


def box_iou(a, b):
    """Intersection over union of two boxes given as objects with x, y, w, h."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def layout_matches(query, template, iou_threshold=0.9):
    """True if both layouts share a label multiset and every query box has a
    same-label template box with IoU >= ``iou_threshold``."""
    if query.labels != template.labels:
        return False
    for qb in query.boxes:
        if not any(tb.label == qb.label and box_iou(qb, tb) >= iou_threshold for tb in template.boxes):
            return False
    return True


def _profile(r):
    taper = np.clip((r - FLAT_RADIUS) / (1.0 - FLAT_RADIUS), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * taper))


def grain_pattern(canvas, channels=3):
    """Zero-mean pixel-parity pattern (+1 on even ``i + j``, -1 on odd)."""
    H, W = canvas
    parity = np.add.outer(np.arange(H), np.arange(W)) % 2
    return np.broadcast_to(np.where(parity == 0, 1.0, -1.0), (channels, H, W)).copy()


def render_template(layout, canvas=None, palette=None, background=0.0, grain=0.0, supersample=4):
    """Render a layout to a (3, H, W) grid.

    Each box contributes a blob of its label colour: a disk inscribed in the
    box, flat out to 90% of the radius and cosine-tapered to zero at the box
    edge. Blobs are alpha-composited over the background in box order. Each
    pixel averages ``supersample**2`` point samples, which keeps renders at
    different resolutions consistent under box averaging.

    Args:
        layout: The :class:`LayoutSpec` to draw.
        canvas: Output ``(H, W)``; defaults to ``layout.canvas``.
        palette: Label to colour mapping; defaults to :func:`default_palette`.
        background: Scalar background value.
        grain: Amplitude of an additive pixel-parity pattern (0 disables).
        supersample: Point samples per pixel side.
    """
    palette = default_palette() if palette is None else palette
    H, W = layout.canvas if canvas is None else canvas
    ss = int(supersample)
    if ss < 1:
        raise InvalidArgumentError("supersample must be >= 1")
    colours = []
    for i, box in enumerate(layout.boxes):
        if box.label not in palette:
            raise InvalidArgumentError(f"box {i}: unknown label {box.label!r}")
        colours.append(np.asarray(palette[box.label], dtype=np.float64))
    channels = len(colours[0]) if colours else 3
    img = np.full((channels, H * ss, W * ss), float(background))
    yc = (np.arange(H * ss) + 0.5) / (H * ss)
    xc = (np.arange(W * ss) + 0.5) / (W * ss)
    for box, colour in zip(layout.boxes, colours):
        cx, cy = box.center
        r = np.sqrt(((xc[None, :] - cx) / (box.w / 2)) ** 2 + ((yc[:, None] - cy) / (box.h / 2)) ** 2)
        alpha = _profile(r)
        img = img * (1.0 - alpha) + alpha * colour[:, None, None]
    img = img.reshape(channels, H, ss, W, ss).mean(axis=(2, 4))
    if grain:
        img = img + grain * grain_pattern((H, W), channels)
    return img


@dataclass(frozen=True, eq=False)
class SceneMixture:
    """Equal-covariance Gaussian mixture over rendered templates.

    Attributes:
        layouts: One layout per component.
        means: Array (K, C, H, W) of component templates.
        weights: Mixture weights, non-negative and summing to 1.
        pixel_sigma: Per-pixel standard deviation of every component.
    """

    layouts: tuple
    means: np.ndarray
    weights: np.ndarray
    pixel_sigma: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 4:
            raise InvalidArgumentError("means must have shape (K, C, H, W)")
        if len(self.layouts) != len(means) or weights.shape != (len(means),):
            raise InvalidArgumentError("layouts, means and weights disagree on K")
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
            raise InvalidArgumentError("weights must be non-negative and sum to 1")
        if not (self.pixel_sigma >= 0 and math.isfinite(self.pixel_sigma)):
            raise InvalidArgumentError("pixel_sigma must be a non-negative real")
        means.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "layouts", tuple(self.layouts))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "pixel_sigma", float(self.pixel_sigma))

    @property
    def n_components(self):
        return len(self.means)

    @property
    def shape(self):
        return self.means.shape[1:]

    @property
    def canvas(self):
        return self.means.shape[2:]

    @property
    def templates(self):
        return [(lay, mu, w) for lay, mu, w in zip(self.layouts, self.means, self.weights)]

    def nearest_component(self, img):
        """Index of the template closest to ``img`` in Euclidean distance."""
        d = ((self.means - np.asarray(img)[None]) ** 2).sum(axis=(1, 2, 3))
        return int(np.argmin(d))


def mixture_from_layouts(layouts, pixel_sigma, palette=None, background=0.0, grain=0.0, supersample=4):
    """Uniform-weight mixture with one rendered template per layout.

    Raises:
        InvalidArgumentError: Empty list or layouts with different canvases.
    """
    layouts = list(layouts)
    if not layouts:
        raise InvalidArgumentError("need at least one layout")
    canvas = layouts[0].canvas
    for i, lay in enumerate(layouts):
        if lay.canvas != canvas:
            raise InvalidArgumentError(f"layout {i} has canvas {lay.canvas}, expected {canvas}")
    means = np.stack([
        render_template(lay, palette=palette, background=background, grain=grain, supersample=supersample)
        for lay in layouts
    ])
    weights = np.full(len(layouts), 1.0 / len(layouts))
    return SceneMixture(tuple(layouts), means, weights, pixel_sigma)


def upscale_mixture(m, k, pixel_sigma=None, mode="nearest"):
    """Lift a mixture to a ``k``-times larger canvas by upsampling its templates.

    The result describes the same scenes at higher resolution: box-averaging
    any upscaled template by ``k`` (nearest mode) recovers the original.
    """
    means = np.stack([upsample(mu, k, mode) for mu in m.means])
    H, W = m.canvas
    layouts = tuple(lay.with_canvas((H * k, W * k)) for lay in m.layouts)
    sigma = m.pixel_sigma if pixel_sigma is None else pixel_sigma
    return SceneMixture(layouts, means, m.weights.copy(), sigma)


def sample_scene(m, rng=None):
    """Draw ``(image, component_index)`` from the mixture."""
    rng = check_random_state(rng)
    k = int(rng.choice(m.n_components, p=m.weights))
    img = m.means[k].copy()
    if m.pixel_sigma > 0:
        img += m.pixel_sigma * rng.standard_normal(m.shape)
    return img, k


def symmetry_family(layout):
    """The layout and its horizontal, vertical and 180-degree mirror images.

    Duplicates (for symmetric layouts) are dropped; the input comes first.
    """
    def mirror(lay, fx, fy):
        boxes = []
        for b in lay.boxes:
            x = 1.0 - b.x - b.w if fx else b.x
            y = 1.0 - b.y - b.h if fy else b.y
            boxes.append(BoundingBox(max(x, 0.0), max(y, 0.0), b.w, b.h, b.label))
        return LayoutSpec(tuple(boxes), lay.canvas)

    family = []
    for fx, fy in ((False, False), (True, False), (False, True), (True, True)):
        cand = mirror(layout, fx, fy)
        if not any(layout_matches(cand, prev, 0.999) for prev in family):
            family.append(cand)
    return family
