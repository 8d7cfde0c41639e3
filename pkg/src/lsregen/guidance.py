"""Backward guidance: features, distances and the gradient update on ``z_t``.

A guided step replaces ``z_t`` by ``z_t - gamma * grad D(feat(z_ref_t), feat(z_t))``
before the denoiser sees it. Extractors are linear here, so their adjoint
(``vjp``) is exact and no automatic differentiation is needed.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import check_fraction, check_grid, check_same_shape
from .exceptions import InvalidArgumentError, ReferenceGapError
from .sampler import timesteps

EXTRACTORS = ("identity", "lowpass")
DISTANCES = ("l2sq",)
# Area-scaled step size: gamma * clip(REFERENCE_AREA / mean_box_area, 1, MAX_AREA_BOOST).
REFERENCE_AREA = 0.16
MAX_AREA_BOOST = 4.0


class IdentityExtractor:
    """The latent itself as its own feature."""

    name = "identity"

    def extract(self, z, t=None):
        return z

    def vjp(self, z, t, cotangent):
        return cotangent

    def __repr__(self):
        return "IdentityExtractor()"


def radial_frequency(H, W):
    """Normalised radial frequency of each DFT bin; 1.0 at the corner (Nyquist, Nyquist)."""
    fy = np.fft.fftfreq(H)[:, None] / 0.5
    fx = np.fft.fftfreq(W)[None, :] / 0.5
    return np.sqrt(fy**2 + fx**2) / math.sqrt(2.0)


class LowpassExtractor:
    """Orthonormal 2-D DFT, zero bins above ``cutoff`` and transform back.

    The radial frequency is normalised so that 1.0 is the highest bin; a
    cutoff of 1 keeps everything. The projection is real, linear and
    self-adjoint, so ``vjp`` applies the same filter to the cotangent.
    """

    name = "lowpass"

    def __init__(self, cutoff=0.25):
        self.cutoff = check_fraction(cutoff, "cutoff", 0.0, 1.0, low_open=True)

    def __repr__(self):
        return f"LowpassExtractor(cutoff={self.cutoff})"

    def mask(self, H, W):
        return radial_frequency(H, W) <= self.cutoff + 1e-12

    def extract(self, z, t=None):
        z = np.asarray(z, dtype=np.float64)
        if self.cutoff >= 1.0:
            return z.copy()
        F = np.fft.fft2(z, norm="ortho")
        F *= self.mask(*z.shape[-2:])
        return np.fft.ifft2(F, norm="ortho").real

    def vjp(self, z, t, cotangent):
        return self.extract(cotangent, t)


def identity_lfi_extractor():
    return IdentityExtractor()


def lowpass_extractor(cutoff_fraction):
    return LowpassExtractor(cutoff_fraction)


def make_extractor(name, cutoff=0.25):
    if name == "identity":
        return IdentityExtractor()
    if name == "lowpass":
        return LowpassExtractor(cutoff)
    raise InvalidArgumentError(f"unknown extractor {name!r}; expected one of {EXTRACTORS}")


class L2Squared:
    """``D(a, b) = sum((a - b)^2)``."""

    name = "l2sq"

    def value(self, a, b):
        a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        check_same_shape(a, b)
        d = a - b
        return float(np.vdot(d, d))

    def grad_b(self, a, b):
        a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
        check_same_shape(a, b)
        return 2.0 * (b - a)

    def __repr__(self):
        return "L2Squared()"


def l2sq_distance():
    return L2Squared()


def make_distance(name):
    if name == "l2sq":
        return L2Squared()
    raise InvalidArgumentError(f"unknown distance {name!r}; expected one of {DISTANCES}")


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance settings.

    Attributes:
        gamma: Step size on the raw distance gradient.
        guided_fraction: Fraction of sampling steps, counted from the noisy
            end, that receive an update.
        extractor: ``"identity"`` or ``"lowpass"``.
        distance: ``"l2sq"``.
        max_update_norm: Cap on the update's L2 norm. ``None`` means ten
            times the per-step noise magnitude
            ``sqrt(1 - a_t / a_prev) * sqrt(latent size)``.
        cutoff: Cutoff for the lowpass extractor.
        area_scaled: Boost gamma for layouts with small boxes.
    """

    gamma: float = 0.1
    guided_fraction: float = 0.1
    extractor: str = "identity"
    distance: str = "l2sq"
    max_update_norm: float | None = None
    cutoff: float = 0.25
    area_scaled: bool = False

    def __post_init__(self):
        gamma = float(self.gamma)
        if not (gamma >= 0 and math.isfinite(gamma)):
            raise InvalidArgumentError(f"gamma must be a non-negative real, got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "guided_fraction", check_fraction(self.guided_fraction, "guided_fraction"))
        object.__setattr__(self, "cutoff", check_fraction(self.cutoff, "cutoff", low_open=True))
        if self.extractor not in EXTRACTORS:
            raise InvalidArgumentError(f"unknown extractor {self.extractor!r}; expected one of {EXTRACTORS}")
        if self.distance not in DISTANCES:
            raise InvalidArgumentError(f"unknown distance {self.distance!r}; expected one of {DISTANCES}")
        if self.max_update_norm is not None and not (self.max_update_norm > 0 and math.isfinite(self.max_update_norm)):
            raise InvalidArgumentError("max_update_norm must be a positive real or None")

    def make_extractor(self):
        return make_extractor(self.extractor, self.cutoff)

    def make_distance(self):
        return make_distance(self.distance)


def default_update_norm(t, t_prev, s, size):
    """Ten times the noise magnitude of one step from ``t`` to ``t_prev``."""
    ratio = float(s.alpha_bar[t]) / float(s.alpha_bar[t_prev])
    return 10.0 * math.sqrt(max(1.0 - ratio, 0.0)) * math.sqrt(size)


def area_gamma(gamma, layout):
    """Step size boosted for small boxes: ``gamma * clip(0.16 / mean_area, 1, 4)``."""
    mean_area = float(np.mean([b.area for b in layout.boxes]))
    return gamma * float(np.clip(REFERENCE_AREA / mean_area, 1.0, MAX_AREA_BOOST))


def guidance_update(z_t, t, ref, gc, s=None, t_prev=None, gamma=None, extractor=None, distance=None):
    """One backward-guidance update of ``z_t`` towards the reference at ``t``.

    Computes ``g = vjp(z_t, t, grad_b(feat(z_ref), feat(z_t)))`` and returns
    ``z_t - gamma * g``. The update is rescaled if its norm exceeds the cap
    (``gc.max_update_norm``, or the default cap when ``s`` and ``t_prev``
    are supplied).

    Args:
        z_t: Current latent.
        t: Timestep; must be present in ``ref``.
        ref: Reference :class:`~lsregen.sampler.Trajectory`.
        gc: :class:`GuidanceConfig`.
        s, t_prev: Schedule and next timestep, needed for the default cap.
        gamma: Overrides ``gc.gamma`` (used for area scaling).
        extractor, distance: Prebuilt objects overriding the config names.

    Raises:
        ReferenceGapError: ``ref`` has no latent at ``t``.
    """
    z = check_grid(z_t, "z_t")
    z_ref = ref.at(t)
    check_same_shape(z, z_ref, ("z_t", "reference"))
    gamma = gc.gamma if gamma is None else float(gamma)
    if gamma == 0.0:
        return z.copy()
    extractor = gc.make_extractor() if extractor is None else extractor
    distance = gc.make_distance() if distance is None else distance
    grad = extractor.vjp(z, t, distance.grad_b(extractor.extract(z_ref, t), extractor.extract(z, t)))
    update = gamma * grad
    cap = gc.max_update_norm
    if cap is None and s is not None and t_prev is not None:
        cap = default_update_norm(t, t_prev, s, z.size)
    if cap is not None:
        norm = float(np.linalg.norm(update))
        if norm > cap:
            update = update * (cap / norm)
    return z - update


def num_guided_steps(S, fraction):
    """``ceil(fraction * S)``, robust to round-off in the product."""
    return min(S, max(0, math.ceil(fraction * S - 1e-9)))


def guided_step_set(cfg, gc, s):
    """The first ``ceil(guided_fraction * S)`` timesteps of the sampling grid."""
    grid = timesteps(cfg.num_sample_steps, s.T)[:-1]
    return set(grid[: num_guided_steps(cfg.num_sample_steps, gc.guided_fraction)])


class GuidanceHook:
    """Stateful adapter plugging :func:`guidance_update` into :func:`~lsregen.sampler.sample`.

    Attributes:
        steps: Timesteps where the hook fires.
        calls: Number of updates applied so far (instrumentation).
    """

    def __init__(self, ref, gc, s, steps, layout=None):
        self.ref = ref
        self.gc = gc
        self.s = s
        self.steps = frozenset(int(t) for t in steps)
        missing = sorted(t for t in self.steps if t not in ref)
        if missing:
            raise ReferenceGapError(f"reference lacks guided timesteps {missing}")
        self.gamma = area_gamma(gc.gamma, layout) if gc.area_scaled and layout is not None else gc.gamma
        self._extractor = gc.make_extractor()
        self._distance = gc.make_distance()
        self.calls = 0

    def active(self, t):
        return int(t) in self.steps

    def __call__(self, z, t, t_prev):
        self.calls += 1
        return guidance_update(z, t, self.ref, self.gc, self.s, t_prev, self.gamma, self._extractor, self._distance)


class LowpassFilter(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer applying :class:`LowpassExtractor` row-wise.

    Rows of ``X`` are flattened (C, H, W) grids.

    Args:
        cutoff: Normalised radial cutoff in (0, 1].
        shape: The (C, H, W) grid shape each row unflattens to.
    """

    def __init__(self, cutoff=0.25, shape=None):
        self.cutoff = cutoff
        self.shape = shape

    def fit(self, X, y=None):
        X = check_array(X)
        if self.shape is None or int(np.prod(self.shape)) != X.shape[1]:
            raise InvalidArgumentError(f"shape {self.shape} does not match {X.shape[1]} features")
        self.extractor_ = LowpassExtractor(self.cutoff)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        grids = X.reshape((len(X), *self.shape))
        return np.stack([self.extractor_.extract(g) for g in grids]).reshape(len(X), -1)
