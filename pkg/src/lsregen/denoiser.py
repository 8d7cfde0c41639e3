"""Noise-prediction denoisers and the closed-form Gaussian-mixture denoiser.

For a mixture of isotropic Gaussians ``N(mu_k, sigma^2 I)`` the Bayes-optimal
estimate ``E[z_0 | z_t]`` is available in closed form, which makes every
sampler and guidance formula checkable against exact values.
"""

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import softmax

from ._validation import check_grid, check_same_shape, check_timestep
from .exceptions import InvalidArgumentError, NoMatchingLayoutError
from .scene import LayoutSpec, layout_matches

CONDITION_MODES = ("unconditional", "layout", "component-set")


@dataclass(frozen=True)
class Condition:
    """What a denoiser is asked to generate.

    Use the constructors :meth:`unconditional`, :meth:`for_layout` and
    :meth:`components` rather than filling fields by hand.
    """

    mode: str = "unconditional"
    layout: LayoutSpec | None = None
    indices: tuple = ()

    def __post_init__(self):
        if self.mode not in CONDITION_MODES:
            raise InvalidArgumentError(f"unknown condition mode {self.mode!r}")
        if self.mode == "layout" and not isinstance(self.layout, LayoutSpec):
            raise InvalidArgumentError("layout condition needs a LayoutSpec")
        if self.mode == "component-set":
            if not self.indices:
                raise InvalidArgumentError("component-set condition needs at least one index")
            object.__setattr__(self, "indices", tuple(sorted({int(i) for i in self.indices})))

    @classmethod
    def unconditional(cls):
        return cls()

    @classmethod
    def for_layout(cls, layout):
        return cls("layout", layout=layout)

    @classmethod
    def components(cls, indices):
        return cls("component-set", indices=tuple(indices))


UNCONDITIONAL = Condition()


@runtime_checkable
class DenoiserInterface(Protocol):
    """Anything that predicts the noise in ``z_t``.

    Attributes:
        shape: The (C, H, W) latent shape the denoiser accepts.
    """

    shape: tuple

    def predict(self, z_t, t, cond=UNCONDITIONAL):
        """Return the noise estimate, same shape as ``z_t``."""


def matching_components(m, layout, iou_threshold=0.9):
    """Indices of mixture components whose layout matches ``layout``."""
    return [k for k, lay in enumerate(m.layouts) if layout_matches(layout, lay, iou_threshold)]


def _responsibilities(z, a, means, log_w, v):
    diff = (z[None] - math.sqrt(a) * means).reshape(len(means), -1)
    log_r = log_w - np.einsum("ij,ij->i", diff, diff) / (2.0 * v)
    return softmax(log_r)


def _check_subset(subset, m):
    subset = list(range(m.n_components)) if subset is None else sorted({int(k) for k in subset})
    if not subset:
        raise InvalidArgumentError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= m.n_components:
        raise InvalidArgumentError(f"subset indices must lie in [0, {m.n_components})")
    return subset


def gmm_posterior_mean(z_t, t, m, subset, s):
    """``E[z_0 | z_t]`` under the mixture restricted to ``subset``.

    Each component gives a Gaussian posterior mean
    ``mu_k + sqrt(a) sigma^2 / v (z_t - sqrt(a) mu_k)`` with
    ``v = a sigma^2 + 1 - a`` and ``a = alpha_bar[t]``; these are blended by
    responsibilities proportional to ``w_k N(z_t; sqrt(a) mu_k, v I)``
    (weights renormalised over the subset).

    Args:
        z_t: Noisy latent of the mixture's shape.
        t: Timestep in ``0..T``.
        m: The :class:`~lsregen.scene.SceneMixture`.
        subset: Component indices to keep, or ``None`` for all.
        s: Noise schedule.

    Raises:
        InvalidArgumentError: Empty subset, bad shape or timestep.
    """
    z = check_grid(z_t, "z_t")
    if z.shape != m.shape:
        raise InvalidArgumentError(f"z_t shape {z.shape} does not match mixture shape {m.shape}")
    t = check_timestep(t, s)
    subset = _check_subset(subset, m)
    means = m.means[subset]
    weights = m.weights[subset]
    a = float(s.alpha_bar[t])
    v = a * m.pixel_sigma**2 + 1.0 - a
    if v == 0.0:
        # Noise-free data at t = 0: the observation is the sample itself.
        return z.copy()
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    r = _responsibilities(z, a, means, log_w, v)
    gain = math.sqrt(a) * m.pixel_sigma**2 / v
    mean_mu = np.tensordot(r, means, axes=1)
    return mean_mu + gain * (z - math.sqrt(a) * mean_mu)


def posterior_mean_to_eps(z_t, t, x0_hat, s):
    """Noise implied by a clean estimate: ``(z_t - sqrt(a) x0) / sqrt(1 - a)``.

    Raises:
        InvalidArgumentError: ``t == 0`` (no noise to recover) or shape mismatch.
    """
    z = check_grid(z_t, "z_t")
    x0 = check_grid(x0_hat, "x0_hat")
    check_same_shape(z, x0, ("z_t", "x0_hat"))
    t = check_timestep(t, s, low=1)
    a = float(s.alpha_bar[t])
    return (z - math.sqrt(a) * x0) / math.sqrt(1.0 - a)


def cfg_combine(uncond, cond, w):
    """Classifier-free guidance blend ``uncond + w (cond - uncond)``."""
    uncond = np.asarray(uncond, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    check_same_shape(uncond, cond, ("uncond", "cond"))
    return uncond + float(w) * (cond - uncond)


class GMMDenoiser:
    """Exact noise predictor for a :class:`~lsregen.scene.SceneMixture`.

    Args:
        mixture: The scene distribution.
        schedule: Noise schedule used to interpret timesteps.
        subset: Optional fixed component subset; a condition passed to
            :meth:`predict` narrows it further.
    """

    def __init__(self, mixture, schedule, subset=None):
        self.mixture = mixture
        self.schedule = schedule
        self.subset = tuple(_check_subset(subset, mixture))
        self.shape = mixture.shape

    def __repr__(self):
        return f"GMMDenoiser(K={self.mixture.n_components}, subset={list(self.subset)}, shape={self.shape})"

    def resolve(self, cond=UNCONDITIONAL):
        """Component indices selected by ``cond`` within the fixed subset.

        Raises:
            NoMatchingLayoutError: A layout condition matches no component.
        """
        if cond is None or cond.mode == "unconditional":
            return list(self.subset)
        if cond.mode == "layout":
            picked = [k for k in matching_components(self.mixture, cond.layout) if k in self.subset]
        else:
            picked = [k for k in cond.indices if k in self.subset]
        if not picked:
            raise NoMatchingLayoutError(f"condition {cond.mode!r} selects no mixture component")
        return picked

    def posterior_mean(self, z_t, t, cond=UNCONDITIONAL):
        return gmm_posterior_mean(z_t, t, self.mixture, self.resolve(cond), self.schedule)

    def predict(self, z_t, t, cond=UNCONDITIONAL):
        x0 = self.posterior_mean(z_t, t, cond)
        return posterior_mean_to_eps(z_t, t, x0, self.schedule)


def gmm_conditional(m, layout, s):
    """Layout-conditional denoiser: the mixture restricted to matching templates.

    A template matches when it has the same label multiset as ``layout`` and
    every box of ``layout`` overlaps a same-label template box with IoU of
    at least 0.9.

    Raises:
        NoMatchingLayoutError: No template matches.
    """
    subset = matching_components(m, layout)
    if not subset:
        raise NoMatchingLayoutError(f"layout with labels {layout.labels} matches none of {m.n_components} templates")
    return GMMDenoiser(m, s, subset)
