"""Discrete variance-preserving noise schedules and the forward process.

``alpha_bar[t]`` is the cumulative signal fraction at timestep ``t`` for
``t = 0..T``. Index 0 is the clean data (``alpha_bar[0] == 1``), so sampling
loops that end at ``t = 0`` return the denoised estimate itself.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_grid, check_same_shape, check_timestep
from .exceptions import InvalidArgumentError

KINDS = ("linear-beta", "cosine")
MAX_BETA = 0.999


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """A decreasing sequence of cumulative signal fractions.

    Attributes:
        num_steps: Number of diffusion steps T.
        alpha_bar: Array of T+1 values in (0, 1], strictly decreasing.
        kind: ``"linear-beta"`` or ``"cosine"``.
        beta_start, beta_end: Ramp endpoints for the linear kind, quoted for
            T = 1000 and rescaled by ``1000 / T`` for other lengths.
    """

    num_steps: int
    alpha_bar: np.ndarray = field(repr=False)
    kind: str = "linear-beta"
    beta_start: float = 1e-4
    beta_end: float = 2e-2

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        if ab.shape != (self.num_steps + 1,):
            raise InvalidArgumentError(f"alpha_bar must have {self.num_steps + 1} entries, got {ab.shape}")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise InvalidArgumentError("alpha_bar entries must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise InvalidArgumentError("alpha_bar must be strictly decreasing")

    @property
    def T(self):
        return self.num_steps

    def betas(self):
        """Per-step betas for t = 1..T (index 0 of the result is t = 1)."""
        return 1.0 - self.alpha_bar[1:] / self.alpha_bar[:-1]

    def to_config(self):
        """Key-value block that rebuilds this schedule via :func:`schedule_from_config`."""
        cfg = {"kind": self.kind, "num_steps": self.num_steps}
        if self.kind == "linear-beta":
            cfg.update(beta_start=self.beta_start, beta_end=self.beta_end)
        return cfg

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return self.to_config() == other.to_config() and np.array_equal(self.alpha_bar, other.alpha_bar)

    def __hash__(self):
        return hash(tuple(sorted(self.to_config().items())))


def build_schedule(kind="linear-beta", T=1000, beta_start=1e-4, beta_end=2e-2):
    """Build a noise schedule of ``T`` steps.

    The linear ramp runs over t = 1..T. For T other than 1000 both ends are
    multiplied by ``1000 / T`` so short schedules still end near pure noise;
    betas are clipped at 0.999.

    Raises:
        InvalidArgumentError: ``T < 2`` or an unknown ``kind``.
    """
    if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 2:
        raise InvalidArgumentError(f"T must be an integer >= 2, got {T!r}")
    T = int(T)
    if kind == "linear-beta":
        if not 0 < beta_start < beta_end:
            raise InvalidArgumentError("linear ramp needs 0 < beta_start < beta_end")
        scale = 1000.0 / T
        betas = np.linspace(beta_start * scale, beta_end * scale, T, dtype=np.float64)
        betas = np.minimum(betas, MAX_BETA)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return NoiseSchedule(T, alpha_bar, kind, float(beta_start), float(beta_end))
    if kind == "cosine":
        offset = 0.008
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + offset) / (1 + offset) * math.pi / 2) ** 2
        betas = np.minimum(1.0 - f[1:] / f[:-1], MAX_BETA)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return NoiseSchedule(T, alpha_bar, kind)
    raise InvalidArgumentError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")


def schedule_from_config(cfg):
    kind = cfg.get("kind", "linear-beta")
    T = int(cfg.get("num_steps", 1000))
    if kind == "linear-beta":
        return build_schedule(kind, T, float(cfg.get("beta_start", 1e-4)), float(cfg.get("beta_end", 2e-2)))
    return build_schedule(kind, T)


def forward_noise(z0, t, eps, s, parameterization="sqrt"):
    """Noise a clean latent to timestep ``t``.

    ``z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps``. Passing
    ``parameterization="literal"`` uses ``alpha_bar_t`` itself as the signal
    coefficient instead of its square root (not variance preserving).
    """
    z0 = check_grid(z0, "z0")
    eps = check_grid(eps, "eps")
    check_same_shape(z0, eps, ("z0", "eps"))
    t = check_timestep(t, s)
    a = s.alpha_bar[t]
    if parameterization == "sqrt":
        signal = math.sqrt(a)
    elif parameterization == "literal":
        signal = a
    else:
        raise InvalidArgumentError(f"unknown parameterization {parameterization!r}")
    return signal * z0 + math.sqrt(1.0 - a) * eps


def snr(t, s):
    """Signal-to-noise ratio ``alpha_bar_t / (1 - alpha_bar_t)``; infinite at t = 0."""
    t = check_timestep(t, s)
    a = s.alpha_bar[t]
    if a == 1.0:
        return math.inf
    return a / (1.0 - a)
