"""DDPM and DDIM reverse steps, sampling loops and DDIM inversion."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_grid, check_random_state, check_timestep
from .denoiser import UNCONDITIONAL
from .exceptions import InvalidArgumentError, ReferenceGapError
from .schedule import forward_noise

SAMPLER_KINDS = ("ddim", "ddpm")


@dataclass(frozen=True)
class SamplerConfig:
    """Reverse-process settings.

    Attributes:
        kind: ``"ddim"`` or ``"ddpm"``.
        num_sample_steps: Number of denoiser evaluations S (at most T).
        eta: DDIM stochasticity in [0, 1]; 0 is deterministic.
        seed: Seed for the initial noise and any injected noise.
    """

    kind: str = "ddim"
    num_sample_steps: int = 50
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise InvalidArgumentError(f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        S = self.num_sample_steps
        if isinstance(S, bool) or not isinstance(S, (int, np.integer)) or S < 1:
            raise InvalidArgumentError(f"num_sample_steps must be a positive integer, got {S!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidArgumentError(f"eta must lie in [0, 1], got {self.eta}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidArgumentError(f"seed must be a non-negative integer, got {self.seed!r}")


def timesteps(num_sample_steps, T):
    """The S+1 grid points ``T = t_0 > t_1 > ... > t_S = 0`` at uniform stride.

    The first S entries are where the denoiser is evaluated; the last is
    the clean endpoint.
    """
    if num_sample_steps > T:
        raise InvalidArgumentError(f"num_sample_steps={num_sample_steps} exceeds T={T}")
    grid = np.round(np.linspace(T, 0, num_sample_steps + 1)).astype(int)
    assert np.all(np.diff(grid) < 0)
    return [int(t) for t in grid]


@dataclass
class Trajectory:
    """Latents recorded along a decreasing sequence of timesteps.

    Attributes:
        timesteps: Decreasing timesteps.
        latents: One array per timestep.
        guided: Post-guidance latents for the steps where a hook fired.
    """

    timesteps: list
    latents: list
    guided: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.timesteps) != len(self.latents):
            raise InvalidArgumentError("timesteps and latents differ in length")
        if any(b >= a for a, b in zip(self.timesteps, self.timesteps[1:])):
            raise InvalidArgumentError("trajectory timesteps must be strictly decreasing")
        self._index = {int(t): i for i, t in enumerate(self.timesteps)}

    def __len__(self):
        return len(self.timesteps)

    def __contains__(self, t):
        return int(t) in self._index

    def at(self, t):
        """Latent recorded at timestep ``t``.

        Raises:
            ReferenceGapError: ``t`` was not recorded.
        """
        try:
            return self.latents[self._index[int(t)]]
        except KeyError:
            raise ReferenceGapError(f"trajectory has no latent at timestep {t}") from None

    @property
    def final(self):
        return self.latents[-1]

    def stacked(self):
        """All latents as one array of shape (n, C, H, W)."""
        return np.stack(self.latents)


def _check_step_args(z_t, t, t_prev, eps_hat, s):
    z = check_grid(z_t, "z_t")
    eps = check_grid(eps_hat, "eps_hat")
    if z.shape != eps.shape:
        raise InvalidArgumentError(f"shape mismatch: z_t {z.shape} vs eps_hat {eps.shape}")
    t = check_timestep(t, s, low=1)
    t_prev = check_timestep(t_prev, s, name="t_prev")
    if t <= t_prev:
        raise InvalidArgumentError(f"need t > t_prev, got t={t}, t_prev={t_prev}")
    return z, eps, t, t_prev


def _clean_estimate(z, eps, a):
    return (z - math.sqrt(1.0 - a) * eps) / math.sqrt(a)


def _draw(rng, noise, shape):
    if noise is not None:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != shape:
            raise InvalidArgumentError(f"noise shape {noise.shape} does not match {shape}")
        return noise
    return check_random_state(rng).standard_normal(shape)


def ddim_step(z_t, t, t_prev, eps_hat, s, eta=0.0, rng=None, noise=None, x0_hat=None):
    """One DDIM update from ``t`` to ``t_prev``.

    Args:
        z_t: Current latent.
        t, t_prev: Timesteps with ``t > t_prev >= 0``.
        eps_hat: Noise prediction at ``(z_t, t)``.
        s: Noise schedule.
        eta: Stochasticity; 0 gives the deterministic map.
        rng: Generator for the injected noise when ``eta > 0``.
        noise: Explicit standard-normal draw overriding ``rng``.
        x0_hat: Clean estimate to use instead of recomputing it from
            ``eps_hat`` (avoids a round-off loop when the denoiser knows it).
    """
    z, eps, t, t_prev = _check_step_args(z_t, t, t_prev, eps_hat, s)
    a, a_prev = float(s.alpha_bar[t]), float(s.alpha_bar[t_prev])
    x0 = _clean_estimate(z, eps, a) if x0_hat is None else np.asarray(x0_hat, dtype=np.float64)
    sigma = eta * math.sqrt((1.0 - a_prev) / (1.0 - a)) * math.sqrt(max(1.0 - a / a_prev, 0.0))
    out = math.sqrt(a_prev) * x0 + math.sqrt(max(1.0 - a_prev - sigma**2, 0.0)) * eps
    if sigma > 0:
        out = out + sigma * _draw(rng, noise, z.shape)
    return out


def ddpm_posterior(t, t_prev, s):
    """Coefficients ``(c_x0, c_z, variance)`` of ``q(z_{t_prev} | z_t, x0)``."""
    a, a_prev = float(s.alpha_bar[t]), float(s.alpha_bar[t_prev])
    alpha = a / a_prev
    beta = 1.0 - alpha
    c_x0 = math.sqrt(a_prev) * beta / (1.0 - a)
    c_z = math.sqrt(alpha) * (1.0 - a_prev) / (1.0 - a)
    return c_x0, c_z, beta * (1.0 - a_prev) / (1.0 - a)


def ddpm_step(z_t, t, t_prev, eps_hat, s, rng=None, noise=None, x0_hat=None):
    """Ancestral DDPM update: sample the Gaussian posterior given ``x0_hat``.

    No noise is added when ``t_prev == 0``.
    """
    z, eps, t, t_prev = _check_step_args(z_t, t, t_prev, eps_hat, s)
    a = float(s.alpha_bar[t])
    x0 = _clean_estimate(z, eps, a) if x0_hat is None else np.asarray(x0_hat, dtype=np.float64)
    if t_prev == 0:
        return x0.copy()
    c_x0, c_z, var = ddpm_posterior(t, t_prev, s)
    out = c_x0 * x0 + c_z * z
    if var > 0:
        out = out + math.sqrt(var) * _draw(rng, noise, z.shape)
    return out


def _predict(den, z, t, cond):
    if hasattr(den, "posterior_mean"):
        x0 = den.posterior_mean(z, t, cond)
        a = float(den.schedule.alpha_bar[t])
        return (z - math.sqrt(a) * x0) / math.sqrt(1.0 - a), x0
    return den.predict(z, t, cond), None


def sample(den, cond, cfg, s, guidance=None, z_T=None):
    """Run the reverse process from pure noise to ``t = 0``.

    At every step the guidance hook (if given and active for that timestep)
    updates ``z_t`` first; the denoiser then sees the updated latent.

    Args:
        den: Denoiser implementing ``predict(z, t, cond)``.
        cond: :class:`~lsregen.denoiser.Condition` passed to the denoiser.
        cfg: :class:`SamplerConfig`; its seed drives the initial noise.
        s: Noise schedule.
        guidance: Optional hook with ``active(t)`` and ``__call__(z, t, t_prev)``.
        z_T: Optional starting latent; drawn from the seed when omitted.

    Returns:
        Trajectory of the S+1 latents from ``t = T`` down to ``t = 0``.
        Recorded latents are pre-guidance; guided ones sit in ``guided``.
    """
    rng = np.random.default_rng(cfg.seed)
    grid = timesteps(cfg.num_sample_steps, s.T)
    z = rng.standard_normal(den.shape) if z_T is None else check_grid(z_T, "z_T", copy=True)
    cond = UNCONDITIONAL if cond is None else cond
    latents, guided = [], {}
    for t, t_prev in zip(grid[:-1], grid[1:]):
        latents.append(z)
        if guidance is not None and guidance.active(t):
            z = guidance(z, t, t_prev)
            guided[t] = z
        eps, x0 = _predict(den, z, t, cond)
        if cfg.kind == "ddim":
            z = ddim_step(z, t, t_prev, eps, s, cfg.eta, rng, x0_hat=x0)
        else:
            z = ddpm_step(z, t, t_prev, eps, s, rng, x0_hat=x0)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite latent after step t={t}")
    latents.append(z)
    return Trajectory(grid, latents, guided)


def ddim_invert(z0, den, cond, cfg, s, t_stop=None, fixed_point_iters=2):
    """Map a clean latent to noisy latents by running DDIM backwards.

    The step ``t_a -> t_b`` (increasing time) solves
    ``z_b = sqrt(a_b) x0(z_a, eps) + sqrt(1 - a_b) eps`` with
    ``eps = den(z_b, t_b)``. The first guess evaluates the denoiser at
    ``z_a``; each fixed-point iteration re-evaluates it at the current
    ``z_b`` estimate, which makes the map an accurate inverse of
    :func:`sample`.

    Args:
        z0: Clean latent.
        den, cond: Denoiser and condition (normally unconditional).
        cfg: Sampler config fixing the grid; ``eta`` must be 0.
        s: Noise schedule.
        t_stop: Last timestep to reach; must lie on the grid. Defaults to T.
        fixed_point_iters: Refinement iterations per step.

    Returns:
        Trajectory from ``t_stop`` down to 0 (decreasing, like :func:`sample`).

    Raises:
        InvalidArgumentError: ``eta != 0`` or ``t_stop`` off the grid.
    """
    if cfg.eta != 0:
        raise InvalidArgumentError("inversion needs the deterministic sampler (eta = 0)")
    if isinstance(fixed_point_iters, bool) or int(fixed_point_iters) != fixed_point_iters or fixed_point_iters < 0:
        raise InvalidArgumentError("fixed_point_iters must be a non-negative integer")
    z = check_grid(z0, "z0", copy=True)
    grid = timesteps(cfg.num_sample_steps, s.T)[::-1]
    t_stop = s.T if t_stop is None else check_timestep(t_stop, s, name="t_stop")
    if t_stop not in grid:
        raise InvalidArgumentError(f"t_stop={t_stop} is not on the sampling grid")
    cond = UNCONDITIONAL if cond is None else cond
    visited, latents = [0], [z]
    for t_a, t_b in zip(grid[:-1], grid[1:]):
        if t_a >= t_stop:
            break
        a_a, a_b = float(s.alpha_bar[t_a]), float(s.alpha_bar[t_b])
        z_b = z
        for _ in range(int(fixed_point_iters) + 1):
            eps = den.predict(z_b, t_b, cond)
            z_b = math.sqrt(a_b) * _clean_estimate(z, eps, a_a) + math.sqrt(1.0 - a_b) * eps
        z = z_b
        visited.append(t_b)
        latents.append(z)
    return Trajectory(visited[::-1], latents[::-1])


def noise_reference(z0, t_list, s, rng=None, shared_eps=False):
    """Reference latents by forward noising: ``z_t = sqrt(a_t) z0 + sqrt(1 - a_t) eps_t``.

    Args:
        z0: Clean latent.
        t_list: Strictly decreasing timesteps.
        s: Noise schedule.
        rng: Seed or generator.
        shared_eps: Reuse one noise draw for every timestep.
    """
    z0 = check_grid(z0, "z0")
    t_list = [check_timestep(t, s, name="t_list entry") for t in t_list]
    rng = check_random_state(rng)
    shared = rng.standard_normal(z0.shape) if shared_eps else None
    latents = []
    for t in t_list:
        eps = shared if shared_eps else rng.standard_normal(z0.shape)
        latents.append(forward_noise(z0, t, eps, s))
    return Trajectory(t_list, latents)
