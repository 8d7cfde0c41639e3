"""Independent reference computations shared by unit and acceptance tests."""

import math

import numpy as np


def quadrature_posterior_mean(z_t, a, means, weights, sigma, width=9.0, per_std=1.5):
    """Brute-force ``E[z_0 | z_t]`` by a sum over a dense uniform tensor grid.

    The integrand vanishes at the grid edges, so the plain sum equals the
    trapezoid rule.

    The grid spans every component's posterior bulk in every coordinate with
    ``per_std`` points per posterior standard deviation. Only valid for tiny
    dimensions (the grid has ``n ** d`` points).
    """
    z = np.ravel(z_t).astype(np.float64)
    mu = np.asarray(means, dtype=np.float64).reshape(len(means), -1)
    d = z.size
    tau2 = (1.0 - a) / a
    post_sd = math.sqrt(sigma**2 * tau2 / (sigma**2 + tau2))
    centres = (mu * tau2 + (z / math.sqrt(a)) * sigma**2) / (sigma**2 + tau2)
    h = post_sd / per_std
    axes = []
    for j in range(d):
        lo, hi = centres[:, j].min() - width * post_sd, centres[:, j].max() + width * post_sd
        axes.append(np.arange(lo, hi + h, h))
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, d - 1)
    log_w = np.log(np.asarray(weights, dtype=np.float64))

    def log_density(x):
        prior = np.logaddexp.reduce(
            log_w[None] - ((x[:, None, :] - mu[None]) ** 2).sum(-1) / (2 * sigma**2), axis=1)
        lik = -((z[None] - math.sqrt(a) * x) ** 2).sum(-1) / (2 * (1.0 - a))
        return prior + lik

    logs = []
    for x0 in axes[0]:
        x = np.concatenate([np.full((len(rest), 1), x0), rest], axis=1)
        logs.append(log_density(x))
    logs = np.stack(logs)
    wts = np.exp(logs - logs.max())
    total = wts.sum()
    mean = np.empty(d)
    mean[0] = (wts.sum(axis=1) * axes[0]).sum() / total
    marg = wts.sum(axis=0)
    for j in range(1, d):
        mean[j] = (marg * rest[:, j - 1]).sum() / total
    return mean.reshape(np.shape(z_t))


def k1_ddim_trajectory(z_T, mu, sigma, alpha_bar, grid):
    """Deterministic DDIM trajectory for a single Gaussian by its linear recursion.

    With ``d = z_t - sqrt(a) mu`` the posterior mean is linear, and one DDIM
    step from ``a`` to ``a'`` multiplies ``d`` by
    ``(sqrt(a a') sigma^2 + sqrt((1 - a)(1 - a'))) / (a sigma^2 + 1 - a)``.
    """
    d = np.asarray(z_T, dtype=np.float64) - math.sqrt(alpha_bar[grid[0]]) * mu
    out = [d + math.sqrt(alpha_bar[grid[0]]) * mu]
    for t, t_prev in zip(grid[:-1], grid[1:]):
        a, ap = float(alpha_bar[t]), float(alpha_bar[t_prev])
        c = (math.sqrt(a * ap) * sigma**2 + math.sqrt((1 - a) * (1 - ap))) / (a * sigma**2 + 1 - a)
        d = c * d
        out.append(d + math.sqrt(ap) * mu)
    return out


def guidance_gradient_error(extractor, distance, z, z_ref, t=500, h=1e-5):
    """Max relative error of the analytic guidance gradient against central differences.

    The objective is ``D(feat(z_ref), feat(z))`` as a function of ``z``; the
    error is normalised by the largest gradient entry.
    """
    f_ref = extractor.extract(z_ref, t)

    def objective(x):
        return distance.value(f_ref, extractor.extract(x, t))

    analytic = extractor.vjp(z, t, distance.grad_b(f_ref, extractor.extract(z, t)))
    numeric = np.empty_like(z)
    for idx in np.ndindex(z.shape):
        step = np.zeros_like(z)
        step[idx] = h
        numeric[idx] = (objective(z + step) - objective(z - step)) / (2 * h)
    return float(np.abs(analytic - numeric).max() / np.abs(numeric).max())
