"""Input validation helpers shared by the public functions.

These mirror the ``check_array`` family from scikit-learn: they coerce to
float64, check shape and finiteness, and raise :class:`InvalidArgumentError`
with the offending argument name.
"""

import numbers

import numpy as np

from .exceptions import InvalidArgumentError


def check_grid(z, name="z", ndim=3, copy=False):
    """Return ``z`` as a finite float64 array of shape (C, H, W)."""
    arr = np.array(z, dtype=np.float64, copy=copy) if copy else np.asarray(z, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidArgumentError(f"{name} must be {ndim}-D (channels, height, width), got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise InvalidArgumentError(f"shape mismatch: {names[0]} {np.shape(a)} vs {names[1]} {np.shape(b)}")


def check_timestep(t, schedule, low=0, name="t"):
    if isinstance(t, bool) or not isinstance(t, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer timestep, got {t!r}")
    t = int(t)
    if not low <= t <= schedule.num_steps:
        raise InvalidArgumentError(f"{name}={t} outside [{low}, {schedule.num_steps}]")
    return t


def check_fraction(value, name, low=0.0, high=1.0, low_open=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}") from None
    bad_low = value <= low if low_open else value < low
    if bad_low or value > high or not np.isfinite(value):
        bracket = "(" if low_open else "["
        raise InvalidArgumentError(f"{name}={value} outside {bracket}{low}, {high}]")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise InvalidArgumentError(f"cannot build a random generator from {seed!r}")
