"""Guided diffusion sampling with closed-form Gaussian-mixture denoisers.

The package implements backward guidance (pulling a sampling latent
towards reference features by a gradient step) and a two-stage
large-scale regional generation pipeline built on it.
"""

from .denoiser import Condition, GMMDenoiser, cfg_combine, gmm_conditional, gmm_posterior_mean, posterior_mean_to_eps
from .evaluation import (
    AdherenceReport,
    FidelityReport,
    adherence,
    detect_box,
    diversity,
    lowband_correlation,
    template_rms,
    trend_report,
)
from .exceptions import (
    ConfigError,
    FormatError,
    InvalidArgumentError,
    LayoutError,
    LayoutInvariantError,
    LayoutJSONError,
    LayoutSchemaError,
    NoMatchingLayoutError,
    ReferenceGapError,
    UndefinedCorrelationError,
)
from .guidance import (
    GuidanceConfig,
    GuidanceHook,
    guidance_update,
    guided_step_set,
    identity_lfi_extractor,
    l2sq_distance,
    lowpass_extractor,
)
from .pipeline import LSReGenerator, PipelineConfig, generate_reference, lsregen_generate, lsregen_run
from .resample import box_downsample, upsample
from .sampler import SamplerConfig, Trajectory, ddim_invert, ddim_step, ddpm_step, noise_reference, sample, timesteps
from .scene import BoundingBox, LayoutSpec, SceneMixture, mixture_from_layouts, render_template, sample_scene
from .schedule import NoiseSchedule, build_schedule, forward_noise, snr

__version__ = "0.1.0"
