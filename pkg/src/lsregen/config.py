"""Run configuration files.

The format is INI-style text read with :mod:`configparser` (no
interpolation). Every section and key is optional; unknown ones are
rejected so typos cannot silently fall back to defaults::

    [schedule]
    kind = linear-beta        ; or cosine
    num_steps = 1000
    beta_start = 0.0001
    beta_end = 0.02

    [sampler]                 ; both stages
    kind = ddim               ; or ddpm
    num_sample_steps = 50
    eta = 0.0

    [guidance]
    gamma = 0.1
    guided_fraction = 0.1
    extractor = identity      ; or lowpass
    distance = l2sq
    max_update_norm = auto    ; or a positive number
    cutoff = 0.25
    area_scaled = false

    [pipeline]
    small_height = 16
    small_width = 16
    scale = 3
    upsample = nearest        ; or bilinear
    reference = invert        ; or noise
    codec = identity          ; or strided
    codec_factor = 2
    fixed_point_iters = 0
    seed = 0

    [scene]
    pixel_sigma_small = 0.01
    pixel_sigma_large = 0.1
    grain = 0.05
    supersample = 4
"""

import configparser
from dataclasses import dataclass, field

from .exceptions import ConfigError, InvalidArgumentError
from .guidance import GuidanceConfig
from .pipeline import PipelineConfig
from .sampler import SamplerConfig, timesteps
from .schedule import build_schedule

DEFAULT_SEED = 0

_SCHEMA = {
    "schedule": {"kind": str, "num_steps": int, "beta_start": float, "beta_end": float},
    "sampler": {"kind": str, "num_sample_steps": int, "eta": float},
    "guidance": {"gamma": float, "guided_fraction": float, "extractor": str, "distance": str,
                 "max_update_norm": "auto-float", "cutoff": float, "area_scaled": bool},
    "pipeline": {"small_height": int, "small_width": int, "scale": int, "upsample": str, "reference": str,
                 "codec": str, "codec_factor": int, "fixed_point_iters": int, "seed": int},
    "scene": {"pixel_sigma_small": float, "pixel_sigma_large": float, "grain": float, "supersample": int},
}


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "linear-beta"
    num_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2

    def build(self):
        return build_schedule(self.kind, self.num_steps, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class SceneConfig:
    pixel_sigma_small: float = 0.01
    pixel_sigma_large: float = 0.1
    grain: float = 0.05
    supersample: int = 4


@dataclass(frozen=True)
class RunConfig:
    """Full run settings: schedule, pipeline, scene family and seed."""

    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    seed: int = DEFAULT_SEED

    def to_dict(self):
        """Flat ``section.key`` mapping; feeding it to :func:`config_from_dict` rebuilds the config."""
        pc, sc = self.pipeline, self.pipeline.large_sampler
        g = pc.guidance
        return {
            "schedule.kind": self.schedule.kind,
            "schedule.num_steps": self.schedule.num_steps,
            "schedule.beta_start": self.schedule.beta_start,
            "schedule.beta_end": self.schedule.beta_end,
            "sampler.kind": sc.kind,
            "sampler.num_sample_steps": sc.num_sample_steps,
            "sampler.eta": sc.eta,
            "guidance.gamma": g.gamma,
            "guidance.guided_fraction": g.guided_fraction,
            "guidance.extractor": g.extractor,
            "guidance.distance": g.distance,
            "guidance.max_update_norm": "auto" if g.max_update_norm is None else g.max_update_norm,
            "guidance.cutoff": g.cutoff,
            "guidance.area_scaled": g.area_scaled,
            "pipeline.small_height": pc.small_canvas[0],
            "pipeline.small_width": pc.small_canvas[1],
            "pipeline.scale": pc.scale,
            "pipeline.upsample": pc.upsample,
            "pipeline.reference": pc.reference,
            "pipeline.codec": pc.codec,
            "pipeline.codec_factor": pc.codec_factor,
            "pipeline.fixed_point_iters": pc.fixed_point_iters,
            "pipeline.seed": self.seed,
            "scene.pixel_sigma_small": self.scene.pixel_sigma_small,
            "scene.pixel_sigma_large": self.scene.pixel_sigma_large,
            "scene.grain": self.scene.grain,
            "scene.supersample": self.scene.supersample,
        }

    def with_overrides(self, overrides):
        """Copy with ``section.key`` values replaced (strings are parsed)."""
        flat = self.to_dict()
        for key, value in overrides.items():
            if key not in flat:
                raise ConfigError(f"unknown setting {key!r}")
            flat[key] = value
        return config_from_dict(flat)


def _parse(section, key, raw):
    kind = _SCHEMA[section][key]
    text = str(raw).strip()
    try:
        if kind == "auto-float":
            return None if text.lower() in ("auto", "none", "") else float(text)
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def config_from_dict(flat):
    """Build a :class:`RunConfig` from ``section.key`` values (strings or typed)."""
    values = {sec: {} for sec in _SCHEMA}
    for dotted, raw in flat.items():
        section, _, key = dotted.partition(".")
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        values[section][key] = raw if not isinstance(raw, str) else _parse(section, key, raw)
    try:
        return _assemble(values)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None


def _assemble(v):
    schedule = ScheduleConfig(**v["schedule"])
    schedule.build()
    sampler = SamplerConfig(**v["sampler"])
    timesteps(sampler.num_sample_steps, schedule.num_steps)
    guidance = GuidanceConfig(**v["guidance"])
    p = dict(v["pipeline"])
    seed = p.pop("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise ConfigError(f"[pipeline] seed must be a non-negative integer, got {seed!r}")
    h, w = p.pop("small_height", 16), p.pop("small_width", 16)
    if h < 1 or w < 1:
        raise ConfigError("[pipeline] small canvas must be positive")
    pipeline = PipelineConfig(small_canvas=(h, w), small_sampler=sampler, large_sampler=sampler, guidance=guidance, **p)
    if pipeline.fixed_point_iters < 0:
        raise ConfigError("[pipeline] fixed_point_iters must be non-negative")
    scene = SceneConfig(**v["scene"])
    if scene.pixel_sigma_small < 0 or scene.pixel_sigma_large < 0 or scene.supersample < 1:
        raise ConfigError("[scene] sigmas must be non-negative and supersample positive")
    return RunConfig(schedule, pipeline, scene, int(seed))


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[f"{section}.{key}"] = value
    try:
        return config_from_dict(flat)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    """Read a config file; ``None`` gives the defaults.

    Raises:
        ConfigError: Unreadable file, syntax error, unknown key or bad value.
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def to_ini(cfg):
    """Render a config as INI text that :func:`parse_config` reads back identically."""
    sections = {}
    for dotted, value in cfg.to_dict().items():
        section, _, key = dotted.partition(".")
        if isinstance(value, bool):
            value = "true" if value else "false"
        sections.setdefault(section, []).append(f"{key} = {value}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())
