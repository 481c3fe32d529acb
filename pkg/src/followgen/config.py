"""Run configuration: dataclasses, INI parsing, validation."""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple


class ConfigError(ValueError):
    """Raised when a configuration value violates an invariant."""


SCENARIOS = ("H-H", "A-H", "H-A", "SYNTH")
SCHEDULE_KINDS = ("linear", "quadratic", "sigmoid")
VARIANTS = ("full", "no_noise_scaling", "no_locattn_fft", "no_cross_attention")
LEADER_PROFILES = ("constant", "sinusoidal-speed", "stop-and-go")


@dataclass
class DataConfig:
    csv_path: Optional[str] = None
    dt: float = 0.1
    t_his: int = 30
    t_fut: int = 50
    stride: int = 10
    # synthesis settings (used when csv_path is None)
    n_episodes: int = 50
    episode_frames: int = 400
    leader_profile: str = "stop-and-go"
    # IDM parameters
    idm_v0: float = 15.0
    idm_s0: float = 2.0
    idm_headway: float = 1.5
    idm_a_max: float = 1.5
    idm_b_comf: float = 2.0
    idm_delta: float = 4.0

    def validate(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_his < 2 or self.t_fut < 1:
            raise ConfigError("t_his must be >= 2 and t_fut >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.leader_profile not in LEADER_PROFILES:
            raise ConfigError(f"unknown leader_profile {self.leader_profile!r}")
        for name in ("idm_v0", "idm_s0", "idm_headway", "idm_a_max", "idm_b_comf"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class ModelConfig:
    gru_hidden: int = 50            # H
    gru_layers: int = 2
    attn_proj_width: int = 50       # H', width after the post-attention projection
    history_out_width: int = 2      # H'', must equal D so sigma^2 scales per spatial dim
    embed_width: int = 50           # cross-attention embedding size
    n_heads: int = 5
    ffn_width: int = 100
    unet_channels: Tuple[int, ...] = (8, 16, 32, 64, 128)
    unet_kernel: int = 3
    time_embed_width: int = 50
    cond_channels: int = 8          # channels the condition c is projected to before concat
    learnable_w0: bool = False
    variant: str = "full"
    # feature scaling applied before the networks (positions /pos, speeds /spd);
    # predicted futures live in position-scaled units until denormalization
    pos_scale: float = 50.0
    speed_scale: float = 10.0

    def validate(self):
        if self.history_out_width != 2:
            raise ConfigError("history_out_width must equal the spatial dimension (2)")
        if self.embed_width % self.n_heads != 0:
            raise ConfigError("embed_width must be divisible by n_heads")
        if len(self.unet_channels) < 2:
            raise ConfigError("unet_channels needs at least two levels")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.pos_scale <= 0 or self.speed_scale <= 0:
            raise ConfigError("feature scales must be positive")


@dataclass
class DiffusionConfig:
    kind: str = "linear"
    k_steps: int = 200
    beta0: float = 1e-4
    beta_k: float = 0.02

    def validate(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.k_steps < 1:
            raise ConfigError("k_steps must be >= 1")
        if not (0.0 < self.beta0 <= self.beta_k < 1.0):
            raise ConfigError("need 0 < beta0 <= beta_k < 1")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    adam_eps: float = 1e-2
    weight_decay: float = 1e-2
    batch_size: int = 64
    epochs: int = 20
    grad_clip: float = 1.0
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    delta: float = 2.0
    dist: float = 2.0

    def validate(self):
        for name in ("lr", "adam_eps", "batch_size", "epochs", "grad_clip",
                     "delta", "dist"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("penalty weights must be nonnegative")


@dataclass
class EvalConfig:
    horizons: Tuple[int, ...] = (3, 4, 5)
    n_samples: int = 1
    miss_threshold: float = 2.0

    def validate(self):
        if any(h <= 0 for h in self.horizons):
            raise ConfigError("horizons must be positive")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.miss_threshold <= 0:
            raise ConfigError("miss_threshold must be positive")


@dataclass
class RunConfig:
    seed: int = 0
    scenario: str = "SYNTH"
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        self.data.validate()
        self.model.validate()
        self.diffusion.validate()
        self.train.validate()
        self.eval.validate()
        frames = max(self.eval.horizons) / self.data.dt
        if frames - round(frames) > 1e-9:
            raise ConfigError("horizons must be integer multiples of dt")
        if max(self.eval.horizons) / self.data.dt > self.data.t_fut:
            raise ConfigError("longest horizon exceeds t_fut")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "diffusion": DiffusionConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


def _coerce(value: str, target):
    if isinstance(target, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if isinstance(target, int):
        return int(value)
    if isinstance(target, float):
        return float(value)
    if isinstance(target, tuple):
        elem = type(target[0]) if target else int
        return tuple(elem(v.strip()) for v in value.split(",") if v.strip())
    return value


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load a RunConfig from an INI file; missing keys keep their defaults.

    FOLLOWGEN_SEED in the environment overrides the configured seed.
    """
    cfg = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(path)
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section == "run":
                target = cfg
            elif section in _SECTIONS:
                target = getattr(cfg, section)
            else:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if not hasattr(target, key):
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                current = getattr(target, key)
                if key == "csv_path":
                    setattr(target, key, value or None)
                elif current is None:
                    setattr(target, key, value)
                else:
                    setattr(target, key, _coerce(value, current))
    env_seed = os.environ.get("FOLLOWGEN_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    cfg.validate()
    return cfg


def default_config_path() -> str:
    """Path of the default INI file shipped with the package."""
    return os.path.join(os.path.dirname(__file__), "configs", "default.ini")
