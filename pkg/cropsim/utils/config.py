# cropsim/utils/config.py

import json
import os
import types
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Union, get_args, get_origin, get_type_hints

from dotenv import dotenv_values

CONDITION_TYPES = ("t", "c", "b")
SPECIES = ("sw", "fb")


def _split_csv(name: str, default: str = "") -> list[str]:
    raw = os.getenv(name, default)
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    return parts


def _env_bool(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    return int(raw) if raw.strip() else default


@dataclass
class AppConfig:
    """Process-level settings read from the environment (.env is loaded by main)."""

    log_level: str = field(default_factory=lambda: os.getenv("CROPSIM_LOG_LEVEL", "INFO"))
    log_file: str = field(default_factory=lambda: os.getenv("CROPSIM_LOG_FILE", "cropsim.log"))
    device: str = field(default_factory=lambda: os.getenv("CROPSIM_DEVICE", "auto"))
    num_threads: int = field(default_factory=lambda: _env_int("CROPSIM_NUM_THREADS", 0))
    deterministic: bool = field(default_factory=lambda: _env_bool("CROPSIM_DETERMINISTIC", True))
    quiet_loggers: list[str] = field(
        default_factory=lambda: _split_csv("CROPSIM_QUIET_LOGGERS", "PIL,matplotlib,torch._dynamo")
    )

    def resolve_device(self) -> str:
        if self.device != "auto":
            return self.device
        import torch

        return "cuda" if torch.cuda.is_available() else "cpu"


def normalize_conditions(conditions: tuple[str, ...] | list[str] | str) -> tuple[str, ...]:
    """Validate condition names and return them in the fixed [t, c, b] order."""
    if isinstance(conditions, str):
        conditions = [p.strip() for p in conditions.split(",") if p.strip()]
    unknown = [c for c in conditions if c not in CONDITION_TYPES]
    if unknown:
        raise ValueError(f"Unknown condition types {unknown}; expected a subset of {CONDITION_TYPES}")
    if "t" not in conditions:
        raise ValueError("The time condition 't' is always required")
    return tuple(c for c in CONDITION_TYPES if c in conditions)


@dataclass
class SynthConfig:
    n_sequences: int = 200
    n_times: int = 8
    image_size: int = 64
    n_treatments: int = 6
    seed: int = 0
    first_day: int = 7
    last_day: int = 91
    time_spacing_power: float = 1.6
    growth_rate: float = 0.12
    midpoint_day: float = 45.0
    max_cover: float = 0.06
    density_rate_gain: float = 0.15
    density_area_gain: float = 0.25
    jitter: float = 0.1
    biomass_beta: float = 0.02
    allometry_exponent: float = 1.5
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    site_shift: float = 0.0
    gsd_mm: float = 1.0

    def __post_init__(self) -> None:
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        if self.n_times < 1:
            raise ValueError("n_times must be >= 1")
        if self.image_size < 32 or self.image_size % 32:
            raise ValueError(f"image_size must be a positive multiple of 32, got {self.image_size}")
        if self.n_treatments < 1:
            raise ValueError("n_treatments must be >= 1")
        if self.last_day < self.first_day:
            raise ValueError("last_day must be >= first_day")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-6:
            raise ValueError("split_fractions must be three fractions summing to 1")

    @property
    def times(self) -> list[int]:
        """Acquisition days shared by all sequences; early gaps are shorter than late ones."""
        if self.n_times == 1:
            return [self.first_day]
        span = self.last_day - self.first_day
        days = [
            self.first_day + round(span * (i / (self.n_times - 1)) ** self.time_spacing_power)
            for i in range(self.n_times)
        ]
        unique = sorted(set(days))
        if len(unique) != self.n_times:
            raise ValueError("Acquisition schedule collapses duplicate days; widen the season")
        return unique


@dataclass
class AugmentConfig:
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_rot90: float = 0.5
    p_translate: float = 0.5
    max_translate: float = 0.05
    p_shadowout: float = 0.5
    shadow_count: tuple[int, int] = (1, 2)
    shadow_area: tuple[float, float] = (0.05, 0.25)
    shadow_alpha: tuple[float, float] = (0.3, 0.7)
    shadow_fill: float = -1.0

    def __post_init__(self) -> None:
        for name in ("p_hflip", "p_vflip", "p_rot90", "p_translate", "p_shadowout"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(p_hflip=0.0, p_vflip=0.0, p_rot90=0.0, p_translate=0.0, p_shadowout=0.0)


@dataclass
class ModelConfig:
    image_size: int = 64
    conditions: tuple[str, ...] = ("t",)
    n_treatments: int = 6
    embed_dim: int = 64
    z_dim: int = 128
    base_channels: int = 64
    critic_channels: int = 64
    noise_injection: bool = True

    def __post_init__(self) -> None:
        self.conditions = normalize_conditions(self.conditions)
        if self.image_size < 32 or self.image_size % 32:
            raise ValueError(f"image_size must be a positive multiple of 32, got {self.image_size}")
        if self.n_treatments < 1:
            raise ValueError("n_treatments must be >= 1")

    @property
    def latent_channels(self) -> int:
        return 8 * self.base_channels

    @property
    def fusion_size(self) -> int:
        # 256 px fuses at 16x16, 64 px at 4x4
        return self.image_size // 16

    @property
    def critic_embed_dim(self) -> int:
        return self.fusion_size * self.fusion_size


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 200
    lambda_gp: float = 10.0
    n_critic: int = 5
    adam_betas: tuple[float, float] = (0.0, 0.9)
    seed: int = 0
    val_interval: int = 1
    num_workers: int = 0
    extractor: str = "seeded"
    extractor_seed: int = 0
    max_val_pairs: int | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self) -> None:
        if self.lambda_gp <= 0:
            raise ValueError(f"lambda_gp must be > 0, got {self.lambda_gp}")
        if self.n_critic < 1:
            raise ValueError(f"n_critic must be >= 1, got {self.n_critic}")
        if self.batch_size < 1 or self.epochs < 1 or self.val_interval < 1:
            raise ValueError("batch_size, epochs and val_interval must be >= 1")
        if self.extractor not in ("seeded", "vgg16"):
            raise ValueError(f"extractor must be 'seeded' or 'vgg16', got {self.extractor}")

    @property
    def conditions(self) -> tuple[str, ...]:
        return self.model.conditions

    @property
    def image_size(self) -> int:
        return self.model.image_size


@dataclass
class RegressorConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    patience: int = 5
    weight_decay: float = 0.0
    seed: int = 0
    augment: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be >= 1")


SWEEP_MODES = ("time", "treatment", "biomass", "variability", "ood-grid")


@dataclass
class SweepSpec:
    mode: str
    out_dir: Path
    split: str = "test"
    sequence_ids: list[str] = field(default_factory=list)
    t_in: int | None = None
    times: list[int] = field(default_factory=list)
    target_treatment: int | None = None
    change: str | None = None
    scales: list[int] = field(default_factory=lambda: [50, 75, 100, 125, 150])
    ratio_mode: str = "complementary"
    noise_draws: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in SWEEP_MODES:
            raise ValueError(f"mode must be one of {SWEEP_MODES}, got {self.mode}")
        self.out_dir = Path(self.out_dir)
        if self.noise_draws < 1:
            raise ValueError("noise_draws must be >= 1")
        if any(s < 0 for s in self.scales):
            raise ValueError("biomass scales must be >= 0")
        if self.mode in ("time", "ood-grid") and not self.times:
            raise ValueError("time sweeps need a non-empty time list")
        if self.ratio_mode not in ("complementary", "sw", "fb", "grid"):
            raise ValueError(f"unknown ratio_mode {self.ratio_mode}")
        if self.change not in (None, "density", "composition"):
            raise ValueError(f"unknown treatment change {self.change}")

    def scale_pairs(self) -> list[tuple[int, int]]:
        """(s_sw, s_fb) percentages; 100:100 is always included."""
        if self.ratio_mode == "complementary":
            pairs = [(s, 200 - s) for s in self.scales if s <= 200]
        elif self.ratio_mode == "sw":
            pairs = [(s, 100) for s in self.scales]
        elif self.ratio_mode == "fb":
            pairs = [(100, s) for s in self.scales]
        else:
            pairs = [(a, b) for a in self.scales for b in self.scales]
        if (100, 100) not in pairs:
            pairs.append((100, 100))
        return sorted(set(pairs))


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    regressor: RegressorConfig = field(default_factory=RegressorConfig)


def _is_none_literal(value: Any) -> bool:
    return value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null"))


def _coerce(value: Any, hint: Any) -> Any:
    origin = get_origin(hint)
    args = get_args(hint)
    if origin in (Union, types.UnionType):
        if _is_none_literal(value):
            return None
        non_none = [a for a in args if a is not type(None)]
        return _coerce(value, non_none[0])
    if origin in (tuple, list):
        items = [p.strip() for p in value.split(",") if p.strip()] if isinstance(value, str) else value
        item_type = args[0] if args else str
        converted = [_coerce(v, item_type) for v in items]
        return tuple(converted) if origin is tuple else converted
    if hint is bool:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if hint in (int, float, str):
        return hint(value)
    if hint is Path:
        return Path(value)
    return value


def build_dataclass(cls: type, data: dict[str, Any]) -> Any:
    """Instantiate a config dataclass from loosely typed values; unknown keys are an error."""
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {unknown}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if hint is ModelConfig:
            kwargs[key] = value if isinstance(value, ModelConfig) else build_dataclass(ModelConfig, value)
        elif hint is AugmentConfig:
            kwargs[key] = value if isinstance(value, AugmentConfig) else build_dataclass(AugmentConfig, value)
        else:
            kwargs[key] = _coerce(value, hint)
    return cls(**kwargs)


def _nest_flat(flat: dict[str, str | None]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.strip().lower().split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


def _read_raw(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    return _nest_flat(dotenv_values(path))


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """
    Load an experiment config from JSON (nested sections) or a key=value file (dotted keys).
    Sections: train, model, augment, synth, regressor. model/augment belong to train.
    """
    if path is None:
        return ExperimentConfig()
    raw = _read_raw(Path(path))
    unknown = sorted(set(raw) - {"train", "model", "augment", "synth", "regressor"})
    if unknown:
        raise ValueError(f"Unknown config sections: {unknown}")
    train_raw = dict(raw.get("train", {}))
    if "model" in raw:
        train_raw["model"] = raw["model"]
    if "augment" in raw:
        train_raw["augment"] = raw["augment"]
    return ExperimentConfig(
        train=build_dataclass(TrainConfig, train_raw),
        synth=build_dataclass(SynthConfig, raw.get("synth", {})),
        regressor=build_dataclass(RegressorConfig, raw.get("regressor", {})),
    )


def config_to_dict(config: Any) -> dict[str, Any]:
    """JSON-friendly dict (tuples become lists)."""
    return json.loads(json.dumps(asdict(config), default=str))
