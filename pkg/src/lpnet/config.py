"""Text run configuration: one `key = value` per line, '#' comments.

Unknown keys are rejected so typos cannot silently fall back to defaults.
Every command echoes the resolved configuration next to its outputs, which
together with the seed pins a reproducible run.
"""

from dataclasses import dataclass, fields

from .errors import ConfigError
from .network import ArchConfig


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_int_tuple(text):
    return tuple(int(part.strip()) for part in text.split(","))


def _parse_float_tuple(text):
    return tuple(float(part.strip()) for part in text.split(","))


_PARSERS = {
    int: lambda s: int(s.strip()),
    float: lambda s: float(s.strip()),
    bool: _parse_bool,
    str: lambda s: s.strip(),
}


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class RunConfig:
    seed: int = 0

    # architecture
    base_channels: int = 16
    channel_multipliers: tuple = (1, 2, 4, 8, 8)
    mfp_paths: int = 4
    sdf_kernel: int = 3

    # synthetic data
    scene_height: int = 64
    scene_width: int = 64
    train_scenes: int = 16
    heldout_scenes: int = 4
    scene_objects: int = 4
    sparse_samples: int = 200
    depth_min: float = 2.0
    depth_max: float = 8.0

    # optimization
    train_steps: int = 300
    batch_size: int = 4
    lr: float = 1e-3
    hflip: bool = True
    scale_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)

    # evaluation
    infer_steps: int = 5
    sparsity_fractions: tuple = (0.4, 0.6, 0.8, 1.0)
    timing_repeats: int = 5

    _TUPLE_PARSERS = {
        "channel_multipliers": _parse_int_tuple,
        "scale_weights": _parse_float_tuple,
        "sparsity_fractions": _parse_float_tuple,
    }

    @classmethod
    def from_text(cls, text):
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                if key in cls._TUPLE_PARSERS:
                    values[key] = cls._TUPLE_PARSERS[key](value)
                else:
                    values[key] = _PARSERS[known[key].type](value)
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        return cls(**values).validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def validate(self):
        if self.scene_height % 16 or self.scene_width % 16:
            raise ConfigError(f"scene dims {self.scene_height}x{self.scene_width} "
                              "must be divisible by 16")
        if self.depth_min <= 0 or self.depth_max <= self.depth_min:
            raise ConfigError(f"bad depth range [{self.depth_min}, {self.depth_max}]")
        if self.train_scenes < 1 or self.heldout_scenes < 1:
            raise ConfigError("need at least one training and one held-out scene")
        if not 1 <= self.batch_size <= self.train_scenes:
            raise ConfigError(f"batch_size {self.batch_size} outside 1..{self.train_scenes}")
        if self.train_steps < 1 or self.lr <= 0:
            raise ConfigError("train_steps must be >= 1 and lr > 0")
        if len(self.scale_weights) != 5:
            raise ConfigError("scale_weights needs exactly 5 entries")
        if not 1 <= self.infer_steps <= 5:
            raise ConfigError(f"infer_steps {self.infer_steps} outside 1..5")
        for fraction in self.sparsity_fractions:
            if not 0.0 < fraction <= 1.0:
                raise ConfigError(f"sparsity fraction {fraction} outside (0, 1]")
        if self.timing_repeats < 1:
            raise ConfigError("timing_repeats must be >= 1")
        if self.sparse_samples < 1:
            raise ConfigError("sparse_samples must be >= 1")
        try:
            self.arch().validate()
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        # the deepest multi-path branch must fit inside the bottleneck
        bottleneck = min(self.scene_height, self.scene_width) // 16
        if bottleneck < (1 << self.mfp_paths):
            raise ConfigError(
                f"mfp_paths {self.mfp_paths} needs bottleneck >= {1 << self.mfp_paths}, "
                f"but {self.scene_height}x{self.scene_width} scenes give {bottleneck}")
        return self

    def arch(self):
        return ArchConfig(base_channels=self.base_channels,
                          channel_multipliers=self.channel_multipliers,
                          mfp_paths=self.mfp_paths,
                          sdf_kernel=self.sdf_kernel)

    def render(self):
        """Canonical echo; parsing it back reproduces this config."""
        lines = [f"{f.name} = {_render(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"
