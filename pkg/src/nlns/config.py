"""Run configuration: flat key=value files, preset expansion, manifests.

Config files are UTF-8 key=value lines with '#' comments.  The preset is
expanded first, explicit keys override it, and validation runs on the fully
resolved set, so the emitted manifest is the complete effective
configuration.  Unknown keys and duplicate keys are rejected with line
numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

from .dynamics import PRESETS, RegularizationParams
from .errors import ValidationError

__all__ = ["RunConfig", "parse_config", "parse_config_file"]

_PARAM_KEYS = ("epsilon", "nu", "eta", "delta", "kappa", "r0", "r1")

# key -> converter; order fixes the manifest layout (sorted at emit time)
_CONVERTERS = {
    "dim": int,
    "n": int,
    "L": float,
    "alpha": float,
    "T": float,
    "dt": "dt",
    "preset": str,
    "epsilon": float,
    "nu": float,
    "eta": float,
    "delta": float,
    "kappa": float,
    "r0": float,
    "r1": float,
    "m1": float,
    "mollifier_width": float,
    "snapshot_every": int,
    "diagnostics_every": int,
    "seed": int,
    "output_dir": str,
}

_REQUIRED = ("dim", "n", "L", "T")


@dataclass
class RunConfig:
    dim: int
    n: int
    L: float
    T: float
    alpha: float = 0.5
    dt: float | str = "auto"
    preset: str = "limit"
    epsilon: float = 0.0
    nu: float = 0.0
    eta: float = 0.0
    delta: float = 0.0
    kappa: float = 0.0
    r0: float = 0.0
    r1: float = 0.0
    m1: float = 10.0
    mollifier_width: float = 0.0  # 0 means auto: 4 * spacing
    snapshot_every: int = 0
    diagnostics_every: int = 10
    seed: int = 0
    output_dir: str = "nlns_out"

    def __post_init__(self):
        if self.mollifier_width == 0.0:
            self.mollifier_width = 4.0 * (2.0 * self.L / self.n)

    def manifest(self) -> str:
        """Canonical key=value text; parsing it reproduces this config."""
        lines = []
        for key in sorted(_CONVERTERS):
            value = getattr(self, key)
            if isinstance(value, float):
                lines.append(f"{key}={value!r}")
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_params(self) -> RegularizationParams:
        return RegularizationParams(
            half_length=self.L,
            alpha=self.alpha,
            epsilon=self.epsilon,
            nu=self.nu,
            eta=self.eta,
            delta=self.delta,
            kappa=self.kappa,
            r0=self.r0,
            r1=self.r1,
            m1=self.m1,
            mollifier_width=self.mollifier_width,
        )


def _convert(key: str, raw: str, lineno: int):
    conv = _CONVERTERS[key]
    if conv == "dt":
        if raw == "auto":
            return "auto"
        conv = float
    try:
        return conv(raw)
    except ValueError:
        raise ValidationError(
            f"line {lineno}: cannot parse value {raw!r} for key {key!r}"
        ) from None


def _validate(cfg: RunConfig):
    if cfg.dim not in (1, 2, 3):
        raise ValidationError(f"dim must be 1, 2 or 3, got {cfg.dim}")
    if cfg.n <= 0 or cfg.n % 2 != 0:
        raise ValidationError(f"n must be positive and even, got {cfg.n}")
    if cfg.L <= 0:
        raise ValidationError(f"L must be positive, got {cfg.L}")
    if not 0.0 < cfg.alpha < 2.0:
        raise ValidationError("alpha must lie in (0,2)")
    if cfg.T < 0:
        raise ValidationError(f"T must be non-negative, got {cfg.T}")
    if cfg.dt != "auto" and cfg.dt <= 0:
        raise ValidationError("dt must be positive or 'auto'")
    if cfg.preset not in PRESETS:
        raise ValidationError(
            f"unknown preset {cfg.preset!r}; choose from {sorted(PRESETS)}"
        )
    for key in _PARAM_KEYS:
        if getattr(cfg, key) < 0:
            raise ValidationError(f"{key} must be non-negative")
    if cfg.m1 <= 0:
        raise ValidationError("m1 must be positive")
    if not 0.0 < cfg.mollifier_width < cfg.L:
        raise ValidationError(
            f"mollifier_width must lie in (0, L); got {cfg.mollifier_width} with L={cfg.L}"
        )
    if cfg.diagnostics_every < 1:
        raise ValidationError("diagnostics_every must be >= 1")
    if cfg.snapshot_every < 0:
        raise ValidationError("snapshot_every must be >= 0 (0 disables snapshots)")


def parse_config(text: str) -> RunConfig:
    """Parse key=value text into a fully resolved, validated RunConfig."""
    seen: dict[str, int] = {}
    values: dict[str, object] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key=value, got {rawline!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _CONVERTERS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValidationError(
                f"duplicate key {key!r} on lines {seen[key]} and {lineno}"
            )
        seen[key] = lineno
        values[key] = _convert(key, raw, lineno)

    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ValidationError(f"missing required keys: {', '.join(missing)}")

    # preset expansion before validation; explicit keys override the preset
    preset = values.get("preset", "limit")
    if preset not in PRESETS:
        raise ValidationError(
            f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
        )
    resolved = dict(PRESETS[preset])
    resolved.update(values)
    resolved.setdefault("preset", preset)

    defaults = {f.name: f.default for f in dc_fields(RunConfig)}
    kwargs = {}
    for key in _CONVERTERS:
        kwargs[key] = resolved.get(key, defaults[key])
    if kwargs["mollifier_width"] == 0.0:
        kwargs["mollifier_width"] = 4.0 * (2.0 * kwargs["L"] / kwargs["n"])
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def parse_config_file(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ValidationError(f"config not found: {path}") from None
    return parse_config(text)
