"""
Run configuration.

A run is configured by a tree of dataclasses, one section per pipeline stage.
Values come from the defaults below, then an optional JSON config file, then
``--set section.key=value`` overrides, then the first-class CLI flags
(``--seed``, ``--workers``). The resolved tree is echoed into every report.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Any, Dict, Iterable, List, Optional

from c2lt3d.utils.errors import ConfigError


@dataclass
class PartitionConfig:
    link_radius: float = 0.03
    max_frac: float = 0.6
    min_count: int = 8
    source: str = "hints"  # "hints" | "ground_truth"
    noise_mode: str = "none"  # "none" | "merge" | "split" | "random"
    noise_strength: float = 0.0


@dataclass
class ChartConfig:
    radius: float = 0.15
    min_neighbors: int = 8
    reference_axis: List[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    anchors_per_component: int = 12
    use_anchor_hints: bool = True


@dataclass
class ContextSection:
    dim: int = 64
    heads: int = 4
    layers: int = 2
    seed: int = 0
    same_bias: float = 0.0
    cross_bias: float = -1.0
    geom_hidden: int = 64


@dataclass
class SeamConfig:
    eps_contact: float = 0.05
    hidden: int = 32
    lr: float = 0.5
    epochs: int = 400
    lambda_compat: float = 1.0
    lambda_pose: float = 0.05
    lambda_coll: float = 0.05
    lambda_sep: float = 0.05
    lambda_inv: float = 0.05
    seed: int = 0


@dataclass
class RepairConfig:
    mode: str = "edge-bank"  # "edge-bank" | "prefix"
    pool_radius: float = 0.2
    group_by: str = "component"  # "component" | "partition"
    train_fraction: float = 0.5
    scorers: List[str] = field(
        default_factory=lambda: ["nn", "dense-support", "seam-head", "policy"]
    )


@dataclass
class RealizeConfig:
    margin: float = 0.0
    keep_floor: float = 0.90
    enabled: bool = True
    sweep_margins: List[float] = field(default_factory=lambda: [0.0, 0.25, 0.5])
    sweep_floors: List[float] = field(default_factory=lambda: [0.85, 0.90, 0.95])


@dataclass
class DecoderConfig:
    mode: str = "charts"  # "identity" | "charts" | "leaky"
    noise: float = 0.0


@dataclass
class AuditConfig:
    delta_coll: float = 0.05
    delta_support: float = 0.05
    r_max: float = 0.3
    d_max: int = 64
    band: float = 0.02
    vertical_factor: float = 2.0


@dataclass
class EnergyConfig:
    lam: float = 1.0
    eps: float = 0.05
    lambdas: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])


@dataclass
class MetricsConfig:
    resamples: int = 5000


@dataclass
class SynthConfig:
    n: int = 20
    density: float = 1600.0
    decoys: bool = False
    collisions: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    chart: ChartConfig = field(default_factory=ChartConfig)
    context: ContextSection = field(default_factory=ContextSection)
    seam: SeamConfig = field(default_factory=SeamConfig)
    repair: RepairConfig = field(default_factory=RepairConfig)
    realize: RealizeConfig = field(default_factory=RealizeConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> Dict[str, Any]:
        """Plain nested dict, suitable for JSON echo."""
        return asdict(self)


_CHOICES = {
    ("partition", "source"): {"hints", "ground_truth"},
    ("partition", "noise_mode"): {"none", "merge", "split", "random"},
    ("repair", "mode"): {"edge-bank", "prefix"},
    ("repair", "group_by"): {"component", "partition"},
    ("decoder", "mode"): {"identity", "charts", "leaky"},
}


def _coerce(section: str, key: str, current: Any, value: Any) -> Any:
    """Check ``value`` against the type of the default it replaces."""
    name = f"{section}.{key}" if section else key
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} expects true/false, got {value!r}")
        return value
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} expects an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} expects a number, got {value!r}")
        return float(value)
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} expects a list, got {value!r}")
        if current and isinstance(current[0], (int, float)):
            return [_coerce(section, key, float(current[0]), v) for v in value]
        return list(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} expects a string, got {value!r}")
        allowed = _CHOICES.get((section, key))
        if allowed is not None and value not in allowed:
            raise ConfigError(f"{name} must be one of {sorted(allowed)}, got {value!r}")
        return value
    return value


def _apply(config: RunConfig, section: str, key: str, value: Any) -> None:
    if section:
        target = getattr(config, section, None)
        if target is None or not is_dataclass(target):
            raise ConfigError(f"unknown config section '{section}'")
    else:
        target = config
    names = {f.name for f in fields(target)}
    if key not in names or is_dataclass(getattr(target, key)):
        raise ConfigError(f"unknown config key '{section + '.' if section else ''}{key}'")
    setattr(target, key, _coerce(section, key, getattr(target, key), value))


def update_config(config: RunConfig, document: Dict[str, Any]) -> RunConfig:
    """
    Merge a nested document (as read from a JSON config file) into ``config``.

    Parameters
    ----------
    config : RunConfig
        Configuration to update in place.
    document : dict
        Nested mapping mirroring the config sections.

    Returns
    -------
    RunConfig
        The updated configuration.
    """
    if not isinstance(document, dict):
        raise ConfigError("config document must be a JSON object")
    for name, value in document.items():
        if isinstance(value, dict):
            for key, inner in value.items():
                _apply(config, name, key, inner)
        else:
            _apply(config, "", name, value)
    return config


def parse_override(text: str) -> tuple:
    """Split ``section.key=value``; the value is read as JSON, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form section.key=value")
    path, raw = text.split("=", 1)
    parts = path.strip().split(".")
    if len(parts) == 1:
        section, key = "", parts[0]
    elif len(parts) == 2:
        section, key = parts
    else:
        raise ConfigError(f"override path '{path}' must be key or section.key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Iterable[str]] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> RunConfig:
    """
    Resolve a run configuration from defaults, a JSON file and overrides.

    Parameters
    ----------
    path : str, optional
        JSON config file.
    overrides : iterable of str, optional
        ``section.key=value`` strings, applied in order.
    seed, workers : int, optional
        First-class flags, applied last.

    Returns
    -------
    RunConfig
        The resolved configuration.
    """
    config = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        update_config(config, document)

    for text in overrides or ():
        section, key, value = parse_override(text)
        _apply(config, section, key, value)

    if seed is not None:
        config.seed = int(seed)
    if workers is not None:
        if workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {workers}")
        config.workers = int(workers)
    return config
