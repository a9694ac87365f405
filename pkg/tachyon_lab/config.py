"""
Scenario configuration: one JSON document per run, parsed into frozen sections.

Example::

    {
      "lattice": {"num_points": 8192, "domain_length": 1600},
      "physics": {"mass": 1.0},
      "packet": {"k0": 2.0, "delta_k": 0.1, "x0": -300.0},
      "truncation": {"cut": 0.0, "epsilon": 0.25},
      "schedule": {"t_values": [0, 20, 40, 60]},
      "observation": {"window_half_width": 60},
      "output": {"directory": "results"}
    }

``lattice``, ``physics``, ``packet`` and ``schedule`` are required; the other
sections fall back to their defaults.  Unknown keys are rejected.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from tachyon_lab.errors import ConfigError
from tachyon_lab.lattice import LatticeSpec, build_lattice
from tachyon_lab.wavepackets import TruncationSpec, WavepacketSpec

log = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("lattice", "physics", "packet", "schedule")


@dataclass(frozen=True)
class PhysicsSection:
    mass: float
    eps_crit: Optional[float] = None
    critical_frequency: Optional[float] = None

    def __post_init__(self):
        if not (isinstance(self.mass, (int, float)) and self.mass > 0 and math.isfinite(self.mass)):
            raise ConfigError(f"physics.mass must be positive, got {self.mass!r}")


@dataclass(frozen=True)
class ScheduleSection:
    t_values: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(t) for t in self.t_values)
        if not values:
            raise ConfigError("schedule.t_values must not be empty")
        if any(t < 0 or not math.isfinite(t) for t in values):
            raise ConfigError(f"schedule.t_values must be finite and non-negative, got {values}")
        if list(values) != sorted(values):
            raise ConfigError("schedule.t_values must be sorted")
        object.__setattr__(self, "t_values", values)

    @property
    def horizon(self) -> float:
        return self.t_values[-1]


@dataclass(frozen=True)
class ObservationSection:
    """Diagnostics shared by the scenarios; every field has a default.

    Args:
        window_half_width: half width of the envelope window around the expected
            centre (default 8 / delta_k)
        smearing_width: support of the box smearing function (default 1 / k0)
        condition_threshold: lower bound on both observability conditions
        ratio_threshold: lower bound on signal over fluctuation
        amplitudes: amplitude sweep of the observability scenario
        x0_values: cut-depth sweep of the overlap scenario
        green_points: lattice size of the Green-function cross-check
    """

    window_half_width: Optional[float] = None
    smearing_width: Optional[float] = None
    condition_threshold: float = 10.0
    ratio_threshold: float = 3.0
    amplitudes: Tuple[float, ...] = (1.0,)
    x0_values: Tuple[float, ...] = ()
    green_points: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "x0_values", tuple(float(x) for x in self.x0_values))
        if any(a <= 0 for a in self.amplitudes):
            raise ConfigError("observation.amplitudes must be positive")


@dataclass(frozen=True)
class OutputSection:
    directory: Optional[str] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario document together with the raw mapping it came from."""

    lattice: LatticeSpec
    physics: PhysicsSection
    packet: WavepacketSpec
    schedule: ScheduleSection
    truncation: TruncationSpec = TruncationSpec(0.25)
    observation: ObservationSection = ObservationSection()
    output: OutputSection = OutputSection()
    raw: Dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def mass(self) -> float:
        return float(self.physics.mass)

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical (sorted-key, compact) JSON form."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _section(raw: Dict[str, Any], name: str, cls, rename: Dict[str, str] = None):
    body = raw.get(name, {})
    if not isinstance(body, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    rename = rename or {}
    allowed = {f.name for f in fields(cls) if f.init}
    kwargs = {}
    for key, value in body.items():
        target = rename.get(key, key)
        if target not in allowed:
            raise ConfigError(f"unknown key '{name}.{key}'")
        kwargs[target] = value
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigError(f"config section '{name}': {err}") from err


def _lattice(raw: Dict[str, Any]) -> LatticeSpec:
    body = raw["lattice"]
    for key in ("num_points", "domain_length"):
        if key not in body:
            raise ConfigError(f"missing config key 'lattice.{key}'")
    extra = set(body) - {"num_points", "domain_length"}
    if extra:
        raise ConfigError(f"unknown key 'lattice.{sorted(extra)[0]}'")
    return build_lattice(body["num_points"], body["domain_length"])


def parse_config(raw: Dict[str, Any]) -> ScenarioConfig:
    """Validate a decoded JSON mapping and build the typed configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    for name in REQUIRED_SECTIONS:
        if name not in raw:
            raise ConfigError(f"missing config section '{name}'")
    unknown = set(raw) - set(REQUIRED_SECTIONS) - {"truncation", "observation", "output"}
    if unknown:
        raise ConfigError(f"unknown config section '{sorted(unknown)[0]}'")

    packet = _section(raw, "packet", WavepacketSpec)
    physics = _section(raw, "physics", PhysicsSection)
    if not packet.k0 > physics.mass:
        raise ConfigError(f"packet.k0={packet.k0} must exceed physics.mass={physics.mass}")
    config = ScenarioConfig(
        lattice=_lattice(raw),
        physics=physics,
        packet=packet,
        schedule=_section(raw, "schedule", ScheduleSection),
        truncation=_section(raw, "truncation", TruncationSpec, {"epsilon": "smoothing_length", "cut": "cut_position"}),
        observation=_section(raw, "observation", ObservationSection),
        output=_section(raw, "output", OutputSection),
        raw=raw,
    )
    log.debug("parsed config %s", config.digest[:12])
    return config


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return parse_config(raw)
