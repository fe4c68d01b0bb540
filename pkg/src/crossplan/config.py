"""Episode configuration: defaults, validation, and TOML loading."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .geometry import InvalidConfigError, IntersectionConfig
from .kinematics import KinematicLimits

METHODS = ("fifo", "pp", "obs")


class ConfigError(ValueError):
    """Rejected configuration input."""


@dataclass
class SimConfig:
    """Everything one simulated episode depends on."""
    dt: float = 0.1
    horizon: int = 1000
    replan_period: int = 100
    arrival_rate: tuple[float, ...] | float = 1500.0
    route_probs: tuple[float, float, float] = (0.6, 0.2, 0.2)
    spawn_speed: float = 5.0
    method: str = "obs"
    n_orders: int = 16
    seed: int = 0

    veh_length: float = 5.0
    veh_width: float = 2.0
    standstill_gap: float = 0.5
    a_min: float = -5.0
    a_max: float = 3.0
    v_max: float = 13.0
    cap_left: float = 6.5
    cap_right: float = 4.5

    lane_width: float = 4.5
    lane_length: float = 250.0
    left_turn_radius: float = 13.5
    right_turn_radius: float = 9.0
    intersection_edge: float = 22.5
    subzone_grid: int = 4
    subzone_style: str = "corner_band"

    relax_step: float = 0.5
    relax_max: float = 60.0
    exec_substeps: int = 10
    literal_departure_divisor: bool = False

    def validate(self) -> "SimConfig":
        """Raise ConfigError on any inconsistent field; returns self."""
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if self.replan_period < 1:
            raise ConfigError("replan_period must be at least 1")
        if self.horizon % self.replan_period != 0:
            raise ConfigError("replan_period must divide horizon")
        for lam in self.arrival_rates():
            if lam <= 0:
                raise ConfigError("arrival rates must be positive")
        if len(self.route_probs) != 3 or any(p < 0 for p in self.route_probs):
            raise ConfigError("route_probs needs three non-negative entries")
        if abs(sum(self.route_probs) - 1.0) > 1e-9:
            raise ConfigError("route_probs must sum to 1")
        if not 0 <= self.spawn_speed <= self.v_max:
            raise ConfigError("spawn_speed outside [0, v_max]")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.n_orders < 1:
            raise ConfigError("n_orders must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if min(self.veh_length, self.veh_width) <= 0:
            raise ConfigError("vehicle dimensions must be positive")
        if self.standstill_gap < 0:
            raise ConfigError("standstill_gap must be non-negative")
        if not 0 < self.cap_left <= self.v_max or not 0 < self.cap_right <= self.v_max:
            raise ConfigError("turn caps must lie in (0, v_max]")
        if self.relax_step <= 0 or self.relax_max < 0:
            raise ConfigError("relaxation grid must be positive")
        if self.exec_substeps < 1:
            raise ConfigError("exec_substeps must be at least 1")
        try:
            KinematicLimits(self.a_min, self.a_max, self.v_max).validate()
            self.intersection().validate()
        except (InvalidConfigError, ValueError) as err:
            raise ConfigError(str(err)) from err
        return self

    def arrival_rates(self) -> tuple[float, float, float, float]:
        """Per-entry-road arrival rates in vehicles/hr."""
        if isinstance(self.arrival_rate, (int, float)):
            return (float(self.arrival_rate),) * 4
        rates = tuple(float(r) for r in self.arrival_rate)
        if len(rates) != 4:
            raise ConfigError("arrival_rate vector needs four entries")
        return rates

    def intersection(self) -> IntersectionConfig:
        return IntersectionConfig(
            lane_width=self.lane_width, lane_length=self.lane_length,
            left_turn_radius=self.left_turn_radius,
            right_turn_radius=self.right_turn_radius,
            intersection_edge=self.intersection_edge,
            subzone_grid=self.subzone_grid, subzone_style=self.subzone_style)

    def limits(self) -> KinematicLimits:
        return KinematicLimits(self.a_min, self.a_max, self.v_max)

    def speed_caps(self) -> dict[str, float]:
        return {"straight": self.v_max, "left": self.cap_left,
                "right": self.cap_right}

    def config_id(self) -> str:
        """Stable short id over every field except method/n_orders/seed."""
        skip = {"method", "n_orders", "seed"}
        parts = [f"{f.name}={getattr(self, f.name)!r}"
                 for f in fields(self) if f.name not in skip]
        return hashlib.md5("|".join(parts).encode()).hexdigest()[:10]


_FIELD_NAMES = {f.name for f in fields(SimConfig)}
_INT_KEYS = {"horizon", "replan_period", "n_orders", "seed", "subzone_grid",
             "exec_substeps"}
_SEQ_KEYS = {"arrival_rate", "route_probs"}


def _coerce(key: str, value):
    if key in _SEQ_KEYS and isinstance(value, list):
        return tuple(float(v) for v in value)
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if key == "literal_departure_divisor":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if key in ("method", "subzone_style"):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number")
    return float(value)


def config_from_mapping(data: dict) -> SimConfig:
    """Build a validated SimConfig from a flat or sectioned mapping."""
    flat: dict = {}
    for key, value in data.items():
        if isinstance(value, dict):
            for sub, subval in value.items():
                if sub in flat:
                    raise ConfigError(f"duplicate key {sub}")
                flat[sub] = subval
        else:
            if key in flat:
                raise ConfigError(f"duplicate key {key}")
            flat[key] = value
    unknown = sorted(set(flat) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {key: _coerce(key, value) for key, value in flat.items()}
    return SimConfig(**kwargs).validate()


def load_config(path: str) -> SimConfig:
    """Parse a TOML config file; ConfigError on bad syntax or content."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"bad TOML in {path}: {err}") from err
    return config_from_mapping(data)
