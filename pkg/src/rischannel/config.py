"""Scenario configuration.

Configs are flat ``key = value`` TOML files. Every length is in wavelengths
and the unit is spelled out in the key name (``dipole_length_lambda``).
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DIPOLE = "dipole"
LOOP = "loop"


class ConfigError(ValueError):
    """Raised for an invalid scenario configuration."""


def default_r_list():
    return [1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0,
            60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0]


@dataclass
class ScenarioConfig:
    element_kind: str = DIPOLE
    # RIS
    dipole_length_lambda: float = 0.5
    loop_side_a_lambda: float = 0.4
    loop_side_b_lambda: float = 0.4
    strip_width_lambda: float = 0.01
    pitch_x_lambda: float | None = None  # 0.5 (dipole) / 0.6 (loop)
    pitch_y_lambda: float | None = None  # 0.7 (dipole) / 0.6 (loop)
    height_lambda: float = 0.25
    ground_plane: bool = True
    m_x: int = 11
    m_y: int = 11
    # Tx / Rx arrays
    antenna_length_lambda: float = 0.5
    m_xt: int = 2
    m_xr: int = 2
    spacing_xt_lambda: float = 0.5
    spacing_xr_lambda: float = 0.5
    tx_position_lambda: tuple = (0.0, 0.0, 5.0)
    port_load_ohm: float = 50.0
    # link
    theta_deg: float = 30.0
    beam_theta_deg: float | None = None  # defaults to theta_deg
    r_lambda: float = 20.0
    r_list_lambda: list = field(default_factory=default_r_list)
    gamma_db: float = 20.0
    fit_r_min_lambda: float = 40.0
    # meshing
    n_segments_dipole: int = 7
    n_per_side_loop: int = 4
    # unit-cell phases (Table-I defaults when None)
    phase_on_deg: float | None = None
    phase_off_deg: float | None = None
    # pattern cut
    pattern_theta_min_deg: float = -90.0
    pattern_theta_max_deg: float = 90.0
    pattern_theta_step_deg: float = 0.5
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.element_kind = str(self.element_kind).lower()
        self.tx_position_lambda = tuple(float(v) for v in self.tx_position_lambda)
        self.r_list_lambda = [float(r) for r in self.r_list_lambda]
        if self.pitch_x_lambda is None:
            self.pitch_x_lambda = 0.5 if self.element_kind == DIPOLE else 0.6
        if self.pitch_y_lambda is None:
            self.pitch_y_lambda = 0.7 if self.element_kind == DIPOLE else 0.6
        if self.beam_theta_deg is None:
            self.beam_theta_deg = self.theta_deg

    def validate(self):
        if self.element_kind not in (DIPOLE, LOOP):
            raise ConfigError(f"element_kind must be 'dipole' or 'loop', got {self.element_kind!r}")
        for name in ("dipole_length_lambda", "loop_side_a_lambda", "loop_side_b_lambda",
                     "strip_width_lambda", "pitch_x_lambda", "pitch_y_lambda",
                     "height_lambda", "antenna_length_lambda", "spacing_xt_lambda",
                     "spacing_xr_lambda", "r_lambda", "pattern_theta_step_deg"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive, got {value}")
        for name in ("m_x", "m_y", "m_xt", "m_xr"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("theta_deg", "beam_theta_deg"):
            if not -89.0 <= getattr(self, name) <= 89.0:
                raise ConfigError(f"{name} must lie in [-89, 89] degrees")
        if len(self.tx_position_lambda) != 3:
            raise ConfigError("tx_position_lambda needs three coordinates")
        if not self.r_list_lambda:
            raise ConfigError("r_list_lambda is empty")
        if any(not (0.5 < r <= 200.0) for r in self.r_list_lambda):
            raise ConfigError("r_list_lambda entries must lie in (0.5, 200]")
        if self.n_segments_dipole < 3 or self.n_segments_dipole % 2 == 0:
            raise ConfigError("n_segments_dipole must be odd and >= 3")
        if self.n_per_side_loop < 2:
            raise ConfigError("n_per_side_loop must be >= 2")
        if self.port_load_ohm < 0:
            raise ConfigError("port_load_ohm must be non-negative")
        return self

    @property
    def gamma(self):
        return 10.0 ** (self.gamma_db / 10.0)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def config_from_mapping(mapping):
    unknown = set(mapping) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        return ScenarioConfig(**mapping).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return config_from_mapping(data)
