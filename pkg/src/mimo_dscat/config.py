"""Network configuration and its JSON schema.

All powers are in mW, distances in metres and the noise variance is the
total noise power over the system bandwidth (noise figure included).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class PathlossParams:
    """Log-distance pathloss ``intercept - slope*log10(d/1km)`` in dB."""

    intercept_db: float = -148.1
    slope_db: float = 37.6
    min_distance: float = 35.0


@dataclass(frozen=True)
class CorrelationParams:
    """Parameters of the two correlation models.

    ``angular_spread_deg`` is the standard deviation of the Gaussian
    angular distribution of the local scattering model; ``None`` (or
    ``inf``) yields the uncorrelated limit ``R = I``.  ``scatterer_corr`` is
    the coefficient ``r`` of the exponential model ``r**|i-j|``.
    """

    angular_spread_deg: float | None = 10.0
    antenna_spacing: float = 0.5
    scatterer_corr: float = 0.5


@dataclass(frozen=True)
class NetworkConfig:
    L: int = 4
    K: int = 5
    M: int = 100
    tau_c: int = 200
    tau_p: int = 5
    bandwidth: float = 20e6
    noise_power_dbm: float = -96.0
    noise_figure_db: float = 5.0
    pathloss: PathlossParams = field(default_factory=PathlossParams)
    shadow_std_db: float = 7.0
    area_side: float = 1000.0
    pilot_power: float = 200.0
    max_power: float = 200.0
    S: int = 21
    correlation: CorrelationParams = field(default_factory=CorrelationParams)
    # optional per-user overrides, shape (L, K)
    pilot_powers: tuple | None = None
    max_powers: tuple | None = None

    def __post_init__(self):
        self.validate()

    @property
    def sigma2(self) -> float:
        """Noise variance in mW.

        ``noise_power_dbm`` already includes the noise figure
        (-174 dBm/Hz + 10 log10(20 MHz) + 5 dB = -96 dBm).
        """
        return dbm_to_mw(self.noise_power_dbm)

    @property
    def cells_per_side(self) -> int:
        return math.isqrt(self.L)

    @property
    def cell_side(self) -> float:
        return self.area_side / self.cells_per_side

    @property
    def prelog(self) -> float:
        return 1.0 - self.tau_p / self.tau_c

    @property
    def hat_p(self) -> np.ndarray:
        """Pilot powers, shape (L, K)."""
        if self.pilot_powers is not None:
            return np.asarray(self.pilot_powers, dtype=float)
        return np.full((self.L, self.K), float(self.pilot_power))

    @property
    def p_max(self) -> np.ndarray:
        """Maximum data powers, shape (L, K)."""
        if self.max_powers is not None:
            return np.asarray(self.max_powers, dtype=float)
        return np.full((self.L, self.K), float(self.max_power))

    def validate(self) -> None:
        for name in ("L", "K", "M", "S"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.cells_per_side ** 2 != self.L:
            raise ConfigError("L must be a perfect square (square grid of cells)")
        if not 0 < self.tau_p <= self.tau_c:
            raise ConfigError("need 0 < tau_p <= tau_c")
        if self.tau_p == self.tau_c:
            raise ConfigError("tau_p = tau_c leaves no data symbols")
        for name, arr in (("pilot powers", self.hat_p), ("max powers", self.p_max)):
            if arr.shape != (self.L, self.K):
                raise ConfigError(f"{name} must have shape (L, K)")
            if np.any(arr <= 0):
                raise ConfigError(f"{name} must be strictly positive")
        half_diag = self.cell_side / math.sqrt(2.0)
        if not 0 < self.pathloss.min_distance < half_diag:
            raise ConfigError("min_distance must lie in (0, cell half-diagonal)")
        if self.shadow_std_db < 0:
            raise ConfigError("shadow_std_db must be non-negative")
        r = self.correlation.scatterer_corr
        if not -1.0 < r < 1.0:
            raise ConfigError("scatterer_corr must lie in (-1, 1)")
        asd = self.correlation.angular_spread_deg
        if asd is not None and asd <= 0:
            raise ConfigError("angular_spread_deg must be positive or None")

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("pilot_powers", "max_powers"):
            if d[key] is not None:
                d[key] = np.asarray(d[key]).tolist()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "pathloss" in data:
            data["pathloss"] = PathlossParams(**data["pathloss"])
        if "correlation" in data:
            data["correlation"] = CorrelationParams(**data["correlation"])
        for key in ("pilot_powers", "max_powers"):
            if data.get(key) is not None:
                data[key] = tuple(tuple(float(v) for v in row) for row in data[key])
        return cls(**data)


def load_config(path: str | Path) -> NetworkConfig:
    with open(path) as fh:
        return NetworkConfig.from_dict(json.load(fh))


def dump_config(config: NetworkConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "NetworkConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "L": {"type": "integer", "minimum": 1, "default": 4, "description": "number of cells (perfect square)"},
        "K": {"type": "integer", "minimum": 1, "default": 5, "description": "users per cell"},
        "M": {"type": "integer", "minimum": 1, "default": 100, "description": "BS antennas"},
        "tau_c": {"type": "integer", "minimum": 2, "default": 200, "description": "symbols per coherence block"},
        "tau_p": {"type": "integer", "minimum": 1, "default": 5, "description": "pilot symbols"},
        "bandwidth": {"type": "number", "default": 20e6, "description": "Hz"},
        "noise_power_dbm": {"type": "number", "default": -96.0,
                            "description": "total noise power incl. noise figure"},
        "noise_figure_db": {"type": "number", "default": 5.0, "description": "informational"},
        "pathloss": {
            "type": "object",
            "properties": {
                "intercept_db": {"type": "number", "default": -148.1},
                "slope_db": {"type": "number", "default": 37.6},
                "min_distance": {"type": "number", "default": 35.0},
            },
        },
        "shadow_std_db": {"type": "number", "minimum": 0, "default": 7.0},
        "area_side": {"type": "number", "default": 1000.0, "description": "m"},
        "pilot_power": {"type": "number", "exclusiveMinimum": 0, "default": 200.0, "description": "mW"},
        "max_power": {"type": "number", "exclusiveMinimum": 0, "default": 200.0, "description": "mW"},
        "S": {"type": "integer", "minimum": 1, "default": 21, "description": "scatterers per link"},
        "correlation": {
            "type": "object",
            "properties": {
                "angular_spread_deg": {"type": ["number", "null"], "default": 10.0},
                "antenna_spacing": {"type": "number", "default": 0.5, "description": "wavelengths"},
                "scatterer_corr": {"type": "number", "default": 0.5},
            },
        },
        "pilot_powers": {"type": ["array", "null"], "default": None, "description": "(L, K) override"},
        "max_powers": {"type": ["array", "null"], "default": None, "description": "(L, K) override"},
    },
}
