"""Scenario configuration with the macrocell/small-cell defaults."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass


class Strategy(str, enum.Enum):
    FREQUENCY_REUSE = "frequency_reuse"
    IA_ONLY = "ia_only"
    ID_IA = "id_ia"


class ConfigError(ValueError):
    """Invalid or impossible scenario configuration."""


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    # population
    n_mue: int = 30
    n_sbs: int = 50
    # antennas / streams
    a_mbs: int = 4
    a_sbs: int = 4
    b_ue: int = 2
    d_mue: int = 1
    d_sbs: int = 1
    # QoS and power
    delta_db: float = 12.0
    p_mbs_dbm: float = 40.0
    p_sbs_dbm: float = 20.0
    # spectrum
    n_subchannels: int = 32
    max_sbs_subchannels: int = 4
    subchannel_bw_hz: float = 180e3
    noise_dbm_per_hz: float = -174.0
    # geometry and propagation
    cell_radius_m: float = 650.0
    small_cell_radius_m: tuple[float, float] = (15.0, 25.0)
    macro_exclusion_m: float = 50.0
    sbs_exclusion_m: float = 0.2
    wall_loss_db: float = 12.0
    shadowing_std_db: float = 10.0
    power_control: bool = False
    # algorithm knobs
    strategy: Strategy = Strategy.ID_IA
    draining_iters: int = 200
    max_rounds: int = 10
    detect_inr_db: float = 0.0
    # Monte Carlo
    trials: int = 200
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.strategy, Strategy):
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "small_cell_radius_m", tuple(self.small_cell_radius_m))
        self.check()

    def check(self) -> None:
        for name in ("n_mue", "n_sbs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("a_mbs", "a_sbs", "b_ue", "d_mue", "d_sbs", "n_subchannels",
                     "max_sbs_subchannels", "draining_iters", "max_rounds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0")
        if self.d_mue > min(self.a_mbs, self.b_ue):
            raise ConfigError("d_mue exceeds min(a_mbs, b_ue)")
        if self.d_sbs > min(self.a_sbs, self.b_ue):
            raise ConfigError("d_sbs exceeds min(a_sbs, b_ue)")
        if self.max_sbs_subchannels > 4:
            raise ConfigError("max_sbs_subchannels is limited to 4")
        if self.strategy is Strategy.FREQUENCY_REUSE and self.d_sbs > self.max_sbs_subchannels:
            raise ConfigError("frequency reuse needs d_sbs <= max_sbs_subchannels")
        lo, hi = self.small_cell_radius_m
        if not 0 < lo <= hi:
            raise ConfigError("small_cell_radius_m must be an increasing positive pair")
        if self.cell_radius_m <= self.macro_exclusion_m:
            raise ConfigError("cell_radius_m must exceed macro_exclusion_m")

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm_per_hz + linear_to_db(self.subchannel_bw_hz))

    @property
    def delta(self) -> float:
        return float(db_to_linear(self.delta_db))

    @property
    def p_mbs_w(self) -> float:
        return dbm_to_watts(self.p_mbs_dbm)

    @property
    def p_sbs_w(self) -> float:
        return dbm_to_watts(self.p_sbs_dbm)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["strategy"] = self.strategy.value
        out["small_cell_radius_m"] = list(self.small_cell_radius_m)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(ScenarioConfig))
