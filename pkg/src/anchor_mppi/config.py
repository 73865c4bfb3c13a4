"""Parameter containers and the flat config-file format.

Defaults follow the planner's reference parameter table (mass, thrust and
body-rate limits, sampling noise, horizon, temperature and cost weights).
The config file is JSON with one flat key per parameter, e.g.::

    {"m": 1.0, "Ft_min": 0.3, "Ft_max": 16.35, "K": 128, "N": 25,
     "lambda": 0.1, "Q_track": 15.0, "d_obs_min": 0.4, ...}

Unknown keys are rejected so that typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

GRAVITY = 9.81


@dataclass(frozen=True)
class DynamicsParams:
    """Rigid-body CTBR model parameters and actuator limits."""

    mass: float = 1.0
    gravity: tuple[float, float, float] = (0.0, 0.0, -GRAVITY)
    dt: float = 0.05
    thrust_min: float = 0.3
    thrust_max: float = 16.35
    omega_xy_max: float = 3.0
    omega_z_max: float = 2.0

    def __post_init__(self) -> None:
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.thrust_min > self.thrust_max:
            raise ValueError("thrust_min exceeds thrust_max")

    @property
    def hover_thrust(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))

    @property
    def control_lower(self) -> np.ndarray:
        return np.array([self.thrust_min, -self.omega_xy_max, -self.omega_xy_max, -self.omega_z_max])

    @property
    def control_upper(self) -> np.ndarray:
        return np.array([self.thrust_max, self.omega_xy_max, self.omega_xy_max, self.omega_z_max])

    def hover_control(self) -> np.ndarray:
        return np.array([self.hover_thrust, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class MppiConfig:
    """Sampling configuration of one MPPI instance."""

    K: int = 128
    N: int = 25
    lam: float = 0.1
    sigma: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 0.5)
    dt: float = 0.05
    iterations: int = 1

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if len(self.sigma) != 4 or any(s < 0 for s in self.sigma):
            raise ValueError("sigma needs four nonnegative entries")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def horizon(self) -> float:
        return self.N * self.dt


@dataclass(frozen=True)
class CostWeights:
    """Scalar weights of the five cost terms plus the collision shape."""

    q_track: float = 15.0
    q_vnorm: float = 0.15
    q_c: float = 0.5
    q_c_delta: float = 0.5
    q_p: float = 3.0
    q_v: float = 0.25
    q_q: float = 1.0
    C: float = 1e6
    a: float = 5.0
    d_min: float = 0.4
    d_max: float = 1.0

    def __post_init__(self) -> None:
        if not self.d_min < self.d_max:
            raise ValueError("d_min must be below d_max")
        if not (self.C > 0 and self.a > 0):
            raise ValueError("C and a must be positive")
        for name in ("q_track", "q_vnorm", "q_c", "q_c_delta", "q_p", "q_v", "q_q"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class AnchorGrid:
    """Look-ahead anchor grid centred on the goal direction."""

    m_h: int = 5
    m_v: int = 3
    lookahead: float = 5.0
    spacing_deg: float = 18.0

    def __post_init__(self) -> None:
        if self.m_h < 1 or self.m_v < 1:
            raise ValueError("anchor grid needs at least one row and column")
        if not self.lookahead > 0:
            raise ValueError("lookahead must be positive")

    @property
    def size(self) -> int:
        return self.m_h * self.m_v


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything one planning cycle needs."""

    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    grid: AnchorGrid = field(default_factory=AnchorGrid)
    replan_hz: float = 50.0
    v_end: float = 3.0  # guide terminal speed along the safe direction, m/s
    min_anchor_distance: float = 0.5
    r_max: float = 10.0
    # "guide": each instance starts from its guide's feedforward controls;
    # "winner": all start from the shifted previous winner nominal
    warm_start: str = "guide"

    def __post_init__(self) -> None:
        if abs(self.mppi.dt - self.dynamics.dt) > 1e-12:
            raise ValueError("mppi.dt and dynamics.dt disagree")
        if not self.replan_hz > 0:
            raise ValueError("replan_hz must be positive")
        if self.warm_start not in ("guide", "winner"):
            raise ValueError(f"unknown warm start {self.warm_start!r}")

    @property
    def M(self) -> int:
        return self.grid.size


# flat key -> (section, attribute)
_FLAT_KEYS: dict[str, tuple[str, str]] = {
    "m": ("dynamics", "mass"),
    "Ft_min": ("dynamics", "thrust_min"),
    "Ft_max": ("dynamics", "thrust_max"),
    "omega_xy_max": ("dynamics", "omega_xy_max"),
    "omega_z_max": ("dynamics", "omega_z_max"),
    "dt": ("dynamics", "dt"),
    "K": ("mppi", "K"),
    "N": ("mppi", "N"),
    "lambda": ("mppi", "lam"),
    "iterations": ("mppi", "iterations"),
    "Q_p": ("weights", "q_p"),
    "Q_v": ("weights", "q_v"),
    "Q_q": ("weights", "q_q"),
    "Q_vnorm": ("weights", "q_vnorm"),
    "Q_track": ("weights", "q_track"),
    "Q_c": ("weights", "q_c"),
    "Q_cdelta": ("weights", "q_c_delta"),
    "C": ("weights", "C"),
    "a": ("weights", "a"),
    "d_obs_min": ("weights", "d_min"),
    "d_obs_max": ("weights", "d_max"),
    "lookahead": ("grid", "lookahead"),
    "m_h": ("grid", "m_h"),
    "m_v": ("grid", "m_v"),
    "spacing_deg": ("grid", "spacing_deg"),
    "replan_hz": ("", "replan_hz"),
    "v_end": ("", "v_end"),
    "min_anchor_distance": ("", "min_anchor_distance"),
    "r_max": ("", "r_max"),
    "warm_start": ("", "warm_start"),
}
_SIGMA_KEYS = ("sigma_Ft", "sigma_omega_xy", "sigma_omega_z")


def config_to_dict(cfg: EnsembleConfig) -> dict[str, Any]:
    """Flatten ``cfg`` to the config-file key set."""
    out: dict[str, Any] = {}
    for key, (section, attr) in _FLAT_KEYS.items():
        owner = getattr(cfg, section) if section else cfg
        out[key] = getattr(owner, attr)
    sig = cfg.mppi.sigma
    out["sigma_Ft"], out["sigma_omega_xy"], out["sigma_omega_z"] = sig[0], sig[1], sig[3]
    return out


def config_from_dict(data: dict[str, Any], base: EnsembleConfig | None = None) -> EnsembleConfig:
    """Build a config from flat keys, starting from ``base`` (defaults if None)."""
    cfg = base or EnsembleConfig()
    unknown = set(data) - set(_FLAT_KEYS) - set(_SIGMA_KEYS)
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")

    sections: dict[str, dict[str, Any]] = {"dynamics": {}, "mppi": {}, "weights": {}, "grid": {}, "": {}}
    for key, value in data.items():
        if key in _FLAT_KEYS:
            section, attr = _FLAT_KEYS[key]
            sections[section][attr] = value
    if "dt" in data:
        sections["mppi"]["dt"] = data["dt"]
    if any(k in data for k in _SIGMA_KEYS):
        s = cfg.mppi.sigma
        ft = data.get("sigma_Ft", s[0])
        wxy = data.get("sigma_omega_xy", s[1])
        wz = data.get("sigma_omega_z", s[3])
        sections["mppi"]["sigma"] = (ft, wxy, wxy, wz)

    for name in ("K", "N", "iterations"):
        if name in sections["mppi"]:
            sections["mppi"][name] = int(sections["mppi"][name])
    for name in ("m_h", "m_v"):
        if name in sections["grid"]:
            sections["grid"][name] = int(sections["grid"][name])

    return replace(
        cfg,
        dynamics=replace(cfg.dynamics, **sections["dynamics"]),
        mppi=replace(cfg.mppi, **sections["mppi"]),
        weights=replace(cfg.weights, **sections["weights"]),
        grid=replace(cfg.grid, **sections["grid"]),
        **sections[""],
    )


def load_config(path: str | Path) -> EnsembleConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: EnsembleConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
