"""Deterministic obstacle worlds, a spherical-scan LiDAR and ground truth.

Obstacles are finite solid cylinders (vertical or tilted, standing on a base
point) and axis-aligned boxes. Scenario files are JSON::

    {"format": "anchor_mppi.scenario", "version": 1, "kind": "forest",
     "seed": 3, "bounds": [[x0, x1], [y0, y1]], "start": [0, 0, 2],
     "goal": [45, 0, 2], "obstacles": [
        {"kind": "cylinder", "base": [x, y, z], "radius": r, "height": h,
         "tilt": rad, "tilt_azimuth": rad},
        {"kind": "box", "center": [x, y, z], "half_extents": [a, b, c]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from anchor_mppi.dynamics import P, Q, _as_state, quat_to_rotation
from anchor_mppi.perception import N_AZ, N_EL, RESOLUTION_DEG, direction

START = (0.0, 0.0, 2.0)
GOAL = (45.0, 0.0, 2.0)
# 40 m x 40 m obstacle field between start and goal
BOUNDS = ((2.5, 42.5), (-20.0, 20.0))
KINDS = ("forest", "verticals", "inclines")
_KIND_CODES = {"forest": 1, "verticals": 2, "inclines": 3, "density": 4, "two_gap": 5}


@dataclass(frozen=True)
class ObstaclePrimitive:
    kind: str  # "cylinder" or "box"
    base: tuple[float, float, float] = (0.0, 0.0, 0.0)  # cylinder bottom centre
    radius: float = 0.0
    height: float = 0.0
    tilt: float = 0.0  # lean from vertical, rad
    tilt_azimuth: float = 0.0  # lean direction, rad
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)  # box
    half_extents: tuple[float, float, float] = (0.0, 0.0, 0.0)  # box

    def __post_init__(self) -> None:
        if self.kind == "cylinder":
            if not (self.radius > 0 and self.height > 0):
                raise ValueError("cylinder needs positive radius and height")
        elif self.kind == "box":
            if not all(h > 0 for h in self.half_extents):
                raise ValueError("box needs positive half extents")
        else:
            raise ValueError(f"unknown primitive kind {self.kind!r}")

    @property
    def axis(self) -> np.ndarray:
        st = np.sin(self.tilt)
        return np.array([st * np.cos(self.tilt_azimuth), st * np.sin(self.tilt_azimuth), np.cos(self.tilt)])

    def to_dict(self) -> dict:
        if self.kind == "cylinder":
            return {
                "kind": "cylinder",
                "base": list(self.base),
                "radius": self.radius,
                "height": self.height,
                "tilt": self.tilt,
                "tilt_azimuth": self.tilt_azimuth,
            }
        return {"kind": "box", "center": list(self.center), "half_extents": list(self.half_extents)}

    @classmethod
    def from_dict(cls, d: dict) -> ObstaclePrimitive:
        if d["kind"] == "cylinder":
            return cls(
                "cylinder",
                base=tuple(float(v) for v in d["base"]),
                radius=float(d["radius"]),
                height=float(d["height"]),
                tilt=float(d.get("tilt", 0.0)),
                tilt_azimuth=float(d.get("tilt_azimuth", 0.0)),
            )
        return cls("box", center=tuple(float(v) for v in d["center"]), half_extents=tuple(float(v) for v in d["half_extents"]))


def cylinder(base, radius: float, height: float, tilt: float = 0.0, tilt_azimuth: float = 0.0) -> ObstaclePrimitive:
    return ObstaclePrimitive("cylinder", tuple(float(v) for v in base), float(radius), float(height), float(tilt), float(tilt_azimuth))


def box(center, half_extents) -> ObstaclePrimitive:
    return ObstaclePrimitive("box", center=tuple(float(v) for v in center), half_extents=tuple(float(v) for v in half_extents))


GROUND_SLAB = box((0.0, 0.0, -50.0), (1e4, 1e4, 50.0))


@dataclass(frozen=True)
class Scenario:
    obstacles: tuple[ObstaclePrimitive, ...] = ()
    start: tuple[float, float, float] = START
    goal: tuple[float, float, float] = GOAL
    bounds: tuple[tuple[float, float], tuple[float, float]] = BOUNDS
    seed: int = 0
    kind: str = "custom"
    ground: bool = False  # solid half-space below z = 0

    @cached_property
    def _cyl(self) -> dict[str, np.ndarray]:
        cyl = [o for o in self.obstacles if o.kind == "cylinder"]
        return {
            "base": np.array([o.base for o in cyl], float).reshape(-1, 3),
            "axis": np.array([o.axis for o in cyl], float).reshape(-1, 3),
            "radius": np.array([o.radius for o in cyl], float),
            "height": np.array([o.height for o in cyl], float),
        }

    @cached_property
    def _box(self) -> dict[str, np.ndarray]:
        bx = [o for o in self.obstacles if o.kind == "box"]
        if self.ground:
            bx.append(GROUND_SLAB)
        return {
            "center": np.array([o.center for o in bx], float).reshape(-1, 3),
            "half": np.array([o.half_extents for o in bx], float).reshape(-1, 3),
        }

    def to_dict(self) -> dict:
        return {
            "format": "anchor_mppi.scenario",
            "version": 1,
            "kind": self.kind,
            "seed": self.seed,
            "bounds": [list(b) for b in self.bounds],
            "start": list(self.start),
            "goal": list(self.goal),
            "ground": self.ground,
            "obstacles": [o.to_dict() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Scenario:
        if d.get("format") != "anchor_mppi.scenario":
            raise ValueError("not a scenario file")
        return cls(
            tuple(ObstaclePrimitive.from_dict(o) for o in d["obstacles"]),
            tuple(float(v) for v in d["start"]),
            tuple(float(v) for v in d["goal"]),
            tuple(tuple(float(v) for v in b) for b in d["bounds"]),
            int(d["seed"]),
            str(d["kind"]),
            bool(d.get("ground", False)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- distances


def _cylinder_sdf(p: np.ndarray, base, axis, radius, height) -> np.ndarray:
    """Signed distance of points ``(n, 3)`` to capped cylinders; ``(n, c)``."""
    w = p[:, None, :] - base[None]
    z = np.einsum("ncd,cd->nc", w, axis)
    radial = np.sqrt(np.maximum(np.einsum("ncd,ncd->nc", w, w) - z * z, 0.0))
    dr = radial - radius
    dz = np.maximum(-z, z - height)
    outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
    return outside + np.minimum(np.maximum(dr, dz), 0.0)


def _box_sdf(p: np.ndarray, center, half) -> np.ndarray:
    q = np.abs(p[:, None, :] - center[None]) - half[None]
    outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(-1))
    return outside + np.minimum(q.max(-1), 0.0)


def _sdf_columns(scene: Scenario, pts: np.ndarray, ground: bool = True) -> np.ndarray:
    """Per-obstacle signed distances, ``(n, n_obstacles)``; the ground slab last."""
    cols = [np.empty((len(pts), 0))]
    c = scene._cyl
    if len(c["radius"]):
        cols.append(_cylinder_sdf(pts, c["base"], c["axis"], c["radius"], c["height"]))
    b = scene._box
    n_box = len(b["half"]) - (1 if scene.ground and not ground else 0)
    if n_box > 0:
        cols.append(_box_sdf(pts, b["center"][:n_box], b["half"][:n_box]))
    return np.concatenate(cols, axis=1)


def signed_distance(scene: Scenario, p) -> np.ndarray:
    """Signed distance to the nearest solid (negative inside), ``+inf`` if none."""
    p = np.asarray(p, float)
    sdf = _sdf_columns(scene, p.reshape(-1, 3))
    out = sdf.min(axis=1) if sdf.shape[1] else np.full(len(sdf), np.inf)
    return out.reshape(p.shape[:-1])


def true_clearance(scene: Scenario, p, include_ground: bool = True):
    """Euclidean distance from ``p`` to the nearest obstacle surface (``inf`` if none)."""
    p = np.asarray(p, float)
    sdf = np.abs(_sdf_columns(scene, p.reshape(-1, 3), include_ground))
    out = (sdf.min(axis=1) if sdf.shape[1] else np.full(len(sdf), np.inf)).reshape(p.shape[:-1])
    return float(out) if out.ndim == 0 else out


def check_collision(scene: Scenario, p, drone_radius: float = 0.2):
    """Sphere of ``drone_radius`` overlaps an obstacle (surface within reach, or centre inside)."""
    if not drone_radius > 0:
        raise ValueError("drone_radius must be positive")
    p = np.asarray(p, float)
    sdf = _sdf_columns(scene, p.reshape(-1, 3))
    if sdf.shape[1] == 0:
        out = np.zeros(p.shape[:-1], dtype=bool)
    else:
        out = ((np.abs(sdf).min(axis=1) < drone_radius) | (sdf.min(axis=1) < 0)).reshape(p.shape[:-1])
    return bool(out) if out.ndim == 0 else out


# ------------------------------------------------------------------- rays


def _ray_cylinders(o, d, base, axis, radius, height):
    """First hit distance of rays ``o + s d`` (d unit, ``(n, 3)``) with capped cylinders."""
    w = o[None, :] - base  # (c, 3)
    wz = np.einsum("cd,cd->c", w, axis)  # (c,)
    dz = d @ axis.T  # (n, c)
    w_perp = w - wz[:, None] * axis  # (c, 3)
    # d_perp = d - dz * axis
    dd = np.ones(len(d))[:, None] - dz * dz  # |d_perp|^2
    wd = d @ w_perp.T  # w_perp . d  (w_perp . axis = 0)
    ww = np.einsum("cd,cd->c", w_perp, w_perp)
    A = dd
    B = 2.0 * wd
    Cq = ww - radius**2
    disc = B * B - 4 * A * Cq
    hit = np.full(dd.shape, np.inf)
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for s in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            z = wz[None, :] + s * dz
            ok = (disc >= 0) & (A > 1e-12) & (s > 1e-9) & (z >= 0) & (z <= height[None, :])
            hit = np.where(ok & (s < hit), s, hit)
        for cap in (0.0, 1.0):
            s = (cap * height[None, :] - wz[None, :]) / dz
            # radial distance at the cap plane
            rr = ww[None, :] + 2 * s * wd + s * s * dd
            ok = (np.abs(dz) > 1e-12) & (s > 1e-9) & (rr <= radius[None, :] ** 2)
            hit = np.where(ok & (s < hit), s, hit)
    return hit.min(axis=1) if hit.shape[1] else np.full(len(d), np.inf)


def _ray_boxes(o, d, center, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d  # (n, 3)
        lo = (center - half)[None] - o  # (1, b, 3)
        hi = (center + half)[None] - o
        t1 = lo * inv[:, None, :]
        t2 = hi * inv[:, None, :]
        t1 = np.where(np.isnan(t1), -np.inf, t1)
        t2 = np.where(np.isnan(t2), np.inf, t2)
        tmin = np.minimum(t1, t2).max(-1)
        tmax = np.maximum(t1, t2).min(-1)
    ok = (tmax >= tmin) & (tmin > 1e-9)
    hit = np.where(ok, tmin, np.inf)
    return hit.min(axis=1) if hit.shape[1] else np.full(len(d), np.inf)


def raycast(scene: Scenario, origin, dirs: np.ndarray, r_max: float = np.inf) -> np.ndarray:
    """Distance to the first surface along each unit direction (``inf`` on a miss)."""
    o = np.asarray(origin, float)
    d = np.asarray(dirs, float).reshape(-1, 3)
    best = np.full(len(d), np.inf)
    c = scene._cyl
    if len(c["radius"]):
        # cull by bounding sphere around the axis midpoint
        mid = c["base"] + 0.5 * c["height"][:, None] * c["axis"]
        reach = np.sqrt(c["radius"] ** 2 + (0.5 * c["height"]) ** 2)
        near = np.linalg.norm(mid - o, axis=1) - reach <= r_max
        if near.any():
            best = np.minimum(
                best,
                _ray_cylinders(o, d, c["base"][near], c["axis"][near], c["radius"][near], c["height"][near]),
            )
    b = scene._box
    if len(b["half"]):
        near = np.linalg.norm(b["center"] - o, axis=1) - np.linalg.norm(b["half"], axis=1) <= r_max
        if near.any():
            best = np.minimum(best, _ray_boxes(o, d, b["center"][near], b["half"][near]))
    return best


@dataclass(frozen=True)
class LidarModel:
    """One jittered ray per 3-degree cell inside an elevation band."""

    r_max: float = 10.0
    range_noise: float = 0.01
    min_elevation_deg: float = -90.0
    max_elevation_deg: float = 90.0
    jitter: bool = True
    rate_hz: float = 10.0

    def cell_mask(self) -> np.ndarray:
        j = np.arange(N_EL)
        lo = -90.0 + j * RESOLUTION_DEG
        band = (lo + RESOLUTION_DEG > self.min_elevation_deg) & (lo < self.max_elevation_deg)
        return np.broadcast_to(band[None, :], (N_AZ, N_EL))


def lidar_scan(scene: Scenario, pose, model: LidarModel = LidarModel(), frame_seed=0) -> np.ndarray:
    """Simulated world-frame returns for one frame at ``pose``.

    Rays are fixed to the body frame; each masked cell casts one ray at a
    uniformly jittered angle inside the cell. Range noise is Gaussian,
    truncated at four standard deviations.
    """
    x = _as_state(pose)
    seed = frame_seed if isinstance(frame_seed, (list, tuple)) else [frame_seed]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(s) for s in seed])))
    ii, jj = np.nonzero(model.cell_mask())
    res = np.deg2rad(RESOLUTION_DEG)
    off_a = rng.random(len(ii)) if model.jitter else np.full(len(ii), 0.5)
    off_b = rng.random(len(ii)) if model.jitter else np.full(len(ii), 0.5)
    alpha = -np.pi + (ii + off_a) * res
    beta = -np.pi / 2 + (jj + off_b) * res
    dirs = direction(alpha, beta) @ quat_to_rotation(x[Q]).T
    noise = np.clip(rng.standard_normal(len(ii)), -4.0, 4.0) * model.range_noise
    rng_hit = raycast(scene, x[P], dirs, model.r_max)
    keep = rng_hit <= model.r_max
    r = rng_hit[keep] + noise[keep]
    return x[P] + dirs[keep] * r[:, None]


# -------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class ForestParams:
    count: int = 100
    radius: tuple[float, float] = (0.1, 0.5)
    height: tuple[float, float] = (3.0, 8.0)
    tilt_deg: tuple[float, float] = (0.0, 15.0)


@dataclass(frozen=True)
class VerticalsParams:
    count: int = 1000
    radius: tuple[float, float] = (0.4, 1.1)
    height: tuple[float, float] = (6.0, 6.0)
    tilt_deg: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class InclinesParams:
    count: int = 800
    radius: tuple[float, float] = (0.06, 0.3)
    height: tuple[float, float] = (10.0, 10.0)
    tilt_deg: tuple[float, float] = (0.0, 30.0)


_DEFAULTS = {"forest": ForestParams(), "verticals": VerticalsParams(), "inclines": InclinesParams()}


def _random_cylinders(rng, n, spec, bounds) -> list[ObstaclePrimitive]:
    (x0, x1), (y0, y1) = bounds
    xs = rng.uniform(x0, x1, n)
    ys = rng.uniform(y0, y1, n)
    radius = rng.uniform(*spec.radius, n)
    height = rng.uniform(*spec.height, n)
    tilt = np.deg2rad(rng.uniform(*spec.tilt_deg, n))
    azim = rng.uniform(0.0, 2 * np.pi, n)
    return [cylinder((xs[k], ys[k], 0.0), radius[k], height[k], tilt[k], azim[k]) for k in range(n)]


def _enforce_clearance(rng, obstacles, spec, bounds, points, min_clearance=1.0, max_rounds=1000):
    obstacles = list(obstacles)
    for _ in range(max_rounds):
        bad = [k for k, o in enumerate(obstacles) if np.any(signed_distance(Scenario((o,)), np.asarray(points)) < min_clearance)]
        if not bad:
            return obstacles
        for k, o in zip(bad, _random_cylinders(rng, len(bad), spec, bounds)):
            obstacles[k] = o
    raise RuntimeError("could not clear start and goal")


def generate_scenario(kind: str, seed: int, params=None, bounds=BOUNDS, start=START, goal=GOAL) -> Scenario:
    """Random ``forest`` / ``verticals`` / ``inclines`` world, deterministic in ``seed``.

    Obstacles are placed uniformly in ``bounds``; any that come within 1 m of
    the start or goal are redrawn.
    """
    if kind not in _DEFAULTS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    spec = params or _DEFAULTS[kind]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _KIND_CODES[kind]]))
    obstacles = _random_cylinders(rng, spec.count, spec, bounds)
    obstacles = _enforce_clearance(rng, obstacles, spec, bounds, [start, goal])
    return Scenario(tuple(obstacles), tuple(start), tuple(goal), tuple(map(tuple, bounds)), int(seed), kind, ground=True)


def density_scenario(count: int, height_mode: str, seed: int, bounds=BOUNDS) -> Scenario:
    """Vertical cylinders at a given count; heights ``U[1, 6]`` (``"random"``) or 6 m (``"fixed"``)."""
    if height_mode not in ("random", "fixed"):
        raise ValueError("height_mode must be 'random' or 'fixed'")
    if count < 0:
        raise ValueError("count must be nonnegative")
    spec = VerticalsParams(count=count, height=(1.0, 6.0) if height_mode == "random" else (6.0, 6.0))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _KIND_CODES["density"], count]))
    obstacles = _enforce_clearance(rng, _random_cylinders(rng, count, spec, bounds), spec, bounds, [START, GOAL])
    return Scenario(tuple(obstacles), START, GOAL, tuple(map(tuple, bounds)), int(seed), f"density-{height_mode}-{count}", ground=True)


def two_gap_scenario(wall_x: float = 10.0, gap_center: float = 3.0, gap_width: float = 3.0, thickness: float = 0.5, goal_x: float = 20.0) -> Scenario:
    """A tall wall across the direct route with two mirror-image gaps at ``y = ±gap_center``."""
    half_t = thickness / 2
    z_c, z_h = 5.0, 15.0  # wall spans z in [-10, 20]
    inner = gap_center - gap_width / 2
    outer = gap_center + gap_width / 2
    y_end = 20.0
    obstacles = (
        box((wall_x, 0.0, z_c), (half_t, inner, z_h)),
        box((wall_x, (outer + y_end) / 2, z_c), (half_t, (y_end - outer) / 2, z_h)),
        box((wall_x, -(outer + y_end) / 2, z_c), (half_t, (y_end - outer) / 2, z_h)),
    )
    goal = (goal_x, 0.0, 2.0)
    return Scenario(obstacles, START, goal, ((0.0, goal_x), (-y_end, y_end)), 0, "two_gap", ground=True)


def empty_scenario(start=START, goal=GOAL, ground: bool = True) -> Scenario:
    """No obstacles; with ``ground`` the floor is still sensed and collidable."""
    return Scenario((), tuple(start), tuple(goal), BOUNDS, 0, "empty", ground)
