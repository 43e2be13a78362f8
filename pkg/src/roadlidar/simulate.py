"""Synthetic roadside scenes with exact per-point and per-object ground truth.

Each frame casts one ray per beam of a fixed azimuth x elevation grid;
the nearest hit among static geometry (ground plane, boxes, vertical
cylinders) and actor surfaces becomes a point, with additive Gaussian range
noise.  Beams that hit nothing are padding, so index j maps to the same
(azimuth, elevation) in every frame.  Primitives flagged with a jitter sigma
(foliage) have their hit points perturbed per frame, which is what makes
them background with spread instead of a single crisp range.

Ground truth comes for free: a mask byte per point (0 background,
1 foreground, 2 padding) and the actors' exact oriented boxes for every
frame in which they are sufficiently visible.

Determinism: the random stream of frame t derives from (seed, t), so frames
can render in parallel and still reproduce bit-identically.

Actors follow waypoint polylines at constant speed, optionally after a spawn
delay (``start_time``), and hold their final pose once the path is consumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    Frame,
    FrameSequence,
    LabelClass,
    LabelSource,
    ObjectLabel,
    SensorMeta,
    normalize_yaw_half,
    write_frame_file,
    write_label_file,
)

MASK_BACKGROUND = 0
MASK_FOREGROUND = 1
MASK_PADDING = 2

_EPS_T = 1e-6
_TINY = 1e-12


@dataclass(frozen=True)
class SensorModel:
    """Beam grid and noise model of the simulated unit.

    Beams are ordered elevation-major: index = i_el * azimuth_count + i_az.
    """

    origin: tuple[float, float, float] = (0.0, 0.0, 4.0)
    azimuth_deg: tuple[float, float] = (-180.0, 180.0)
    azimuth_count: int = 1024
    elevation_deg: tuple[float, float] = (-22.5, 22.5)
    elevation_count: int = 64
    frequency_hz: float = 10.0
    range_noise_sigma: float = 0.0
    max_range: float = 120.0

    def __post_init__(self) -> None:
        if self.azimuth_count < 1 or self.elevation_count < 1:
            raise ConfigError("beam counts must be >= 1")
        if self.frequency_hz <= 0 or self.max_range <= 0:
            raise ConfigError("frequency and max_range must be positive")
        if self.range_noise_sigma < 0:
            raise ConfigError("range noise sigma must be >= 0")

    @property
    def beam_count(self) -> int:
        return self.azimuth_count * self.elevation_count

    def directions(self) -> np.ndarray:
        az = np.radians(np.linspace(self.azimuth_deg[0], self.azimuth_deg[1], self.azimuth_count))
        el = np.radians(np.linspace(self.elevation_deg[0], self.elevation_deg[1], self.elevation_count))
        el_grid, az_grid = np.meshgrid(el, az, indexing="ij")
        cos_el = np.cos(el_grid)
        dirs = np.stack(
            [cos_el * np.cos(az_grid), cos_el * np.sin(az_grid), np.sin(el_grid)], axis=-1
        )
        return dirs.reshape(-1, 3)

    def meta(self, name: str = "synthetic") -> SensorMeta:
        return SensorMeta(name, self.azimuth_count, self.elevation_count, self.frequency_hz, 1.0)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundPlane:
    z: float = 0.0
    jitter_sigma: float = 0.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        dz = dirs[:, 2]
        dz_safe = np.where(np.abs(dz) < _TINY, _TINY, dz)
        t = (self.z - origin[2]) / dz_safe
        return np.where((np.abs(dz) >= _TINY) & (t > _EPS_T), t, np.inf)


@dataclass(frozen=True)
class BoxObstacle:
    """Axis-aligned box rotated by yaw about +z, centered at ``center``."""

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float = 0.0
    jitter_sigma: float = 0.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> local
        o = rot @ (origin - np.asarray(self.center))
        d = dirs @ rot.T
        half = np.asarray(self.dims) / 2.0
        d_safe = np.where(np.abs(d) < _TINY, _TINY, d)
        t1 = (-half - o) / d_safe
        t2 = (half - o) / d_safe
        t_low = np.minimum(t1, t2).max(axis=1)
        t_high = np.maximum(t1, t2).min(axis=1)
        hit = (t_low <= t_high) & (t_high > _EPS_T) & (t_low > _EPS_T)
        return np.where(hit, t_low, np.inf)


@dataclass(frozen=True)
class CylinderObstacle:
    """Vertical cylinder with end caps, spanning z in [z_low, z_high]."""

    center_xy: tuple[float, float]
    radius: float
    z_low: float
    z_high: float
    jitter_sigma: float = 0.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ox = origin[0] - self.center_xy[0]
        oy = origin[1] - self.center_xy[1]
        dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        cc = ox * ox + oy * oy - self.radius * self.radius
        disc = b * b - 4.0 * a * cc
        a_safe = np.where(a < _TINY, _TINY, a)
        sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
        t_side = (-b - sqrt_disc) / (2.0 * a_safe)
        z_side = origin[2] + t_side * dz
        side_ok = (disc > 0) & (a >= _TINY) & (t_side > _EPS_T) & (z_side >= self.z_low) & (z_side <= self.z_high)
        t_best = np.where(side_ok, t_side, np.inf)
        for z_cap in (self.z_high, self.z_low):
            dz_safe = np.where(np.abs(dz) < _TINY, _TINY, dz)
            t_cap = (z_cap - origin[2]) / dz_safe
            px = origin[0] + t_cap * dirs[:, 0] - self.center_xy[0]
            py = origin[1] + t_cap * dirs[:, 1] - self.center_xy[1]
            cap_ok = (np.abs(dz) >= _TINY) & (t_cap > _EPS_T) & (px * px + py * py <= self.radius * self.radius)
            t_best = np.where(cap_ok & (t_cap < t_best), t_cap, t_best)
        return t_best


# ---------------------------------------------------------------------------
# Actors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Actor:
    """A moving object following a waypoint polyline at constant speed.

    ``shape`` is "cuboid" (dims = length, width, height; classifies as
    Vehicle in the truth) or "cylinder" (dims = radius, height; Pedestrian).
    Before ``start_time`` the actor is not in the scene; once the path is
    consumed it holds the final pose.
    """

    shape: str
    dims: tuple[float, ...]
    waypoints: tuple[tuple[float, float], ...]
    speed: float
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if self.shape not in ("cuboid", "cylinder"):
            raise ConfigError(f"unknown actor shape '{self.shape}'")
        if self.shape == "cuboid":
            if len(self.dims) != 3 or any(v <= 0 for v in self.dims):
                raise ConfigError("cuboid dims must be (length, width, height), all positive")
            if self.dims[0] < self.dims[1]:
                raise ConfigError("cuboid length must be >= width")
        else:
            if len(self.dims) != 2 or any(v <= 0 for v in self.dims):
                raise ConfigError("cylinder dims must be (radius, height), both positive")
        if len(self.waypoints) < 1:
            raise ConfigError("actor needs at least one waypoint")
        if self.speed <= 0:
            raise ConfigError("actor speed must be positive")
        if self.start_time < 0:
            raise ConfigError("actor start_time must be >= 0")

    @property
    def height(self) -> float:
        return self.dims[2] if self.shape == "cuboid" else self.dims[1]

    def pose_at(self, sim_time: float) -> tuple[float, float, float] | None:
        """(x, y, heading) at a time, or None before spawn."""
        if sim_time < self.start_time:
            return None
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if len(wp) == 1:
            return float(wp[0, 0]), float(wp[0, 1]), 0.0
        seg = np.diff(wp, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        travel = min(self.speed * (sim_time - self.start_time), float(seg_len.sum()))
        heading = math.atan2(seg[-1, 1], seg[-1, 0])
        for k in range(len(seg)):
            if travel <= seg_len[k] or k == len(seg) - 1:
                if seg_len[k] > 0:
                    u = min(travel / seg_len[k], 1.0)
                    heading = math.atan2(seg[k, 1], seg[k, 0])
                else:
                    u = 0.0
                x = wp[k, 0] + u * seg[k, 0]
                y = wp[k, 1] + u * seg[k, 1]
                return float(x), float(y), heading
            travel -= seg_len[k]
        raise AssertionError("unreachable")

    def primitive_at(self, sim_time: float):
        pose = self.pose_at(sim_time)
        if pose is None:
            return None
        x, y, heading = pose
        if self.shape == "cuboid":
            length, width, height = self.dims
            return BoxObstacle((x, y, height / 2.0), (length, width, height), heading)
        radius, height = self.dims
        return CylinderObstacle((x, y), radius, 0.0, height)

    def truth_label(self, sim_time: float) -> ObjectLabel | None:
        pose = self.pose_at(sim_time)
        if pose is None:
            return None
        x, y, heading = pose
        if self.shape == "cuboid":
            length, width, height = self.dims
            return ObjectLabel(
                x, y, height / 2.0, length, width, height,
                normalize_yaw_half(heading), LabelClass.VEHICLE, 1.0, LabelSource.TEACHER,
            )
        radius, height = self.dims
        return ObjectLabel(
            x, y, height / 2.0, 2.0 * radius, 2.0 * radius, height,
            0.0, LabelClass.PEDESTRIAN, 1.0, LabelSource.TEACHER,
        )


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Declarative description of one synthetic recording."""

    sensor: SensorModel
    static: list = field(default_factory=list)
    actors: list[Actor] = field(default_factory=list)
    duration: int = 100
    seed: int = 0
    min_truth_points: int = 5

    def __post_init__(self) -> None:
        if self.duration < 1:
            raise ConfigError("duration must be >= 1")
        if self.min_truth_points < 1:
            raise ConfigError("min_truth_points must be >= 1")


def render_frame(
    spec: SceneSpec, dirs: np.ndarray, frame_index: int
) -> tuple[Frame, np.ndarray, list[ObjectLabel]]:
    """Render frame ``frame_index`` (1-based): frame, mask bytes, truth boxes."""
    origin = np.asarray(spec.sensor.origin, dtype=np.float64)
    sim_time = (frame_index - 1) / spec.sensor.frequency_hz
    n = dirs.shape[0]

    prims = list(spec.static)
    n_static = len(prims)
    actor_slots = []
    for actor in spec.actors:
        prim = actor.primitive_at(sim_time)
        if prim is not None:
            actor_slots.append((len(prims), actor))
            prims.append(prim)

    t_best = np.full(n, np.inf)
    winner = np.full(n, -1, dtype=np.int64)
    for idx, prim in enumerate(prims):
        t = prim.intersect(origin, dirs)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        winner = np.where(closer, idx, winner)

    out_of_range = t_best > spec.sensor.max_range
    t_best = np.where(out_of_range, np.inf, t_best)
    winner = np.where(out_of_range, -1, winner)
    hit = winner >= 0

    rng = np.random.default_rng([spec.seed, frame_index])
    if spec.sensor.range_noise_sigma > 0:
        t_best = t_best + rng.normal(0.0, spec.sensor.range_noise_sigma, n)

    xyz = np.where(hit[:, None], origin + dirs * np.where(hit, t_best, 0.0)[:, None], 0.0)
    for idx, prim in enumerate(spec.static):
        sigma = getattr(prim, "jitter_sigma", 0.0)
        if sigma > 0:
            jitter = rng.normal(0.0, sigma, (n, 3))
            sel = winner == idx
            xyz = np.where(sel[:, None], xyz + jitter, xyz)

    mask = np.full(n, MASK_PADDING, dtype=np.uint8)
    mask[hit] = MASK_BACKGROUND
    foreground = hit & (winner >= n_static)
    mask[foreground] = MASK_FOREGROUND

    truth = []
    for slot, actor in actor_slots:
        if int((winner == slot).sum()) >= spec.min_truth_points:
            label = actor.truth_label(sim_time)
            if label is not None:
                truth.append(label)

    frame = Frame(frame_index, xyz, ~hit)
    return frame, mask, truth


def render_sequence(spec: SceneSpec) -> tuple[FrameSequence, list[np.ndarray], list[list[ObjectLabel]]]:
    """Render the whole scene: frames, per-frame masks, per-frame truth boxes."""
    dirs = spec.sensor.directions()
    frames, masks, truths = [], [], []
    for k in range(1, spec.duration + 1):
        frame, mask, truth = render_frame(spec, dirs, k)
        frames.append(frame)
        masks.append(mask)
        truths.append(truth)
    seq = FrameSequence(frames, spec.sensor.meta(), [f"{k:06d}" for k in range(1, spec.duration + 1)])
    return seq, masks, truths


# ---------------------------------------------------------------------------
# Scene I/O
# ---------------------------------------------------------------------------

def write_scene_outputs(spec: SceneSpec, out_dir: str | Path) -> dict[str, Path]:
    """Render and write frames/, truth/ and masks/ under ``out_dir``.

    Frames use the standard .bin format, truth boxes the label format, and
    masks are one raw byte per point per frame (``<stem>.mask``).
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    truth_dir = out_dir / "truth"
    masks_dir = out_dir / "masks"
    for d in (frames_dir, truth_dir, masks_dir):
        d.mkdir(parents=True, exist_ok=True)
    seq, masks, truths = render_sequence(spec)
    for frame, stem, mask, truth in zip(seq.frames, seq.stems, masks, truths):
        write_frame_file(frames_dir / f"{stem}.bin", frame.xyz)
        (masks_dir / f"{stem}.mask").write_bytes(mask.tobytes())
        write_label_file(truth, truth_dir / f"{stem}.txt")
    return {"frames": frames_dir, "truth": truth_dir, "masks": masks_dir}


def read_mask(path: str | Path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)


def scene_from_dict(data: dict) -> SceneSpec:
    """Build a SceneSpec from parsed declarative configuration."""
    try:
        sensor_cfg = data.get("sensor", {})
        sensor = SensorModel(
            origin=tuple(sensor_cfg.get("origin", (0.0, 0.0, 4.0))),
            azimuth_deg=tuple(sensor_cfg.get("azimuth_deg", (-180.0, 180.0))),
            azimuth_count=int(sensor_cfg.get("azimuth_count", 1024)),
            elevation_deg=tuple(sensor_cfg.get("elevation_deg", (-22.5, 22.5))),
            elevation_count=int(sensor_cfg.get("elevation_count", 64)),
            frequency_hz=float(sensor_cfg.get("frequency_hz", 10.0)),
            range_noise_sigma=float(sensor_cfg.get("range_noise_sigma", 0.0)),
            max_range=float(sensor_cfg.get("max_range", 120.0)),
        )
        static = []
        for prim in data.get("static", []):
            kind = prim["type"]
            if kind == "ground":
                static.append(GroundPlane(z=float(prim.get("z", 0.0))))
            elif kind == "box":
                static.append(
                    BoxObstacle(
                        center=tuple(prim["center"]),
                        dims=tuple(prim["dims"]),
                        yaw=float(prim.get("yaw", 0.0)),
                        jitter_sigma=float(prim.get("jitter_sigma", 0.0)),
                    )
                )
            elif kind == "cylinder":
                static.append(
                    CylinderObstacle(
                        center_xy=tuple(prim["center"]),
                        radius=float(prim["radius"]),
                        z_low=float(prim.get("z_low", 0.0)),
                        z_high=float(prim["z_high"]),
                        jitter_sigma=float(prim.get("jitter_sigma", 0.0)),
                    )
                )
            else:
                raise ConfigError(f"unknown static primitive type '{kind}'")
        actors = []
        for a in data.get("actors", []):
            if a["shape"] == "cuboid":
                dims = (float(a["length"]), float(a["width"]), float(a["height"]))
            else:
                dims = (float(a["radius"]), float(a["height"]))
            actors.append(
                Actor(
                    shape=a["shape"],
                    dims=dims,
                    waypoints=tuple((float(x), float(y)) for x, y in a["waypoints"]),
                    speed=float(a["speed"]),
                    start_time=float(a.get("start_time", 0.0)),
                )
            )
        return SceneSpec(
            sensor=sensor,
            static=static,
            actors=actors,
            duration=int(data.get("duration", 100)),
            seed=int(data.get("seed", 0)),
            min_truth_points=int(data.get("min_truth_points", 5)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid scene configuration: {exc}") from exc


def load_scene(path: str | Path) -> SceneSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scene file {path} is not valid JSON: {exc}") from exc
    return scene_from_dict(data)


# ---------------------------------------------------------------------------
# Built-in scenes
# ---------------------------------------------------------------------------

def _intersection_statics() -> list:
    return [
        GroundPlane(z=0.0),
        # building facade closing the back of the viewing wedge
        BoxObstacle(center=(42.0, 0.0, 4.5), dims=(1.0, 70.0, 9.0)),
        # signal pole, behind the actor area so it never occludes them
        CylinderObstacle(center_xy=(35.0, -12.0), radius=0.15, z_low=0.0, z_high=6.0),
    ]


def default_scene(
    duration: int = 200,
    seed: int = 7,
    foliage_jitter_sigma: float = 0.02,
    range_noise_sigma: float = 0.01,
) -> SceneSpec:
    """The built-in validation scene: one vehicle and two pedestrians.

    A 60 degree viewing wedge over an intersection corner, closed by a
    facade, with a tree crown that jitters frame to frame.  Actors spawn
    after the background-model query window and keep moving inside the wedge
    until the end of the recording, so the scene exercises the filter and
    the annotator without field-of-view edge effects.

    The beam grid is deliberately denser in elevation than a coarse spinning
    unit so pedestrian-scale targets carry enough rows for box fitting at
    desk-scale frame counts.
    """
    sensor = SensorModel(
        origin=(0.0, 0.0, 4.0),
        azimuth_deg=(-30.0, 30.0),
        azimuth_count=240,
        elevation_deg=(-25.0, -2.0),
        elevation_count=185,
        frequency_hz=10.0,
        range_noise_sigma=range_noise_sigma,
        max_range=90.0,
    )
    static = _intersection_statics()
    static.append(
        CylinderObstacle(
            center_xy=(20.0, 10.0), radius=1.2, z_low=0.0, z_high=4.5,
            jitter_sigma=foliage_jitter_sigma,
        )
    )
    actors = [
        Actor(
            shape="cuboid", dims=(4.2, 1.8, 1.5), speed=2.4, start_time=5.5,
            waypoints=((26.0, -6.5), (26.0, 7.0), (18.0, 7.0), (18.0, -7.5)),
        ),
        Actor(
            shape="cylinder", dims=(0.35, 1.75), speed=0.9, start_time=5.6,
            waypoints=((11.0, 0.5), (11.0, 5.0), (13.5, 5.0), (13.5, 0.5), (11.0, 0.5)),
        ),
        Actor(
            shape="cylinder", dims=(0.32, 1.65), speed=0.85, start_time=5.8,
            waypoints=((12.0, -5.5), (12.0, -0.8), (14.0, -0.8), (14.0, -5.5), (12.0, -5.5)),
        ),
    ]
    return SceneSpec(
        sensor=sensor, static=static, actors=actors,
        duration=duration, seed=seed, min_truth_points=5,
    )


def static_scene(duration: int = 60, seed: int = 3) -> SceneSpec:
    """The default statics with no actors and zero noise; exactly frame-invariant."""
    sensor = SensorModel(
        origin=(0.0, 0.0, 4.0),
        azimuth_deg=(-30.0, 30.0),
        azimuth_count=120,
        elevation_deg=(-25.0, -2.0),
        elevation_count=48,
        frequency_hz=10.0,
        range_noise_sigma=0.0,
        max_range=90.0,
    )
    return SceneSpec(
        sensor=sensor, static=_intersection_statics(), actors=[],
        duration=duration, seed=seed,
    )
