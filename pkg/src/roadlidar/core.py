"""Domain types and on-disk formats shared by the whole annotation pipeline.

A frame is a fixed-arity, ordered set of 3D points in a right-handed
Cartesian system centered at the sensor (meters).  Arity is preserved end to
end so that point index ``j`` always refers to the same beam across frames of
one sensor; beams without a return, and points a stage removes, are stored as
zero-padded entries with the padding flag set instead of being deleted.

On-disk formats:

* Frame files: ``<stem>.bin`` -- little-endian float32, four values per
  point (x, y, z, intensity), frames ordered lexicographically by filename.
  Intensity is read and discarded.  All-zero rows are treated as padding on
  load (a return at exactly the sensor origin cannot occur physically).
* Label files: ``<stem>.txt`` -- UTF-8 text, one object per line::

      class cx cy cz length width height yaw score

  with reals printed at fixed 6-decimal precision, space-separated, class
  spelled ``Vehicle`` or ``Pedestrian``, newline-terminated.  One label file
  per frame, named after the frame stem.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Bytes per point record in frame files: 4 x float32.
_POINT_RECORD_BYTES = 16


class ConfigError(ValueError):
    """Invalid configuration or parameter combination (CLI exit code 1)."""


class DataError(ValueError):
    """Malformed or missing input data (CLI exit code 2)."""


class InternalError(RuntimeError):
    """Violated internal invariant (CLI exit code 3)."""


class LabelClass(enum.Enum):
    VEHICLE = "Vehicle"
    PEDESTRIAN = "Pedestrian"


class LabelSource(enum.Enum):
    TEACHER = "Teacher"
    EXTERNAL = "External"


def normalize_yaw(yaw: float) -> float:
    """Map an angle to [-pi, pi)."""
    return (yaw + math.pi) % TWO_PI - math.pi


def normalize_yaw_half(yaw: float) -> float:
    """Map an angle to [-pi/2, pi/2); canonical heading of an unoriented box."""
    return (yaw + math.pi / 2.0) % math.pi - math.pi / 2.0


@dataclass(frozen=True)
class SensorMeta:
    """Static description of one LiDAR unit.

    ``unit_scale`` converts the source file units to meters (1.0 when the
    source is already metric).
    """

    name: str
    rays_horizontal: int
    rays_vertical: int
    frequency_hz: float
    unit_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.rays_horizontal < 1 or self.rays_vertical < 1:
            raise ConfigError("sensor ray counts must be positive")
        if self.frequency_hz <= 0:
            raise ConfigError("sensor frequency must be positive")
        if self.unit_scale <= 0:
            raise ConfigError("unit_scale must be positive")

    @property
    def beam_count(self) -> int:
        return self.rays_horizontal * self.rays_vertical


@dataclass(frozen=True)
class CropBounds:
    """Closed cuboid region; points on a boundary face are inside."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise ConfigError("crop bounds must satisfy min < max on every axis")

    def contains(self, xyz: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (n, 3) array."""
        x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
        return (
            (x >= self.x_min) & (x <= self.x_max)
            & (y >= self.y_min) & (y <= self.y_max)
            & (z >= self.z_min) & (z <= self.z_max)
        )


@dataclass
class Frame:
    """One sweep of the sensor.

    ``xyz`` is an (n, 3) float64 array; ``padding`` is an (n,) bool array
    marking filler points.  A padding point is always (0, 0, 0).  Frames are
    treated as immutable: pipeline stages return new frames and never write
    into an input array.
    """

    timestamp_index: int
    xyz: np.ndarray
    padding: np.ndarray

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64)
        self.padding = np.asarray(self.padding, dtype=bool)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise DataError("frame xyz must be an (n, 3) array")
        if self.padding.shape != (self.xyz.shape[0],):
            raise DataError("padding mask length must match point count")
        if self.timestamp_index < 1:
            raise DataError("timestamp_index must be >= 1")
        if self.padding.any() and not np.all(self.xyz[self.padding] == 0.0):
            raise InternalError("padding points must be zero")
        data = self.xyz[~self.padding]
        if data.size and not np.all(np.isfinite(data)):
            raise DataError("non-padding points must have finite coordinates")

    @property
    def n_points(self) -> int:
        return self.xyz.shape[0]

    @property
    def n_data_points(self) -> int:
        return int((~self.padding).sum())


def padding_frame_like(frame: Frame) -> Frame:
    """All-padding frame with the same arity and timestamp."""
    n = frame.n_points
    return Frame(frame.timestamp_index, np.zeros((n, 3)), np.ones(n, dtype=bool))


@dataclass
class FrameSequence:
    """Ordered frames from one stationary sensor.

    ``stems`` carries the per-frame file stems so labels can be written next
    to their source frames; synthetic sequences use zero-padded indices.
    """

    frames: list[Frame]
    meta: SensorMeta
    stems: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.frames:
            raise DataError("empty sequence")
        if not self.stems:
            self.stems = [f"{i:06d}" for i in range(len(self.frames))]
        if len(self.stems) != len(self.frames):
            raise InternalError("stem count must match frame count")
        ts = [f.timestamp_index for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DataError("timestamp_index must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def arity(self) -> int:
        return self.frames[0].n_points


@dataclass(frozen=True)
class ObjectLabel:
    """A validated 3D bounding box with class and score.

    ``length >= width`` by convention, so the longer horizontal extent is
    always the ``length`` field.  ``yaw`` is in radians about +z; producers
    normalize it to [-pi, pi) (values a rounding step outside the interval
    are tolerated so 6-decimal files round-trip exactly).
    """

    center_x: float
    center_y: float
    center_z: float
    length: float
    width: float
    height: float
    yaw: float
    label_class: LabelClass
    score: float
    source: LabelSource = LabelSource.TEACHER

    def __post_init__(self) -> None:
        for name in ("center_x", "center_y", "center_z", "length", "width", "height", "yaw", "score"):
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"label field {name} must be finite")
        if self.length <= 0 or self.width <= 0 or self.height <= 0:
            raise DataError("box dimensions must be positive")
        if self.length < self.width:
            raise DataError("box length must be >= width")
        if not 0.0 <= self.score <= 1.0:
            raise DataError("score must be in [0, 1]")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_x, self.center_y, self.center_z])

    def with_source(self, source: LabelSource) -> "ObjectLabel":
        return ObjectLabel(
            self.center_x, self.center_y, self.center_z,
            self.length, self.width, self.height,
            self.yaw, self.label_class, self.score, source,
        )


@dataclass(frozen=True)
class TeacherConfig:
    """Hyper-parameters of one statistical teacher."""

    n_total: int
    n_query: int
    n_bin: int
    n_tall: int
    d_threshold: float
    epsilon: float
    min_pts: int
    l_min: float
    h_min: float
    beta_min: float
    crop: CropBounds

    def __post_init__(self) -> None:
        if self.n_total < 1 or self.n_query < 1 or self.n_bin < 1:
            raise ConfigError("n_total, n_query and n_bin must be >= 1")
        if self.n_tall < 1 or self.n_tall > self.n_bin:
            raise ConfigError("n_tall must be in [1, n_bin]")
        if self.min_pts < 1:
            raise ConfigError("min_pts must be >= 1")
        for name in ("d_threshold", "epsilon", "l_min", "h_min", "beta_min"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# Frame file I/O
# ---------------------------------------------------------------------------

def read_frame_file(path: Path) -> np.ndarray:
    """Read one .bin frame file into an (n, 4) float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) % _POINT_RECORD_BYTES != 0:
        raise DataError(
            f"malformed frame file {path}: {len(raw)} bytes is not a multiple of {_POINT_RECORD_BYTES}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4)


def write_frame_file(path: Path, xyz: np.ndarray, intensity: np.ndarray | None = None) -> None:
    """Write points as little-endian float32 (x, y, z, intensity) records."""
    xyz = np.asarray(xyz, dtype=np.float64)
    n = xyz.shape[0]
    rec = np.zeros((n, 4), dtype="<f4")
    rec[:, :3] = xyz.astype("<f4")
    if intensity is not None:
        rec[:, 3] = np.asarray(intensity, dtype="<f4")
    Path(path).write_bytes(rec.tobytes())


def load_frame_sequence(path: str | Path, meta: SensorMeta) -> FrameSequence:
    """Load a directory of per-frame .bin files, lexicographic filename order.

    Raw units are preserved; scaling to meters happens in the preprocessor.
    All-zero rows are flagged as padding.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise DataError(f"frame directory not found: {directory}")
    files = sorted(directory.glob("*.bin"))
    if not files:
        raise DataError(f"empty sequence: no .bin files in {directory}")
    frames = []
    stems = []
    for t, file in enumerate(files, start=1):
        rec = read_frame_file(file)
        xyz = rec[:, :3].astype(np.float64)
        pad = np.all(xyz == 0.0, axis=1)
        frames.append(Frame(t, xyz, pad))
        stems.append(file.stem)
    return FrameSequence(frames, meta, stems)


# ---------------------------------------------------------------------------
# Label file I/O
# ---------------------------------------------------------------------------

def format_label_line(label: ObjectLabel) -> str:
    return (
        f"{label.label_class.value} "
        f"{label.center_x:.6f} {label.center_y:.6f} {label.center_z:.6f} "
        f"{label.length:.6f} {label.width:.6f} {label.height:.6f} "
        f"{label.yaw:.6f} {label.score:.6f}"
    )


def write_label_file(labels: Sequence[ObjectLabel], path: str | Path) -> None:
    """Write one frame's labels; an empty list produces an empty file."""
    lines = [format_label_line(lb) + "\n" for lb in labels]
    try:
        Path(path).write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write label file {path}: {exc}") from exc


def read_label_file(path: str | Path, source: LabelSource = LabelSource.TEACHER) -> list[ObjectLabel]:
    """Parse one label file; errors name the file and 1-based line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from exc
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 9:
            raise DataError(f"{path}:{lineno}: expected 9 fields, got {len(tokens)}")
        cls_token = tokens[0]
        try:
            cls = LabelClass(cls_token)
        except ValueError:
            raise DataError(f"{path}:{lineno}: unknown class '{cls_token}'") from None
        try:
            values = [float(tok) for tok in tokens[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparsable number ({exc})") from None
        try:
            labels.append(ObjectLabel(*values[:3], *values[3:6], values[6], cls, values[7], source))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return labels


def write_labels(labels_by_stem: Mapping[str, Sequence[ObjectLabel]], directory: str | Path) -> None:
    """Write one ``<stem>.txt`` per frame under ``directory``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create label directory {directory}: {exc}") from exc
    for stem in sorted(labels_by_stem):
        write_label_file(labels_by_stem[stem], directory / f"{stem}.txt")


def read_labels(directory: str | Path, source: LabelSource = LabelSource.TEACHER) -> dict[str, list[ObjectLabel]]:
    """Read every label file in a directory, keyed by frame stem.

    ``source`` is External when ingesting detector predictions through the
    iteration entry point, Teacher otherwise.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"label directory not found: {directory}")
    return {
        file.stem: read_label_file(file, source)
        for file in sorted(directory.glob("*.txt"))
    }
