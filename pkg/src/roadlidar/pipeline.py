"""End-to-end orchestration: teacher runs, superset merging, iteration loop.

One teacher processes one dataset with its own hyper-parameters; several
teachers with different configurations (or different datasets) produce label
sets that ``merge_supersets`` unifies into a single training superset.  The
iteration loop is a pure file contract: an external detector's predictions,
written in the standard label format, become the next round's ground truth.

Everything is deterministic: identical configuration and data produce
byte-identical label files, statistics and reports.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .annotate import RejectedBox, annotate_frame
from .background import (
    build_histogram,
    extract_query_frames,
    filter_frame,
    load_background_model,
    save_background_model,
    select_background,
)
from .clustering import dbscan
from .core import (
    ConfigError,
    CropBounds,
    DataError,
    FrameSequence,
    LabelSource,
    ObjectLabel,
    SensorMeta,
    TeacherConfig,
    load_frame_sequence,
    read_labels,
    write_frame_file,
    write_labels,
)
from .preprocess import UnificationTransform, crop_frame, pad_frame, transform_label, unify_datasets, unify_units

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
DEFAULT_ITERATE_SCORE_THRESHOLD = 0.5


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    frames_dir: Path
    meta: SensorMeta
    teacher: TeacherConfig
    transform: UnificationTransform = UnificationTransform()
    background_model_in: Path | None = None


@dataclass
class PipelineConfig:
    datasets: list[DatasetEntry]
    output_root: Path
    parallelism: int = 1

    def __post_init__(self) -> None:
        if not self.datasets:
            raise ConfigError("pipeline needs at least one dataset")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be distinct (they name output directories)")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


@dataclass
class TeacherRunResult:
    name: str
    labels_dir: Path
    stats: dict


def _parse_sensor(data: dict) -> SensorMeta:
    return SensorMeta(
        name=str(data.get("name", "sensor")),
        rays_horizontal=int(data["rays_horizontal"]),
        rays_vertical=int(data["rays_vertical"]),
        frequency_hz=float(data.get("frequency_hz", 10.0)),
        unit_scale=float(data.get("unit_scale", 1.0)),
    )


def _parse_crop(data: dict) -> CropBounds:
    return CropBounds(
        float(data["x_min"]), float(data["x_max"]),
        float(data["y_min"]), float(data["y_max"]),
        float(data["z_min"]), float(data["z_max"]),
    )


def _parse_teacher(data: dict) -> TeacherConfig:
    return TeacherConfig(
        n_total=int(data["n_total"]),
        n_query=int(data["n_query"]),
        n_bin=int(data["n_bin"]),
        n_tall=int(data["n_tall"]),
        d_threshold=float(data["d_threshold"]),
        epsilon=float(data["epsilon"]),
        min_pts=int(data["min_pts"]),
        l_min=float(data["l_min"]),
        h_min=float(data["h_min"]),
        beta_min=float(data["beta_min"]),
        crop=_parse_crop(data["crop"]),
    )


def _parse_transform(data: dict | None) -> UnificationTransform:
    if not data:
        return UnificationTransform()
    return UnificationTransform(
        translation=tuple(float(v) for v in data.get("translation", (0.0, 0.0, 0.0))),
        scale=float(data.get("scale", 1.0)),
    )


def _load_json_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def parse_pipeline_config(path: str | Path) -> PipelineConfig:
    """Load the declarative pipeline configuration (JSON)."""
    data = _load_json_config(path)
    try:
        datasets = []
        for entry in data["datasets"]:
            meta = _parse_sensor(entry["sensor"])
            teacher = _parse_teacher(entry["teacher"])
            if meta.beam_count > teacher.n_total:
                raise ConfigError(
                    f"dataset '{entry.get('name')}': sensor beam count {meta.beam_count} "
                    f"exceeds n_total {teacher.n_total}"
                )
            model_in = entry.get("background_model_in")
            datasets.append(
                DatasetEntry(
                    name=str(entry["name"]),
                    frames_dir=Path(entry["frames"]),
                    meta=meta,
                    teacher=teacher,
                    transform=_parse_transform(entry.get("transform")),
                    background_model_in=Path(model_in) if model_in else None,
                )
            )
        return PipelineConfig(
            datasets=datasets,
            output_root=Path(data["output_root"]),
            parallelism=int(data.get("parallelism", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid pipeline config {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Teacher run
# ---------------------------------------------------------------------------

def run_teacher(entry: DatasetEntry, output_root: str | Path) -> TeacherRunResult:
    """Run the full teacher on one dataset and write labels plus run artifacts.

    Stages: unit unification, padding, cropping, background model over the
    query window, then per frame background filtering, clustering and
    annotation.  Outputs under ``<output_root>/<name>/``: ``labels/``, the
    background model sidecar, ``stats.json`` and ``rejects.log``.
    """
    cfg = entry.teacher
    out_dir = Path(output_root) / entry.name
    labels_dir = out_dir / "labels"
    out_dir.mkdir(parents=True, exist_ok=True)

    seq = load_frame_sequence(entry.frames_dir, entry.meta)
    seq = unify_units(seq)
    frames = [crop_frame(pad_frame(f, cfg.n_total), cfg.crop) for f in seq.frames]
    seq = FrameSequence(frames, seq.meta, seq.stems)

    if entry.background_model_in is not None:
        model = load_background_model(entry.background_model_in)
        if model.n_total != cfg.n_total:
            raise DataError(
                f"background model arity {model.n_total} does not match n_total {cfg.n_total}"
            )
    else:
        query = extract_query_frames(seq, cfg.n_query)
        hist = build_histogram(query, cfg.n_bin)
        model = select_background(hist, cfg.n_tall)
    save_background_model(model, out_dir / "background.model")

    rejects: list[RejectedBox] = []
    labels_by_stem: dict[str, list[ObjectLabel]] = {}
    points_data = 0
    points_removed = 0
    clusters_total = 0
    noise_total = 0
    labels_total = 0
    for frame, stem in zip(seq.frames, seq.stems):
        n_before = frame.n_data_points
        filtered = filter_frame(frame, model, cfg.d_threshold)
        clusters, noise = dbscan(filtered, cfg.epsilon, cfg.min_pts)
        labels = annotate_frame(filtered, clusters, cfg, reject_sink=rejects.append)
        labels_by_stem[stem] = labels
        points_data += n_before
        points_removed += n_before - filtered.n_data_points
        clusters_total += len(clusters)
        noise_total += len(noise)
        labels_total += len(labels)

    write_labels(labels_by_stem, labels_dir)
    stats = {
        "dataset": entry.name,
        "frames": len(seq),
        "points_data": points_data,
        "points_removed": points_removed,
        "points_removed_pct": round(100.0 * points_removed / points_data, 4) if points_data else 0.0,
        "clusters_found": clusters_total,
        "noise_points": noise_total,
        "boxes_rejected": len(rejects),
        "labels_written": labels_total,
    }
    (out_dir / "stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "rejects.log").write_text(
        "".join(r.format_line() + "\n" for r in rejects), encoding="utf-8"
    )
    return TeacherRunResult(entry.name, labels_dir, stats)


def _run_teacher_job(args: tuple[DatasetEntry, str]) -> TeacherRunResult:
    entry, output_root = args
    return run_teacher(entry, output_root)


def run_annotate(config: PipelineConfig) -> tuple[list[TeacherRunResult], dict[str, str]]:
    """Run every dataset's teacher; one dataset's failure leaves others intact.

    Returns the successful results and a name -> error-message map for the
    failures.
    """
    results: list[TeacherRunResult] = []
    failures: dict[str, str] = {}
    if config.parallelism > 1 and len(config.datasets) > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            futures = {
                pool.submit(_run_teacher_job, (entry, str(config.output_root))): entry
                for entry in config.datasets
            }
            for future, entry in futures.items():
                try:
                    results.append(future.result())
                except Exception as exc:  # noqa: BLE001 - isolate dataset failures
                    failures[entry.name] = str(exc)
                    log.error("dataset %s failed: %s", entry.name, exc)
    else:
        for entry in config.datasets:
            try:
                results.append(run_teacher(entry, config.output_root))
            except Exception as exc:  # noqa: BLE001 - isolate dataset failures
                failures[entry.name] = str(exc)
                log.error("dataset %s failed: %s", entry.name, exc)
    results.sort(key=lambda r: r.name)
    return results, failures


# ---------------------------------------------------------------------------
# Superset merging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MergeInput:
    name: str
    frames_dir: Path
    labels_dir: Path
    meta: SensorMeta
    transform: UnificationTransform


def parse_merge_config(path: str | Path) -> tuple[list[MergeInput], Path]:
    """Load the merge configuration: labeled inputs and the output root."""
    data = _load_json_config(path)
    try:
        inputs = [
            MergeInput(
                name=str(entry["name"]),
                frames_dir=Path(entry["frames"]),
                labels_dir=Path(entry["labels"]),
                meta=_parse_sensor(entry["sensor"]),
                transform=_parse_transform(entry.get("transform")),
            )
            for entry in data["inputs"]
        ]
        return inputs, Path(data["output_root"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid merge config {path}: {exc}") from exc


def merge_supersets(inputs: list[MergeInput], output_root: str | Path) -> Path:
    """Unify several labeled datasets into one training superset.

    Frames and labels are mapped into the common coordinate frame (labels
    transform covariantly) and listed in an index file with provenance tags:
    one ``name frame_path label_path`` line per frame.  No labels are created,
    dropped or deduplicated by merging.
    """
    if not inputs:
        raise ConfigError("merge needs at least one labeled dataset")
    output_root = Path(output_root)
    output_root.mkdir(parents=True, exist_ok=True)
    index_lines = []
    for item in inputs:
        seq = load_frame_sequence(item.frames_dir, item.meta)
        seq = unify_units(seq)
        (seq_t,) = unify_datasets([seq], [item.transform])
        labels = read_labels(item.labels_dir)
        missing = sorted(set(seq_t.stems) - set(labels))
        if missing:
            raise DataError(
                f"dataset '{item.name}': no label file for frames: " + ", ".join(missing)
            )
        ds_dir = output_root / item.name
        frames_out = ds_dir / "frames"
        labels_out = ds_dir / "labels"
        frames_out.mkdir(parents=True, exist_ok=True)
        labels_out.mkdir(parents=True, exist_ok=True)
        transformed = {
            stem: [transform_label(lb, item.transform) for lb in labels[stem]]
            for stem in seq_t.stems
        }
        write_labels(transformed, labels_out)
        for frame, stem in zip(seq_t.frames, seq_t.stems):
            write_frame_file(frames_out / f"{stem}.bin", frame.xyz)
            index_lines.append(
                f"{item.name} {frames_out / (stem + '.bin')} {labels_out / (stem + '.txt')}\n"
            )
    index_path = output_root / "index.txt"
    index_path.write_text("".join(index_lines), encoding="utf-8")
    return index_path


# ---------------------------------------------------------------------------
# Iterative re-labeling loop
# ---------------------------------------------------------------------------

def _read_manifest(workspace: Path) -> dict:
    manifest_path = workspace / MANIFEST_NAME
    if manifest_path.exists():
        try:
            return json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"corrupt manifest {manifest_path}: {exc}") from exc
    return {"rounds": []}


def iterate(
    predictions_dir: str | Path,
    workspace: str | Path,
    score_threshold: float = DEFAULT_ITERATE_SCORE_THRESHOLD,
) -> Path:
    """Turn external detector predictions into the next round's ground truth.

    Predictions are re-tagged as external, thresholded on score, and written
    to ``<workspace>/round_NNN/``; the workspace manifest records the round
    index and provenance.  Running on predictions identical to the previous
    round's labels reproduces them byte-identically (fixed point).
    """
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    predictions = read_labels(predictions_dir, source=LabelSource.EXTERNAL)
    if not predictions:
        raise DataError(f"no prediction files in {predictions_dir}")
    manifest = _read_manifest(workspace)
    round_index = len(manifest["rounds"]) + 1
    round_dir = workspace / f"round_{round_index:03d}"

    kept_total = 0
    next_labels = {}
    for stem, labels in predictions.items():
        kept = [lb for lb in labels if lb.score >= score_threshold]
        kept_total += len(kept)
        next_labels[stem] = kept
    if kept_total == 0:
        log.warning(
            "iterate: every prediction fell below score threshold %.3f; "
            "round %d labels are empty", score_threshold, round_index,
        )
    write_labels(next_labels, round_dir)
    manifest["rounds"].append(
        {
            "round": round_index,
            "directory": round_dir.name,
            "predictions": str(predictions_dir),
            "score_threshold": score_threshold,
            "labels_kept": kept_total,
        }
    )
    (workspace / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return round_dir
