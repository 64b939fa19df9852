"""Dataset generation and loading.

Layout of a dataset directory::

    dataset.json      radar / imaging / data settings and record count
    manifest.jsonl    one JSON object per record, keys sorted
    records/NNNNNN.bin

A record blob is a one-line JSON header (``record_id``, ``K``, ``n_pulses``,
``N``) followed by the frequency history as little-endian float32 re/im
pairs, pulse-major with frequency fastest, then the normalized image as
little-endian float32 in row-major order.  Paths in the manifest are
relative to the manifest.
"""
from __future__ import annotations

import dataclasses
import json
import math
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import imaging
from ..imaging import ImagingConfig
from ..rfsim import CollectionGeometry, FrequencyHistory, RadarConfig, collect
from ..shapes import ShapeClass, sample_target
from ..training import Dataset
from .config import DataSpec, ExperimentConfig

FORMAT = "sar-atr-dataset/1"


class DatasetError(RuntimeError):
    pass


def balanced_classes(n_targets: int, rng: np.random.Generator) -> np.ndarray:
    """Class per target: every block of four holds each class once, in random order."""
    blocks = [rng.permutation(4) for _ in range(math.ceil(n_targets / 4))]
    return np.concatenate(blocks)[:n_targets]


def sample_collection(rng: np.random.Generator, spec: DataSpec,
                      radar: RadarConfig) -> CollectionGeometry:
    altitude = rng.uniform(spec.altitude_min, spec.altitude_max)
    radius = rng.uniform(spec.orbit_radius_min, spec.orbit_radius_max)
    phi0 = rng.uniform(0.0, 2 * math.pi)
    theta = rng.uniform(0.0, 2 * math.pi)
    return CollectionGeometry(altitude=float(altitude), orbit_radius=float(radius),
                              phi0=float(phi0), theta=float(theta),
                              n_pulses=spec.n_pulses, aperture_arc=spec.aperture_arc(radar))


def encode_record(record_id: int, hist: FrequencyHistory, image: np.ndarray) -> bytes:
    header = {"record_id": record_id, "K": hist.radar.K, "n_pulses": hist.geometry.n_pulses,
              "N": int(image.shape[0])}
    img = np.ascontiguousarray(image, dtype="<f4")
    return json.dumps(header, sort_keys=True).encode() + b"\n" + hist.to_bytes() + img.tobytes()


def decode_record(buf: bytes) -> tuple[dict, np.ndarray, np.ndarray]:
    nl = buf.index(b"\n")
    header = json.loads(buf[:nl])
    K, n_p, N = header["K"], header["n_pulses"], header["N"]
    sig_bytes = K * n_p * 8
    body = buf[nl + 1:]
    if len(body) != sig_bytes + N * N * 4:
        raise DatasetError(f"record {header.get('record_id')}: truncated blob")
    samples = FrequencyHistory.samples_from_bytes(body[:sig_bytes], K, n_p)
    image = np.frombuffer(body[sig_bytes:], dtype="<f4").reshape(N, N).astype(np.float32)
    return header, samples, image


def _target_job(args):
    """All records of one target.  Pure function of its arguments."""
    target_index, shape_class, seed_seq, spec, radar, img_cfg = args
    target_ss, *image_ss = seed_seq.spawn(1 + spec.images_per_target)
    target = sample_target(np.random.default_rng(target_ss), ShapeClass(shape_class))
    out = []
    for j, ss in enumerate(image_ss):
        rng = np.random.default_rng(ss)
        coll = sample_collection(rng, spec, radar)
        hist = collect(target, radar, coll, noise_snr_db=spec.snr_db, rng=rng)
        # round to the stored precision first so image == g(stored signal)
        hist = hist.with_samples(hist.samples.astype(np.complex64))
        image = imaging.g(hist, img_cfg).astype(np.float32)
        record_id = target_index * spec.images_per_target + j
        row = {
            "record_id": record_id,
            "target_id": target_index,
            "class": int(target.shape_class),
            "class_name": target.shape_class.label,
            "theta": coll.theta,
            "size_scalar": target.size_scalar,
            "snr_db": spec.snr_db,
            "geometry": coll.to_record(),
            "target": target.to_record(),
            "blob": f"records/{record_id:06d}.bin",
        }
        out.append((row, encode_record(record_id, hist, image)))
    return out


def generate_dataset(cfg: ExperimentConfig, out_dir: str | Path, workers: int = 1,
                     overwrite: bool = False) -> Path:
    """Write a dataset for ``cfg`` to ``out_dir``; returns the manifest path.

    Output is staged in a sibling directory and moved into place only when
    complete, so a failure leaves no partial dataset behind.
    """
    out = Path(out_dir)
    if (out / "manifest.jsonl").exists() and not overwrite:
        raise DatasetError(f"{out} already holds a dataset")
    spec, radar, img_cfg = cfg.data, cfg.radar, cfg.imaging
    root = np.random.SeedSequence(spec.seed)
    class_ss, *target_ss = root.spawn(1 + spec.num_targets)
    classes = balanced_classes(spec.num_targets, np.random.default_rng(class_ss))
    jobs = [(i, int(classes[i]), target_ss[i], spec, radar, img_cfg)
            for i in range(spec.num_targets)]

    stage = out.parent / f".{out.name}.partial"
    if stage.exists():
        shutil.rmtree(stage)
    try:
        (stage / "records").mkdir(parents=True)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_target_job, jobs))
        else:
            results = [_target_job(job) for job in jobs]
        with open(stage / "manifest.jsonl", "w") as fh:
            for per_target in results:
                for row, blob in per_target:
                    (stage / row["blob"]).write_bytes(blob)
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
        meta = {
            "format": FORMAT,
            "num_records": spec.num_targets * spec.images_per_target,
            "data": dataclasses.asdict(spec),
            "radar": dataclasses.asdict(radar),
            "imaging": dataclasses.asdict(img_cfg),
        }
        (stage / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
        if out.exists():
            shutil.rmtree(out)
        stage.rename(out)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return out / "manifest.jsonl"


def read_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_dataset(path: str | Path, with_signals: bool = True) -> Dataset:
    root = Path(path)
    if root.name == "manifest.jsonl":
        root = root.parent
    try:
        meta = json.loads((root / "dataset.json").read_text())
        rows = read_manifest(root)
    except FileNotFoundError as exc:
        raise DatasetError(f"no dataset at {root}: {exc.filename} missing") from None
    if meta.get("format") != FORMAT:
        raise DatasetError(f"unsupported dataset format {meta.get('format')!r}")
    radar = RadarConfig(**meta["radar"])
    img_cfg = ImagingConfig(**meta["imaging"])
    images, signals, geoms = [], [], []
    for row in rows:
        header, samples, image = decode_record((root / row["blob"]).read_bytes())
        if header["record_id"] != row["record_id"]:
            raise DatasetError(f"blob {row['blob']} holds record {header['record_id']}")
        images.append(image)
        if with_signals:
            signals.append(samples)
            geoms.append(CollectionGeometry.from_record(row["geometry"]))
    return Dataset(
        np.stack(images),
        [r["class"] for r in rows], [r["theta"] for r in rows],
        [r["size_scalar"] for r in rows], [r["target_id"] for r in rows],
        signals=np.stack(signals) if with_signals else None,
        geometries=geoms if with_signals else None,
        radar=radar if with_signals else None,
        imaging_config=img_cfg,
        record_ids=[r["record_id"] for r in rows],
    )
