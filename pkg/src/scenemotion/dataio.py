"""Bit-exact file formats: tensor blobs, dataset manifests and their readers.

Tensor container ("SMLB0001"): 8 magic bytes, a little-endian uint32 rank,
that many little-endian uint32 dims, then row-major little-endian float32
data.  Manifests are JSON and record byte length plus sha256 for every blob,
so corruption is detected on read with a distinct error per failure mode.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChecksumError, DataFormatError, MagicError, TruncatedBlobError, ValidationError
from .geometry import CameraIntrinsics, DepthMap, PointCloud, backproject_depth
from .skeleton import SkeletonGraph, default_skeleton

MAGIC = b"SMLB0001"
FORMAT_VERSION = 1


def write_tensor(path, array) -> None:
    arr = np.asarray(array, dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 4:
        raise TruncatedBlobError(f"{path}: shorter than the fixed header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MagicError(f"{path}: bad magic {blob[:len(MAGIC)]!r}")
    (rank,) = struct.unpack_from("<I", blob, len(MAGIC))
    header = len(MAGIC) + 4 + 4 * rank
    if len(blob) < header:
        raise TruncatedBlobError(f"{path}: header cut off before {rank} dims")
    dims = struct.unpack_from(f"<{rank}I", blob, len(MAGIC) + 4)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = header + 4 * count
    if len(blob) < expected:
        raise TruncatedBlobError(f"{path}: payload holds {len(blob) - header} of {4 * count} bytes")
    if len(blob) > expected:
        raise DataFormatError(f"{path}: {len(blob) - expected} trailing bytes")
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=header)
    return data.reshape(dims).astype(np.float32)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _blob_entry(root: Path, relative: str) -> dict:
    path = root / relative
    return {"path": relative, "bytes": path.stat().st_size, "sha256": _sha256(path)}


def _verify_blob(root: Path, entry: dict) -> Path:
    path = root / entry["path"]
    if not path.exists():
        raise TruncatedBlobError(f"{entry['path']}: missing blob")
    size = path.stat().st_size
    if size != entry["bytes"]:
        raise TruncatedBlobError(f"{entry['path']}: {size} bytes on disk, {entry['bytes']} recorded")
    if _sha256(path) != entry["sha256"]:
        raise ChecksumError(f"{entry['path']}: checksum mismatch")
    return path


@dataclass
class SceneRecord:
    """One scene: shaded image, analytic depth, intrinsics, lazy point cloud."""

    image: np.ndarray
    depth: DepthMap
    camera: CameraIntrinsics
    cloud_stride: int = 2
    _cloud: PointCloud | None = field(default=None, repr=False)

    @property
    def cloud(self) -> PointCloud:
        if self._cloud is None:
            self._cloud = backproject_depth(self.camera, self.depth, stride=self.cloud_stride)
        return self._cloud


@dataclass
class MotionRecord:
    joints: np.ndarray  # (3, J, T), absolute camera frame
    scene_index: int


@dataclass
class Dataset:
    scenes: list[SceneRecord]
    motions: list[MotionRecord]
    skeleton: SkeletonGraph
    seeds: dict
    cloud_stride: int = 2

    def __post_init__(self):
        for record in self.motions:
            if not (0 <= record.scene_index < len(self.scenes)):
                raise ValidationError(f"motion references unknown scene {record.scene_index}")


def write_dataset(directory, dataset: Dataset) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    scenes_meta = []
    for i, scene in enumerate(dataset.scenes):
        base = f"scenes/{i:04d}"
        write_tensor(root / f"{base}/image.smlb", scene.image)
        write_tensor(root / f"{base}/depth.smlb", scene.depth.values)
        write_tensor(root / f"{base}/intrinsics.smlb", scene.camera.to_array())
        scenes_meta.append(
            {
                "id": f"scene-{i:04d}",
                "image": _blob_entry(root, f"{base}/image.smlb"),
                "depth": _blob_entry(root, f"{base}/depth.smlb"),
                "intrinsics": _blob_entry(root, f"{base}/intrinsics.smlb"),
            }
        )
    motions_meta = []
    for i, record in enumerate(dataset.motions):
        rel = f"motions/{i:05d}.smlb"
        write_tensor(root / rel, record.joints)
        entry = _blob_entry(root, rel)
        entry.update(
            {
                "frames": int(record.joints.shape[2]),
                "scene": record.scene_index,
                "skeleton_id": "default",
            }
        )
        motions_meta.append(entry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "seeds": dataset.seeds,
        "cloud_stride": dataset.cloud_stride,
        "skeleton": dataset.skeleton.to_dict(),
        "scenes": scenes_meta,
        "motions": motions_meta,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def read_dataset(directory) -> Dataset:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataFormatError(f"{manifest_path}: no manifest found")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {manifest.get('format_version')}")
    skeleton = SkeletonGraph.from_dict(manifest["skeleton"]) if "skeleton" in manifest else default_skeleton()
    stride = int(manifest.get("cloud_stride", 2))
    scenes = []
    for meta in manifest["scenes"]:
        image = read_tensor(_verify_blob(root, meta["image"]))
        depth = read_tensor(_verify_blob(root, meta["depth"]))
        camera = CameraIntrinsics.from_array(read_tensor(_verify_blob(root, meta["intrinsics"])))
        scenes.append(
            SceneRecord(
                image=image,
                depth=DepthMap(values=depth.astype(np.float64)),
                camera=camera,
                cloud_stride=stride,
            )
        )
    motions = []
    for meta in manifest["motions"]:
        joints = read_tensor(_verify_blob(root, meta)).astype(np.float64)
        if joints.shape[2] != meta["frames"]:
            raise DataFormatError(f"{meta['path']}: frame count disagrees with the manifest")
        motions.append(MotionRecord(joints=joints, scene_index=int(meta["scene"])))
    return Dataset(
        scenes=scenes,
        motions=motions,
        skeleton=skeleton,
        seeds=manifest.get("seeds", {}),
        cloud_stride=stride,
    )
