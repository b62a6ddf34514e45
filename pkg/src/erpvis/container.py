"""On-disk container: a directory with `manifest.json` and `trials.bin`.

trials.bin layout (all integers little-endian):
    magic "EEGT" | u32 version=1 | u32 n_trials | u32 channels | u32 samples
    then per record:
        u16 subject_id | u16 exemplar_id [| u16 n_averaged, ERP only]
        channels*samples float32, row-major (channel-major)

The manifest duplicates the shape fields; loaders cross-check both and
report the first disagreeing field. ERP containers are marked with
manifest `kind: "erp"` and carry the extra per-record averaging count.
Raw datasets converted from real recordings by external tooling use the
same layout.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Dataset, EEGTrial
from .erp import ERPSequence, ERPSpace
from .errors import FormatError

MAGIC = b"EEGT"
VERSION = 1
MANIFEST_NAME = "manifest.json"
TRIALS_NAME = "trials.bin"

_HEADER = struct.Struct("<4sIIII")
_REC_RAW = struct.Struct("<HH")
_REC_ERP = struct.Struct("<HHH")


def _write_manifest(path: Path, payload: dict):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (path / MANIFEST_NAME).write_text(text, encoding="utf-8")


def _read_manifest(path: Path) -> dict:
    mpath = path / MANIFEST_NAME
    if not mpath.is_file():
        raise FormatError(f"missing {MANIFEST_NAME} in {path}")
    try:
        return json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{MANIFEST_NAME}: invalid JSON ({exc})") from exc


def _check_field(name: str, manifest_value, header_value):
    if int(manifest_value) != int(header_value):
        raise FormatError(f"{name}: manifest says {manifest_value}, tensor header says {header_value}")


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as a manifest + binary tensor directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_manifest(path, {
        "version": VERSION,
        "kind": "raw",
        "n_trials": ds.n_trials,
        "channels": ds.channels,
        "samples": ds.samples,
        "sampling_rate_hz": ds.sampling_rate_hz,
        "subjects": list(ds.subjects),
        "exemplar_to_category": list(ds.exemplar_to_category),
        "metadata": dict(ds.metadata),
    })
    with open(path / TRIALS_NAME, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ds.n_trials, ds.channels, ds.samples))
        for t in ds.trials:
            fh.write(_REC_RAW.pack(t.subject_id, t.exemplar_id))
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def save_erp_space(space: ERPSpace, path) -> None:
    """Write an ERP space in the dataset container format, kind "erp"."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {str(k): str(v) for k, v in space.provenance.items()}
    _write_manifest(path, {
        "version": VERSION,
        "kind": "erp",
        "n_trials": len(space),
        "channels": space.channels,
        "samples": space.samples,
        "sampling_rate_hz": space.sampling_rate_hz,
        "subjects": list(space.subjects),
        "exemplar_to_category": list(space.exemplar_to_category),
        "metadata": meta,
    })
    with open(path / TRIALS_NAME, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(space), space.channels, space.samples))
        for s in space.sequences:
            fh.write(_REC_ERP.pack(s.subject_id, s.exemplar_id, s.n_averaged))
            fh.write(np.ascontiguousarray(s.data, dtype="<f4").tobytes())


def _load_records(path: Path, manifest: dict, with_n_averaged: bool):
    tpath = path / TRIALS_NAME
    if not tpath.is_file():
        raise FormatError(f"missing {TRIALS_NAME} in {path}")
    blob = tpath.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{TRIALS_NAME}: truncated header ({len(blob)} bytes)")
    magic, version, n_trials, channels, samples = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise FormatError(f"version: expected {VERSION}, found {version}")
    for name in ("n_trials", "channels", "samples"):
        if name not in manifest:
            raise FormatError(f"{MANIFEST_NAME}: missing field {name}")
    _check_field("n_trials", manifest["n_trials"], n_trials)
    _check_field("channels", manifest["channels"], channels)
    _check_field("samples", manifest["samples"], samples)

    rec_struct = _REC_ERP if with_n_averaged else _REC_RAW
    tensor_bytes = channels * samples * 4
    rec_size = rec_struct.size + tensor_bytes
    expected = _HEADER.size + n_trials * rec_size
    if len(blob) != expected:
        raise FormatError(
            f"{TRIALS_NAME}: payload is {len(blob)} bytes, expected {expected} "
            f"for {n_trials} records of {rec_size} bytes"
        )
    records = []
    offset = _HEADER.size
    for _ in range(n_trials):
        ids = rec_struct.unpack_from(blob, offset)
        offset += rec_struct.size
        data = np.frombuffer(blob, dtype="<f4", count=channels * samples, offset=offset)
        offset += tensor_bytes
        records.append((ids, data.reshape(channels, samples).astype(np.float32)))
    return records


def _category_of(manifest: dict, exemplar_id: int) -> int:
    mapping = manifest.get("exemplar_to_category")
    if mapping is None:
        raise FormatError(f"{MANIFEST_NAME}: missing field exemplar_to_category")
    if exemplar_id >= len(mapping):
        raise FormatError(
            f"exemplar_to_category: record has exemplar_id {exemplar_id}, mapping holds {len(mapping)}"
        )
    return int(mapping[exemplar_id])


def load_dataset(path) -> Dataset:
    """Read a raw dataset container back into memory."""
    path = Path(path)
    manifest = _read_manifest(path)
    if manifest.get("kind", "raw") != "raw":
        raise FormatError(f"kind: expected \"raw\", found {manifest.get('kind')!r}")
    records = _load_records(path, manifest, with_n_averaged=False)
    if "sampling_rate_hz" not in manifest:
        raise FormatError(f"{MANIFEST_NAME}: missing field sampling_rate_hz")
    trials = tuple(
        EEGTrial(data=data, subject_id=subj, exemplar_id=ex,
                 category_id=_category_of(manifest, ex))
        for (subj, ex), data in records
    )
    return Dataset(
        trials=trials,
        sampling_rate_hz=float(manifest["sampling_rate_hz"]),
        exemplar_to_category=tuple(int(c) for c in manifest["exemplar_to_category"]),
        metadata={str(k): str(v) for k, v in manifest.get("metadata", {}).items()},
    )


def load_erp_space(path) -> ERPSpace:
    """Read an ERP container; subset indexes are re-derived per group."""
    path = Path(path)
    manifest = _read_manifest(path)
    if manifest.get("kind") != "erp":
        raise FormatError(f"kind: expected \"erp\", found {manifest.get('kind')!r}")
    records = _load_records(path, manifest, with_n_averaged=True)
    if "sampling_rate_hz" not in manifest:
        raise FormatError(f"{MANIFEST_NAME}: missing field sampling_rate_hz")
    counters: dict[tuple[int, int], int] = {}
    sequences = []
    for (subj, ex, n_avg), data in records:
        idx = counters.get((subj, ex), 0)
        counters[(subj, ex)] = idx + 1
        sequences.append(ERPSequence(
            data=data, subject_id=subj, exemplar_id=ex,
            category_id=_category_of(manifest, ex),
            n_averaged=n_avg, subset_index=idx,
        ))
    return ERPSpace(
        sequences=tuple(sequences),
        sampling_rate_hz=float(manifest["sampling_rate_hz"]),
        exemplar_to_category=tuple(int(c) for c in manifest["exemplar_to_category"]),
        provenance={str(k): str(v) for k, v in manifest.get("metadata", {}).items()},
    )
