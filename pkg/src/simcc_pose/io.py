"""Weight files and YAML configs.

Weight file layout::

    b"SPWT" | u32 version | u32 header length | header JSON | payload

The header lists each entry's name, shape and byte offset into the
payload; the payload is little-endian float64. Entries are written in
sorted name order so identical weights produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import yaml

from .kernel import ShapeError
from .model import ModelConfig
from .pipeline import PipelineConfig
from .trainer import TrainConfig

MAGIC = b"SPWT"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def save_weights(params: dict, path, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"entries": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(header)) + header)
        for b in blobs:
            fh.write(b)


def read_weights(path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version} (expected {VERSION})")
    if len(data) < 12 + hlen:
        raise WeightsFormatError(f"{path}: truncated header")
    header = json.loads(data[12:12 + hlen])
    payload = memoryview(data)[12 + hlen:]
    params = {}
    for e in header["entries"]:
        shape = tuple(e["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if e["offset"] + n > len(payload):
            raise WeightsFormatError(f"{path}: truncated, entry {e['name']!r} is missing")
        params[e["name"]] = np.frombuffer(payload[e["offset"]:e["offset"] + n], dtype="<f8").reshape(shape).astype(np.float64)
    return params, header.get("meta", {})


def load_weights(path, expected: dict | None = None) -> dict:
    """Load weights; with ``expected`` (name -> array or shape) names and shapes must match."""
    params, _ = read_weights(path)
    if expected is not None:
        for name, ref in expected.items():
            want = tuple(np.shape(ref)) if not isinstance(ref, tuple) else ref
            if name not in params:
                raise ShapeError(f"weights file lacks entry {name!r}")
            if params[name].shape != want:
                raise ShapeError(f"entry {name!r}: file has shape {params[name].shape}, model expects {want}")
        extra = set(params) - set(expected)
        if extra:
            raise ShapeError(f"weights file has unexpected entries {sorted(extra)}")
    return params


def _build(cls, section: dict | None, name: str):
    section = dict(section or {})
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(section) - set(fields)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    for k, v in section.items():
        if isinstance(v, list):
            section[k] = tuple(v)
    return section


def load_config(path=None) -> tuple[ModelConfig, TrainConfig, PipelineConfig]:
    """Read ``model``, ``training`` and ``pipeline`` sections; absent keys keep desk defaults."""
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: malformed config: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping of sections")
        unknown = set(raw) - {"model", "training", "pipeline"}
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    try:
        model = ModelConfig(**_build(ModelConfig, raw.get("model"), "model"))
        train = TrainConfig.desk(**_build(TrainConfig, raw.get("training"), "training"))
        pipe = PipelineConfig(**_build(PipelineConfig, raw.get("pipeline"), "pipeline"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return model, train, pipe


def dump_config(model: ModelConfig, train: TrainConfig, pipe: PipelineConfig) -> str:
    def plain(obj):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(obj).items()}
    return yaml.safe_dump({"model": plain(model), "training": plain(train), "pipeline": plain(pipe)},
                          sort_keys=False)
