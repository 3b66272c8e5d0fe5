"""Parameter initialization and the STVT1 checkpoint format.

Checkpoint layout (little-endian): magic ``STVT1``, uint32 JSON blob length,
the JSON blob (config plus optional normalization stats), then for each
tensor: uint32 name length, utf-8 name, uint32 rank, uint32 dims, float64
payload. Tensors are stored sorted by name so files are reproducible.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import StVitConfig

MAGIC = b"STVT1"

STREAMS = ("sp", "tp", "tm")


def param_names(config: StVitConfig) -> list[str]:
    names = ["embed_cell_w", "embed_cell_b", "embed_met_w", "embed_met_b"]
    for stream in STREAMS:
        for layer in range(config.num_layers):
            p = f"{stream}{layer}_"
            names += [p + "ln1_g", p + "ln1_b"]
            names += [p + w for w in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo")]
            names += [p + "ln2_g", p + "ln2_b"]
            names += [p + "ff_w1", p + "ff_b1", p + "ff_w2", p + "ff_b2"]
    names += ["head_w", "head_b"]
    return names


def init_params(config: StVitConfig, seed: int | None = None) -> dict:
    """Scaled-uniform init: weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    biases zero, layer-norm gain one. Deterministic per seed."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    d = config.hidden_dim
    dtype = config.np_dtype

    def w(fan_in, fan_out):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=(fan_in, fan_out)).astype(dtype)

    params = {
        "embed_cell_w": w(config.n_cell_features, d),
        "embed_cell_b": np.zeros(d, dtype),
        "embed_met_w": w(config.n_meteo_features, d),
        "embed_met_b": np.zeros(d, dtype),
    }
    for stream in STREAMS:
        for layer in range(config.num_layers):
            p = f"{stream}{layer}_"
            params[p + "ln1_g"] = np.ones(d, dtype)
            params[p + "ln1_b"] = np.zeros(d, dtype)
            for name in ("wq", "wk", "wv", "wo"):
                params[p + name] = w(d, d)
            for name in ("bq", "bk", "bv", "bo"):
                params[p + name] = np.zeros(d, dtype)
            params[p + "ln2_g"] = np.ones(d, dtype)
            params[p + "ln2_b"] = np.zeros(d, dtype)
            params[p + "ff_w1"] = w(d, config.ffn_mult * d)
            params[p + "ff_b1"] = np.zeros(config.ffn_mult * d, dtype)
            params[p + "ff_w2"] = w(config.ffn_mult * d, d)
            params[p + "ff_b2"] = np.zeros(d, dtype)
    params["head_w"] = w(config.t_in * d, config.t_out)
    params["head_b"] = np.zeros(config.t_out, dtype)
    return params


def cast_params(params: dict, dtype) -> dict:
    return {k: np.asarray(v, dtype=dtype) for k, v in params.items()}


def save_checkpoint(path, params: dict, config: StVitConfig,
                    extra: dict | None = None) -> None:
    """Write an STVT1 file; ``extra`` rides along in the JSON blob
    (normalization stats, provenance)."""
    blob = json.dumps({"config": config.to_dict(), "extra": extra or {}}).encode()
    chunks = [MAGIC, struct.pack("<I", len(blob)), blob]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8")
        nb = name.encode()
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path):
    """Read an STVT1 file -> (params float64, config, extra dict)."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not an STVT1 checkpoint")
    off = len(MAGIC)
    (blob_len,) = struct.unpack_from("<I", data, off)
    off += 4
    meta = json.loads(data[off:off + blob_len].decode())
    off += blob_len
    config = StVitConfig.from_dict(meta["config"])
    params = {}
    n = len(data)
    while off < n:
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + name_len].decode()
        off += name_len
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        off += 8 * count
        params[name] = arr.reshape(shape).copy()
    missing = set(param_names(config)) - set(params)
    if missing:
        raise ValueError(f"{path}: missing tensors {sorted(missing)}")
    return params, config, meta.get("extra", {})
