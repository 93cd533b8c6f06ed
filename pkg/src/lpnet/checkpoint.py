"""Versioned binary model checkpoints.

Layout: magic "LPNET1"; u32 length + UTF-8 key-value block describing the
architecture; u32 parameter count; then per parameter u32 name length, name
bytes, u32 rank, u32 dims, raw float64 little-endian values. Round trips are
bit-exact.
"""

import struct

import numpy as np

from .errors import FormatError
from .network import ArchConfig, LPNetModel

MAGIC = b"LPNET1"


def _config_block(config):
    mults = ",".join(str(m) for m in config.channel_multipliers)
    lines = [
        f"base_channels = {config.base_channels}",
        f"channel_multipliers = {mults}",
        f"mfp_paths = {config.mfp_paths}",
        f"sdf_kernel = {config.sdf_kernel}",
    ]
    return ("\n".join(lines) + "\n").encode()


def _parse_config_block(blob):
    fields = {}
    for line in blob.decode().splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"malformed checkpoint config line: {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        fields[key] = value
    try:
        return ArchConfig(
            base_channels=int(fields["base_channels"]),
            channel_multipliers=tuple(int(v) for v in fields["channel_multipliers"].split(",")),
            mfp_paths=int(fields["mfp_paths"]),
            sdf_kernel=int(fields["sdf_kernel"]),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"invalid checkpoint config block: {exc}") from exc


def save_model(model, path):
    params = model.named_parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        block = _config_block(model.config)
        fh.write(struct.pack("<I", len(block)))
        fh.write(block)
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params.items():
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            arr = tensor.data
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return data


def load_model(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise FormatError("not a model checkpoint (bad magic)")
        (block_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        config = _parse_config_block(_read_exact(fh, block_len, "config block"))
        model = LPNetModel(config, seed=0)
        params = model.named_parameters()
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        if count != len(params):
            raise FormatError(f"checkpoint has {count} parameters, model expects {len(params)}")
        for expected_name, tensor in params.items():
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode()
            if name != expected_name:
                raise FormatError(f"parameter order mismatch: {name!r} != {expected_name!r}")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            if dims != tensor.data.shape:
                raise FormatError(f"{name}: shape {dims} does not match model {tensor.data.shape}")
            raw = _read_exact(fh, 8 * int(np.prod(dims, dtype=np.int64)), f"values of {name}")
            tensor.data[...] = np.frombuffer(raw, dtype="<f8").reshape(dims)
        if fh.read(1):
            raise FormatError("trailing bytes after last parameter")
    return model
