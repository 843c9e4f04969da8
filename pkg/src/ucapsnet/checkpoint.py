"""Binary checkpoint serialization.

Layout (little-endian throughout)::

    magic b"UCAP" | u32 version | u64 payload_length | payload | u32 crc32(payload)

    payload := u32 config_length | config (UTF-8 "key=value" lines, sorted)
               u32 n_blocks
               { u32 name_length | name UTF-8 | u8 rank | rank * u32 dims
                 | float32 data (row-major) } * n_blocks

The config echo carries the training recipe plus epoch/step counters and
the torch RNG state (hex).  Parameter and optimizer tensors are stored as
float32 blocks; integer buffers (batch-norm step counts) are cast through
float32, which is exact for counts below 2**24.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
import torch

MAGIC = b"UCAP"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    version: int
    config: dict
    blocks: dict  # name -> float32 ndarray


def _encode_config(config):
    for key, value in config.items():
        text = f"{key}={value}"
        if "\n" in text:
            raise ValueError(f"config entry {key!r} contains a newline")
    return "\n".join(f"{k}={config[k]}" for k in sorted(config)).encode("utf-8")


def _decode_config(raw):
    config = {}
    for line in raw.decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        config[key] = value
    return config


def write_checkpoint(path, config, blocks):
    """Serialize a config echo and named float32 blocks to ``path``."""
    parts = []
    cfg_bytes = _encode_config(config)
    parts.append(struct.pack("<I", len(cfg_bytes)))
    parts.append(cfg_bytes)
    parts.append(struct.pack("<I", len(blocks)))
    for name, data in blocks.items():
        # asarray, not ascontiguousarray: the latter promotes rank 0 to rank 1.
        arr = np.asarray(data, dtype="<f4")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def read_checkpoint(path):
    """Parse and validate a checkpoint file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (payload_len,) = struct.unpack_from("<Q", raw, 8)
    if len(raw) != 16 + payload_len + 4:
        raise ValueError(f"{path}: truncated or oversized checkpoint")
    payload = raw[16 : 16 + payload_len]
    (crc,) = struct.unpack_from("<I", raw, 16 + payload_len)
    if zlib.crc32(payload) != crc:
        raise ValueError(f"{path}: checkpoint checksum mismatch")

    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(payload):
            raise ValueError(f"{path}: truncated checkpoint payload")
        chunk = payload[offset : offset + n]
        offset += n
        return chunk

    (cfg_len,) = struct.unpack("<I", take(4))
    config = _decode_config(take(cfg_len))
    (n_blocks,) = struct.unpack("<I", take(4))
    blocks = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        blocks[name] = data
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in checkpoint payload")
    return Checkpoint(version=version, config=config, blocks=blocks)


def _module_blocks(prefix, module):
    return {
        f"{prefix}/{name}": tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in module.state_dict().items()
    }


def _optimizer_blocks(prefix, optimizer, module):
    names = {id(p): n for n, p in module.named_parameters()}
    blocks = {}
    for group in optimizer.param_groups:
        for param in group["params"]:
            state = optimizer.state.get(param)
            if not state:
                continue
            pname = names[id(param)]
            for key, value in state.items():
                tensor = value if torch.is_tensor(value) else torch.tensor(float(value))
                blocks[f"{prefix}/{pname}/{key}"] = (
                    tensor.detach().cpu().numpy().astype(np.float32)
                )
    return blocks


def collect_state(generator, discriminator, opt_g=None, opt_d=None):
    """Gather model and optimizer tensors into an ordered block dict."""
    blocks = {}
    blocks.update(_module_blocks("gen", generator))
    blocks.update(_module_blocks("disc", discriminator))
    if opt_g is not None:
        blocks.update(_optimizer_blocks("opt_g", opt_g, generator))
    if opt_d is not None:
        blocks.update(_optimizer_blocks("opt_d", opt_d, discriminator))
    return blocks


def _restore_module(prefix, module, blocks):
    state = module.state_dict()
    for name, target in state.items():
        key = f"{prefix}/{name}"
        if key not in blocks:
            raise ValueError(f"checkpoint is missing block {key!r}")
        data = blocks[key]
        if tuple(data.shape) != tuple(target.shape):
            raise ValueError(
                f"block {key!r} has shape {tuple(data.shape)}, expected {tuple(target.shape)}"
            )
        state[name] = torch.from_numpy(np.array(data)).to(target.dtype)
    module.load_state_dict(state)


def _restore_optimizer(prefix, optimizer, module, blocks):
    names = {id(p): n for n, p in module.named_parameters()}
    for group in optimizer.param_groups:
        for param in group["params"]:
            pname = names[id(param)]
            keys = [k for k in blocks if k.startswith(f"{prefix}/{pname}/")]
            if not keys:
                continue
            state = {}
            for key in keys:
                field = key.rsplit("/", 1)[1]
                data = torch.from_numpy(np.array(blocks[key]))
                if field == "step":
                    data = data.reshape(())
                else:
                    data = data.to(param.dtype).reshape(param.shape)
                state[field] = data
            optimizer.state[param] = state


def restore_state(ckpt, generator, discriminator, opt_g=None, opt_d=None):
    """Load checkpoint blocks back into models and optimizers (in place)."""
    _restore_module("gen", generator, ckpt.blocks)
    _restore_module("disc", discriminator, ckpt.blocks)
    if opt_g is not None:
        _restore_optimizer("opt_g", opt_g, generator, ckpt.blocks)
    if opt_d is not None:
        _restore_optimizer("opt_d", opt_d, discriminator, ckpt.blocks)


def rng_state_hex():
    return torch.get_rng_state().numpy().tobytes().hex()


def set_rng_state_hex(hex_string):
    state = torch.tensor(list(bytes.fromhex(hex_string)), dtype=torch.uint8)
    torch.set_rng_state(state)


def describe(ckpt):
    """Human-readable header and block table for the inspect command."""
    lines = [f"format version: {ckpt.version}"]
    for key in sorted(ckpt.config):
        if key == "torch_rng":
            lines.append(f"{key} = <{len(ckpt.config[key]) // 2} bytes>")
        else:
            lines.append(f"{key} = {ckpt.config[key]}")
    lines.append(f"blocks: {len(ckpt.blocks)}")
    for name, data in ckpt.blocks.items():
        lines.append(f"  {name}  {tuple(data.shape)}")
    return "\n".join(lines)
