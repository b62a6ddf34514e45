"""Model checkpoint file.

Layout: magic "ERPL" | u32 version=1 | u32 header length | UTF-8 JSON
header {input_size, hidden_size, num_layers, repr_dim, n_classes} | then
parameter tensors as 64-bit little-endian floats in a fixed order:
per layer, the input and recurrent weight blocks for gates i, f, o, g
(W_i_x, W_i_h, W_f_x, W_f_h, W_o_x, W_o_h, W_g_x, W_g_h), the four gate
biases (b_i, b_f, b_o, b_g); then projection weight and bias; then head
weight and bias.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .lstm import LSTMLayerParams, LSTMModel

MAGIC = b"ERPL"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def _gate_slices(h: int):
    return {"i": slice(0, h), "f": slice(h, 2 * h), "o": slice(2 * h, 3 * h), "g": slice(3 * h, 4 * h)}


def _tensor_order(model: LSTMModel):
    for layer in model.layers:
        sl = _gate_slices(layer.hidden_size)
        for gate in "ifog":
            yield layer.w_x[sl[gate]]
            yield layer.w_h[sl[gate]]
        for gate in "ifog":
            yield layer.b[sl[gate]]
    yield model.proj_w
    yield model.proj_b
    yield model.head_w
    yield model.head_b


def save_model(model: LSTMModel, path) -> None:
    header = json.dumps({
        "input_size": model.input_size,
        "hidden_size": model.hidden_size,
        "num_layers": model.num_layers,
        "repr_dim": model.repr_dim,
        "n_classes": model.n_classes,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for tensor in _tensor_order(model):
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_model(path) -> LSTMModel:
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise FormatError(f"checkpoint truncated ({len(blob)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise FormatError(f"version: expected {VERSION}, found {version}")
    offset = _PREFIX.size
    if len(blob) < offset + header_len:
        raise FormatError("checkpoint truncated inside header")
    try:
        header = json.loads(blob[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header: {exc}") from exc
    offset += header_len
    try:
        input_size = int(header["input_size"])
        hidden = int(header["hidden_size"])
        num_layers = int(header["num_layers"])
        repr_dim = int(header["repr_dim"])
        n_classes = int(header["n_classes"])
    except KeyError as exc:
        raise FormatError(f"checkpoint header: missing field {exc}") from exc

    def take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(blob):
            raise FormatError("checkpoint truncated inside parameter tensors")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset = end
        return arr.astype(np.float64)

    layers = []
    for ell in range(num_layers):
        in_size = input_size if ell == 0 else hidden
        w_x = np.empty((4 * hidden, in_size))
        w_h = np.empty((4 * hidden, hidden))
        b = np.empty(4 * hidden)
        sl = _gate_slices(hidden)
        for gate in "ifog":
            w_x[sl[gate]] = take((hidden, in_size))
            w_h[sl[gate]] = take((hidden, hidden))
        for gate in "ifog":
            b[sl[gate]] = take((hidden,))
        layers.append(LSTMLayerParams(w_x=w_x, w_h=w_h, b=b))
    model = LSTMModel(
        layers=layers,
        proj_w=take((repr_dim, hidden)),
        proj_b=take((repr_dim,)),
        head_w=take((n_classes, repr_dim)),
        head_b=take((n_classes,)),
    )
    if offset != len(blob):
        raise FormatError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return model
