"""Binary model file: MiniRocket params + ridge head in one self-describing file.

Layout (little-endian):
    magic   4 bytes  b"MRMD"
    version u16
    count   u32      number of records
    records count x {
        name_len u16, name utf-8,
        dtype    u8   (1 float64, 2 int64, 3 bool, 4 utf-8 text),
        ndim     u8, shape u32 * ndim,
        payload       (text: u32 byte length + bytes)
    }
    crc32   u32      over everything above
The whole file is validated before any model object is built.
"""
import json
import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .minirocket import RocketParams
from .ridge import RidgeModel

logger = logging.getLogger(__name__)

MAGIC = b"MRMD"
VERSION = 1

_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {"f": 1, "i": 2, "b": 3}
_TEXT = 4


def _encode_record(name: str, value) -> bytes:
    raw_name = name.encode("utf-8")
    head = struct.pack("<H", len(raw_name)) + raw_name
    if isinstance(value, str):
        text = value.encode("utf-8")
        return head + struct.pack("<BBI", _TEXT, 0, len(text)) + text
    array = np.asarray(value)
    code = _CODES[array.dtype.kind]
    payload = np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes()
    return head + struct.pack("<BB", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape) + payload


def _records(model: RidgeModel) -> dict:
    records = {
        "ridge.weights": model.weights,
        "ridge.intercepts": model.intercepts,
        "ridge.alpha": np.array(model.alpha, dtype=np.float64),
        "ridge.classes": model.classes.astype(np.int64),
        "ridge.feature_means": model.feature_means,
        "ridge.feature_stds": model.feature_stds,
        "class_names": json.dumps(list(model.class_names)),
    }
    params = model.rocket_params
    if params is not None:
        records.update({
            "rocket.shape": np.array([params.num_channels, params.input_length, params.seed], dtype=np.int64),
            "rocket.dilations": params.dilations.astype(np.int64),
            "rocket.features_per_dilation": params.features_per_dilation.astype(np.int64),
            "rocket.paddings": params.paddings.astype(bool),
            "rocket.combo_counts": params.combo_counts.astype(np.int64),
            "rocket.combo_indices": params.combo_indices.astype(np.int64),
            "rocket.biases": params.biases.astype(np.float64),
        })
    return records


def dumps_model(model: RidgeModel) -> bytes:
    records = _records(model)
    body = MAGIC + struct.pack("<HI", VERSION, len(records))
    body += b"".join(_encode_record(name, value) for name, value in records.items())
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: RidgeModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_model(model))
    logger.info(f"📦 Saved model ({model.num_features} features, {model.num_classes} classes) to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_model(data: bytes) -> RidgeModel:
    if len(data) < 4 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)", VERSION)
    if len(data) < 14:
        raise ModelFormatError("model file is truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    reader = _Reader(body)
    reader.take(4)
    version, count = reader.unpack("<HI")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model file version {version}", VERSION)
    if zlib.crc32(body) != crc:
        raise ModelFormatError("model file checksum mismatch (truncated or corrupted)")
    records = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code == _TEXT:
            (length,) = reader.unpack("<I")
            records[name] = reader.take(length).decode("utf-8")
            continue
        if code not in _DTYPES:
            raise ModelFormatError(f"unknown dtype code {code} in record '{name}'")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        dtype = _DTYPES[code]
        size = int(np.prod(shape)) * dtype.itemsize
        array = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape)
        records[name] = array.astype(bool) if code == 3 else array.astype(dtype.newbyteorder("="))
    if reader.pos != len(body):
        raise ModelFormatError("trailing bytes after last record")
    try:
        return _build(records)
    except KeyError as e:
        raise ModelFormatError(f"model file misses record {e}") from e


def _build(records: dict) -> RidgeModel:
    params = None
    if "rocket.shape" in records:
        num_channels, input_length, seed = (int(v) for v in records["rocket.shape"])
        params = RocketParams(
            num_channels=num_channels,
            input_length=input_length,
            dilations=records["rocket.dilations"],
            features_per_dilation=records["rocket.features_per_dilation"],
            paddings=records["rocket.paddings"],
            combo_counts=records["rocket.combo_counts"],
            combo_indices=records["rocket.combo_indices"],
            biases=records["rocket.biases"],
            seed=seed,
        )
    return RidgeModel(
        weights=records["ridge.weights"],
        intercepts=records["ridge.intercepts"],
        alpha=float(records["ridge.alpha"]),
        classes=records["ridge.classes"],
        feature_means=records["ridge.feature_means"],
        feature_stds=records["ridge.feature_stds"],
        rocket_params=params,
        class_names=tuple(json.loads(records["class_names"])),
    )


def load_model(path: str | Path) -> RidgeModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        raise ModelFormatError(f"model file not found: {path}") from e
    model = loads_model(data)
    logger.info(f"✅ Loaded model from {path} (alpha={model.alpha:g})")
    return model
