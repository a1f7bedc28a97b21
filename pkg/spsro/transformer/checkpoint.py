"""
Single-file checkpoints for the sequence model.

All integers are unsigned 32-bit little-endian::

    b"SPSRO-TF"                  magic
    version                      currently 1
    header_length, header        UTF-8 JSON with "model" and "quantization"
    count                        number of parameter blocks
    count x:
        name_length, name        UTF-8
        ndim, dims...
        data                     little-endian float32, C order

Blocks appear in :func:`~spsro.transformer.model.parameter_shapes` order.
"""
from __future__ import annotations

import json
import struct
import typing as t
from dataclasses import asdict, dataclass

import numpy as np
from pydantic import ValidationError

from spsro.exceptions import CheckpointError, SpsroError
from spsro.tokenizer import QuantizationSpec
from spsro.transformer.config import ModelConfig
from spsro.transformer.model import ModelParams, parameter_shapes

MAGIC = b"SPSRO-TF"
FORMAT_VERSION = 1
WIRE_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: ModelParams
    quantization: t.Optional[QuantizationSpec] = None


def _uint(value: int) -> bytes:
    return struct.pack("<I", value)


def dumps_checkpoint(
    params: ModelParams, quantization: t.Optional[QuantizationSpec] = None
) -> bytes:
    header: t.Dict[str, t.Any] = {
        "model": params.config.model_dump(mode="json"),
        "quantization": None,
    }
    if quantization is not None:
        header["quantization"] = {
            **asdict(quantization),
            "mode": quantization.mode.value,
            "solvers": list(quantization.solvers),
        }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    chunks = [MAGIC, _uint(FORMAT_VERSION), _uint(len(header_bytes))]
    chunks.append(header_bytes)
    shapes = parameter_shapes(params.config)
    chunks.append(_uint(len(shapes)))
    for name in shapes:
        value = params.values[name]
        encoded_name = name.encode("utf-8")
        chunks += [_uint(len(encoded_name)), encoded_name, _uint(value.ndim)]
        chunks += [_uint(dim) for dim in value.shape]
        chunks.append(np.ascontiguousarray(value, dtype=WIRE_DTYPE).tobytes())
    return b"".join(chunks)


def save(
    params: ModelParams,
    path: str,
    quantization: t.Optional[QuantizationSpec] = None,
):
    """
    :param quantization:
        Stored alongside the weights so a selector can detokenize without
        the dataset.

    """
    with open(path, "wb") as f:
        f.write(dumps_checkpoint(params, quantization))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(
                f"The checkpoint is truncated at byte {len(self.data)}."
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def uint(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def loads_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("Not an SPSRO-TF checkpoint.")
    version = reader.uint()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {version}, expected "
            f"{FORMAT_VERSION}."
        )

    try:
        header = json.loads(reader.take(reader.uint()).decode("utf-8"))
        config = ModelConfig.model_validate(header["model"])
        quantization = (
            QuantizationSpec(
                **{
                    **header["quantization"],
                    "solvers": tuple(header["quantization"]["solvers"]),
                }
            )
            if header.get("quantization")
            else None
        )
    except (
        ValueError,
        KeyError,
        TypeError,
        ValidationError,
    ) as exception:
        raise CheckpointError(
            f"Invalid checkpoint header: {exception}"
        ) from exception

    values: t.Dict[str, np.ndarray] = {}
    for _ in range(reader.uint()):
        name = reader.take(reader.uint()).decode("utf-8")
        shape = tuple(reader.uint() for _ in range(reader.uint()))
        size = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(size * WIRE_DTYPE.itemsize)
        values[name] = (
            np.frombuffer(raw, dtype=WIRE_DTYPE).reshape(shape).copy()
        )

    if reader.offset != len(data):
        raise CheckpointError(
            f"{len(data) - reader.offset} unexpected bytes after the "
            "parameters."
        )

    try:
        params = ModelParams(config=config, values=values)
    except SpsroError as exception:
        raise CheckpointError(str(exception)) from exception
    return Checkpoint(params=params, quantization=quantization)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        return loads_checkpoint(f.read())


def load(path: str) -> ModelParams:
    """
    :raises CheckpointError:
        If the file is truncated, has the wrong magic bytes or version, or
        its parameters don't match the stored config.

    """
    return load_checkpoint(path).params
