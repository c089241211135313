"""``HCAST1`` model container.

Layout: the magic line ``HCAST1\\n``, an 8-byte little-endian header length,
a UTF-8 JSON header (sorted keys), then every array listed in the header as
little-endian float64, row-major, in header order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .adversarial import Generator
from .dataset import NormalizationParams
from .decompose import CategoricalEncoding, FeatureLayout
from .errors import DataError
from .models import MODEL_CLASSES

MAGIC = b"HCAST1\n"


def _layout_to_dict(layout: FeatureLayout) -> dict:
    return {
        "datetime_name": layout.datetime_name,
        "numeric": list(layout.numeric),
        "targets": list(layout.targets),
        "encodings": [[e.name, list(e.vocabulary)] for e in layout.encodings],
        "temporal": layout.temporal,
        "kernel": layout.kernel,
    }


def _layout_from_dict(d: dict) -> FeatureLayout:
    encs = tuple(CategoricalEncoding(name, tuple(vocab)) for name, vocab in d["encodings"])
    return FeatureLayout(d["datetime_name"], tuple(d["numeric"]), tuple(d["targets"]),
                         encs, bool(d["temporal"]), int(d["kernel"]))


def dumps(generator: Generator, norm: NormalizationParams, extra: dict | None = None) -> bytes:
    model = generator.model
    arrays = [(k, model.params[k]) for k in sorted(model.params)]
    arrays.append(("noise_W", generator.noise_W))
    arrays.append(("norm_lo", norm.lo))
    arrays.append(("norm_hi", norm.hi))
    header = {
        "kind": model.kind,
        "S": model.S,
        "T": model.T,
        "bias": model.bias,
        "noise_dim": generator.noise_dim,
        "layout": _layout_to_dict(model.layout),
        "channel_map": [list(c) for c in model.layout.channel_map()],
        "normalization": {"mode": norm.mode, "names": list(norm.names)},
        "arrays": [[name, list(np.shape(a))] for name, a in arrays],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<Q", len(blob)), blob]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays]
    return b"".join(parts)


def loads(data: bytes):
    """Inverse of :func:`dumps`; returns (Generator, NormalizationParams, header)."""
    if not data.startswith(MAGIC):
        raise DataError("not an HCAST1 model file (bad magic)")
    pos = len(MAGIC)
    (n,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    header = json.loads(data[pos:pos + n].decode())
    pos += n
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if pos + nbytes > len(data):
            raise DataError("truncated model file")
        arrays[name] = np.frombuffer(data[pos:pos + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise DataError("trailing bytes in model file")
    layout = _layout_from_dict(header["layout"])
    kind = header["kind"]
    if kind not in MODEL_CLASSES:
        raise DataError(f"unknown model kind {kind!r} in container")
    params = {k: v for k, v in arrays.items() if k not in ("noise_W", "norm_lo", "norm_hi")}
    model = MODEL_CLASSES[kind](header["S"], header["T"], layout, params, header["bias"])
    gen = Generator(model, header["noise_dim"], arrays["noise_W"])
    nm = header["normalization"]
    norm = NormalizationParams(nm["mode"], tuple(nm["names"]), arrays["norm_lo"], arrays["norm_hi"])
    return gen, norm, header


def save(path, generator: Generator, norm: NormalizationParams, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(generator, norm, extra))


def load(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
