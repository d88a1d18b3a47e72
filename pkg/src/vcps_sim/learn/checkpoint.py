"""Network checkpoints in a flat binary format.

Layout::

    8 bytes   magic b"VCPSCKPT"
    4 bytes   format version, little-endian uint32
    4 bytes   header length H, little-endian uint32
    H bytes   UTF-8 JSON header
    ...       arrays, little-endian, row-major, concatenated

The header lists every network with its layer sizes, output activation and
dtype, plus ``(offset, shape)`` for each weight matrix and bias vector
(offsets relative to the end of the header).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import MlpNetwork

MAGIC = b"VCPSCKPT"
VERSION = 1


def save_networks(path: str | Path, groups: dict[str, dict[str, MlpNetwork]], meta: dict | None = None) -> None:
    """Write ``{group: {name: net}}`` (e.g. one group per RSU agent)."""
    blobs = []
    offset = 0
    header = {"meta": meta or {}, "groups": {}}
    for gname, nets in groups.items():
        gh = {}
        for name, net in nets.items():
            arrays = []
            for p in net.params:
                le = np.ascontiguousarray(p, dtype=p.dtype.newbyteorder("<"))
                arrays.append({"offset": offset, "shape": list(p.shape)})
                blobs.append(le.tobytes())
                offset += le.nbytes
            gh[name] = {"sizes": list(net.sizes), "output": net.output, "dtype": net.dtype.name, "arrays": arrays}
        header["groups"][gname] = gh
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hb)))
        fh.write(hb)
        for b in blobs:
            fh.write(b)


def load_networks(path: str | Path) -> tuple[dict[str, dict[str, MlpNetwork]], dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen])
    body = data[16 + hlen :]
    out: dict[str, dict[str, MlpNetwork]] = {}
    for gname, nets in header["groups"].items():
        out[gname] = {}
        for name, spec in nets.items():
            dt = np.dtype(spec["dtype"])
            net = MlpNetwork(spec["sizes"], spec["output"], dtype=dt)
            for p, arr in zip(net.params, spec["arrays"]):
                n = int(np.prod(arr["shape"])) * dt.itemsize
                p[...] = np.frombuffer(body, dtype=dt.newbyteorder("<"), count=int(np.prod(arr["shape"])), offset=arr["offset"]).reshape(arr["shape"])
                assert n == p.nbytes
            out[gname][name] = net
    return out, header["meta"]
