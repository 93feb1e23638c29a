"""Single-file model serialization: one JSON header line followed by raw
numpy blocks in the order listed in the header.  Byte-deterministic for
identical inputs."""

from __future__ import annotations

import json

import numpy as np
from numpy.lib import format as npfmt


def save_blocks(path, meta: dict, arrays: dict) -> None:
    names = sorted(arrays)
    header = dict(meta)
    header["__blocks__"] = names
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            npfmt.write_array(fh, np.ascontiguousarray(arrays[name]), allow_pickle=False)


def load_blocks(path) -> tuple:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for name in header.pop("__blocks__"):
            arrays[name] = npfmt.read_array(fh, allow_pickle=False)
    return header, arrays
