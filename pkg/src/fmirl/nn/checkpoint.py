"""Self-describing text container for named parameter arrays.

Layout (documented here and in the README):

    fmirl-params 1
    meta <single-line JSON object>
    param <name> <dim0> <dim1> ...
    <row-major values as C float.hex(), space-separated, one line>
    ...
    end

float.hex() round-trips float64 exactly, so save/load is lossless and the
bytes are deterministic for identical inputs. Parameter blocks are sorted by
name.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import DataError

FORMAT_LINE = "fmirl-params 1"


def save_params(path, arrays, meta=None):
    lines = [FORMAT_LINE, "meta " + json.dumps(meta or {}, separators=(",", ":"))]
    for name in sorted(arrays):
        values = np.asarray(arrays[name], dtype=np.float64)
        dims = " ".join(str(d) for d in values.shape)
        lines.append(f"param {name} {dims}".rstrip())
        lines.append(" ".join(x.hex() for x in values.ravel().tolist()))
    lines.append("end")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def load_params(path):
    try:
        with open(path, encoding="ascii") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read parameter file {path}: {e}") from e
    if not lines or lines[0] != FORMAT_LINE:
        raise DataError(f"{path}: not a '{FORMAT_LINE}' file")
    if not lines[1].startswith("meta "):
        raise DataError(f"{path}: missing meta line")
    meta = json.loads(lines[1][5:])
    arrays = {}
    i = 2
    while i < len(lines) and lines[i] != "end":
        header = lines[i].split()
        if header[0] != "param" or len(header) < 2:
            raise DataError(f"{path}: malformed block header {lines[i]!r}")
        name = header[1]
        shape = tuple(int(d) for d in header[2:])
        raw = lines[i + 1].split()
        values = np.array([float.fromhex(x) for x in raw], dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise DataError(f"{path}: value count mismatch for {name!r}")
        arrays[name] = values.reshape(shape)
        i += 2
    if i >= len(lines):
        raise DataError(f"{path}: truncated file (no 'end' marker)")
    return arrays, meta
