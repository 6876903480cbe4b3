"""Deterministic array checkpoints.

Same layout as .npz (a zip of .npy members plus a JSON metadata member) but
with fixed zip timestamps, so rerunning an experiment with the same seed
overwrites checkpoints with byte-identical files.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)  # earliest timestamp zip supports
META_MEMBER = "__meta__.json"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo(META_MEMBER, date_time=_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(meta, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    arrays: dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read(META_MEMBER).decode("utf-8"))
        for member in zf.namelist():
            if member == META_MEMBER:
                continue
            with zf.open(member) as fh:
                arrays[member[: -len(".npy")]] = np.lib.format.read_array(fh)
    return arrays, meta
