"""Checkpoint and key=value config file I/O.

A checkpoint is a zip-of-arrays (numpy ``.npz``): one float64 array per
parameter name plus a ``__format_version__`` tag. Doubles are stored raw,
so save/load round-trips bit-exact. Model configs ride alongside in a
flat ``key=value`` text file (one pair per line, ``#`` comments), the same
format the CLI accepts for run configs.
"""

from __future__ import annotations

import numpy as np

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


def save_params(path, params: dict[str, np.ndarray]) -> None:
    if _VERSION_KEY in params:
        raise ValueError(f"{_VERSION_KEY} is reserved")
    with open(path, "wb") as fh:
        np.savez(fh, **{_VERSION_KEY: np.int64(FORMAT_VERSION)}, **params)


def load_params(path) -> dict[str, np.ndarray]:
    with np.load(path) as archive:
        if _VERSION_KEY not in archive:
            raise ValueError(f"{path} is not a qsift checkpoint (missing version tag)")
        version = int(archive[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
        return {k: archive[k] for k in archive.files if k != _VERSION_KEY}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s: str):
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def write_config_kv(path, mapping: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(mapping):
            fh.write(f"{key}={_format_value(mapping[key])}\n")


def read_config_kv(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = _parse_value(value.strip())
    return out
