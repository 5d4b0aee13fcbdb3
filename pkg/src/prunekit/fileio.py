"""Atomic file writes and line-delimited JSON helpers.

Every artifact is written to a temporary file in the destination directory
and renamed into place, so files are either complete or absent.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def _to_jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"object of type {type(obj).__name__} is not JSON serializable")


def dumps(obj, **kwargs) -> str:
    return json.dumps(obj, sort_keys=True, default=_to_jsonable, **kwargs)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj, indent: int = 2) -> None:
    atomic_write_text(path, dumps(obj, indent=indent) + "\n")


def write_jsonl(path, rows) -> None:
    atomic_write_text(path, "".join(dumps(row) + "\n" for row in rows))


def read_jsonl(path):
    """Yield (line_no, parsed_object) for every non-blank line."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                yield line_no, json.loads(line)
