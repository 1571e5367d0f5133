"""Atomic file writing and deterministic delimited output.

Every artifact the package writes (CSV tables, JSON summaries, figures)
goes through :func:`atomic_write_bytes` so a crashed run never leaves a
half-written file, and repeated runs with identical inputs produce
byte-identical output.
"""

from __future__ import annotations

import math
import os
from typing import Iterable, Sequence


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (round-trip exact)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.17g}"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a same-directory temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV table: UTF-8, ``\\n`` newlines, floats at 17 significant
    digits, written atomically."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float) or cell is None:
                cells.append(format_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
