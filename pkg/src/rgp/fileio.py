"""Atomic file writing helpers.

Outputs are written to a temporary sibling and renamed into place, so an
interrupted run never leaves a partially written file.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Sequence


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv_atomic(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")
