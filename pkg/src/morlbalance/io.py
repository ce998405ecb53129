"""File and random-stream helpers shared by the experiment code."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

# Stream purposes for seed fan-out.
TRAIN, EVAL, SO_TRAIN, ONTOLOGY, SIMULATE = 1, 2, 3, 4, 5


def stream(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator addressed by ``(master_seed, *keys)``.

    Streams are derived by counter-based spawning, so any cell of an
    experiment can be recomputed in isolation and serial/parallel execution
    draw identical numbers.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_csv(header: Sequence[str], rows: Iterable[Sequence[Any]],
               provenance: Mapping[str, Any] | None = None) -> str:
    """CSV text; provenance is embedded as a leading ``# config:`` comment line."""
    buf = io.StringIO()
    if provenance is not None:
        buf.write("# config: " + json.dumps(provenance, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: str | Path) -> tuple[dict[str, Any] | None, list[dict[str, str]]]:
    """Rows of a CSV written by :func:`format_csv`, plus its provenance (if any)."""
    text = Path(path).read_text()
    provenance = None
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("# config: "):
            provenance = json.loads(line[len("# config: "):])
        elif not line.startswith("#"):
            body.append(line)
    return provenance, list(csv.DictReader(body))
