"""Text file formats for the CLI.

Embedding file: first line ``# N C``, then N lines of C space-separated
decimal reals. Values are written as shortest round-trip decimals (repr), so
write -> read reproduces every float64 bit-exactly.

Truth file: one line per query, ``q: i j k`` with decimal indices; queries
without a line have no positives.

CSV outputs use ',' separators, a header row, LF line endings, '.' decimal
points, and no locale dependence.
"""

from __future__ import annotations

import numpy as np


class FileFormatError(ValueError):
    """Malformed input file; message names the file and line."""


def format_float(x: float) -> str:
    return repr(float(x))


def write_embeddings(path, batch) -> None:
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"embedding batch must be 2-D, got shape {arr.shape}")
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {arr.shape[0]} {arr.shape[1]}\n")
        for row in arr:
            fh.write(" ".join(format_float(v) for v in row) + "\n")


def read_embeddings(path) -> np.ndarray:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FileFormatError(f"{path}:1: empty file, expected '# N C' header")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "#":
        raise FileFormatError(f"{path}:1: expected header '# N C', got {lines[0]!r}")
    try:
        n, c = int(head[1]), int(head[2])
    except ValueError:
        raise FileFormatError(f"{path}:1: non-integer dimensions in header {lines[0]!r}") from None
    if n < 1 or c < 1:
        raise FileFormatError(f"{path}:1: dimensions must be positive, got N={n} C={c}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise FileFormatError(f"{path}: header promises {n} rows, found {len(body)}")
    out = np.empty((n, c), dtype=np.float64)
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != c:
            raise FileFormatError(f"{path}:{i + 2}: expected {c} values, got {len(parts)}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            raise FileFormatError(f"{path}:{i + 2}: unparseable value in {line!r}") from None
        if not np.all(np.isfinite(out[i])):
            raise FileFormatError(f"{path}:{i + 2}: non-finite value")
    return out


def write_truth(path, positive_sets) -> None:
    with open(path, "w", newline="\n") as fh:
        for q, pos in enumerate(positive_sets):
            fh.write(f"{q}: " + " ".join(str(int(i)) for i in sorted(pos)) + "\n")


def read_truth(path, num_queries: int) -> list[set[int]]:
    """Positive database indices per query; unlisted queries get empty sets."""
    sets: list[set[int]] = [set() for _ in range(num_queries)]
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if ":" not in line:
                raise FileFormatError(f"{path}:{lineno}: expected 'q: i j k', got {line!r}")
            left, _, right = line.partition(":")
            try:
                q = int(left.strip())
                pos = {int(tok) for tok in right.split()}
            except ValueError:
                raise FileFormatError(
                    f"{path}:{lineno}: non-integer index in {line!r}"
                ) from None
            if not (0 <= q < num_queries):
                raise FileFormatError(
                    f"{path}:{lineno}: query index {q} out of range [0, {num_queries})"
                )
            sets[q] |= pos
    return sets


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Plain CSV with LF endings; floats become shortest round-trip decimals."""

    def cell(v) -> str:
        if isinstance(v, float):
            return format_float(v)
        return "" if v is None else str(v)

    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")
