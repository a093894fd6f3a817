"""Turnstile stream files, the synthetic generator and key-count ingestion.

A stream file is plain text::

    # comments start with '#'
    n=<N> m=<M>
    <index>\t<delta>
    ...

``n`` is the universe size and ``m`` a bound on every running magnitude.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trimsketch.oracle import ExactVector

HEAVY_RANGE = (10_000, 100_000)
LIGHT_RANGE = (1, 100)


class StreamFormatError(ValueError):
    """Malformed stream or key-count input; the message carries the line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class StreamFile:
    n: int
    m: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        self.deltas = np.asarray(self.deltas, dtype=np.int64).ravel()
        if self.indices.shape != self.deltas.shape:
            raise ValueError("indices and deltas must have the same length")
        if self.n < 0 or self.m < 0:
            raise ValueError("n and m must be nonnegative")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise IndexError(f"stream index outside universe [0, {self.n})")

    def __len__(self):
        return int(self.indices.size)

    def dense(self) -> np.ndarray:
        x = np.zeros(self.n, dtype=np.int64)
        np.add.at(x, self.indices, self.deltas)
        return x

    def to_vector(self) -> ExactVector:
        acc: dict[int, int] = {}
        for i, d in zip(self.indices.tolist(), self.deltas.tolist()):
            acc[i] = acc.get(i, 0) + d
        return ExactVector(self.n, acc)

    def max_running_magnitude(self) -> int:
        """Largest ``|x_i|`` reached at any point of the stream."""
        if not self.indices.size:
            return 0
        order = np.argsort(self.indices, kind="stable")
        idx, dl = self.indices[order], self.deltas[order]
        run = np.cumsum(dl)
        starts = np.r_[0, np.nonzero(np.diff(idx))[0] + 1]
        # subtract the running total accumulated before each group
        offset = np.repeat(np.r_[0, run[starts[1:] - 1]], np.diff(np.r_[starts, idx.size]))
        return int(np.abs(run - offset).max())

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(f"n={self.n} m={self.m}\n")
        for i, d in zip(self.indices.tolist(), self.deltas.tolist()):
            out.write(f"{i}\t{d}\n")
        return out.getvalue()

    def write(self, path) -> None:
        atomic_write_text(path, self.to_text())

    @classmethod
    def parse(cls, text: str) -> StreamFile:
        header = None
        indices: list[int] = []
        deltas: list[int] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = _parse_header(line, lineno)
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise StreamFormatError(lineno, f"expected 'index<TAB>delta', got {raw!r}")
            try:
                i, d = int(parts[0]), int(parts[1])
            except ValueError:
                raise StreamFormatError(lineno, f"non-integer field in {raw!r}") from None
            if not 0 <= i < header[0]:
                raise StreamFormatError(lineno, f"index {i} outside universe [0, {header[0]})")
            indices.append(i)
            deltas.append(d)
        if header is None:
            raise StreamFormatError(0, "missing 'n=<N> m=<M>' header")
        stream = cls(header[0], header[1], np.array(indices, dtype=np.int64), np.array(deltas, dtype=np.int64))
        peak = stream.max_running_magnitude()
        if peak > stream.m:
            raise ValueError(f"running magnitude {peak} exceeds declared bound m={stream.m}")
        return stream

    @classmethod
    def read(cls, path) -> StreamFile:
        return cls.parse(Path(path).read_text())


def _parse_header(line: str, lineno: int) -> tuple[int, int]:
    fields = dict(tok.split("=", 1) for tok in line.split() if "=" in tok)
    if set(fields) != {"n", "m"} or len(line.split()) != 2:
        raise StreamFormatError(lineno, f"expected header 'n=<N> m=<M>', got {line!r}")
    try:
        return int(fields["n"]), int(fields["m"])
    except ValueError:
        raise StreamFormatError(lineno, f"non-integer header value in {line!r}") from None


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def synthetic_vector(n: int, k: int, seed: int) -> np.ndarray:
    """``k`` heavy values uniform in [10^4, 10^5] at random positions, the rest in [1, 100]."""
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= k < n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    x = rng.integers(LIGHT_RANGE[0], LIGHT_RANGE[1] + 1, size=n, dtype=np.int64)
    heavy = rng.choice(n, size=k, replace=False)
    x[heavy] = rng.integers(HEAVY_RANGE[0], HEAVY_RANGE[1] + 1, size=k, dtype=np.int64)
    return x


def gen_synthetic(n: int, k: int, seed: int) -> StreamFile:
    """Insert-only stream of :func:`synthetic_vector`, one update per coordinate."""
    x = synthetic_vector(n, k, seed)
    return StreamFile(n, HEAVY_RANGE[1] if k else LIGHT_RANGE[1], np.arange(n, dtype=np.int64), x)


def ingest_keycounts(path) -> tuple[StreamFile, dict[str, int]]:
    """Read a key-occurrence file into a stream over dense coordinate ids.

    A tab-separated line is a ``key<TAB>count`` pair, and so is a two-token
    line whose second token is an integer. Any other line lists key
    occurrences separated by whitespace. Ids follow first appearance.
    """
    ids: dict[str, int] = {}
    counts: list[int] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if "\t" in line:
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0]:
                    raise StreamFormatError(lineno, f"expected 'key<TAB>count', got {line!r}")
                pairs = [(parts[0], _count(parts[1], lineno))]
            else:
                tokens = line.split()
                if len(tokens) == 2 and _is_int(tokens[1]):
                    pairs = [(tokens[0], _count(tokens[1], lineno))]
                else:
                    pairs = [(tok, 1) for tok in tokens]
            for key, c in pairs:
                if key not in ids:
                    ids[key] = len(ids)
                    counts.append(0)
                counts[ids[key]] += c
    n = len(ids)
    nz = [(i, c) for i, c in enumerate(counts) if c]
    stream = StreamFile(
        n, max(counts, default=0),
        np.array([i for i, _ in nz], dtype=np.int64), np.array([c for _, c in nz], dtype=np.int64),
    )
    return stream, ids


def _is_int(tok: str) -> bool:
    try:
        int(tok)
    except ValueError:
        return False
    return True


def _count(tok: str, lineno: int) -> int:
    try:
        c = int(tok)
    except ValueError:
        raise StreamFormatError(lineno, f"count {tok!r} is not an integer") from None
    if c < 0:
        raise StreamFormatError(lineno, f"negative count {c}")
    return c


def write_mapping(path, ids: dict[str, int]) -> None:
    lines = "".join(f"{i}\t{key}\n" for key, i in sorted(ids.items(), key=lambda kv: kv[1]))
    atomic_write_text(path, lines)
