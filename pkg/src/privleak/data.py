"""Datasets carrying a consensual label y and a private label s.

The synthetic generator places the consensual signal on coordinates [0, D)
and the private signal on [D, D+K); the entanglement knob rho additionally
mixes a fraction of the private signal into the consensual coordinates, which
is what makes scrubbing it from useful features non-trivial. With rho = 0 the
two signals live in disjoint coordinates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from privleak.errors import ConfigError, ContractError, ParseError
from privleak.rng import Stream


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix xs with per-example consensual (ys) and private (ss)
    integer labels, plus the class counts."""

    xs: np.ndarray
    ys: np.ndarray
    ss: np.ndarray
    num_consensual: int
    num_private: int

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        ys = np.ascontiguousarray(self.ys, dtype=np.int64)
        ss = np.ascontiguousarray(self.ss, dtype=np.int64)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "ss", ss)
        if xs.ndim != 2:
            raise ContractError("xs must be a 2-d array")
        n = xs.shape[0]
        if ys.shape != (n,) or ss.shape != (n,):
            raise ContractError("label vectors must match the number of rows")
        if self.num_consensual < 2 or self.num_private < 2:
            raise ContractError("need at least 2 classes of each kind")
        if not np.isfinite(xs).all():
            raise ContractError("features must be finite")
        if n:
            if ys.min() < 0 or ys.max() >= self.num_consensual:
                raise ContractError("consensual label out of range")
            if ss.min() < 0 or ss.max() >= self.num_private:
                raise ContractError("private label out of range")

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def fingerprint(self) -> str:
        """sha256 over shape, class counts and raw bytes."""
        h = hashlib.sha256()
        h.update(f"{self.xs.shape} {self.num_consensual} {self.num_private}".encode())
        h.update(self.xs.tobytes())
        h.update(self.ys.tobytes())
        h.update(self.ss.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic generator.

    alpha_y and alpha_s scale the consensual and private signal vectors,
    noise is the per-coordinate gaussian sigma, entanglement is the fraction
    of the private signal mixed into the consensual coordinates.
    """

    d: int
    num_consensual: int
    num_private: int
    n_train: int
    n_test: int
    alpha_y: float = 1.5
    alpha_s: float = 1.0
    noise: float = 0.5
    entanglement: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_consensual < 2 or self.num_private < 2:
            raise ConfigError("need at least 2 classes of each kind")
        if self.d < self.num_consensual + self.num_private:
            raise ConfigError(
                f"d = {self.d} is too small; the signal subspaces need "
                f"{self.num_consensual + self.num_private} coordinates")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("split sizes must be non-negative")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if not (0.0 <= self.entanglement <= 1.0):
            raise ConfigError("entanglement must lie in [0, 1]")


def _draw_split(spec: SyntheticSpec, stream: Stream, n: int) -> LabeledDataset:
    d, big_d, big_k = spec.d, spec.num_consensual, spec.num_private
    ys = stream.integers(n, big_d)
    ss = stream.integers(n, big_k)
    noise = stream.normal((n, d))
    xs = np.zeros((n, d), dtype=np.float64)
    rows = np.arange(n)
    xs[rows, ys] += spec.alpha_y
    xs[rows, big_d + ss] += spec.alpha_s
    # the entangled copy of the private signal lands inside the consensual
    # subspace, one fixed coordinate per private class
    xs[rows, ss % big_d] += spec.entanglement * spec.alpha_s
    xs += spec.noise * noise
    return LabeledDataset(xs, ys, ss, big_d, big_k)


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Build (train, test) splits from split-specific substreams of the seed."""
    root = Stream(spec.seed)
    train = _draw_split(spec, root.substream("train"), spec.n_train)
    test = _draw_split(spec, root.substream("test"), spec.n_test)
    return train, test


def save_csv(dataset: LabeledDataset, path) -> None:
    """Write x0..x{d-1},y,s rows; float cells round-trip exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = [f"x{i}" for i in range(dataset.dim)] + ["y", "s"]
        fh.write(",".join(cols) + "\n")
        for row, y, s in zip(dataset.xs, dataset.ys, dataset.ss):
            cells = [repr(float(v)) for v in row]
            cells.append(str(int(y)))
            cells.append(str(int(s)))
            fh.write(",".join(cells) + "\n")


def load_csv(path, num_consensual: int | None = None,
             num_private: int | None = None) -> LabeledDataset:
    """Read a dataset CSV; class counts are inferred as max label + 1 unless
    given. Malformed content raises ParseError naming the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 3 or header[-2:] != ["y", "s"]:
        raise ParseError(f"{path} line 1: header must end with y,s")
    d = len(header) - 2
    for i, name in enumerate(header[:d]):
        if name != f"x{i}":
            raise ParseError(f"{path} line 1: expected column x{i}, got {name!r}")

    xs = np.empty((len(lines) - 1, d), dtype=np.float64)
    ys = np.empty(len(lines) - 1, dtype=np.int64)
    ss = np.empty(len(lines) - 1, dtype=np.int64)
    for idx, line in enumerate(lines[1:]):
        lineno = idx + 2
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ParseError(f"{path} line {lineno}: expected {d + 2} cells, got {len(cells)}")
        try:
            xs[idx] = [float(c) for c in cells[:d]]
        except ValueError as exc:
            raise ParseError(f"{path} line {lineno}: bad feature value ({exc})") from exc
        try:
            ys[idx] = int(cells[d])
            ss[idx] = int(cells[d + 1])
        except ValueError as exc:
            raise ParseError(f"{path} line {lineno}: bad label ({exc})") from exc
        if ys[idx] < 0 or ss[idx] < 0:
            raise ParseError(f"{path} line {lineno}: labels must be non-negative")
        if not np.isfinite(xs[idx]).all():
            raise ParseError(f"{path} line {lineno}: features must be finite")

    inferred_d = int(ys.max()) + 1 if len(ys) else 2
    inferred_k = int(ss.max()) + 1 if len(ss) else 2
    big_d = num_consensual if num_consensual is not None else max(inferred_d, 2)
    big_k = num_private if num_private is not None else max(inferred_k, 2)
    if len(ys) and (ys.max() >= big_d or ss.max() >= big_k):
        bad = int(np.argmax((ys >= big_d) | (ss >= big_k)))
        raise ParseError(f"{path} line {bad + 2}: label out of range for the declared class counts")
    return LabeledDataset(xs, ys, ss, big_d, big_k)


def index_batches(n: int, batch_size: int, stream: Stream) -> list[np.ndarray]:
    """One epoch of index batches: a fresh permutation of range(n) cut into
    batch_size chunks, final short chunk kept."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be positive, got {batch_size}")
    order = stream.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def batches(dataset: LabeledDataset, batch_size: int, stream: Stream):
    """One epoch of (xs, ys, ss) batches drawn through the stream."""
    out = []
    for idx in index_batches(len(dataset), batch_size, stream):
        out.append((dataset.xs[idx], dataset.ys[idx], dataset.ss[idx]))
    return out
