"""Trajectory containers and the dataset CSV format.

A dataset is an ordered list of contiguous segments; each sample carries an
input vector u_k, an output y_k, optionally the true mode z_k (1-based), a
split tag and its global time index.  The CSV layout is

    k,segment,split,u1..uq,y[,z]

with floats written at 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Segment", "TrajectoryDataset", "SPLITS"]

SPLITS = ("train", "validation", "test")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class Segment:
    """One contiguous run of samples sharing a split tag."""

    u: np.ndarray
    y: np.ndarray
    start: int = 0
    split: str = "train"
    true_modes: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.u = np.atleast_2d(np.asarray(self.u, dtype=np.float64))
        if self.u.shape[0] == 1 and self.u.shape[1] > 1 and np.ndim(self.y) == 1:
            # accept (q, L) or 1-d inputs laid out along the sample axis
            if self.u.shape[1] == len(np.asarray(self.y)):
                self.u = self.u.T
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError("u and y must have the same number of samples")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.true_modes is not None:
            self.true_modes = np.asarray(self.true_modes, dtype=np.int64)
            if self.true_modes.shape != self.y.shape:
                raise ValueError("true_modes must align with samples")
            if np.any(self.true_modes < 1):
                raise ValueError("true modes are 1-based")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.u.shape[1]


@dataclass
class TrajectoryDataset:
    """Ordered collection of segments, possibly spanning several splits."""

    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self) -> None:
        qs = {seg.q for seg in self.segments}
        if len(qs) > 1:
            raise ValueError("all segments must share the input dimension")

    @property
    def q(self) -> int:
        if not self.segments:
            raise ValueError("empty dataset")
        return self.segments[0].q

    @property
    def n_samples(self) -> int:
        return sum(len(seg) for seg in self.segments)

    @property
    def has_true_modes(self) -> bool:
        return all(seg.true_modes is not None for seg in self.segments)

    def segments_for(self, split: str) -> list[Segment]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return [seg for seg in self.segments if seg.split == split]

    def to_csv(self, path) -> None:
        if not self.segments:
            raise ValueError("empty dataset")
        q = self.q
        with_z = self.has_true_modes
        header = ["k", "segment", "split"] + [f"u{j + 1}" for j in range(q)] + ["y"]
        if with_z:
            header.append("z")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, seg in enumerate(self.segments):
                for local in range(len(seg)):
                    row = [seg.start + local, i, seg.split]
                    row += [_fmt(v) for v in seg.u[local]]
                    row.append(_fmt(seg.y[local]))
                    if with_z:
                        row.append(int(seg.true_modes[local]))
                    writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "TrajectoryDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["k", "segment", "split"]:
                raise ValueError(f"{path}: unexpected dataset header {header[:3]}")
            u_cols = [i for i, name in enumerate(header) if name.startswith("u")]
            y_col = header.index("y")
            z_col = header.index("z") if "z" in header else None
            rows = list(reader)
        if not rows:
            raise ValueError(f"{path}: no samples")
        segments: list[Segment] = []
        current: list[list[str]] = []

        def flush(chunk: list[list[str]]) -> None:
            u = np.array([[float(r[i]) for i in u_cols] for r in chunk])
            y = np.array([float(r[y_col]) for r in chunk])
            z = None
            if z_col is not None:
                z = np.array([int(r[z_col]) for r in chunk], dtype=np.int64)
            segments.append(
                Segment(u=u, y=y, start=int(chunk[0][0]), split=chunk[0][2], true_modes=z)
            )

        for row in rows:
            if current and row[1] != current[-1][1]:
                flush(current)
                current = []
            current.append(row)
        flush(current)
        return cls(segments=segments)

    def split(self, train: int, val: int, test: int, batch_len: int) -> "TrajectoryDataset":
        """Tag the leading samples train/validation/test and cut mini-batches.

        The first ``train`` samples become contiguous training segments of
        ``batch_len`` (a shorter trailing batch is kept with a warning), the
        next ``val`` samples one validation segment and the last ``test``
        samples one test segment.  Samples beyond train+val+test are dropped.
        """
        if batch_len < 1:
            raise ValueError("batch_len must be >= 1")
        for name, v in (("train", train), ("val", val), ("test", test)):
            if v < 0:
                raise ValueError(f"{name} count must be >= 0")
        if train < 1:
            raise ValueError("train count must be >= 1")
        total = train + val + test
        if total > self.n_samples:
            raise ValueError(
                f"requested {total} samples but dataset has {self.n_samples}"
            )
        u = np.vstack([seg.u for seg in self.segments])
        y = np.concatenate([seg.y for seg in self.segments])
        z = None
        if self.has_true_modes:
            z = np.concatenate([seg.true_modes for seg in self.segments])

        def make(a: int, b: int, split: str) -> Segment:
            return Segment(
                u=u[a:b],
                y=y[a:b],
                start=a,
                split=split,
                true_modes=None if z is None else z[a:b],
            )

        segments = []
        if train % batch_len != 0:
            warnings.warn(
                f"train size {train} is not a multiple of batch_len {batch_len}; "
                "last training batch is shorter",
                stacklevel=2,
            )
        for a in range(0, train, batch_len):
            segments.append(make(a, min(a + batch_len, train), "train"))
        if val:
            segments.append(make(train, train + val, "validation"))
        if test:
            segments.append(make(train + val, train + val + test, "test"))
        return TrajectoryDataset(segments=segments)
