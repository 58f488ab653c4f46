"""Time grids and sample paths, with CSV/JSON export."""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UsageError

_RATIO_RTOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time points, ``kind`` is ``"uniform"`` or ``"geometric"``."""

    points: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        pts = _frozen(self.points)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size == 0:
            raise UsageError("grid needs a non-empty 1-D array of points")
        if not np.all(np.isfinite(pts)):
            raise UsageError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise UsageError("grid points must be strictly increasing")
        if self.kind == "uniform":
            if pts[0] < 0:
                raise DomainError("uniform grid must start at t >= 0")
            if pts.size > 2:
                d = np.diff(pts)
                if np.max(np.abs(d - d.mean())) > 1e-9 * d.mean():
                    raise UsageError("uniform grid has unequal spacing")
        elif self.kind == "geometric":
            if pts[0] <= 0:
                raise DomainError("geometric grid needs all points > 0")
            if pts.size > 2:
                r = pts[1:] / pts[:-1]
                if np.max(np.abs(r / r[0] - 1.0)) > _RATIO_RTOL:
                    raise UsageError("geometric grid ratio is not constant")
        elif self.kind != "custom":
            raise UsageError(f"unknown grid kind {self.kind!r}")

    # constructors ---------------------------------------------------------

    @classmethod
    def uniform(cls, start, stop, n):
        """``n`` intervals, ``n + 1`` points on ``[start, stop]``."""
        if n < 1:
            raise UsageError("uniform grid needs n >= 1")
        return cls(np.linspace(start, stop, n + 1), "uniform")

    @classmethod
    def geometric(cls, start, stop, n):
        """``n`` intervals with constant ratio ``(stop/start)**(1/n)``.

        Points are ``start * ratio**k`` with the last point pinned to
        ``stop`` exactly, so grids with the same ends and ``n`` doubled
        contain the coarser grid at every even index.
        """
        if not start > 0:
            raise DomainError("geometric grid needs start > 0")
        if n < 1:
            raise UsageError("geometric grid needs n >= 1")
        k = np.arange(n + 1)
        log_ratio = (math.log(stop) - math.log(start)) / n
        pts = np.exp(math.log(start) + k * log_ratio)
        pts[0] = start
        pts[-1] = stop
        return cls(pts, "geometric")

    @classmethod
    def custom(cls, points):
        return cls(points, "custom")

    # helpers --------------------------------------------------------------

    def __len__(self):
        return self.points.size

    @property
    def start(self):
        return float(self.points[0])

    @property
    def stop(self):
        return float(self.points[-1])

    def index_of(self, t, rtol=1e-10):
        """Index of the grid point equal to ``t`` (relative tolerance ``rtol``)."""
        i = int(np.argmin(np.abs(self.points - t)))
        if abs(self.points[i] - t) > rtol * max(abs(t), 1e-300) and self.points[i] != t:
            raise UsageError(f"time {t!r} is not on the grid")
        return i

    def subgrid(self, step):
        """Every ``step``-th point, keeping the last one (nested coarsening)."""
        if (len(self) - 1) % step:
            raise UsageError("grid size is not compatible with the coarsening step")
        return TimeGrid(self.points[::step], self.kind)

    def same_as(self, other):
        return self is other or (len(self) == len(other) and np.array_equal(self.points, other.points))

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    seed: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = _frozen(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != self.grid.points.shape:
            raise UsageError("path values and grid points differ in length")
        if not np.all(np.isfinite(vals)):
            raise DomainError(f"path {self.label!r} has non-finite values")

    @property
    def t(self):
        return self.grid.points

    def at(self, t):
        return float(self.values[self.grid.index_of(t)])

    def with_values(self, values, label=None, **meta):
        return SamplePath(self.grid, values, self.seed, label if label is not None else self.label,
                          {**self.meta, **meta})

    # export -----------------------------------------------------------------

    def to_csv(self, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.grid.points, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def to_dict(self):
        return {
            "label": self.label,
            "seed": int(self.seed),
            "grid": self.grid.to_dict(),
            "values": self.values.tolist(),
            **{k: v for k, v in self.meta.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        grid = TimeGrid(d["grid"]["points"], d["grid"].get("kind", "custom"))
        meta = {k: v for k, v in d.items() if k not in ("label", "seed", "grid", "values")}
        return cls(grid, d["values"], int(d.get("seed", 0)), d.get("label", ""), meta)

    @classmethod
    def from_csv(cls, text, label="", seed=0):
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if rows[0] != ["t", "value"]:
            raise UsageError("CSV path needs the header t,value")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(TimeGrid.custom(data[:, 0]), data[:, 1], seed, label)


def matrix_to_csv(grid, matrix):
    """Covariance-style matrix with the grid points as row/column labels."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [repr(float(t)) for t in grid.points])
    for t, row in zip(grid.points, matrix):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return buf.getvalue()
