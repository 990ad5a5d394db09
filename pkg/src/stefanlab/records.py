"""Run records and their on-disk layout.

A run directory holds ``meta.json``, one ``t_<index>.csv`` per snapshot
(coordinates, ``u``, ``v``) and ``extrema.csv`` with one row per step. Floats
are written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .operator import Grid

__all__ = ["RunRecord", "write_field_csv", "read_field_csv", "snapshot_name", "EXTREMA_COLUMNS"]

EXTREMA_COLUMNS = ("step", "t", "u_min", "u_max", "v_min", "v_max")


def snapshot_name(index: int) -> str:
    return f"t_{index:04d}.csv"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field_csv(path, grid: Grid, columns: dict) -> None:
    """Write node coordinates followed by the named value columns."""
    coords = grid.coords.reshape(grid.size, grid.dim)
    names = ["x", "y"][: grid.dim] + list(columns)
    values = [np.asarray(c, dtype=float) for c in columns.values()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(grid.size):
            w.writerow([_fmt(c) for c in coords[i]] + [_fmt(v[i]) for v in values])


def read_field_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    return {name: body[:, j] for j, name in enumerate(header)}


@dataclass
class RunRecord:
    grid: Grid
    times: np.ndarray  # (S,)
    u: np.ndarray  # (S, N)
    v: np.ndarray  # (S, N)
    extrema: np.ndarray  # (steps + 1, 6), columns EXTREMA_COLUMNS
    dt: float
    steps_per_snapshot: int
    meta: dict = field(default_factory=dict)
    newton_iterations: list = field(default_factory=list)

    @property
    def final_u(self) -> np.ndarray:
        return self.u[-1]

    @property
    def linf_bound(self) -> float:
        """``max_t ||u(t)||_inf`` over every step, not just snapshots."""
        return float(np.max(np.abs(self.extrema[:, 2:4])))

    def time_weights(self) -> np.ndarray:
        """Backward time weight of each snapshot (0 for the first)."""
        return np.diff(self.times, prepend=self.times[0])

    def snapshot_index(self, t: float, tol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return i

    # ---- persistence
    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_meta(d, self.meta)
        for k in range(len(self.times)):
            write_field_csv(d / snapshot_name(k), self.grid, {"u": self.u[k], "v": self.v[k]})
        write_extrema(d, self.extrema)
        return d

    @classmethod
    def load(cls, directory) -> "RunRecord":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        g = meta.get("grid") or meta["problem"]["grid"]
        grid = Grid.box(g["lower"], g["upper"], g["shape"])
        S = len(meta["snapshot_times"])
        us, vs = [], []
        for k in range(S):
            p = d / snapshot_name(k)
            if not p.exists():
                break
            data = read_field_csv(p)
            us.append(data["u"])
            vs.append(data["v"])
        ext = read_extrema(d)
        return cls(
            grid=grid,
            times=np.asarray(meta["snapshot_times"][: len(us)], dtype=float),
            u=np.array(us),
            v=np.array(vs),
            extrema=ext,
            dt=float(meta["dt"]),
            steps_per_snapshot=int(meta["steps_per_snapshot"]),
            meta=meta,
        )


def write_meta(directory: Path, meta: dict) -> None:
    (Path(directory) / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_extrema(directory: Path, extrema: np.ndarray) -> None:
    with open(Path(directory) / "extrema.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXTREMA_COLUMNS)
        for row in extrema:
            w.writerow([str(int(row[0]))] + [_fmt(x) for x in row[1:]])


def read_extrema(directory: Path) -> np.ndarray:
    p = Path(directory) / "extrema.csv"
    if not p.exists():
        return np.zeros((0, len(EXTREMA_COLUMNS)))
    with open(p, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array(rows, dtype=float).reshape(len(rows), len(EXTREMA_COLUMNS))
