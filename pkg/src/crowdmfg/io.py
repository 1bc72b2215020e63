"""Artifact emission and recovery: long-format field CSVs and JSON reports.

Every float is written with ``repr``, whose shortest round-trip guarantee
makes the text artifacts bit-exact: reading a CSV back and recomputing a
residual reproduces the JSON entry to the last ulp.  Field files hold one
(t, x[, y], value) row per space-time sample, cell quantities at cell
centers and face quantities at face positions.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .grids import Grid, ScalarField, SpaceTimeField, TimeGrid


def _fmt(v) -> str:
    return repr(float(v))


def coordinate_names(dim: int) -> list[str]:
    return ["x", "y"][:dim]


def write_field_csv(path: str, grid: Grid, times, slices,
                    face_axis: int | None = None) -> None:
    """One long-format file for a time series of field slices.

    ``slices`` is a sequence of arrays, one per entry of ``times``, each of
    cell shape (or of face shape along ``face_axis`` for staggered data).
    """
    axes = [grid.faces(a) if a == face_axis else grid.centers(a)
            for a in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = [m.ravel() for m in mesh]
    with open(path, "w") as f:
        f.write(",".join(["t"] + coordinate_names(grid.dim) + ["value"]) + "\n")
        for t, arr in zip(times, slices):
            vals = np.asarray(arr).ravel()
            if vals.shape != coords[0].shape:
                raise ValueError(f"slice shape mismatch in {path}")
            ts = _fmt(t)
            for i in range(len(vals)):
                cells = [ts] + [_fmt(c[i]) for c in coords] + [_fmt(vals[i])]
                f.write(",".join(cells) + "\n")


def read_field_csv(path: str) -> tuple[np.ndarray, list[np.ndarray]]:
    """Recover (times, flat value arrays per time) from a long-format file.

    Values come back in the exact order they were written, so reshaping to
    the grid (or face) shape is the caller's one-liner.
    """
    times: list[float] = []
    blocks: list[list[float]] = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        vcol = header.index("value")
        tcol = header.index("t")
        last_t: str | None = None
        for line in f:
            parts = line.rstrip("\n").split(",")
            if parts[tcol] != last_t:
                last_t = parts[tcol]
                times.append(float(last_t))
                blocks.append([])
            blocks[-1].append(float(parts[vcol]))
    return np.array(times), [np.array(b) for b in blocks]


def read_space_time(path: str, grid: Grid, tg: TimeGrid) -> SpaceTimeField:
    """Read a cell-field trajectory written by write_field_csv."""
    times, blocks = read_field_csv(path)
    if len(blocks) != tg.steps + 1:
        raise ValueError(f"{path}: expected {tg.steps + 1} time slices, got {len(blocks)}")
    entries = [ScalarField(grid, b.reshape(grid.shape)) for b in blocks]
    return SpaceTimeField(tg, entries)


def read_face_series(path: str, grid: Grid, axis: int) -> list[np.ndarray]:
    times, blocks = read_field_csv(path)
    return [b.reshape(grid.face_shape(axis)) for b in blocks]


def write_space_time(path: str, traj: SpaceTimeField) -> None:
    tg = traj.tg
    write_field_csv(path, traj.grid, [tg.nodes[k] for k in range(len(traj))],
                    [e.values for e in traj])


def write_face_series(path: str, grid: Grid, tg: TimeGrid, comps, axis: int,
                      times=None) -> None:
    """Write one axis of a face-field time series (velocity, effort, momentum)."""
    if times is None:
        times = [tg.nodes[k] for k in range(len(comps))]
    slices = []
    for c in comps:
        arr = getattr(c, "components", c)
        slices.append(arr[axis] if isinstance(arr, (list, tuple)) else arr)
    write_field_csv(path, grid, times, slices, face_axis=axis)


def sanitize(obj):
    """Make a report JSON-serializable without losing numpy scalars."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(path: str, report: dict) -> None:
    with open(path, "w") as f:
        json.dump(sanitize(report), f, indent=2, sort_keys=True)
        f.write("\n")


def read_report(path: str) -> dict:
    with open(path) as f:
        return json.load(f)


def write_summary(path: str, lines: list[str]) -> None:
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def ensure_dirs(out_dir: str) -> str:
    fields = os.path.join(out_dir, "fields")
    os.makedirs(fields, exist_ok=True)
    return fields
