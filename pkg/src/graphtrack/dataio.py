"""CSV and JSON readers/writers for graphs, signals, and schedules."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InconsistentNodeCount, ParseError
from .graphs import Graph
from .schedules import SamplingSchedule


def load_edges_csv(path: str | Path) -> Graph:
    """Weighted edge list with header u,v,w. Node ids may be sparse; they are
    mapped onto 0..N-1 in sorted order."""
    path = Path(path)
    rows: list[tuple[int, int, float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["u", "v", "w"]:
            raise ParseError(f"{path}: expected header u,v,w, got {header}")
        for ln, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise ParseError(f"{path}:{ln}: need three columns")
            try:
                u, v, w = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from exc
            rows.append((u, v, w))
    if not rows:
        raise ParseError(f"{path}: no edges")
    ids = sorted({u for u, _, _ in rows} | {v for _, v, _ in rows})
    remap = {node: i for i, node in enumerate(ids)}
    return Graph.from_edges(len(ids), [(remap[u], remap[v], w) for u, v, w in rows])


def write_edges_csv(path: str | Path, g: Graph) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "v", "w"])
        for u, v, w in g.edges:
            writer.writerow([u, v, repr(w)])


def load_coords_csv(path: str | Path) -> np.ndarray:
    """Point coordinates with header id,x1,...,xd; rows returned sorted by id."""
    path = Path(path)
    entries: list[tuple[int, list[float]]] = []
    dim = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "id":
            raise ParseError(f"{path}: expected header id,x1,...,xd")
        if len(header) > 1:
            dim = len(header) - 1
        for ln, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ident = int(row[0])
                coords = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from exc
            if dim is None:
                dim = len(coords)
            elif len(coords) != dim:
                raise ParseError(f"{path}:{ln}: expected {dim} coordinates, got {len(coords)}")
            entries.append((ident, coords))
    if not entries:
        raise ParseError(f"{path}: no points")
    ids = [ident for ident, _ in entries]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate point ids")
    entries.sort(key=lambda e: e[0])
    return np.array([coords for _, coords in entries], dtype=float)


def load_signals_csv(path: str | Path, expected_nodes: int | None = None) -> np.ndarray:
    """Signal recordings, one row per recording, one column per node.

    The header row is skipped; raises InconsistentNodeCount when the column
    count disagrees with the graph.
    """
    path = Path(path)
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        width = len(header)
        for ln, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise ParseError(f"{path}:{ln}: expected {width} columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no recordings")
    arr = np.array(rows, dtype=float)
    if expected_nodes is not None and arr.shape[1] != expected_nodes:
        raise InconsistentNodeCount(f"{path}: {arr.shape[1]} columns, graph has {expected_nodes} nodes")
    return arr


def write_signals_csv(path: str | Path, signals: np.ndarray, prefix: str = "n") -> None:
    sig = np.atleast_2d(np.asarray(signals, dtype=float))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}{i}" for i in range(sig.shape[1])])
        for row in sig:
            writer.writerow([repr(float(v)) for v in row])


def write_schedule_json(path: str | Path, sched: SamplingSchedule) -> None:
    Path(path).write_text(json.dumps(sched.to_payload(), indent=2, sort_keys=True) + "\n")


def load_schedule_json(path: str | Path) -> SamplingSchedule:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return SamplingSchedule.from_payload(payload)


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
