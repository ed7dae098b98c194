"""CSV tables, versioned JSON model envelopes and run manifests.

Floats are written with ``repr`` (shortest round-trip form) so files are
byte-stable across runs and re-read exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import RiskLabel
from .features import FEATURE_COLUMNS, FeatureDataset, PedestrianTrack

FORMAT = "prlp-model"
FORMAT_VERSION = 1

TRAJECTORY_HEADER = ("traj_id", "frame", "x_m", "y_m")
ENCOUNTER_HEADER = ("traj_id", "scenario", "behavior")
FEATURE_HEADER = ("traj_id", "frame") + FEATURE_COLUMNS
ASSIGNMENT_HEADER = ("traj_id", "frame", "cluster", "risk")
CRITERIA_HEADER = ("K", "AIC", "BIC", "silhouette")
EVAL_HEADER = ("kernel", "variant", "fold", "accuracy", "preds_per_sec")


class DataError(ValueError):
    """Malformed input file; message carries path and line number."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_rows(path, header: Sequence[str], optional: Sequence[str] = ()) -> tuple[list[str], list[tuple[int, dict]]]:
    """Rows as (line number, {column: text}); the header must start with ``header``."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from e
    with fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file, expected header {','.join(header)}") from None
        head = [h.strip() for h in head]
        n = len(header)
        if tuple(head[:n]) != tuple(header) or any(h not in optional for h in head[n:]):
            raise DataError(f"{path}:1: bad header {','.join(head)!r}, expected {','.join(header)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(head):
                raise DataError(f"{path}:{line}: expected {len(head)} fields, found {len(row)}")
            rows.append((line, dict(zip(head, (c.strip() for c in row)))))
    return head, rows


def _float(path, line, name, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: column {name}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{line}: column {name}: non-finite value {text!r}")
    return v


def _int(path, line, name, text) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{line}: column {name}: not an integer: {text!r}") from None


def _grouped(path, rows, parse):
    """Group rows by traj_id, checking frames run 0, 1, 2, ... within each id."""
    groups: dict[str, list] = {}
    for line, r in rows:
        tid = r["traj_id"]
        if not tid:
            raise DataError(f"{path}:{line}: empty traj_id")
        frame = _int(path, line, "frame", r["frame"])
        g = groups.setdefault(tid, [])
        if frame != len(g):
            raise DataError(f"{path}:{line}: traj {tid}: expected frame {len(g)}, found {frame}")
        g.append(parse(line, r))
    return groups


# ---------------------------------------------------------------- trajectories


def write_trajectories(path, tracks: Sequence[PedestrianTrack]) -> None:
    write_rows(path, TRAJECTORY_HEADER, ((tr.id, k, p[0], p[1]) for tr in tracks for k, p in enumerate(tr.points)))


def read_trajectories(path, frame_rate: float) -> list[PedestrianTrack]:
    _, rows = read_rows(path, TRAJECTORY_HEADER)
    groups = _grouped(path, rows, lambda ln, r: (_float(path, ln, "x_m", r["x_m"]), _float(path, ln, "y_m", r["y_m"])))
    tracks = []
    for tid, pts in groups.items():
        try:
            tracks.append(PedestrianTrack(tid, frame_rate, np.array(pts)))
        except ValueError as e:
            raise DataError(f"{path}: {e}") from None
    if not tracks:
        raise DataError(f"{path}: no trajectories")
    return tracks


def write_encounters(path, encounters) -> None:
    write_rows(path, ENCOUNTER_HEADER, ((e.track.id, e.scenario.value, e.behavior.value) for e in encounters))


def read_encounters(path) -> dict[str, tuple[str, str]]:
    _, rows = read_rows(path, ENCOUNTER_HEADER)
    return {r["traj_id"]: (r["scenario"], r["behavior"]) for _, r in rows}


# ---------------------------------------------------------------- features


def write_features(path, dataset: FeatureDataset, clusters=None, risks=None) -> None:
    header = list(FEATURE_HEADER)
    if clusters is not None:
        header.append("cluster")
    if risks is not None:
        header.append("risk")
    rows = []
    for i, ((tid, k), s) in enumerate(zip(dataset.row_index(), dataset.stacked())):
        row = [tid, k, *s]
        if clusters is not None:
            row.append(int(clusters[i]))
        if risks is not None:
            row.append(RiskLabel(risks[i]).value)
        rows.append(row)
    write_rows(path, header, rows)


def read_features(path):
    """Returns (dataset, clusters or None, risks or None)."""
    head, rows = read_rows(path, FEATURE_HEADER, optional=("cluster", "risk"))

    def parse(line, r):
        vals = [_float(path, line, c, r[c]) for c in FEATURE_COLUMNS]
        cl = _int(path, line, "cluster", r["cluster"]) if "cluster" in r else None
        rk = None
        if "risk" in r:
            try:
                rk = RiskLabel(r["risk"])
            except ValueError:
                raise DataError(f"{path}:{line}: column risk: unknown label {r['risk']!r}") from None
        return vals, cl, rk

    groups = _grouped(path, rows, parse)
    if not groups:
        raise DataError(f"{path}: no feature rows")
    ds = FeatureDataset()
    clusters, risks = [], []
    for tid, items in groups.items():
        ds.append(tid, np.array([v for v, _, _ in items]))
        clusters.extend(c for _, c, _ in items)
        risks.extend(k for _, _, k in items)
    return ds, (np.array(clusters) if "cluster" in head else None), (risks if "risk" in head else None)


def write_assignments(path, row_index, clusters, risks) -> None:
    write_rows(path, ASSIGNMENT_HEADER, ((tid, k, int(c), RiskLabel(r).value) for (tid, k), c, r in zip(row_index, clusters, risks)))


# ---------------------------------------------------------------- models and manifests


def save_model(path, kind: str, payload: dict, meta: dict | None = None) -> None:
    env = {"format": FORMAT, "version": FORMAT_VERSION, "kind": kind, "meta": meta or {}, "model": payload}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(env, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def load_model(path, kind: str) -> dict:
    path = Path(path)
    try:
        env = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
    if not isinstance(env, dict) or env.get("format") != FORMAT:
        raise DataError(f"{path}: not a {FORMAT} file")
    if env.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model version {env.get('version')!r}")
    if env.get("kind") != kind:
        raise DataError(f"{path}: expected a {kind} model, found {env.get('kind')!r}")
    return env["model"]


def write_manifest(path, items: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k} = {fmt(v)}\n" for k, v in items.items()), encoding="utf-8")
