"""CSV and JSON I/O for measurement records, noise streams, grid
distributions and trajectory snapshots.

Every CSV starts with a comment block of '# key: value' lines carrying
provenance (at minimum the config hash for harness outputs).  Floats are
written with shortest round-trip representation, so write -> read -> write
is byte-stable and replaying a record reproduces a run bit for bit.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import IoError


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_table(path: str, columns: list[str], rows, meta: dict | None = None) -> None:
    """Write a commented-header CSV table."""
    try:
        with open(path, "w", newline="") as fh:
            for key, value in (meta or {}).items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_table(path: str) -> tuple[dict, list[str], np.ndarray]:
    """Read a commented-header CSV table -> (meta, columns, float data)."""
    meta: dict = {}
    try:
        with open(path, newline="") as fh:
            rows = []
            header: list[str] | None = None
            for line in fh:
                if line.startswith("#"):
                    body = line[1:].strip()
                    if ":" in body:
                        key, _, value = body.partition(":")
                        meta[key.strip()] = value.strip()
                    continue
                if not line.strip():
                    continue
                parts = next(csv.reader([line]))
                if header is None:
                    header = parts
                else:
                    rows.append([float(x) for x in parts])
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise IoError(f"bad number in {path}: {exc}") from exc
    if header is None:
        raise IoError(f"{path} has no header row")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return meta, header, data


def column(header: list[str], data: np.ndarray, name: str, path: str = "<table>"
           ) -> np.ndarray:
    if name not in header:
        raise IoError(f"{path} is missing column {name!r}; has {header}")
    return data[:, header.index(name)]


def write_flag_record(path: str, flags: np.ndarray, dt: float,
                      meta: dict | None = None) -> None:
    """Avalanche/jump record: (step_index, dN)."""
    meta = {"dt": repr(float(dt)), "kind": "flag_record", **(meta or {})}
    rows = ((i, int(f)) for i, f in enumerate(np.asarray(flags)))
    write_table(path, ["step_index", "dN"], rows, meta)


def read_flag_record(path: str) -> tuple[np.ndarray, float, dict]:
    meta, header, data = read_table(path)
    flags = column(header, data, "dN", path).astype(np.int64)
    return flags, float(meta.get("dt", "nan")), meta


def write_sample_record(path: str, values: np.ndarray, dt: float,
                        name: str = "V", meta: dict | None = None) -> None:
    """Continuous-output record: (step_index, sample)."""
    meta = {"dt": repr(float(dt)), "kind": "sample_record", **(meta or {})}
    rows = ((i, v) for i, v in enumerate(np.asarray(values, dtype=float)))
    write_table(path, ["step_index", name], rows, meta)


def read_sample_record(path: str, name: str = "V"
                       ) -> tuple[np.ndarray, float, dict]:
    meta, header, data = read_table(path)
    values = column(header, data, name, path)
    return values, float(meta.get("dt", "nan")), meta


def write_noise_stream(path: str, times: np.ndarray, values: np.ndarray,
                       kind: str, meta: dict | None = None) -> None:
    """Noise stream for replay: (t, dW) or (t, dN)."""
    if kind not in ("dW", "dN"):
        raise IoError(f"noise kind must be dW or dN, got {kind!r}")
    meta = {"kind": f"noise_{kind}", **(meta or {})}
    rows = zip(np.asarray(times, dtype=float), np.asarray(values))
    write_table(path, ["t", kind], rows, meta)


def read_noise_stream(path: str, kind: str) -> tuple[np.ndarray, np.ndarray]:
    meta, header, data = read_table(path)
    return column(header, data, "t", path), column(header, data, kind, path)


def write_grid_csv(path: str, x: np.ndarray, p: np.ndarray,
                   meta: dict | None = None) -> None:
    write_table(path, ["x", "p"], zip(x, p), meta)


def read_grid_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    _, header, data = read_table(path)
    return column(header, data, "x", path), column(header, data, "p", path)


def write_apd_snapshots_json(path: str, snapshots: list[dict],
                             meta: dict | None = None) -> None:
    """Supersystem snapshots: {t, tr0, tr1, tr2, bloch} per entry."""
    try:
        with open(path, "w") as fh:
            json.dump({"meta": meta or {}, "snapshots": snapshots}, fh, indent=1)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_apd_snapshots_json(path: str) -> tuple[dict, list[dict]]:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"bad JSON in {path}: {exc}") from exc
    return obj.get("meta", {}), obj["snapshots"]


def write_receiver_snapshot_csv(path: str, t: float, v: np.ndarray,
                                rho: np.ndarray, meta: dict | None = None) -> None:
    """Voltage-grid snapshot: per cell (v, weight, bloch of the normalized
    cell state when the system is two-level)."""
    weights = np.real(np.einsum("kii->k", rho))
    meta = {"t": repr(float(t)), **(meta or {})}
    if rho.shape[1] == 2:
        safe = np.where(np.abs(weights) > 1e-300, weights, 1.0)
        bx = 2.0 * np.real(rho[:, 1, 0]) / safe
        by = 2.0 * np.imag(rho[:, 1, 0]) / safe
        bz = np.real(rho[:, 0, 0] - rho[:, 1, 1]) / safe
        write_table(path, ["v", "weight", "bloch_x", "bloch_y", "bloch_z"],
                    zip(v, weights, bx, by, bz), meta)
    else:
        write_table(path, ["v", "weight"], zip(v, weights), meta)


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create directory {path}: {exc}") from exc
    return path
