"""JSON-lines track files and deterministic result hashing.

A track file starts with a header record carrying the resolved config hash
and the root seed, followed by one record per time step:

    {"k": 0, "mean": [...], "cov_upper_triangle": [...], "diagnostics": {...}}

Covariances are stored as upper triangles.  All floats are serialized with
Python's shortest-roundtrip repr, so writing the same data twice is
byte-identical and reading it back is lossless.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .vb import EstimateTrack


def plain(obj):
    """Convert numpy containers/scalars into plain JSON-serializable values."""
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()] if obj.ndim else plain(obj.item())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    """SHA-256 of the canonical JSON encoding of a resolved config."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def pack_upper(cov: np.ndarray) -> list:
    cov = np.atleast_2d(cov)
    iu = np.triu_indices(cov.shape[0])
    return cov[iu].tolist()


def unpack_upper(values, n: int) -> np.ndarray:
    cov = np.zeros((n, n))
    iu = np.triu_indices(n)
    cov[iu] = values
    cov = cov + np.triu(cov, 1).T
    return cov


def _split_diagnostics(diagnostics: dict, K: int):
    """Split diagnostics into per-step (length-K leading axis) and track-level."""
    per_step = {}
    track_level = {}
    for key, val in diagnostics.items():
        arr = np.asarray(val) if isinstance(val, (list, np.ndarray)) else None
        if arr is not None and arr.ndim >= 1 and arr.shape[0] == K and K > 0:
            per_step[key] = arr
        else:
            track_level[key] = plain(val)
    return per_step, track_level


def write_track_jsonl(path, track: EstimateTrack, header: dict) -> None:
    path = Path(path)
    K = track.K
    per_step, track_level = _split_diagnostics(track.diagnostics, K)
    head = dict(header)
    head["type"] = "header"
    head["n_x"] = int(track.means.shape[1])
    if track_level:
        head["diagnostics"] = track_level
    lines = [canonical_json(head)]
    for k in range(K):
        rec = {
            "k": k,
            "mean": track.means[k].tolist(),
            "cov_upper_triangle": pack_upper(track.covs[k]),
            "diagnostics": {key: plain(val[k]) for key, val in per_step.items()},
        }
        lines.append(canonical_json(rec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_track_jsonl(path):
    """Read a track file; returns (EstimateTrack, header)."""
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln]
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise ValueError(f"{path} does not start with a header record")
    n_x = int(header["n_x"])
    means, covs, diag_records = [], [], []
    for ln in lines[1:]:
        rec = json.loads(ln)
        means.append(rec["mean"])
        covs.append(unpack_upper(rec["cov_upper_triangle"], n_x))
        diag_records.append(rec.get("diagnostics", {}))
    K = len(means)
    diagnostics = {}
    if K and diag_records[0]:
        for key in diag_records[0]:
            diagnostics[key] = np.asarray([d[key] for d in diag_records])
    for key, val in header.get("diagnostics", {}).items():
        diagnostics[key] = val
    means = np.asarray(means, dtype=float) if K else np.zeros((0, n_x))
    covs = np.asarray(covs, dtype=float) if K else np.zeros((0, n_x, n_x))
    return EstimateTrack(means, covs, diagnostics), header


def write_vector_track_jsonl(path, vectors: np.ndarray, header: dict) -> None:
    """Track file for plain vector data (truth states, measurements)."""
    path = Path(path)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    head = dict(header)
    head["type"] = "header"
    head["n_x"] = int(vectors.shape[1]) if vectors.size else int(vectors.shape[1])
    lines = [canonical_json(head)]
    for k in range(vectors.shape[0]):
        rec = {"k": k, "mean": vectors[k].tolist(), "cov_upper_triangle": [],
               "diagnostics": {}}
        lines.append(canonical_json(rec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_vector_track_jsonl(path):
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln]
    header = json.loads(lines[0])
    vectors = np.asarray([json.loads(ln)["mean"] for ln in lines[1:]], dtype=float)
    if vectors.size == 0:
        vectors = np.zeros((0, int(header.get("n_x", 0))))
    return vectors, header


def write_csv(path, columns: list, rows: list, header: dict | None = None) -> None:
    """Deterministic CSV writer: repr for floats, plain str otherwise.

    `header` (config hash, seed, ...) is embedded as a leading comment line.
    """
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    path = Path(path)
    lines = []
    if header:
        lines.append("# " + canonical_json(header))
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
