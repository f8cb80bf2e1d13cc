"""On-disk formats: Q-table binary, learning-curve CSV, episode JSONL, run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .env import EpisodeLog
from .learner import LearningCurve

QTABLE_MAGIC = b"CVQT"
QTABLE_VERSION = 1


class DimensionMismatchError(ValueError):
    pass


class LogFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- Q-table ------------------------------------------------------------------
#
# Layout (little endian):
#   4s  magic "CVQT"
#   H   version
#   H   number of dimensions k
#   kQ  dimensions
#   32s sha256 digest of the configuration
#   ... float64 body in row-major (C) order

def save_qtable(path, q: np.ndarray, config_hash: str):
    q = np.ascontiguousarray(q, dtype="<f8")
    digest = bytes.fromhex(config_hash)
    if len(digest) != 32:
        raise ValueError("config hash must be a sha256 hex digest")
    with open(path, "wb") as fh:
        fh.write(QTABLE_MAGIC)
        fh.write(struct.pack("<HH", QTABLE_VERSION, q.ndim))
        fh.write(struct.pack(f"<{q.ndim}Q", *q.shape))
        fh.write(digest)
        fh.write(q.tobytes(order="C"))


def load_qtable(path) -> tuple[np.ndarray, str]:
    """Read a table written by :func:`save_qtable`; returns ``(q, config_hash)``."""
    with open(path, "rb") as fh:
        if fh.read(4) != QTABLE_MAGIC:
            raise ValueError(f"{path}: not a Q-table file")
        version, ndim = struct.unpack("<HH", fh.read(4))
        if version != QTABLE_VERSION:
            raise ValueError(f"{path}: unsupported Q-table version {version}")
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        digest = fh.read(32).hex()
        body = fh.read()
    n = int(np.prod(shape))
    if len(body) != 8 * n:
        raise ValueError(f"{path}: truncated body ({len(body)} of {8 * n} bytes)")
    return np.frombuffer(body, dtype="<f8").reshape(shape).copy(), digest


def dump_qtable_csv(path, q: np.ndarray):
    """Write the nonzero entries as ``cell,coverage,distance,action,value`` rows."""
    idx = np.argwhere(q != 0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "coverage", "distance", "action", "value"][-q.ndim - 1:])
        for row in idx:
            w.writerow([*map(int, row), repr(float(q[tuple(row)]))])


def check_qtable_shape(q: np.ndarray, expected: tuple):
    if tuple(q.shape) != tuple(expected):
        raise DimensionMismatchError(f"Q-table has shape {q.shape}, config implies {tuple(expected)}")


# -- learning curve -------------------------------------------------------------

CURVE_HEADER = ["episode", "discounted_return", "return", "coverage_time", "epsilon"]


def write_curve_csv(path, curve: LearningCurve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for i in range(len(curve)):
            w.writerow([i, repr(curve.discounted_return[i]), repr(curve.total_return[i]),
                        curve.coverage_time[i], repr(curve.epsilon[i])])


def read_curve_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- episode logs -----------------------------------------------------------------
#
# One JSON object per line. Each episode opens with a header line
#   {"episode": k, "x0": [x, y], "object": {...}, "env": {...}}
# (plus "covered0" when the episode starts with points already covered)
# followed by one line per step
#   {"t", "x", "s", "a", "r", "new_cover", "collision"}.

STEP_KEYS = {"t", "x", "s", "a", "r", "new_cover", "collision"}


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def write_episode_log(fh, k: int, ep: EpisodeLog, env_params: dict):
    """Append episode ``k`` (header line plus step lines) to an open text file."""
    params = {key: _jsonable(v) for key, v in env_params.items()}
    head = {"episode": k, "x0": list(ep.start), "object": ep.obj.to_json(), "env": params}
    if ep.initial_covered:
        head["covered0"] = list(ep.initial_covered)
    fh.write(json.dumps(head) + "\n")
    for st in ep.steps:
        fh.write(json.dumps(st.to_json()) + "\n")


def write_episode_logs(path, logs: Iterable[EpisodeLog], env_params: dict):
    with open(path, "w") as fh:
        for k, ep in enumerate(logs):
            write_episode_log(fh, k, ep, env_params)


def read_episode_logs(path) -> Iterator[dict]:
    """Yield ``{"header": ..., "steps": [...]}`` per episode; raises :class:`LogFormatError`."""
    current = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(lineno, f"malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise LogFormatError(lineno, "expected a JSON object")
            if "episode" in rec:
                for key in ("x0", "object", "env"):
                    if key not in rec:
                        raise LogFormatError(lineno, f"episode header lacks {key!r}")
                if current is not None:
                    yield current
                current = {"header": rec, "steps": [], "lineno": lineno}
                continue
            missing = STEP_KEYS - rec.keys()
            if missing:
                raise LogFormatError(lineno, f"step record lacks {sorted(missing)}")
            if current is None:
                raise LogFormatError(lineno, "step record before any episode header")
            if rec["t"] != len(current["steps"]) + 1:
                raise LogFormatError(lineno, f"expected t={len(current['steps']) + 1}, got {rec['t']}")
            rec["lineno"] = lineno
            current["steps"].append(rec)
    if current is not None:
        yield current


# -- manifest ---------------------------------------------------------------------

def write_manifest(path, config_hash: str, code_version: str, wall_clock: float, files: dict):
    """``files`` maps a role name to a path; each path is hashed now."""
    doc = {
        "config_hash": config_hash,
        "code_version": code_version,
        "wall_clock_s": wall_clock,
        "files": {role: {"path": str(Path(p).name), "sha256": sha256_file(p)}
                  for role, p in files.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def verify_manifest(path) -> list[str]:
    """Names of files whose content no longer matches the manifest."""
    path = Path(path)
    doc = json.loads(path.read_text())
    bad = []
    for role, ent in doc["files"].items():
        p = path.parent / ent["path"]
        if not p.exists() or sha256_file(p) != ent["sha256"]:
            bad.append(role)
    return bad
