"""Per-tick simulation logs: schema, lossless export, and reload.

A RunLog is a dense (n_ticks, n_columns) float64 array plus a metadata
dict. Export writes delimited text (CSV with a header row, %.17g so floats
round-trip bit-exactly) alongside a JSON metadata sidecar carrying the
schema version, the full scenario dictionary, its hash, and the sampling
parameters. Loading validates the schema version and reports the line
number of any malformed row.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, VersionError

SCHEMA_VERSION = 1

_AXES = ("x", "y", "z", "rx", "ry", "rz")


def _group(prefix):
    return tuple(f"{prefix}_{a}" for a in _AXES)


def _joints(prefix):
    return tuple(f"{prefix}_{i}" for i in range(1, 7))


COLUMNS = (("t",)
           + _group("fext")    # applied external wrench
           + _group("ee")      # actual end-effector pose (position + rotvec)
           + _group("eedot")   # actual end-effector twist
           + _group("xd")      # nominal pose
           + _group("xcmd")    # commanded pose
           + _group("dx")      # admittance offset
           + _group("dxdot")   # admittance offset rate
           + _joints("q")        # joint positions
           + _joints("qd_ref")   # commanded joint velocity
           + _joints("qd_act")   # measured joint velocity
           + _joints("u"))       # PID output

_INDEX = {name: i for i, name in enumerate(COLUMNS)}


def scenario_hash(scenario_dict) -> str:
    blob = json.dumps(scenario_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunLog:
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ValueError(f"log data must be (n, {len(COLUMNS)})")

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, _INDEX[name]]

    def group(self, prefix):
        """Six-column block as (n, 6): group('dx'), group('fext'), ..."""
        i0 = _INDEX[f"{prefix}_{_AXES[0]}" if f"{prefix}_x" in _INDEX else f"{prefix}_1"]
        return self.data[:, i0:i0 + 6]

    @property
    def t(self):
        return self.data[:, 0]

    @property
    def dt(self):
        if len(self) < 2:
            return 0.0
        return float(self.t[1] - self.t[0])

    def downsampled(self, rate_hz) -> "RunLog":
        """Keep every k-th row so the output rate is close to rate_hz."""
        if rate_hz <= 0 or self.dt == 0:
            return self
        stride = max(1, int(round(1.0 / (self.dt * rate_hz))))
        meta = dict(self.meta)
        meta["downsample_stride"] = stride
        return RunLog(self.data[::stride].copy(), meta)


def export_log(log: RunLog, path):
    """Write the delimited log plus its metadata sidecar (path + .meta.json)."""
    header = ",".join(COLUMNS)
    np.savetxt(path, log.data, fmt="%.17g", delimiter=",", header=header,
               comments="")
    meta = dict(log.meta)
    meta["schema_version"] = SCHEMA_VERSION
    meta["columns"] = list(COLUMNS)
    meta["rows"] = len(log)
    with open(meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)


def meta_path(path):
    return f"{path}.meta.json"


def load_log(path) -> RunLog:
    """Reload an exported log, verifying schema and row integrity."""
    mp = meta_path(path)
    if not os.path.exists(mp):
        raise ParseError(f"missing metadata sidecar {mp}")
    with open(mp) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad metadata sidecar {mp}: {exc}") from exc
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise VersionError(f"log schema version {version!r}, expected {SCHEMA_VERSION}")
    if tuple(meta.get("columns", ())) != COLUMNS:
        raise VersionError("log column schema does not match this build")

    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ",".join(COLUMNS):
            raise ParseError(f"{path}: header does not match schema", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(COLUMNS):
                raise ParseError(f"{path}: expected {len(COLUMNS)} fields, "
                                 f"got {len(parts)}", line=lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=lineno) from exc
    expected = meta.get("rows")
    if expected is not None and expected != len(rows):
        raise ParseError(f"{path}: metadata promises {expected} rows, "
                         f"file has {len(rows)}", line=len(rows) + 1)
    return RunLog(np.array(rows, dtype=float) if rows else np.zeros((0, len(COLUMNS))),
                  meta)
