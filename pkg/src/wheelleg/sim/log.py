"""Trajectory logs and metric reports."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def trajectory_columns(coord_names, actuated, contact_frames, extra=()):
    cols = ["t"]
    cols += [f"q.{n}" for n in coord_names]
    cols += [f"v.{n}" for n in coord_names]
    cols += [f"u.{n}" for n in actuated]
    for f in contact_frames:
        cols += [f"{f}.{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
    cols += ["ee_x", "ee_z", "ee_pitch", "zmp_x", "mode"]
    return cols + list(extra)


@dataclass
class TrajectoryLog:
    """Rows of numbers plus a per-row mode label. ``header`` is the effective
    configuration text echoed as ``#`` comment lines before the column row."""

    columns: list[str]
    header: str = ""
    rows: list = field(default_factory=list)
    modes: list = field(default_factory=list)

    def append(self, values, mode: str):
        self.rows.append(np.asarray(values, dtype=float))
        self.modes.append(mode)

    @property
    def data(self) -> np.ndarray:
        n = len(self.columns) - 1
        return np.array(self.rows).reshape(-1, n)

    def column(self, name: str) -> np.ndarray:
        if name == "mode":
            return np.array(self.modes)
        cols = [c for c in self.columns if c != "mode"]
        return self.data[:, cols.index(name)]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for line in self.header.splitlines():
            buf.write(f"# {line}\n")
        buf.write(",".join(self.columns) + "\n")
        mi = self.columns.index("mode")
        for row, mode in zip(self.rows, self.modes):
            cells = [repr(float(x)) for x in row]
            cells.insert(mi, mode)
            buf.write(",".join(cells) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path) -> "TrajectoryLog":
        header, body = [], []
        for line in Path(path).read_text().splitlines():
            if line.startswith("# ") or line == "#":
                header.append(line[2:])
            else:
                body.append(line)
        columns = body[0].split(",")
        mi = columns.index("mode")
        log = cls(columns, "\n".join(header))
        for line in body[1:]:
            cells = line.split(",")
            mode = cells.pop(mi)
            log.append([float(c) for c in cells], mode)
        return log


def header_config(text: str) -> str:
    """Configuration text echoed in a CSV header."""
    lines = []
    for line in text.splitlines():
        if line.startswith("# ") or line == "#":
            lines.append(line[2:])
        else:
            break
    return "\n".join(lines) + "\n"


@dataclass
class MetricsReport:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def __setitem__(self, key, value):
        self.values[key] = value

    def to_json(self, path=None) -> str:
        text = json.dumps(self.values, indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def table(self) -> str:
        width = max((len(k) for k in self.values), default=0)
        out = []
        for k in sorted(self.values):
            v = self.values[k]
            out.append(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
        return "\n".join(out)
