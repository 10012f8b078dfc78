"""CSV and JSON artefacts with bit-stable formatting.

Floats are written with ``repr`` (shortest round-trip form), comma
delimited, LF line endings. Each CSV may carry a ``<name>.meta.json``
sidecar with units and a fingerprint of the producing configuration, which
keeps the CSV header itself plain.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from hydrarm.friction import differentiate
from hydrarm.hydraulics import CHANNELS, CylinderRun
from hydrarm.pipeline import IdentificationDataset

CYLINDER_UNITS = {"t": "s", "x": "m", "dx": "m/s", "ddx": "m/s^2", "p1": "Pa", "p2": "Pa",
                  "F": "N"}


class DataFormatError(ValueError):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def fingerprint(config) -> str:
    """sha256 of the canonical JSON form of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_json(doc))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, header, columns, meta: dict | None = None) -> Path:
    path = Path(path)
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(header) != len(cols):
        raise ValueError("header and column count differ")
    if len({len(c) for c in cols}) > 1:
        raise ValueError("columns have different lengths")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    if meta is not None:
        write_json(meta_path(path), meta)
    return path


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataFormatError(f"{path} has a header but no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric entry ({exc})") from None
    if data.shape[1] != len(header):
        raise DataFormatError(f"{path}: rows do not match the header width")
    return header, data


def write_cylinder_csv(path, run: CylinderRun, meta: dict | None = None) -> Path:
    doc = {"units": CYLINDER_UNITS, **(meta or {})}
    return write_csv(path, CHANNELS, [getattr(run, c) for c in CHANNELS], doc)


def read_cylinder_csv(path, window: int = 5) -> CylinderRun:
    """Load a record file; missing ``dx``/``ddx`` are differentiated from ``x``."""
    header, data = read_csv(path)
    cols = {h: data[:, k] for k, h in enumerate(header)}
    required = {"t", "x", "p1", "p2"}
    missing = required - set(cols)
    if missing:
        raise DataFormatError(f"{path}: missing columns {sorted(missing)}")
    if "dx" not in cols or "ddx" not in cols:
        cols["dx"], cols["ddx"] = differentiate(cols["t"], cols["x"], window)
    cols.setdefault("F", np.zeros_like(cols["t"]))
    meta = read_json(meta_path(path)) if meta_path(path).exists() else {}
    return CylinderRun(meta=meta, **{c: cols[c] for c in CHANNELS})


def _joint_header(prefixes, n):
    return [f"{p}{j}" for p in prefixes for j in range(1, n + 1)]


def write_dataset_csv(path, ds: IdentificationDataset, meta: dict | None = None) -> Path:
    n = ds.n_joints
    header = ["t"] + _joint_header(("q", "dq", "ddq", "tau"), n)
    cols = [ds.t] + [a[:, j] for a in (ds.q, ds.dq, ds.ddq, ds.tau) for j in range(n)]
    units = {"t": "s", "q": "rad", "dq": "rad/s", "ddq": "rad/s^2", "tau": "N m"}
    return write_csv(path, header, cols, {"units": units, **(meta or {})})


def read_dataset_csv(path) -> IdentificationDataset:
    header, data = read_csv(path)
    if header[0] != "t" or (len(header) - 1) % 4:
        raise DataFormatError(f"{path}: expected t followed by q, dq, ddq, tau blocks")
    n = (len(header) - 1) // 4
    if header[1:] != _joint_header(("q", "dq", "ddq", "tau"), n):
        raise DataFormatError(f"{path}: unexpected column order")
    blocks = [data[:, 1 + k * n:1 + (k + 1) * n] for k in range(4)]
    meta = read_json(meta_path(path)) if meta_path(path).exists() else {}
    return IdentificationDataset(data[:, 0], *blocks, meta=meta)


def write_residual_csv(path, t, measured, predicted, meta: dict | None = None) -> Path:
    units = {"t": "s", "tau_measured": "N m", "tau_predicted": "N m"}
    return write_csv(path, ("t", "tau_measured", "tau_predicted"), (t, measured, predicted),
                     {"units": units, **(meta or {})})


def write_curve_csv(path, v, force, meta: dict | None = None) -> Path:
    return write_csv(path, ("v", "F_d"), (v, force),
                     {"units": {"v": "m/s", "F_d": "N"}, **(meta or {})})


def write_trajectory_csv(path, t, q, dq, ddq, meta: dict | None = None) -> Path:
    n = q.shape[1]
    header = ["t"] + _joint_header(("q", "dq", "ddq"), n)
    cols = [t] + [a[:, j] for a in (q, dq, ddq) for j in range(n)]
    units = {"t": "s", "q": "rad", "dq": "rad/s", "ddq": "rad/s^2"}
    return write_csv(path, header, cols, {"units": units, **(meta or {})})
