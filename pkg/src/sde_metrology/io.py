"""On-disk session formats.

Every table is a CSV file with a header row, comma delimiters and optional
``#`` comment lines.  Count files may carry the phase markers written by the
acquisition sequence (``# Dark Counts``, ``# Maxpol light counts``,
``# Minpol light counts``); when a file has no ``phase`` column the most
recent marker supplies it.  Floats are written with 17 significant digits.

A session directory is described by ``manifest.json``, which lists each file
by role with its SHA-256 digest.  Readers only open files named in the
manifest and verify the digest first.  Ground truth written by the simulator
lives under ``truth/`` and is never listed in the manifest.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .uncertainty import UncertainValue

MANIFEST = "manifest.json"
TRUTH_DIR = "truth"
DATA_DIR_ENV = "SDE_METROLOGY_DATA_DIR"

PHASE_MARKERS = {
    "dark counts": "dark",
    "maxpol light counts": "maxpol",
    "minpol light counts": "minpol",
}
MARKER_TEXT = {v: k.capitalize() for k, v in PHASE_MARKERS.items()}

ROLES = ("nonlin", "switch_cal", "atten_cal", "sde_maxpol", "sde_minpol",
         "polscan", "polscan_dark", "stability", "cpm_certificate")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if isinstance(row, str):  # section marker
            buf.write(f"# {row}\n")
            continue
        w.writerow([fmt(x) for x in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path, required: Sequence[str] = (), numeric: Sequence[str] = ()) -> list[dict]:
    """Parse a CSV into dicts; comment markers become a ``_marker`` key.

    Raises :class:`DataError` naming the file and line on schema violations.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError("file not found", path=path)
    rows = []
    header = None
    marker = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                text = s.lstrip("#").strip().lower()
                if text in PHASE_MARKERS:
                    marker = PHASE_MARKERS[text]
                continue
            fields = next(csv.reader([s]))
            if header is None:
                header = [f.strip() for f in fields]
                missing = [c for c in required if c not in header]
                if missing:
                    raise DataError(f"missing columns {missing}", path=path, line=lineno)
                continue
            if len(fields) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(fields)}",
                                path=path, line=lineno)
            row = dict(zip(header, (f.strip() for f in fields)))
            for c in numeric:
                if c in row:
                    try:
                        row[c] = float(row[c])
                    except ValueError:
                        raise DataError(f"column {c!r}: not a number: {row[c]!r}",
                                        path=path, line=lineno) from None
                    if not math.isfinite(row[c]):
                        raise DataError(f"column {c!r}: non-finite value", path=path, line=lineno)
            row["_line"] = lineno
            row["_marker"] = marker
            rows.append(row)
    if header is None:
        raise DataError("empty file (no header row)", path=path)
    return rows


# ---------------------------------------------------------------------------
# JSON


def uv_to_json(u) -> dict:
    if isinstance(u, UncertainValue):
        return {"value": u.value, "sigma": u.sigma}
    return {"value": float(u), "sigma": 0.0}


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _default(o):
    if isinstance(o, UncertainValue):
        return uv_to_json(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError("file not found", path=path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from exc


# ---------------------------------------------------------------------------
# session manifest


class Session:
    """A session directory opened through its manifest."""

    def __init__(self, root, manifest: dict):
        self.root = Path(root)
        self.manifest = manifest

    @classmethod
    def open(cls, root=None) -> "Session":
        if root is None:
            root = os.environ.get(DATA_DIR_ENV)
            if not root:
                raise DataError(f"no session given and {DATA_DIR_ENV} is not set")
        root = Path(root)
        m = root / MANIFEST
        if not m.is_file():
            raise DataError("no manifest.json in session directory", path=root)
        doc = load_json(m)
        if "files" not in doc or not isinstance(doc["files"], dict):
            raise DataError("manifest has no 'files' table", path=m)
        return cls(root, doc)

    @property
    def wavelength_nm(self) -> float:
        return float(self.manifest["wavelength_nm"])

    @property
    def params(self) -> dict:
        return self.manifest.get("params", {})

    def has(self, role: str) -> bool:
        return role in self.manifest["files"]

    def path(self, role: str, verify: bool = True) -> Path:
        entry = self.manifest["files"].get(role)
        if entry is None:
            raise DataError(f"session has no {role!r} file", path=self.root / MANIFEST)
        p = self.root / entry["path"]
        rel = Path(entry["path"])
        if rel.is_absolute() or ".." in rel.parts or rel.parts[0] == TRUTH_DIR:
            raise DataError(f"manifest path for {role!r} leaves the session data area",
                            path=self.root / MANIFEST)
        if verify:
            if not p.is_file():
                raise DataError("file listed in manifest is missing", path=p)
            digest = sha256(p)
            if digest != entry["sha256"]:
                raise DataError(f"digest mismatch for {role!r}", path=p)
        return p


def write_manifest(root, session_id: str, wavelength_nm: float, files: dict, params: dict,
                   warnings: Sequence[str] = ()) -> dict:
    root = Path(root)
    doc = {
        "session_id": session_id,
        "wavelength_nm": wavelength_nm,
        "files": {role: {"path": str(p), "sha256": sha256(root / p)} for role, p in sorted(files.items())},
        "params": params,
        "warnings": list(warnings),
    }
    dump_json(doc, root / MANIFEST)
    return doc
