"""File helpers shared by the CLI. Outputs are deterministic: JSON keys are
sorted, floats use repr, and no timestamps are written."""
from __future__ import annotations

import csv
import json
import os

from . import __version__
from .geometry import ConvexPolygon
from .tessellation import TTessellation


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv(path, header, rows, meta=None):
    """CSV with ``# key: json`` comment lines carrying run metadata."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, val in sorted((meta or {}).items()):
            fh.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path):
    """(metadata dict, header, rows as lists of strings)."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def provenance(config):
    return {"config": config, "version": __version__}


def load_tessellation(path) -> TTessellation:
    with open(path) as fh:
        return TTessellation.from_json(fh.read())


def save_tessellation(path, tess: TTessellation, extra=None):
    data = tess.to_dict()
    if extra:
        data.update(extra)
    write_json(path, data)


def load_window(path) -> ConvexPolygon:
    """Window JSON: either {"domain": [[x, y], ...]} or a bare vertex list."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("domain", data.get("window"))
    return ConvexPolygon(data)
