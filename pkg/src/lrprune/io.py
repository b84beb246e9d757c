"""CSV tables with a JSON metadata sidecar."""
import csv
import hashlib
import json
from pathlib import Path

from . import __version__


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_table(path, columns, rows, cfg_hash=None):
    """Write ``rows`` (dicts or sequences) as CSV plus ``<name>.meta.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([fmt(v) for v in row])
    meta = {"file": path.name, "columns": list(columns), "rows": len(rows),
            "config_hash": cfg_hash, "tool": "lrprune", "tool_version": __version__}
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
