"""Deterministic JSON and CSV report writers.

JSON goes out UTF-8 with sorted keys; non-finite floats become the strings
"inf", "-inf" and "nan" so the output stays valid JSON. CSV follows RFC 4180
with CRLF line ends and a mandatory header row. Floats are written with
``repr``, which round-trips and always uses '.' as the decimal separator.
"""
import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def plain(obj):
    """Recursively convert numpy and non-finite values into JSON-safe Python values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return {"re": plain(obj.real), "im": plain(obj.imag)}
    return obj


def dumps(obj):
    return json.dumps(plain(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def config_hash(cfg):
    """SHA-256 of the compact sorted-key JSON form of ``cfg``."""
    text = json.dumps(plain(cfg), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    if not header:
        raise ValueError("CSV header is mandatory")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    """Header and rows of a CSV written by ``write_csv`` (cells as strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class ReportWriter:
    """Writes reports into one directory, stamping each JSON with the config hash and version.

    Keeps an index of everything written so the manifest can list the CSV
    tables alongside the JSON reports.
    """

    def __init__(self, out_dir, cfg_hash, version):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg_hash = cfg_hash
        self.version = version
        self.files = {}

    def _stamp(self, kind):
        return {"config_hash": self.cfg_hash, "artifact_version": self.version, "report": kind}

    def json(self, name, payload):
        body = dict(payload)
        body.update(self._stamp(name))
        text = dumps(body)
        path = self.out / f"{name}.json"
        path.write_text(text, encoding="utf-8")
        self.files[path.name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return path

    def csv(self, name, header, rows):
        path = self.out / f"{name}.csv"
        write_csv(path, header, rows)
        self.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path
