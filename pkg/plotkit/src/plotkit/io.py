"""CSV loading with digest capture and column validation."""

import csv


class PlotInputError(ValueError):
    pass


def read_csv(path):
    """Rows as dicts plus the manifest digest (empty string when absent).
    Leading '#' comment lines are consumed, not treated as data."""
    digest = ""
    with open(path) as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            if "manifest_digest=" in line:
                digest = line.strip().split("=", 1)[1]
            pos = fh.tell()
            line = fh.readline()
        fh.seek(pos)
        rows = list(csv.DictReader(fh))
    if not rows:
        raise PlotInputError(f"{path}: no data rows (row count 0)")
    return rows, digest


def require_columns(rows, columns, path):
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise PlotInputError(f"{path}: missing column(s) {', '.join(missing)}")


def check_digests(pairs):
    """pairs: list of (path, digest).  All non-empty digests must agree."""
    seen = {}
    for path, digest in pairs:
        if digest:
            seen[digest] = path
    if len(seen) > 1:
        raise PlotInputError(f"input digests disagree: {sorted(seen)}")
