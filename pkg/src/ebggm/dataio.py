"""CSV ingestion, artifact writers, and the run manifest format.

All floats are written with repr, i.e. the shortest string that round-trips
to the same double, so identical computations produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib

import numpy as np

from .errors import ParseError
from .graphs import Graph
from .hiw import DatasetStats
from .saem import TRACE_COLUMNS


def ingest_csv(path, center=True, standardize=True):
    """Read a rectangular numeric CSV into (DatasetStats, raw matrix).

    A non-numeric first row is treated as a header.  Processing follows the
    model conventions: subtract column means when center, then divide by the
    sample standard deviation (n-1 denominator) when standardize.
    """
    with open(path, newline="") as fh:
        raw_rows = [row for row in csv.reader(fh)
                    if row and any(cell.strip() for cell in row)]
    if not raw_rows:
        raise ParseError(f"{path}: file contains no data")
    start = 1
    try:
        [float(cell) for cell in raw_rows[0]]
        data_rows = raw_rows
    except ValueError:
        data_rows = raw_rows[1:]
        start = 2
        if not data_rows:
            raise ParseError(f"{path}: header only, no data rows")
    width = len(data_rows[0])
    values = []
    for offset, cells in enumerate(data_rows):
        rownum = start + offset
        if len(cells) != width:
            raise ParseError(
                f"{path}: row {rownum}: expected {width} columns, got {len(cells)}")
        parsed = []
        for col, cell in enumerate(cells):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: row {rownum}, column {col + 1}: "
                    f"cannot parse {cell.strip()!r} as a number") from None
        values.append(parsed)
    raw = np.asarray(values, dtype=float)
    if raw.shape[0] < 2:
        raise ParseError(f"{path}: need at least 2 data rows, got {raw.shape[0]}")
    return DatasetStats.from_data(raw, center=center, standardize=standardize), raw


def fmt(value):
    """Deterministic text form: shortest round-trip repr for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_data_csv(path, data):
    data = np.asarray(data)
    header = [f"x{j + 1}" for j in range(data.shape[1])]
    write_csv(path, header, data)


def write_visit_log(path, log):
    width = (Graph(log.p).m + 3) // 4
    rows = ((int(log.steps[t]), format(log.graph_ids[t], f"0{width}x"),
             int(log.k_edges[t]), float(log.log_scores[t]), int(log.accepted[t]))
            for t in range(len(log)))
    write_csv(path, ("step", "graph_id", "k_edges", "log_score", "accepted"), rows)


def write_acceptance_trace(path, log):
    rates = log.running_acceptance()
    rows = ((int(log.steps[t]), float(rates[t])) for t in range(len(log)))
    write_csv(path, ("step", "acceptance_rate"), rows)


def write_posterior_csv(path, table):
    width = (Graph(table.p).m + 3) // 4
    rows = ((rank + 1, format(gid, f"0{width}x"), Graph(table.p, gid).edge_count,
             float(pr), float(ls))
            for rank, (gid, pr, ls) in enumerate(
                zip(table.graph_ids, table.probs, table.log_scores)))
    write_csv(path, ("rank", "graph_id", "k_edges", "prob", "log_score"), rows)


def read_posterior_csv(path, p):
    """Back-read (graph_id, prob) pairs written by write_posterior_csv."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty table")
        try:
            id_col = header.index("graph_id")
            pr_col = header.index("prob")
        except ValueError:
            raise ParseError(f"{path}: missing graph_id/prob columns") from None
        for rownum, cells in enumerate(reader, start=2):
            try:
                out.append((int(cells[id_col], 16), float(cells[pr_col])))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {rownum}: malformed entry") from None
    for gid, _ in out:
        Graph(p, gid)  # validates the ID against p
    return out


def write_saem_trace(path, result):
    rows = ((int(row[0]),) + tuple(float(v) for v in row[1:]) for row in result.trace)
    write_csv(path, TRACE_COLUMNS, rows)


def write_manifest(path, mapping):
    with open(path, "w") as fh:
        for key in sorted(mapping):
            fh.write(f"{key}={fmt(mapping[key])}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}: line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def sha256_of(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
