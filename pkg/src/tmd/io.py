"""Readers and writers for the on-disk formats.

Floats are written with ``repr`` so CSV and JSON both round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .device import DetectorConfig, GateSpec, ModeWeights
from .distributions import CountHistogram, Distribution


@contextmanager
def _open_out(target):
    if target is None or str(target) == "-":
        yield sys.stdout
    else:
        with open(target, "w", newline="") as fh:
            yield fh


def _read_text(source) -> str:
    if str(source) == "-":
        return sys.stdin.read()
    return Path(source).read_text()


def _fmt(x) -> str:
    return repr(float(x))


def read_json(path):
    return json.loads(_read_text(path))


def write_json(obj, target=None) -> None:
    with _open_out(target) as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_config(path) -> DetectorConfig:
    return DetectorConfig.from_dict(read_json(path))


def load_weights(path) -> ModeWeights:
    return ModeWeights.from_dict(read_json(path))


def load_gates(path) -> GateSpec:
    return GateSpec.from_json(read_json(path))


def read_events_csv(path) -> np.ndarray:
    """TOA events with header ``detector,arrival_ns``; returns an ``(n, 2)`` array."""
    rows = list(csv.reader(io.StringIO(_read_text(path))))
    if not rows or [c.strip() for c in rows[0]] != ["detector", "arrival_ns"]:
        raise ValueError("events CSV must start with header 'detector,arrival_ns'")
    data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    return np.array(data, dtype=float).reshape(-1, 2)


def write_events_csv(events, target) -> None:
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector", "arrival_ns"])
        for d, t in events:
            w.writerow([int(d), _fmt(t)])


def write_matrix_csv(matrix, target=None) -> None:
    """Row-major CSV; the header row holds the column indices."""
    m = np.atleast_2d(np.asarray(matrix, float))
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(range(m.shape[1]))
        for row in m:
            w.writerow([_fmt(x) for x in row])


def read_matrix_csv(source) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(_read_text(source))) if r]
    if not rows:
        raise ValueError("matrix CSV is empty")
    header = [int(c) for c in rows[0]]
    if header != list(range(len(header))):
        raise ValueError("matrix CSV header must be the column indices 0..n")
    body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    if body.ndim != 2 or body.shape[1] != len(header):
        raise ValueError("matrix CSV rows do not match header width")
    return body


def write_vector_csv(values, target=None) -> None:
    write_matrix_csv(np.asarray(values, float)[None, :], target)


def write_histogram_csv(hist: CountHistogram, target=None) -> None:
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "count"])
        for k, c in enumerate(hist.tallies):
            w.writerow([k, int(c)])


def read_histogram_csv(source) -> CountHistogram:
    rows = [r for r in csv.reader(io.StringIO(_read_text(source))) if r]
    if not rows or [c.strip() for c in rows[0]] != ["k", "count"]:
        raise ValueError("histogram CSV must start with header 'k,count'")
    pairs = [(int(r[0]), int(r[1])) for r in rows[1:]]
    if not pairs:
        raise ValueError("histogram CSV has no rows")
    size = max(k for k, _ in pairs) + 1
    tallies = np.zeros(size, dtype=np.int64)
    for k, c in pairs:
        if k < 0 or c < 0:
            raise ValueError("histogram rows must be nonnegative")
        tallies[k] += c
    return CountHistogram(tallies)


def write_distribution_json(dist: Distribution, target=None) -> None:
    write_json(dist.to_dict(), target)


def read_distribution(source) -> Distribution:
    """Distribution from JSON (object with ``values`` or a bare list) or one-row CSV."""
    text = _read_text(source)
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        obj = json.loads(text)
        if isinstance(obj, list):
            return Distribution(obj)
        return Distribution.from_dict(obj)
    m = read_matrix_csv(source)
    if m.shape[0] != 1:
        raise ValueError("distribution CSV must have a single data row")
    return Distribution(m[0])


def write_reconstruction_csv(result, target=None) -> None:
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        eb = result.error_bars
        w.writerow(["n", "rho"] + (["error"] if eb is not None else []))
        for n, v in enumerate(result.rho.values):
            row = [n, f"{v:.17g}"]
            if eb is not None:
                row.append(f"{eb[n]:.17g}" if n < len(eb) else "")
            w.writerow(row)


def write_bayes_csv(table, target=None) -> None:
    """Long format ``k,n,probability``; undefined click counts are omitted."""
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "n", "probability"])
        n_rows, k_cols = table.entries.shape
        for k in range(k_cols):
            if not table.defined[k]:
                continue
            for n in range(n_rows):
                w.writerow([k, n, f"{table.entries[n, k]:.17g}"])


def write_fock_csv(rows, target=None) -> None:
    with _open_out(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["modes", "j", "eta", "analytic", "matrix"])
        for r in rows:
            w.writerow([r.modes, r.j, _fmt(r.efficiency), _fmt(r.analytic), _fmt(r.matrix)])


def write_records_jsonl(records, target) -> None:
    with _open_out(target) as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()))
            fh.write("\n")
