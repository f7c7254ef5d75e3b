"""Domain types, validation and dataset ingestion.

A time series is a T x d float matrix, frame-major: row = one frame,
column = one channel.  Datasets are loaded from a JSON manifest listing
per-series CSV files together with a class label and a subject id.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyDataset,
    EmptySeries,
    ManifestParse,
    MissingFile,
    NonFinite,
    RaggedRows,
)


@dataclass(frozen=True)
class TimeSeries:
    """A length-T sequence of d-dimensional frames.

    ``values`` is a read-only (T, d) float64 array; construct through
    :func:`validate_series` unless the input is already trusted.
    """

    values: np.ndarray
    frame_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self.values.flags.writeable = False

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabeledSeries:
    series: TimeSeries
    label: str
    subject: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")
        if not self.subject:
            raise ValueError("subject must be non-empty")


@dataclass(frozen=True)
class LabeledDataset:
    """An ordered collection of labeled series with a common channel count."""

    items: tuple[LabeledSeries, ...]
    classes: tuple[str, ...] = field(init=False)
    subjects: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise EmptyDataset("dataset has no series")
        d = items[0].series.n_channels
        for k, it in enumerate(items):
            if it.series.n_channels != d:
                raise DimensionMismatch(
                    f"series {k} has d={it.series.n_channels}, dataset has d={d}"
                )
        object.__setattr__(self, "classes", tuple(sorted({it.label for it in items})))
        object.__setattr__(self, "subjects", tuple(sorted({it.subject for it in items})))

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n_channels(self) -> int:
        return self.items[0].series.n_channels

    def labels(self) -> list[str]:
        return [it.label for it in self.items]

    def series_list(self) -> list[TimeSeries]:
        return [it.series for it in self.items]


def validate_series(raw, frame_rate: float | None = None) -> TimeSeries:
    """Validate a raw T x d matrix and wrap it as a :class:`TimeSeries`.

    Raises
    ------
    EmptySeries
        if T = 0 or d = 0.
    RaggedRows
        if rows have inconsistent lengths.
    NonFinite
        if any entry is NaN or Inf (reports the first offending index).
    """
    if isinstance(raw, np.ndarray):
        arr = raw.astype(np.float64, copy=True)
    else:
        rows = [np.atleast_1d(np.asarray(r, dtype=np.float64)) for r in raw]
        if rows:
            widths = {r.shape[0] for r in rows}
            if len(widths) > 1:
                raise RaggedRows(f"rows have inconsistent channel counts {sorted(widths)}")
        arr = np.array(rows, dtype=np.float64) if rows else np.empty((0, 0))
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise RaggedRows(f"expected a 2-d matrix, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptySeries(f"series has shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFinite(f"non-finite entry at ({i}, {j})", index=(int(i), int(j)))
    return TimeSeries(arr, frame_rate=frame_rate)


def crop_series(s: TimeSeries, max_len: int) -> TimeSeries:
    """Return the first min(T, max_len) frames of ``s`` (onset-anchored prefix)."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if max_len >= s.n_frames:
        return s
    return TimeSeries(s.values[:max_len].copy(), frame_rate=s.frame_rate)


def crop_dataset(ds: LabeledDataset, max_len: int) -> LabeledDataset:
    """Crop every series in ``ds`` to at most ``max_len`` frames."""
    return LabeledDataset(
        tuple(
            LabeledSeries(crop_series(it.series, max_len), it.label, it.subject)
            for it in ds.items
        )
    )


def read_series_csv(path) -> np.ndarray:
    """Read a headerless one-row-per-frame CSV into a T x d float matrix."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ManifestParse(f"{path}: unparseable value ({exc})") from exc
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise RaggedRows(f"{path}: rows have inconsistent channel counts {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def write_series_csv(path, values: np.ndarray) -> None:
    """Write a T x d matrix as a headerless CSV, full double precision."""
    values = np.asarray(values, dtype=np.float64)
    lines = [",".join(repr(float(v)) for v in row) for row in values]
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file + rename so readers never see a partial file."""
    path = os.fspath(path)
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_dataset(manifest_path) -> LabeledDataset:
    """Load a dataset from a JSON manifest.

    The manifest is either a JSON array of ``{"path", "label", "subject"}``
    objects, or an object ``{"frame_rate": number, "items": [...]}`` when a
    common frame rate is recorded.  Paths are resolved relative to the
    manifest's directory.  Item order follows manifest order.

    Raises
    ------
    ManifestParse
        on malformed JSON or missing fields.
    MissingFile
        when a referenced series CSV does not exist (path echoed).
    DimensionMismatch
        when series channel counts differ across the dataset.
    """
    manifest_path = os.fspath(manifest_path)
    if not os.path.exists(manifest_path):
        raise MissingFile(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestParse(f"{manifest_path}: {exc}") from exc

    frame_rate = None
    if isinstance(doc, dict):
        frame_rate = doc.get("frame_rate")
        entries = doc.get("items")
    else:
        entries = doc
    if not isinstance(entries, list):
        raise ManifestParse(f"{manifest_path}: expected a JSON array of entries")

    base = os.path.dirname(manifest_path)
    items = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict) or not {"path", "label", "subject"} <= entry.keys():
            raise ManifestParse(
                f"{manifest_path}: entry {k} must have path/label/subject fields"
            )
        path = os.path.join(base, entry["path"])
        if not os.path.exists(path):
            raise MissingFile(path)
        series = validate_series(read_series_csv(path), frame_rate=frame_rate)
        items.append(LabeledSeries(series, str(entry["label"]), str(entry["subject"])))
    if not items:
        raise ManifestParse(f"{manifest_path}: manifest lists no series")
    return LabeledDataset(tuple(items))
