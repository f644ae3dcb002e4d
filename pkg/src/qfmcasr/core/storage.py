"""File backends for traces, spectra and result tables.

Provides two implementations of one interface:
- JSONStorage: tables plus a provenance block, bit-exact on read-back
- CSVStorage: header row with units, numbers written with 17 significant digits,
  scalar metadata in trailing comment lines

Every artifact is a :class:`Table`; the codec helpers at the bottom convert
domain objects to and from tables.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .casr import CASRConfig, TimeTrace
from .errors import MalformedFileError
from .qfm import EffectiveSignal
from .spectroscopy import Spectrum

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")

TRACE_COLUMNS = ("time_s", "contrast")
SPECTRUM_COLUMNS = ("freq_hz", "re", "im", "magnitude")
TRAJECTORY_COLUMNS = ("time_s", "re_c0", "im_c0", "re_c1", "im_c1", "phase_rad")

# Relative jitter tolerated in CSV time columns
UNIFORM_TOLERANCE = 1e-9

# Metadata written to CSV as trailing "# key=value" lines, per artifact kind
CSV_METADATA = {
    "spectrum": ("n_samples", "sample_rate", "start_time", "window", "clip_dc"),
}


@dataclass
class Table:
    """A named column table plus free-form metadata.

    Attributes:
        kind: Artifact type, e.g. "trace" or "spectrum"
        columns: Column names, units included
        rows: Row values in column order
        metadata: Extra payload kept by JSON only
        provenance: Tool, version, command, config and seed, if known
    """
    kind: str
    columns: List[str]
    rows: List[List[Any]]
    metadata: Dict[str, Any] = field(default_factory=dict)
    provenance: Optional[Dict[str, Any]] = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> List[Any]:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]


def provenance(
    command: str, config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None
) -> Dict[str, Any]:
    """Provenance block written into JSON artifacts."""
    from .. import __version__

    return {
        "tool": "qfm-casr",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
    }


# =============================================================================
# Abstract Storage Backend
# =============================================================================

class StorageBackend(ABC):
    """Abstract interface for artifact files.

    Example:
        backend = backend_for(Path("trace.json"))
        backend.save(trace_table(trace))
        restored = trace_from_table(backend.load())
    """

    def __init__(self, file_path: Path):
        self.file_path = Path(file_path)

    @abstractmethod
    def save(self, table: Table) -> None:
        """Write ``table`` to the backing file."""
        ...

    @abstractmethod
    def load(self) -> Table:
        """Read the backing file.

        Raises:
            MalformedFileError: If the file is missing, empty or unparsable
        """
        ...

    def exists(self) -> bool:
        return self.file_path.exists()

    def clear(self) -> None:
        if self.file_path.exists():
            self.file_path.unlink()

    def _read_text(self) -> str:
        try:
            text = self.file_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise MalformedFileError(str(self.file_path), f"cannot read file: {exc}") from exc
        if not text.strip():
            raise MalformedFileError(str(self.file_path), "file is empty")
        return text


# =============================================================================
# JSON Storage
# =============================================================================

class JSONStorage(StorageBackend):
    """JSON artifact: ``{"format", "provenance", "data"}``."""

    def save(self, table: Table) -> None:
        self.file_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "format": table.kind,
            "provenance": table.provenance,
            "data": {"columns": list(table.columns), "rows": table.rows, **table.metadata},
        }
        with open(self.file_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False, default=_json_default)
            f.write("\n")

    def load(self) -> Table:
        path = str(self.file_path)
        try:
            payload = json.loads(self._read_text())
        except json.JSONDecodeError as exc:
            raise MalformedFileError(path, f"invalid JSON: {exc.msg}", row=exc.lineno) from exc
        if not isinstance(payload, dict) or "data" not in payload or "format" not in payload:
            raise MalformedFileError(path, "missing 'format' or 'data' block")
        data = dict(payload["data"])
        try:
            columns = list(data.pop("columns"))
            rows = [list(row) for row in data.pop("rows")]
        except (KeyError, TypeError) as exc:
            raise MalformedFileError(path, "data block lacks columns/rows") from exc
        for number, row in enumerate(rows, start=1):
            if len(row) != len(columns):
                raise MalformedFileError(path, f"expected {len(columns)} values", row=number)
        return Table(
            kind=payload["format"],
            columns=columns,
            rows=rows,
            metadata=data,
            provenance=payload.get("provenance"),
        )


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# =============================================================================
# CSV Storage
# =============================================================================

def _format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "{:.17g}".format(float(value))
    if value is None:
        return ""
    return str(value)


def _parse_cell(text: str) -> Any:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


class CSVStorage(StorageBackend):
    """CSV artifact: one header row, data rows, then ``# key=value`` metadata lines."""

    def __init__(self, file_path: Path, kind: str = "table"):
        super().__init__(file_path)
        self.kind = kind

    def save(self, table: Table) -> None:
        self.file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.file_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(table.columns)
            for row in table.rows:
                writer.writerow([_format_cell(v) for v in row])
            for key in CSV_METADATA.get(table.kind, ()):
                if key in table.metadata:
                    f.write(f"# {key}={_format_cell(table.metadata[key])}\n")

    def load(self) -> Table:
        path = str(self.file_path)
        metadata: Dict[str, Any] = {}
        lines = []
        for number, line in enumerate(csv.reader(self._read_text().splitlines()), start=1):
            if line and line[0].lstrip().startswith("#"):
                key, sep, value = ",".join(line).lstrip("# ").partition("=")
                if sep:
                    metadata[key.strip()] = _parse_cell(value.strip())
                continue
            lines.append((number, line))
        if not lines:
            raise MalformedFileError(path, "missing header row", row=1)

        header_row, first = lines[0]
        header = [name.strip() for name in first]
        if not header or any(not name for name in header):
            raise MalformedFileError(path, "missing header row", row=header_row)
        if all(_is_number(name) for name in header):
            raise MalformedFileError(path, "first row is data, expected a header", row=header_row)

        rows = []
        for number, line in lines[1:]:
            if not line or all(not cell.strip() for cell in line):
                continue
            if len(line) != len(header):
                raise MalformedFileError(
                    path, f"expected {len(header)} values, got {len(line)}", row=number
                )
            rows.append([_parse_cell(cell.strip()) for cell in line])
        return Table(kind=self.kind, columns=header, rows=rows, metadata=metadata)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def backend_for(path: Path, fmt: Optional[str] = None, kind: str = "table") -> StorageBackend:
    """Backend chosen by explicit format or, failing that, by file suffix."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt not in FORMATS:
        raise ValueError(f"Unknown format {fmt!r}, expected one of {FORMATS}")
    return JSONStorage(path) if fmt == "json" else CSVStorage(path, kind=kind)


# =============================================================================
# Codecs
# =============================================================================

def trace_table(trace: TimeTrace, prov: Optional[Dict[str, Any]] = None) -> Table:
    rows = [[t, s] for t, s in zip(trace.times.tolist(), trace.samples.tolist())]
    metadata = {
        "start_time": trace.start_time,
        "period": trace.period,
        "config": trace.config.to_dict(),
        "signals": [s.to_dict() for s in trace.signals],
        "seed": trace.seed,
    }
    return Table("trace", list(TRACE_COLUMNS), rows, metadata, prov)


def _numeric_column(table: Table, name: str, path: str) -> np.ndarray:
    if name not in table.columns:
        raise MalformedFileError(path, f"missing column {name!r}", row=1)
    index = table.columns.index(name)
    values = []
    for number, row in enumerate(table.rows, start=2):
        value = row[index]
        numeric = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not numeric or not math.isfinite(value):
            raise MalformedFileError(path, f"non-numeric value {value!r} in {name}", row=number)
        values.append(float(value))
    return np.asarray(values, dtype=float)


def trace_from_table(
    table: Table, path: str = "<trace>", config: Optional[CASRConfig] = None
) -> TimeTrace:
    """Rebuild a TimeTrace; CSV traces take their timing from the time column.

    Raises:
        MalformedFileError: Empty, non-numeric or non-uniform traces
    """
    if not table.rows:
        raise MalformedFileError(path, "trace has no samples")
    samples = _numeric_column(table, "contrast", path)
    meta = table.metadata
    if "period" in meta and "start_time" in meta:
        return TimeTrace(
            start_time=meta["start_time"],
            period=meta["period"],
            samples=samples,
            config=(
                CASRConfig.from_dict(meta["config"])
                if meta.get("config")
                else (config or CASRConfig())
            ),
            signals=tuple(EffectiveSignal.from_dict(s) for s in meta.get("signals", [])),
            seed=meta.get("seed"),
        )

    times = _numeric_column(table, "time_s", path)
    if times.size < 2:
        raise MalformedFileError(path, "trace needs at least two samples", row=2)
    steps = np.diff(times)
    period = float((times[-1] - times[0]) / (times.size - 1))
    if period <= 0:
        raise MalformedFileError(path, "time column is not increasing", row=2)
    bad = np.flatnonzero(np.abs(steps - period) > UNIFORM_TOLERANCE * max(period, abs(times[-1])))
    if bad.size:
        raise MalformedFileError(path, "time column is not uniformly spaced", row=int(bad[0]) + 3)
    cfg = config or CASRConfig()
    if abs(period - cfg.t_seq) > 1e-6 * cfg.t_seq:
        logger.warning(
            "Trace period %.6g s differs from configured T_seq %.6g s", period, cfg.t_seq
        )
    return TimeTrace(start_time=float(times[0]), period=period, samples=samples, config=cfg)


def spectrum_table(spec: Spectrum, prov: Optional[Dict[str, Any]] = None) -> Table:
    rows = [
        [f, v.real, v.imag, m]
        for f, v, m in zip(spec.frequencies.tolist(), spec.values.tolist(), spec.magnitude.tolist())
    ]
    metadata = {
        "n_samples": spec.n_samples,
        "sample_rate": spec.sample_rate,
        "start_time": spec.start_time,
        "window": spec.window,
        "clip_dc": spec.clip_dc,
        "source": spec.source,
    }
    return Table("spectrum", list(SPECTRUM_COLUMNS), rows, metadata, prov)


def spectrum_from_table(table: Table, path: str = "<spectrum>") -> Spectrum:
    """Rebuild a Spectrum.

    The trace length comes from the ``n_samples`` metadata. CSV files without
    it fall back to 2(bins − 1), which assumes an even-length trace.
    """
    if not table.rows:
        raise MalformedFileError(path, "spectrum has no bins")
    frequencies = _numeric_column(table, "freq_hz", path)
    values = _numeric_column(table, "re", path) + 1j * _numeric_column(table, "im", path)
    meta = table.metadata
    if "n_samples" in meta and "sample_rate" in meta:
        return Spectrum(
            frequencies=frequencies,
            values=values,
            n_samples=int(meta["n_samples"]),
            sample_rate=float(meta["sample_rate"]),
            start_time=float(meta.get("start_time", 0.0)),
            window=str(meta.get("window", "none")),
            clip_dc=bool(meta.get("clip_dc", False)),
            source=meta.get("source", {}),
        )
    if frequencies.size < 2:
        raise MalformedFileError(path, "spectrum needs at least two bins", row=2)
    resolution = float(frequencies[1] - frequencies[0])
    n_samples = 2 * (frequencies.size - 1)
    return Spectrum(
        frequencies=frequencies,
        values=values,
        n_samples=n_samples,
        sample_rate=resolution * n_samples,
    )


def rows_table(
    kind: str,
    records: Sequence[Dict[str, Any]],
    columns: Optional[Sequence[str]] = None,
    metadata: Optional[Dict[str, Any]] = None,
    prov: Optional[Dict[str, Any]] = None,
) -> Table:
    """Table from a list of dict records sharing keys."""
    names = list(columns) if columns is not None else (list(records[0]) if records else [])
    rows = [[record.get(name) for name in names] for record in records]
    return Table(kind, names, rows, dict(metadata or {}), prov)


def write_table(table: Table, path: Path, fmt: Optional[str] = None) -> Path:
    backend = backend_for(path, fmt, kind=table.kind)
    backend.save(table)
    logger.info("Wrote %s (%d rows) to %s", table.kind, len(table), backend.file_path)
    return backend.file_path


def read_trace(path: Path, config: Optional[CASRConfig] = None) -> TimeTrace:
    """Load a trace file written as CSV or JSON."""
    path = Path(path)
    if not path.exists():
        raise MalformedFileError(str(path), "no such file")
    table = backend_for(path, kind="trace").load()
    if table.metadata and table.kind != "trace":
        raise MalformedFileError(str(path), f"expected a trace, found {table.kind!r}")
    return trace_from_table(table, str(path), config)


def read_spectrum(path: Path) -> Spectrum:
    path = Path(path)
    if not path.exists():
        raise MalformedFileError(str(path), "no such file")
    return spectrum_from_table(backend_for(path, kind="spectrum").load(), str(path))
