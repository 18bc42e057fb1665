"""Telemetry records: CSV ingestion, derived features, document mapping.

A telemetry record is one sensor reading of one fridge: timestamp (epoch
seconds), case air temperatures entering/leaving the evaporator, defrost
state flag, optional store id, and an ``extra`` map carrying any unmapped
sensor columns untouched. Derived fields (cadence deltas, setpoint
differences) live in a separate ``derived`` map so recomputation is
idempotent by construction.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class MissingColumn(Exception):
    """A required mapped column is absent from the CSV header."""


class UnsortedInput(Exception):
    """Records must be sorted by (fridge_id, timestamp)."""


@dataclass(slots=True)
class TelemetryRecord:
    timestamp: float
    fridge_id: str
    air_on_temperature: float
    air_off_temperature: float
    defrost_state: int
    store_id: str | None = None
    extra: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CsvSchema:
    """Maps canonical field names to CSV column names.

    ``columns`` must cover timestamp, air_on, air_off and defrost;
    fridge_id (and optionally store_id) may instead come from ``defaults``
    when the file describes a single unit. Unmapped columns ride along in
    each record's ``extra`` map, parsed as float when possible.
    """

    columns: dict
    defaults: dict = field(default_factory=dict)

    REQUIRED = ("timestamp", "air_on", "air_off", "defrost")


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reason: str


@dataclass(frozen=True)
class Setpoints:
    """Target case temperatures the controller aims for."""

    on: float
    off: float


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def parse_telemetry_csv(text: str, schema: CsvSchema):
    """Parse CSV text into records plus per-row rejects.

    Returns ``(records, rejects)``. Unparseable required fields reject the
    whole row with its 1-based data-row number (header not counted); other
    rows are unaffected. Raises MissingColumn when a required mapped column
    is missing from the header entirely.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty CSV: no header row") from None
    header = [h.strip() for h in header]
    positions = {name: i for i, name in enumerate(header)}

    for canonical in CsvSchema.REQUIRED:
        column = schema.columns.get(canonical)
        if column is None:
            raise MissingColumn(f"schema maps no column for required field {canonical!r}")
        if column not in positions:
            raise MissingColumn(f"required column {column!r} not in header")
    if "fridge_id" not in schema.columns and "fridge_id" not in schema.defaults:
        raise MissingColumn("schema provides neither a fridge_id column nor a default")
    for canonical in ("fridge_id", "store_id"):
        column = schema.columns.get(canonical)
        if column is not None and column not in positions:
            raise MissingColumn(f"required column {column!r} not in header")

    mapped = {column for column in schema.columns.values()}
    extra_columns = [name for name in header if name not in mapped]

    records: list[TelemetryRecord] = []
    rejects: list[RejectedRow] = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            cell = lambda canonical: row[positions[schema.columns[canonical]]].strip()
            timestamp = _parse_float(cell("timestamp"))
            air_on = _parse_float(cell("air_on"))
            air_off = _parse_float(cell("air_off"))
            defrost_raw = _parse_float(cell("defrost"))
            defrost = int(defrost_raw)
            if defrost != defrost_raw or defrost not in (0, 1):
                raise ValueError(f"defrost flag {defrost_raw!r} not in {{0, 1}}")
            if "fridge_id" in schema.columns:
                fridge_id = cell("fridge_id")
                if not fridge_id:
                    raise ValueError("empty fridge id")
            else:
                fridge_id = str(schema.defaults["fridge_id"])
            if "store_id" in schema.columns:
                store_id = cell("store_id") or None
            else:
                store_id = schema.defaults.get("store_id")
        except (ValueError, IndexError) as exc:
            rejects.append(RejectedRow(row=row_no, reason=str(exc)))
            continue

        extra = {}
        for name in extra_columns:
            position = positions[name]
            raw = row[position].strip() if position < len(row) else ""
            try:
                extra[name] = _parse_float(raw)
            except ValueError:
                extra[name] = raw
        records.append(
            TelemetryRecord(
                timestamp=timestamp,
                fridge_id=fridge_id,
                store_id=store_id,
                air_on_temperature=air_on,
                air_off_temperature=air_off,
                defrost_state=defrost,
                extra=extra,
            )
        )
    if rejects:
        log.info("parse_telemetry_csv: %d rows rejected", len(rejects))
    return records, rejects


def check_sorted(records: list[TelemetryRecord]):
    """Raise UnsortedInput unless sorted by (fridge_id, timestamp)."""
    for prev, cur in zip(records, records[1:]):
        if (cur.fridge_id, cur.timestamp) < (prev.fridge_id, prev.timestamp):
            raise UnsortedInput(
                f"records out of order near fridge {cur.fridge_id!r} t={cur.timestamp}"
            )


def derive_features(records: list[TelemetryRecord], setpoints: Setpoints):
    """Fill each record's derived map; returns new records, input untouched.

    Derived fields: timestamp_sec (alias of the timestamp), time_diff_sec
    (cadence delta within a fridge, 0.0 at each fridge's first record),
    air_on_diff/air_off_diff (temperature change since the previous record
    of the same fridge, 0.0 at its first record), targetTemp_on/off (the
    setpoints) and targetTemp_on_diff/off_diff (measured minus setpoint).
    Recomputing is idempotent: derived values are functions of the base
    fields of a record and its in-fridge predecessor only.
    """
    check_sorted(records)
    out = []
    prev_by_fridge: dict[str, TelemetryRecord] = {}
    for rec in records:
        prev = prev_by_fridge.get(rec.fridge_id)
        prev_by_fridge[rec.fridge_id] = rec
        derived = {
            "timestamp_sec": rec.timestamp,
            "time_diff_sec": 0.0 if prev is None else rec.timestamp - prev.timestamp,
            "air_on_diff": (
                0.0 if prev is None
                else rec.air_on_temperature - prev.air_on_temperature
            ),
            "air_off_diff": (
                0.0 if prev is None
                else rec.air_off_temperature - prev.air_off_temperature
            ),
            "targetTemp_on": setpoints.on,
            "targetTemp_on_diff": rec.air_on_temperature - setpoints.on,
            "targetTemp_off": setpoints.off,
            "targetTemp_off_diff": rec.air_off_temperature - setpoints.off,
        }
        out.append(
            TelemetryRecord(
                timestamp=rec.timestamp,
                fridge_id=rec.fridge_id,
                store_id=rec.store_id,
                air_on_temperature=rec.air_on_temperature,
                air_off_temperature=rec.air_off_temperature,
                defrost_state=rec.defrost_state,
                extra=dict(rec.extra),
                derived=derived,
            )
        )
    return out


def record_id(rec: TelemetryRecord) -> str:
    return f"{rec.fridge_id}:{rec.timestamp}"


def to_documents(records: list[TelemetryRecord]) -> list[dict]:
    """Lossless record -> document mapping; _id is "<fridge_id>:<timestamp>"."""
    docs = []
    for rec in records:
        doc = {
            "_id": record_id(rec),
            "timestamp": rec.timestamp,
            "fridge_id": rec.fridge_id,
            "store_id": rec.store_id,
            "air_on_temperature": rec.air_on_temperature,
            "air_off_temperature": rec.air_off_temperature,
            "defrost_state": rec.defrost_state,
            "extra": dict(rec.extra),
            "derived": dict(rec.derived),
        }
        docs.append(doc)
    return docs


def from_document(doc: dict) -> TelemetryRecord:
    return TelemetryRecord(
        timestamp=doc["timestamp"],
        fridge_id=doc["fridge_id"],
        store_id=doc.get("store_id"),
        air_on_temperature=doc["air_on_temperature"],
        air_off_temperature=doc["air_off_temperature"],
        defrost_state=doc["defrost_state"],
        extra=dict(doc.get("extra", {})),
        derived=dict(doc.get("derived", {})),
    )


def field_value(rec: TelemetryRecord, name: str):
    """Resolve a feature name against base, derived, then extra fields."""
    if name in ("timestamp", "air_on_temperature", "air_off_temperature",
                "defrost_state"):
        return getattr(rec, name)
    if name in rec.derived:
        return rec.derived[name]
    if name in rec.extra:
        return rec.extra[name]
    return None
