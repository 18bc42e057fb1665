"""Data wrangling: cleaning, example extraction, dataset splitting.

Raw fleet telemetry is messy in predictable ways: inconsistent categorical
spellings, duplicated rows from logger retries, physically impossible
spikes, dead sensor channels. The cleaning pass runs in a fixed order
(unify -> dedupe -> drop-constant -> sigma-clip, each a single pass) and
produces a ledger of what it removed.

Supervised examples are then cut from the cleaned streams. For
time-to-threshold regression, each defrost run (defrost flag 0->1 at t0,
1->0 at t1) yields a window of ``window_len`` steps strictly before t0 and
a target of t1 - t0 seconds; for fault classification, work-order texts
are regex-joined to fridges and windows end a fixed horizon before each
fault. Both window paths share :func:`assemble_window`, which is also what
inference uses, so training and serving assemble inputs identically.
"""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field, replace

import numpy as np

from coldflow.telemetry import TelemetryRecord, UnsortedInput, field_value

log = logging.getLogger(__name__)


class EmptyDataset(Exception):
    pass


class SingleClass(Exception):
    """balance_classes needs at least two labels present."""


class TooFewExamples(Exception):
    """Requested split fractions leave some part empty."""


class InsufficientHistory(Exception):
    """A window could not be assembled at the requested position."""


DEFAULT_FEATURES = ("air_on_temperature", "air_off_temperature")
DEFAULT_CADENCE_S = 60.0
DEFAULT_GAP_FACTOR = 3.0
# Plausibility band for defrost durations: anything under 10 minutes is a
# control blip, anything over 3x a long normal defrost (2700 s) is a fault
# or a data gap in disguise.
DEFAULT_TARGET_BAND_S = (600.0, 3 * 2700.0)


# --------------------------------------------------------------- cleaning


def unify_categoricals(values: list, canon_map: dict) -> list:
    """Map categorical variants onto canonical tokens.

    Keys of ``canon_map`` are lowercase-trimmed variants; values are the
    canonical token (or None for "treat as missing"). Strings are matched
    after lowercasing and trimming; unmapped values pass through unchanged.
    Canonical tokens map to themselves, so the operation is idempotent.
    """
    out = []
    unmapped: set = set()
    for value in values:
        if isinstance(value, str):
            key = value.strip().lower()
            if key in canon_map:
                out.append(canon_map[key])
                continue
            if value not in unmapped and value != "":
                unmapped.add(value)
        out.append(value)
    if unmapped:
        log.debug("unify_categoricals: %d unmapped variants: %s",
                  len(unmapped), sorted(unmapped)[:10])
    return out


def dedupe_records(records: list[TelemetryRecord]) -> list[TelemetryRecord]:
    """Drop records repeating a (fridge_id, timestamp) key, keeping the first.

    Stable; conflicting duplicates (same key, different payload) are logged.
    """
    seen: dict = {}
    out = []
    conflicts = 0
    for rec in records:
        key = (rec.fridge_id, rec.timestamp)
        if key in seen:
            if seen[key] != rec:
                conflicts += 1
            continue
        seen[key] = rec
        out.append(rec)
    if conflicts:
        log.warning("dedupe_records: %d conflicting duplicates dropped", conflicts)
    return out


def _value_key(value):
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        return ("num", float(value))
    return (type(value).__name__, value)


def drop_constant_features(columns: dict) -> list[str]:
    """Return the feature names worth keeping.

    A column with at most one distinct non-missing value (missing = None or
    NaN) carries no signal and is dropped, with a log line naming it.
    """
    if not columns:
        raise EmptyDataset("no columns given")
    retained = []
    for name, values in columns.items():
        distinct = set()
        for value in values:
            if value is None:
                continue
            if isinstance(value, float) and math.isnan(value):
                continue
            distinct.add(_value_key(value))
            if len(distinct) > 1:
                break
        if len(distinct) > 1:
            retained.append(name)
        else:
            log.info("drop_constant_features: dropping %r (%d distinct value%s)",
                     name, len(distinct), "" if len(distinct) == 1 else "s")
    return retained


@dataclass(frozen=True)
class SigmaClipResult:
    kept: list
    removed: list
    degenerate_std: bool


def sigma_clip(values: list, k: float) -> SigmaClipResult:
    """Single-pass sigma clipping against mean and population std.

    Values with |v - mean| > k * std are removed. A (near-)zero std means
    every deviation is zero signal: everything is kept and the result is
    flagged degenerate rather than raising.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return SigmaClipResult([], [], True)
    mean = float(arr.mean())
    std = float(arr.std())
    if std <= 1e-12 * max(1.0, abs(mean)):
        return SigmaClipResult(list(values), [], True)
    bound = k * std
    kept, removed = [], []
    for value in values:
        (kept if abs(float(value) - mean) <= bound else removed).append(value)
    return SigmaClipResult(kept, removed, False)


@dataclass(frozen=True)
class CleanerConfig:
    """Knobs for the fixed-order cleaning pass."""

    canon_maps: dict = field(default_factory=dict)
    sigma_k: float = 3.0
    sigma_columns: tuple = DEFAULT_FEATURES


@dataclass
class CleaningLedger:
    duplicates_removed: int = 0
    dropped_features: list = field(default_factory=list)
    clipped_records: int = 0
    degenerate_columns: list = field(default_factory=list)
    unified_columns: list = field(default_factory=list)


def clean_records(records: list[TelemetryRecord], config: CleanerConfig):
    """Full cleaning pass: unify -> dedupe -> drop-constant -> sigma-clip.

    Operates on extra-map categoricals (unify), whole records (dedupe,
    sigma-clip on the configured numeric columns) and extra-map features
    (drop-constant). Returns (cleaned_records, CleaningLedger). Each step is
    a single pass; on fleet-shaped data the whole pass is a fixed point, so
    cleaning twice equals cleaning once.
    """
    ledger = CleaningLedger()

    # 1. Unify categorical spellings in the extra maps.
    out = records
    if config.canon_maps:
        out = []
        for rec in records:
            extra = dict(rec.extra)
            for column, canon_map in config.canon_maps.items():
                if column in extra:
                    extra[column] = unify_categoricals([extra[column]], canon_map)[0]
            out.append(replace(rec, extra=extra))
        ledger.unified_columns = sorted(config.canon_maps)

    # 2. Dedupe on (fridge_id, timestamp), keep first.
    before = len(out)
    out = dedupe_records(out)
    ledger.duplicates_removed = before - len(out)

    # 3. Drop extra-map features with no signal.
    extra_names: list[str] = []
    for rec in out:
        for name in rec.extra:
            if name not in extra_names:
                extra_names.append(name)
    if extra_names:
        columns = {name: [rec.extra.get(name) for rec in out] for name in extra_names}
        retained = set(drop_constant_features(columns))
        ledger.dropped_features = [n for n in extra_names if n not in retained]
        if ledger.dropped_features:
            out = [
                replace(rec, extra={k: v for k, v in rec.extra.items() if k in retained})
                for rec in out
            ]

    # 4. Sigma-clip whole records on the configured numeric columns.
    bounds = {}
    for column in config.sigma_columns:
        pool = []
        for rec in out:
            value = field_value(rec, column)
            if isinstance(value, (int, float)) and not isinstance(value, bool) \
                    and math.isfinite(float(value)):
                pool.append(float(value))
        if not pool:
            continue
        arr = np.asarray(pool)
        mean, std = float(arr.mean()), float(arr.std())
        if std <= 1e-12 * max(1.0, abs(mean)):
            ledger.degenerate_columns.append(column)
            continue
        bounds[column] = (mean - config.sigma_k * std, mean + config.sigma_k * std)

    if bounds:
        kept = []
        for rec in out:
            bad = False
            for column, (lo, hi) in bounds.items():
                value = field_value(rec, column)
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    if not lo <= float(value) <= hi:
                        bad = True
                        break
            if bad:
                ledger.clipped_records += 1
            else:
                kept.append(rec)
        out = kept

    return out, ledger


# -------------------------------------------------------------- windowing


def group_by_fridge(records: list[TelemetryRecord]) -> dict:
    """Split a stream per fridge, requiring per-fridge time order.

    Accepts both fridge-major and time-interleaved streams; what matters
    downstream is that each fridge's own records never go backwards.
    """
    groups: dict[str, list[TelemetryRecord]] = {}
    for rec in records:
        bucket = groups.setdefault(rec.fridge_id, [])
        if bucket and rec.timestamp < bucket[-1].timestamp:
            raise UnsortedInput(
                f"fridge {rec.fridge_id!r} goes backwards at t={rec.timestamp}"
            )
        bucket.append(rec)
    return groups


def assemble_window(
    fridge_records: list[TelemetryRecord],
    end_before_ts: float,
    window_len: int,
    feature_names=DEFAULT_FEATURES,
    cadence_s: float = DEFAULT_CADENCE_S,
    gap_factor: float = DEFAULT_GAP_FACTOR,
    require_defrost_free: bool = True,
):
    """Cut a [window_len x features] matrix ending strictly before a time.

    The single window-assembly path used by training extraction and by
    inference. Returns (matrix, window_end_ts, None) on success or
    (None, None, reason) with reason in {"insufficient_history",
    "window_gap", "defrost_in_window", "non_finite"}.
    """
    timestamps = [r.timestamp for r in fridge_records]
    hi = _bisect_left(timestamps, end_before_ts)
    if hi < window_len:
        return None, None, "insufficient_history"
    window = fridge_records[hi - window_len : hi]
    max_gap = gap_factor * cadence_s
    if end_before_ts - window[-1].timestamp > max_gap:
        return None, None, "window_gap"
    for prev, cur in zip(window, window[1:]):
        if cur.timestamp - prev.timestamp > max_gap:
            return None, None, "window_gap"
    if require_defrost_free and any(r.defrost_state != 0 for r in window):
        return None, None, "defrost_in_window"
    matrix = np.empty((window_len, len(feature_names)), dtype=np.float64)
    for i, rec in enumerate(window):
        for j, name in enumerate(feature_names):
            value = field_value(rec, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) \
                    or not math.isfinite(float(value)):
                return None, None, "non_finite"
            matrix[i, j] = float(value)
    return matrix, window[-1].timestamp, None


def _bisect_left(timestamps, ts):
    lo, hi = 0, len(timestamps)
    while lo < hi:
        mid = (lo + hi) // 2
        if timestamps[mid] < ts:
            lo = mid + 1
        else:
            hi = mid
    return lo


# ----------------------------------------------------- defrost extraction


@dataclass
class DefrostExample:
    """One supervised example: pre-defrost window -> warming duration."""

    fridge_id: str
    store_id: str | None
    defrost_start_ts: float
    target_seconds: float
    observed: np.ndarray
    feature_names: tuple
    lead_seconds: float
    threshold_temp: float
    window_end_ts: float

    @property
    def event_id(self) -> str:
        return f"{self.fridge_id}:{self.defrost_start_ts!r}"


@dataclass(frozen=True)
class RejectedRun:
    fridge_id: str
    t0: float | None
    reason: str


def _defrost_runs(fridge_records):
    """Yield (start_index, end_index) where end is the first 0-record after
    the run, or None when the stream ends mid-defrost."""
    runs = []
    start = None
    for i, rec in enumerate(fridge_records):
        if rec.defrost_state == 1 and start is None:
            start = i
        elif rec.defrost_state == 0 and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, None))
    return runs


def extract_defrost_examples(
    records: list[TelemetryRecord],
    window_len: int,
    threshold: float,
    feature_names=DEFAULT_FEATURES,
    cadence_s: float = DEFAULT_CADENCE_S,
    gap_factor: float = DEFAULT_GAP_FACTOR,
    target_band_s=DEFAULT_TARGET_BAND_S,
):
    """Cut (window, duration) examples from every complete defrost run.

    For each maximal defrost_state==1 run starting at t0 and first back at 0
    at t1, the example's observed window is window_len steps strictly before
    t0 and target_seconds = t1 - t0. Runs are rejected, with reasons, when
    history is short, the window or run has cadence gaps over gap_factor x
    cadence_s, the window is not defrost-free, features are non-finite, or
    the duration falls outside the plausibility band.
    """
    band_lo, band_hi = target_band_s
    examples: list[DefrostExample] = []
    rejects: list[RejectedRun] = []
    for fridge_id, fridge_records in group_by_fridge(records).items():
        for start, end in _defrost_runs(fridge_records):
            t0 = fridge_records[start].timestamp
            if start == 0:
                rejects.append(RejectedRun(fridge_id, t0, "insufficient_history"))
                continue
            if end is None:
                rejects.append(RejectedRun(fridge_id, t0, "incomplete_run"))
                continue
            t1 = fridge_records[end].timestamp
            run_slice = fridge_records[start : end + 1]
            max_gap = gap_factor * cadence_s
            if any(b.timestamp - a.timestamp > max_gap
                   for a, b in zip(run_slice, run_slice[1:])):
                rejects.append(RejectedRun(fridge_id, t0, "run_gap"))
                continue
            target = t1 - t0
            if not band_lo <= target <= band_hi:
                rejects.append(RejectedRun(fridge_id, t0, "implausible_duration"))
                continue
            matrix, window_end, reason = assemble_window(
                fridge_records, t0, window_len, feature_names, cadence_s, gap_factor
            )
            if reason is not None:
                rejects.append(RejectedRun(fridge_id, t0, reason))
                continue
            examples.append(
                DefrostExample(
                    fridge_id=fridge_id,
                    store_id=fridge_records[start].store_id,
                    defrost_start_ts=t0,
                    target_seconds=target,
                    observed=matrix,
                    feature_names=tuple(feature_names),
                    lead_seconds=0.0,
                    threshold_temp=threshold,
                    window_end_ts=window_end,
                )
            )
    return examples, rejects


def shift_for_lead_time(
    records: list[TelemetryRecord],
    example: DefrostExample,
    lead_seconds: float,
    cadence_s: float = DEFAULT_CADENCE_S,
    gap_factor: float = DEFAULT_GAP_FACTOR,
):
    """Re-cut an example for decisions lead_seconds ahead of the event.

    The observed window slides back to end strictly before t0 -
    lead_seconds and the target grows by lead_seconds (time from decision
    to threshold instead of time from shutoff to threshold). Raises
    InsufficientHistory when the earlier window cannot be assembled.
    """
    if lead_seconds < 0:
        raise ValueError("lead_seconds must be >= 0")
    if lead_seconds == 0:
        return example
    fridge_records = [r for r in records if r.fridge_id == example.fridge_id]
    matrix, window_end, reason = assemble_window(
        fridge_records,
        example.defrost_start_ts - lead_seconds,
        len(example.observed),
        example.feature_names,
        cadence_s,
        gap_factor,
    )
    if reason is not None:
        raise InsufficientHistory(
            f"{example.fridge_id} t0={example.defrost_start_ts}: {reason}"
        )
    return DefrostExample(
        fridge_id=example.fridge_id,
        store_id=example.store_id,
        defrost_start_ts=example.defrost_start_ts,
        target_seconds=example.target_seconds + lead_seconds,
        observed=matrix,
        feature_names=example.feature_names,
        lead_seconds=lead_seconds,
        threshold_temp=example.threshold_temp,
        window_end_ts=window_end,
    )


# ------------------------------------------------------- fault extraction


@dataclass(frozen=True)
class Workorder:
    raw_text: str
    timestamp: float


@dataclass(frozen=True)
class FaultEvent:
    fridge_id: str
    store_id: str | None
    fault_name: str | None
    timestamp: float


@dataclass
class FaultExample:
    fridge_id: str
    store_id: str | None
    label: str  # "fault" or "no_fault"
    fault_name: str | None
    horizon_seconds: float
    observed: np.ndarray
    feature_names: tuple
    window_end_ts: float


def parse_workorders(workorders: list[Workorder], patterns: list[str]):
    """Regex-join free-text work orders to fridges.

    Each pattern is tried in order; the first match with a ``fridge_id``
    named group wins. Unmatched orders are counted, not raised: maintenance
    text is written by humans.
    """
    compiled = [re.compile(p) for p in patterns]
    events: list[FaultEvent] = []
    skipped = 0
    for order in workorders:
        for pattern in compiled:
            m = pattern.search(order.raw_text)
            if m and m.groupdict().get("fridge_id"):
                groups = m.groupdict()
                events.append(
                    FaultEvent(
                        fridge_id=groups["fridge_id"],
                        store_id=groups.get("store_id"),
                        fault_name=groups.get("fault_name"),
                        timestamp=order.timestamp,
                    )
                )
                break
        else:
            skipped += 1
    if skipped:
        log.info("parse_workorders: %d orders did not match any pattern", skipped)
    return events, skipped


@dataclass
class FaultMergeStats:
    positives: int = 0
    negatives: int = 0
    skipped_workorders: int = 0
    positive_rejects: list = field(default_factory=list)
    unmatched_fridges: int = 0


def merge_faults(
    records: list[TelemetryRecord],
    workorders: list[Workorder],
    horizon_seconds: float,
    window_len: int,
    patterns: list[str],
    feature_names=DEFAULT_FEATURES,
    negatives_per_positive: float = 1.0,
    seed: int = 0,
    cadence_s: float = DEFAULT_CADENCE_S,
    gap_factor: float = DEFAULT_GAP_FACTOR,
):
    """Join faults to telemetry and cut positive/negative windows.

    Positive: window ending horizon_seconds before a fault of that fridge.
    Negative: window whose end sits at least 2 x horizon_seconds away from
    every fault of the same fridge, sampled seeded-uniformly across the
    fleet. Defrost steps are allowed inside fault windows (they are normal
    operation). Returns (examples, FaultMergeStats).
    """
    events, skipped = parse_workorders(workorders, patterns)
    groups = group_by_fridge(records)
    stats = FaultMergeStats(skipped_workorders=skipped)
    examples: list[FaultExample] = []

    faults_by_fridge: dict[str, list[FaultEvent]] = {}
    for event in events:
        if event.fridge_id not in groups:
            stats.unmatched_fridges += 1
            continue
        faults_by_fridge.setdefault(event.fridge_id, []).append(event)

    for fridge_id, faults in faults_by_fridge.items():
        fridge_records = groups[fridge_id]
        for event in faults:
            boundary = event.timestamp - horizon_seconds
            matrix, window_end, reason = assemble_window(
                fridge_records, boundary, window_len, feature_names,
                cadence_s, gap_factor, require_defrost_free=False,
            )
            if reason is not None:
                stats.positive_rejects.append(RejectedRun(fridge_id, event.timestamp, reason))
                continue
            examples.append(
                FaultExample(
                    fridge_id=fridge_id,
                    store_id=fridge_records[0].store_id,
                    label="fault",
                    fault_name=event.fault_name,
                    horizon_seconds=horizon_seconds,
                    observed=matrix,
                    feature_names=tuple(feature_names),
                    window_end_ts=window_end,
                )
            )
    stats.positives = len(examples)

    # Negative candidates: every record position far from that fridge's
    # faults; sampled in seeded shuffled order until enough windows build.
    wanted = int(round(stats.positives * negatives_per_positive))
    candidates: list[tuple[str, float]] = []
    for fridge_id, fridge_records in groups.items():
        fault_times = np.asarray(
            [e.timestamp for e in faults_by_fridge.get(fridge_id, [])], dtype=float
        )
        times = np.asarray([r.timestamp for r in fridge_records], dtype=float)
        if fault_times.size:
            distance = np.abs(times[:, None] - fault_times[None, :]).min(axis=1)
            eligible = times[distance >= 2.0 * horizon_seconds]
        else:
            eligible = times
        candidates.extend((fridge_id, float(t)) for t in eligible)

    rng = random.Random(seed)
    rng.shuffle(candidates)
    negatives = 0
    for fridge_id, boundary in candidates:
        if negatives >= wanted:
            break
        matrix, window_end, reason = assemble_window(
            groups[fridge_id], boundary, window_len, feature_names,
            cadence_s, gap_factor, require_defrost_free=False,
        )
        if reason is not None:
            continue
        examples.append(
            FaultExample(
                fridge_id=fridge_id,
                store_id=groups[fridge_id][0].store_id,
                label="no_fault",
                fault_name=None,
                horizon_seconds=horizon_seconds,
                observed=matrix,
                feature_names=tuple(feature_names),
                window_end_ts=window_end,
            )
        )
        negatives += 1
    stats.negatives = negatives
    return examples, stats


def balance_classes(examples: list, seed: int) -> list:
    """Downsample the majority label to the minority count, seeded.

    Keeps original ordering of the survivors. Raises SingleClass when only
    one label is present.
    """
    by_label: dict[str, list[int]] = {}
    for i, ex in enumerate(examples):
        by_label.setdefault(ex.label, []).append(i)
    if len(by_label) < 2:
        raise SingleClass(f"labels present: {sorted(by_label)}")
    minority = min(len(v) for v in by_label.values())
    rng = random.Random(seed)
    keep: set[int] = set()
    for label in sorted(by_label):
        indices = by_label[label]
        if len(indices) > minority:
            indices = rng.sample(indices, minority)
        keep.update(indices)
    return [ex for i, ex in enumerate(examples) if i in keep]


# ----------------------------------------------------------------- splits


@dataclass(frozen=True)
class DatasetSplit:
    """Fixed test set plus a train pool; validation is drawn per round."""

    train_pool: tuple
    test: tuple
    val_size: int
    seed: int


def split_dataset(example_ids: list, test_fraction: float, val_fraction: float,
                  seed: int) -> DatasetSplit:
    """Split ids into a fixed seeded test set and a train pool.

    The validation set is not fixed here: call :func:`resample_validation`
    to draw a fresh multiset (with replacement, Monte Carlo style) from the
    train pool each round.
    """
    if not 0.0 < test_fraction < 1.0 or not 0.0 < val_fraction < 1.0 \
            or test_fraction + val_fraction >= 1.0:
        raise ValueError("fractions must lie in (0, 1) and sum below 1")
    n = len(example_ids)
    test_n = int(round(n * test_fraction))
    val_n = int(round(n * val_fraction))
    if test_n < 1 or val_n < 1 or n - test_n - val_n < 1:
        raise TooFewExamples(f"{n} ids cannot honor the requested fractions")
    rng = random.Random(seed)
    test = rng.sample(list(example_ids), test_n)
    test_set = set(test)
    train_pool = [x for x in example_ids if x not in test_set]
    return DatasetSplit(
        train_pool=tuple(train_pool), test=tuple(test), val_size=val_n, seed=seed
    )


def resample_validation(split: DatasetSplit, round_seed: int) -> list:
    """Draw a validation multiset with replacement from the train pool."""
    rng = random.Random(round_seed)
    return rng.choices(list(split.train_pool), k=split.val_size)
