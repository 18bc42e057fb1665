"""Cleaning, window extraction, fault merging and splits."""

import math

import numpy as np
import pytest

from coldflow.telemetry import TelemetryRecord
from coldflow.wrangler import (
    CleanerConfig,
    DatasetSplit,
    EmptyDataset,
    InsufficientHistory,
    SingleClass,
    TooFewExamples,
    Workorder,
    assemble_window,
    balance_classes,
    clean_records,
    dedupe_records,
    drop_constant_features,
    extract_defrost_examples,
    merge_faults,
    parse_workorders,
    resample_validation,
    shift_for_lead_time,
    sigma_clip,
    split_dataset,
    unify_categoricals,
)


def make_record(ts, fridge="f1", air_on=3.0, air_off=1.5, defrost=0, **kwargs):
    return TelemetryRecord(
        timestamp=float(ts),
        fridge_id=fridge,
        air_on_temperature=air_on,
        air_off_temperature=air_off,
        defrost_state=defrost,
        **kwargs,
    )


# --------------------------------------------------------------- cleaning


def test_sigma_clip_hand_oracle():
    # mean = 50/10 = 5, population var = (9*25 + 45^2)/10 = 225, std = 15.
    # k=2 bound is 30: the 50 is 45 away and must go, the zeros stay.
    result = sigma_clip([0.0] * 9 + [50.0], k=2.0)
    assert result.kept == [0.0] * 9
    assert result.removed == [50.0]
    assert not result.degenerate_std


def test_sigma_clip_constant_is_degenerate_not_fatal():
    result = sigma_clip([5.0] * 10, k=3.0)
    assert result.kept == [5.0] * 10
    assert result.removed == []
    assert result.degenerate_std


def test_sigma_clip_empty():
    result = sigma_clip([], k=3.0)
    assert result.kept == [] and result.removed == []
    assert result.degenerate_std


def test_sigma_clip_fleet_shaped_spikes():
    # 18 full 0..10 cycles plus two sensor-glitch extremes. Both extremes
    # sit far beyond 3 sigma even though they inflate the std themselves.
    values = [float(i % 11) for i in range(198)] + [50.0, -45.0]
    result = sigma_clip(values, k=3.0)
    assert result.removed == [50.0, -45.0]
    assert len(result.kept) == 198
    assert not result.degenerate_std


def test_unify_categoricals_lowercase_trim_and_missing():
    canon = {"yes": "yes", "y": "yes", "true": "yes", "": None}
    values = ["Yes", " YES ", "y", "no", "", "yes"]
    assert unify_categoricals(values, canon) == ["yes", "yes", "yes", "no", None, "yes"]


def test_unify_categoricals_idempotent():
    canon = {"yes": "yes", "y": "yes", "": None}
    values = ["Y", "no", "", None, 3.5]
    once = unify_categoricals(values, canon)
    assert unify_categoricals(once, canon) == once


def test_dedupe_keeps_first():
    a = make_record(0, air_on=1.0)
    b = make_record(0, air_on=9.9)  # same key, conflicting payload
    c = make_record(60)
    d = make_record(0, fridge="f2")  # other fridge, same timestamp: kept
    assert dedupe_records([a, b, c, d]) == [a, c, d]


def test_drop_constant_features():
    columns = {
        "a": [1, 1, 1],
        "b": [1, 2, 1],
        "c": [None, None, None],
        "d": [1.0, 1, None],  # 1.0 and 1 are the same number
        "e": [float("nan"), 2.0, float("nan")],
    }
    assert drop_constant_features(columns) == ["b"]
    with pytest.raises(EmptyDataset):
        drop_constant_features({})


def build_dirty_fixture():
    records = []
    for i in range(60):
        records.append(
            make_record(
                i * 60.0,
                air_on=float(i % 11),
                extra={"door": ["OPEN", "open ", "shut"][i % 3], "dead": 7.0},
            )
        )
    records.insert(10, records[9])  # duplicate row (same key and payload)
    records.append(
        make_record(60 * 60.0, air_on=50.0, extra={"door": "shut", "dead": 7.0})
    )
    config = CleanerConfig(
        canon_maps={"door": {"open": "open", "shut": "shut"}},
        sigma_k=3.0,
        sigma_columns=("air_on_temperature",),
    )
    return records, config


def test_clean_records_composite():
    records, config = build_dirty_fixture()
    cleaned, ledger = clean_records(records, config)
    assert ledger.duplicates_removed == 1
    assert ledger.dropped_features == ["dead"]
    assert ledger.clipped_records == 1
    assert len(cleaned) == 60
    assert all(rec.extra.get("door") in ("open", "shut") for rec in cleaned)
    assert all("dead" not in rec.extra for rec in cleaned)
    assert max(r.air_on_temperature for r in cleaned) <= 10.0


def test_clean_records_idempotent_on_fixture():
    records, config = build_dirty_fixture()
    once, _ = clean_records(records, config)
    twice, ledger2 = clean_records(once, config)
    assert twice == once
    assert ledger2.duplicates_removed == 0
    assert ledger2.clipped_records == 0
    assert ledger2.dropped_features == []


# -------------------------------------------------------------- windowing


def contiguous_stream(n, fridge="f1", start=0.0, defrost_at=()):
    return [
        make_record(start + i * 60.0, fridge=fridge, air_on=3.0 + 0.01 * i,
                    defrost=1 if i in defrost_at else 0)
        for i in range(n)
    ]


def test_assemble_window_basic_and_strictness():
    records = contiguous_stream(10)
    matrix, end_ts, reason = assemble_window(records, records[5].timestamp, 5)
    assert reason is None
    # Strictly before: the record at the boundary timestamp is excluded.
    assert end_ts == records[4].timestamp
    assert matrix.shape == (5, 2)
    assert matrix[-1, 0] == records[4].air_on_temperature


def test_assemble_window_rejects():
    records = contiguous_stream(10)
    _, _, reason = assemble_window(records, records[3].timestamp, 5)
    assert reason == "insufficient_history"

    gappy = contiguous_stream(5) + contiguous_stream(5, start=1000 * 60.0)
    _, _, reason = assemble_window(gappy, gappy[-1].timestamp + 60.0, 8)
    assert reason == "window_gap"

    # Old history far from the boundary is a gap too.
    _, _, reason = assemble_window(contiguous_stream(10), 10_000.0, 5)
    assert reason == "window_gap"

    defrosty = contiguous_stream(10, defrost_at={7})
    _, _, reason = assemble_window(defrosty, defrosty[9].timestamp, 5)
    assert reason == "defrost_in_window"
    matrix, _, reason = assemble_window(
        defrosty, defrosty[9].timestamp, 5, require_defrost_free=False
    )
    assert reason is None and matrix.shape == (5, 2)

    nanny = contiguous_stream(10)
    nanny[8] = make_record(nanny[8].timestamp, air_on=float("nan"))
    _, _, reason = assemble_window(nanny, nanny[9].timestamp + 60.0, 5)
    assert reason == "non_finite"


# ----------------------------------------------------- defrost extraction


def defrost_stream(pre=40, run=30, post=20, fridge="f1", start=0.0):
    """pre zeros, run ones, post zeros at a 60 s cadence."""
    records = []
    for i in range(pre + run + post):
        records.append(
            make_record(start + i * 60.0, fridge=fridge, air_on=2.0 + 0.05 * (i % 7),
                        defrost=1 if pre <= i < pre + run else 0)
        )
    return records


def test_extract_defrost_examples_target_oracle():
    # Run spans indices 40..69; first zero after it is index 70.
    # t0 = 2400 s, t1 = 4200 s, so the target is exactly 1800 s.
    records = defrost_stream(pre=40, run=30, post=20)
    examples, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert rejects == []
    assert len(examples) == 1
    ex = examples[0]
    assert ex.target_seconds == 1800.0
    assert ex.defrost_start_ts == 2400.0
    assert ex.window_end_ts == 39 * 60.0
    assert ex.lead_seconds == 0.0
    assert ex.observed.shape == (5, 2)
    assert ex.event_id == "f1:2400.0"


def test_extract_defrost_rejects():
    # Ends mid-defrost.
    records = defrost_stream(pre=40, run=30, post=0)
    examples, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert examples == [] and [r.reason for r in rejects] == ["incomplete_run"]

    # 5-step run is a 300 s duration: below the plausibility band.
    records = defrost_stream(pre=40, run=5, post=5)
    _, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert [r.reason for r in rejects] == ["implausible_duration"]

    # Run at the very start of the stream has no observable history.
    records = defrost_stream(pre=0, run=30, post=5)
    _, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert [r.reason for r in rejects] == ["insufficient_history"]

    # A gap inside the run makes the duration untrustworthy.
    records = defrost_stream(pre=40, run=30, post=20)
    records = [r for r in records if not (2700.0 <= r.timestamp <= 3300.0)]
    _, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert [r.reason for r in rejects] == ["run_gap"]


def test_extract_handles_multiple_fridges_and_runs():
    records = sorted(
        defrost_stream(fridge="a") + defrost_stream(fridge="b")
        + defrost_stream(fridge="a", start=90 * 60.0),
        key=lambda r: r.timestamp,
    )
    examples, rejects = extract_defrost_examples(records, window_len=5, threshold=8.0)
    assert rejects == []
    assert sorted(ex.fridge_id for ex in examples) == ["a", "a", "b"]
    assert all(ex.target_seconds == 1800.0 for ex in examples)


def test_shift_for_lead_time():
    records = defrost_stream(pre=40, run=30, post=20)
    examples, _ = extract_defrost_examples(records, window_len=5, threshold=8.0)
    shifted = shift_for_lead_time(records, examples[0], 120.0)
    # Boundary slides to 2280 s: window covers indices 33..37.
    assert shifted.target_seconds == 1920.0
    assert shifted.window_end_ts == 37 * 60.0
    assert shifted.lead_seconds == 120.0
    assert shifted.defrost_start_ts == examples[0].defrost_start_ts
    # Window really is the earlier cut, not the original.
    assert shifted.observed[-1, 0] == records[37].air_on_temperature

    assert shift_for_lead_time(records, examples[0], 0.0) is examples[0]

    with pytest.raises(InsufficientHistory):
        shift_for_lead_time(records, examples[0], 2400.0)


# ------------------------------------------------------- fault extraction

PATTERNS = [
    r"store (?P<store_id>S\d+) fridge (?P<fridge_id>F\d+) (?P<fault_name>[a-z ]+) fault",
    r"fridge (?P<fridge_id>F\d+) needs (?P<fault_name>[a-z ]+)",
]


def test_parse_workorders():
    orders = [
        Workorder("store S01 fridge F001 icepack fault", 1000.0),
        Workorder("fridge F002 needs new compressor", 2000.0),
        Workorder("please mop aisle five", 3000.0),
    ]
    events, skipped = parse_workorders(orders, PATTERNS)
    assert skipped == 1
    assert [e.fridge_id for e in events] == ["F001", "F002"]
    assert events[0].store_id == "S01"
    assert events[0].fault_name == "icepack"
    assert events[1].store_id is None
    assert events[1].fault_name == "new compressor"
    assert events[1].timestamp == 2000.0


def fault_fixture():
    day = 24 * 3600
    records = []
    for fridge in ("F001", "F002", "F003"):
        records.extend(
            make_record(i * 60.0, fridge=fridge, air_on=3.0 + 0.01 * (i % 5))
            for i in range(2 * day // 60)
        )
    records.sort(key=lambda r: r.timestamp)
    orders = [
        Workorder("store S01 fridge F001 icepack fault", 30 * 3600.0),
        Workorder("fridge F002 needs gas recharge", 40 * 3600.0),
    ]
    return records, orders


def test_merge_faults_positives_and_negative_distance():
    records, orders = fault_fixture()
    horizon = 4 * 3600.0
    examples, stats = merge_faults(
        records, orders, horizon, window_len=8, patterns=PATTERNS,
        negatives_per_positive=2.0, seed=7,
    )
    positives = [e for e in examples if e.label == "fault"]
    negatives = [e for e in examples if e.label == "no_fault"]
    assert stats.positives == len(positives) == 2
    assert stats.negatives == len(negatives) == 4
    assert stats.skipped_workorders == 0

    by_fridge_faults = {"F001": 30 * 3600.0, "F002": 40 * 3600.0}
    for ex in positives:
        fault_ts = by_fridge_faults[ex.fridge_id]
        # Window ends strictly before fault - horizon, within one cadence.
        assert fault_ts - horizon - 60.0 <= ex.window_end_ts < fault_ts - horizon
    for ex in negatives:
        if ex.fridge_id in by_fridge_faults:
            distance = abs(ex.window_end_ts - by_fridge_faults[ex.fridge_id])
            assert distance >= 2 * horizon - 60.0


def test_merge_faults_deterministic():
    records, orders = fault_fixture()
    kwargs = dict(horizon_seconds=4 * 3600.0, window_len=8, patterns=PATTERNS,
                  negatives_per_positive=3.0, seed=11)
    first, _ = merge_faults(records, orders, **kwargs)
    second, _ = merge_faults(records, orders, **kwargs)
    assert [(e.fridge_id, e.label, e.window_end_ts) for e in first] \
        == [(e.fridge_id, e.label, e.window_end_ts) for e in second]
    third, _ = merge_faults(records, orders, **{**kwargs, "seed": 12})
    assert [(e.fridge_id, e.label, e.window_end_ts) for e in first] \
        != [(e.fridge_id, e.label, e.window_end_ts) for e in third]


def test_merge_faults_unmatched_fridge_counted():
    records, _ = fault_fixture()
    orders = [Workorder("store S09 fridge F999 icepack fault", 30 * 3600.0)]
    examples, stats = merge_faults(
        records, orders, 4 * 3600.0, window_len=8, patterns=PATTERNS, seed=1
    )
    assert stats.positives == 0 and stats.negatives == 0
    assert stats.unmatched_fridges == 1
    assert examples == []


def test_balance_classes():
    records, orders = fault_fixture()
    examples, _ = merge_faults(
        records, orders, 4 * 3600.0, window_len=8, patterns=PATTERNS,
        negatives_per_positive=5.0, seed=3,
    )
    balanced = balance_classes(examples, seed=0)
    labels = [e.label for e in balanced]
    assert labels.count("fault") == labels.count("no_fault") == 2
    assert balance_classes(examples, seed=0) == balanced

    with pytest.raises(SingleClass):
        balance_classes([e for e in examples if e.label == "no_fault"], seed=0)


# ----------------------------------------------------------------- splits


def test_split_dataset_counts_and_disjointness():
    ids = [f"ex{i}" for i in range(110)]
    split = split_dataset(ids, test_fraction=1 / 11, val_fraction=1 / 11, seed=42)
    assert len(split.test) == 10
    assert len(split.train_pool) == 100
    assert split.val_size == 10
    assert set(split.test).isdisjoint(split.train_pool)
    assert sorted(split.test + split.train_pool) == sorted(ids)
    again = split_dataset(ids, test_fraction=1 / 11, val_fraction=1 / 11, seed=42)
    assert again == split


def test_resample_validation_is_monte_carlo():
    ids = [f"ex{i}" for i in range(110)]
    split = split_dataset(ids, 1 / 11, 1 / 11, seed=42)
    round1 = resample_validation(split, round_seed=1)
    round2 = resample_validation(split, round_seed=2)
    assert len(round1) == len(round2) == 10
    assert set(round1) <= set(split.train_pool)
    assert round1 != round2
    assert resample_validation(split, round_seed=1) == round1


def test_split_dataset_errors():
    with pytest.raises(TooFewExamples):
        split_dataset(["a", "b", "c"], 0.1, 0.1, seed=0)
    with pytest.raises(ValueError):
        split_dataset([f"e{i}" for i in range(100)], 0.6, 0.5, seed=0)
    with pytest.raises(ValueError):
        split_dataset([f"e{i}" for i in range(100)], 0.0, 0.1, seed=0)
