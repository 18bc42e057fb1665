"""End-to-end pipeline tasks over a document store.

Every task reads from and writes to named collections in one store, so a
pipeline run is fully described by (store, config): telemetry and work
orders go in, supervised examples, trained model blobs, predictions, a
demand-response selection and a final report come out. Documents with
deterministic ids are written once and skipped when already present, so
re-running a stage is harmless.

Nothing in this module reads the wall clock. Model ids hash their content,
report timestamps come from the data's own time axis, and every random
draw is seeded from the config, so two runs from the same config produce
byte-identical stores.

Tasks are exposed twice: as plain functions over an open store (library
use, tests) and as builtins in REGISTRY for the stage orchestrator, which
hands each worker the store path and the validated config.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from coldflow.docstore import NotFound, canonical_dumps, open_store
from coldflow.fridgesim import (
    SimConfig,
    fleet_specs,
    noise_free,
    plan_faults,
    simulate_fleet,
    workorders_for_plans,
)
from coldflow.neural import TrainConfig, from_bytes, predict_labels, predict_values, to_bytes, train
from coldflow.telemetry import Setpoints, derive_features, from_document, to_documents
from coldflow.wrangler import (
    InsufficientHistory,
    Workorder,
    balance_classes,
    extract_defrost_examples,
    merge_faults,
    shift_for_lead_time,
    split_dataset,
)

log = logging.getLogger(__name__)

TELEMETRY = "telemetry"
WORKORDERS = "workorders"
DSR_EXAMPLES = "dsr_examples"
FAULT_EXAMPLES = "fault_examples"
MODEL_INDEX = "model_index"
PREDICTIONS = "predictions"
SELECTIONS = "selections"
REPORTS = "reports"


class PipelineError(Exception):
    pass


def insert_new(store, collection: str, docs: list[dict]) -> tuple[int, int]:
    """Insert only documents whose _id is not already present.

    Returns (inserted, skipped). With deterministic ids this makes every
    writer task idempotent: a re-run finds its output already there.
    """
    fresh = []
    skipped = 0
    for doc in docs:
        try:
            store.get(collection, doc["_id"])
            skipped += 1
        except NotFound:
            fresh.append(doc)
    if fresh:
        store.insert_many(collection, fresh)
    return len(fresh), skipped


# ---------------------------------------------------------------- ingest


def ingest_records(store, records, setpoints: Setpoints) -> tuple[int, int]:
    """Derive per-record features and store telemetry documents."""
    derived = derive_features(records, setpoints)
    return insert_new(store, TELEMETRY, to_documents(derived))


def ingest_workorders(store, orders) -> tuple[int, int]:
    """Store (raw_text, timestamp) work orders with stable positional ids."""
    ordered = sorted(orders, key=lambda pair: (pair[1], pair[0]))
    docs = [
        {"_id": f"wo:{i:06d}", "raw_text": text, "timestamp": ts}
        for i, (text, ts) in enumerate(ordered)
    ]
    return insert_new(store, WORKORDERS, docs)


def fridge_ids(store) -> list[str]:
    groups = store.aggregate(TELEMETRY, [{"$group": {"_id": "$fridge_id"}}])
    return sorted(g["_id"] for g in groups)


def telemetry_for(store, fridge_id: str):
    store.create_index(TELEMETRY, "fridge_id")
    docs = store.aggregate(
        TELEMETRY,
        [{"$match": {"fridge_id": fridge_id}}, {"$sort": {"timestamp": 1}}],
    )
    return [from_document(d) for d in docs]


# --------------------------------------------------------------- wrangle


def _dsr_example_doc(example, split: str) -> dict:
    return {
        "_id": f"dsr:{example.fridge_id}:{example.defrost_start_ts!r}:"
               f"{int(example.lead_seconds)}",
        "event_id": example.event_id,
        "fridge_id": example.fridge_id,
        "store_id": example.store_id,
        "defrost_start_ts": example.defrost_start_ts,
        "target_seconds": example.target_seconds,
        "lead_seconds": example.lead_seconds,
        "threshold_temp": example.threshold_temp,
        "window_end_ts": example.window_end_ts,
        "feature_names": list(example.feature_names),
        "observed": [list(map(float, row)) for row in example.observed],
        "split": split,
    }


def wrangle_dsr(store, config: dict) -> dict:
    """Cut defrost-duration examples at every configured lead and split them.

    The split is assigned per defrost event, so all leads of one event land
    on the same side and the test set never shares an event with training.
    """
    w = config["wrangle"]
    events = []
    rejects = 0
    shift_failures = 0
    per_event_examples: dict[str, list] = {}
    for fid in fridge_ids(store):
        records = telemetry_for(store, fid)
        examples, fridge_rejects = extract_defrost_examples(
            records,
            window_len=w["window_len"],
            threshold=w["threshold_temp"],
            feature_names=tuple(w["features"]),
            cadence_s=w["cadence_s"],
            gap_factor=w["gap_factor"],
            target_band_s=tuple(w["target_band_s"]),
        )
        rejects += len(fridge_rejects)
        for example in examples:
            variants = []
            for lead in w["leads"]:
                try:
                    variants.append(
                        shift_for_lead_time(records, example, lead,
                                            cadence_s=w["cadence_s"],
                                            gap_factor=w["gap_factor"])
                    )
                except InsufficientHistory:
                    shift_failures += 1
            if len(variants) == len(w["leads"]):
                events.append(example.event_id)
                per_event_examples[example.event_id] = variants

    if not events:
        raise PipelineError("wrangle_dsr produced no usable defrost events")
    split = split_dataset(sorted(events), w["test_fraction"], w["val_fraction"],
                          config["seed"])
    test_events = set(split.test)
    docs = []
    for event_id in sorted(per_event_examples):
        tag = "test" if event_id in test_events else "train"
        docs.extend(_dsr_example_doc(ex, tag) for ex in per_event_examples[event_id])
    inserted, skipped = insert_new(store, DSR_EXAMPLES, docs)
    summary = {
        "events": len(events),
        "examples": len(docs),
        "rejected_runs": rejects,
        "lead_shift_failures": shift_failures,
        "train_events": len(events) - len(test_events),
        "test_events": len(test_events),
        "inserted": inserted,
        "skipped": skipped,
    }
    log.info("wrangle_dsr: %s", summary)
    return summary


def _fault_example_doc(example, split: str) -> dict:
    return {
        "_id": f"fault:{example.fridge_id}:{example.window_end_ts!r}:{example.label}",
        "fridge_id": example.fridge_id,
        "store_id": example.store_id,
        "label": example.label,
        "fault_name": example.fault_name,
        "horizon_seconds": example.horizon_seconds,
        "window_end_ts": example.window_end_ts,
        "feature_names": list(example.feature_names),
        "observed": [list(map(float, row)) for row in example.observed],
        "split": split,
    }


def wrangle_faults(store, config: dict) -> dict:
    """Join work orders to telemetry and store labeled fault windows."""
    f = config["faults"]
    w = config["wrangle"]
    if f is None:
        raise PipelineError("config has no faults section")
    records = []
    for fid in fridge_ids(store):
        records.extend(telemetry_for(store, fid))
    orders = [
        Workorder(doc["raw_text"], doc["timestamp"])
        for doc in store.find_all(WORKORDERS)
    ]
    examples, stats = merge_faults(
        records,
        orders,
        horizon_seconds=f["horizon_s"],
        window_len=f["window_len"],
        patterns=f["patterns"],
        feature_names=tuple(w["features"]),
        negatives_per_positive=f["negatives_per_positive"],
        seed=config["seed"],
        cadence_s=w["cadence_s"],
        gap_factor=w["gap_factor"],
    )
    if f["balance"] and examples:
        examples = balance_classes(examples, config["seed"])
    if not examples:
        raise PipelineError("wrangle_faults produced no examples; "
                            f"merge stats: {stats}")
    ids = sorted(_fault_example_doc(ex, "train")["_id"] for ex in examples)
    split = split_dataset(ids, f["test_fraction"], f["val_fraction"], config["seed"])
    test_ids = set(split.test)
    docs = []
    for example in examples:
        doc = _fault_example_doc(example, "train")
        doc["split"] = "test" if doc["_id"] in test_ids else "train"
        docs.append(doc)
    docs.sort(key=lambda d: d["_id"])
    inserted, skipped = insert_new(store, FAULT_EXAMPLES, docs)
    summary = {
        "positives": stats.positives,
        "negatives": stats.negatives,
        "skipped_workorders": stats.skipped_workorders,
        "examples": len(docs),
        "inserted": inserted,
        "skipped": skipped,
    }
    log.info("wrangle_faults: %s", summary)
    return summary


# ----------------------------------------------------------------- learn


def _example_matrix(docs: list[dict]):
    return np.asarray([doc["observed"] for doc in docs], dtype=float)


def _training_docs(store, entry: dict, split: str) -> list[dict]:
    if entry["task"] == "regression":
        collection = DSR_EXAMPLES
        match = {"split": split, "lead_seconds": entry["lead_seconds"]}
    else:
        collection = FAULT_EXAMPLES
        match = {"split": split}
    pipeline = [{"$match": match}] + list(entry["select"])
    docs = store.aggregate(collection, pipeline)
    docs.sort(key=lambda d: d["_id"])
    return docs


def learn_model(store, entry: dict, global_seed: int) -> dict:
    """Train one configured model on the train split and store the blob."""
    docs = _training_docs(store, entry, "train")
    if not docs:
        raise PipelineError(f"learn {entry['name']}: no training examples matched")
    X = _example_matrix(docs)
    seed = entry["seed"] if entry["seed"] is not None else global_seed
    train_config = TrainConfig(
        cell=entry["cell"],
        layers=entry["layers"],
        hidden=entry["hidden"],
        task=entry["task"],
        batch_size=entry["batch_size"],
        epochs=entry["epochs"],
        learning_rate=entry["learning_rate"],
        seed=seed,
        meta={"name": entry["name"], "lead_seconds": entry["lead_seconds"]},
    )
    if entry["task"] == "regression":
        y = np.asarray([doc["target_seconds"] for doc in docs], dtype=float)
    else:
        y = [doc["label"] for doc in docs]
    result = train(X, y, train_config)
    final = result.history[-1]
    select_hash = hashlib.blake2b(
        canonical_dumps(list(entry["select"])).encode("utf-8"), digest_size=8
    ).hexdigest()
    meta = {
        "name": entry["name"],
        "task": entry["task"],
        "lead_seconds": entry["lead_seconds"],
        "cell": entry["cell"],
        "layers": entry["layers"],
        "hidden": entry["hidden"],
        "epochs": entry["epochs"],
        "seed": seed,
        "examples": len(docs),
        # Data clock, not wall clock: the newest window the model saw.
        "created": max(doc["window_end_ts"] for doc in docs),
        "select_hash": select_hash,
        "loss_history": [[e.train_loss, e.val_loss] for e in result.history],
        "final_train_loss": final.train_loss,
        "final_val_loss": final.val_loss,
    }
    if final.val_accuracy is not None:
        meta["final_val_accuracy"] = final.val_accuracy
    model_id = store.put_model(meta, to_bytes(result.artifact))
    index_doc = dict(meta, _id=f"model:{entry['name']}", model_id=model_id)
    insert_new(store, MODEL_INDEX, [index_doc])
    log.info("learn %s: model %s over %d examples, final val %.3f",
             entry["name"], model_id, len(docs), final.val_loss)
    return index_doc


def load_model(store, name: str):
    """Fetch a trained model by its configured name."""
    index_doc = store.get(MODEL_INDEX, f"model:{name}")
    _, weights = store.get_model(index_doc["model_id"])
    return index_doc, from_bytes(weights)


# ----------------------------------------------------------------- infer


def infer_model(store, entry: dict) -> dict:
    """Run a stored model over a split and persist per-example predictions.

    Regression predictions carry predicted_safe_off_s: the predicted
    seconds to threshold minus the decision lead, i.e. how long the fridge
    can stay off after the decision point.
    """
    index_doc, artifact = load_model(store, entry["model"])
    task = index_doc["task"]
    learn_like = {
        "task": task,
        "lead_seconds": index_doc["lead_seconds"],
        "select": entry["select"],
    }
    docs = _training_docs(store, learn_like, entry["split"])
    if not docs:
        raise PipelineError(f"infer {entry['model']}: no examples in split "
                            f"{entry['split']!r}")
    X = _example_matrix(docs)
    out = []
    if task == "regression":
        predictions = predict_values(artifact, X)
        lead = float(index_doc["lead_seconds"])
        for doc, value in zip(docs, predictions):
            out.append({
                "_id": f"pred:{entry['model']}:{doc['_id']}",
                "model_name": entry["model"],
                "model_id": index_doc["model_id"],
                "example_id": doc["_id"],
                "fridge_id": doc["fridge_id"],
                "store_id": doc["store_id"],
                "split": doc["split"],
                "lead_seconds": lead,
                "window_end_ts": doc["window_end_ts"],
                "target_seconds": doc["target_seconds"],
                "predicted_seconds": float(value),
                "predicted_safe_off_s": float(value) - lead,
            })
    else:
        labels, probs = predict_labels(artifact, X)
        for doc, label, p in zip(docs, labels, probs):
            out.append({
                "_id": f"pred:{entry['model']}:{doc['_id']}",
                "model_name": entry["model"],
                "model_id": index_doc["model_id"],
                "example_id": doc["_id"],
                "fridge_id": doc["fridge_id"],
                "store_id": doc["store_id"],
                "split": doc["split"],
                "window_end_ts": doc["window_end_ts"],
                "label_true": doc["label"],
                "label_predicted": label,
                "probabilities": {
                    cls: float(v) for cls, v in zip(artifact.classes, p)
                },
            })
    inserted, skipped = insert_new(store, PREDICTIONS, out)
    summary = {"model": entry["model"], "split": entry["split"],
               "predictions": len(out), "inserted": inserted, "skipped": skipped}
    log.info("infer: %s", summary)
    return summary


# ---------------------------------------------------------------- select


@dataclass(frozen=True)
class CandidateSelection:
    chosen: tuple
    total_kw: float
    target_kw: float
    feasible: bool


def select_candidates(candidates: list[dict], target_kw: float) -> CandidateSelection:
    """Greedy shed-capacity selection.

    Candidates are sorted by power (desc), predicted safe-off time (desc),
    fridge id (asc) and taken until the running power total reaches the
    target. Largest-first guarantees that a feasible target is met with the
    fewest fridges, and it is infeasible only when even the full fleet
    falls short.
    """
    ranked = sorted(
        candidates,
        key=lambda c: (-c["power_kw"], -c["predicted_safe_off_s"], c["fridge_id"]),
    )
    chosen = []
    total = 0.0
    for candidate in ranked:
        if total >= target_kw:
            break
        chosen.append(candidate)
        total += candidate["power_kw"]
    return CandidateSelection(
        chosen=tuple(chosen),
        total_kw=total,
        target_kw=target_kw,
        feasible=total >= target_kw,
    )


def select_dsr(store, config: dict) -> dict:
    """Pick fridges for a demand-response event from model predictions.

    One candidate per fridge: its most recent prediction on the configured
    split, eligible only if the predicted safe-off time clears the floor.
    Fridge power ratings come from the telemetry's own power channel.
    """
    s = config["select"]
    if s is None:
        raise PipelineError("config has no select section")
    docs = store.aggregate(PREDICTIONS, [
        {"$match": {"model_name": s["model"], "split": s["split"]}},
        {"$sort": {"window_end_ts": 1}},
    ])
    if not docs:
        raise PipelineError(f"select: no predictions for model {s['model']!r} "
                            f"on split {s['split']!r}")
    latest: dict[str, dict] = {}
    for doc in docs:
        latest[doc["fridge_id"]] = doc

    power = {
        g["_id"]: g["kw"]
        for g in store.aggregate(TELEMETRY, [
            {"$group": {"_id": "$fridge_id", "kw": {"$max": "$extra.power_kw"}}}
        ])
    }
    candidates = []
    for fid in sorted(latest):
        doc = latest[fid]
        if doc["predicted_safe_off_s"] < s["min_safe_off_s"]:
            continue
        candidates.append({
            "fridge_id": fid,
            "power_kw": float(power.get(fid, 0.0)),
            "predicted_safe_off_s": doc["predicted_safe_off_s"],
            "example_id": doc["example_id"],
        })
    selection = select_candidates(candidates, s["target_kw"])
    doc = {
        "_id": f"selection:{s['tag']}",
        "model_name": s["model"],
        "split": s["split"],
        "target_kw": s["target_kw"],
        "min_safe_off_s": s["min_safe_off_s"],
        "candidates_considered": len(candidates),
        "chosen": [dict(c) for c in selection.chosen],
        "total_kw": selection.total_kw,
        "feasible": selection.feasible,
    }
    insert_new(store, SELECTIONS, [doc])
    log.info("select: %d/%d fridges for %.1f kW (feasible=%s)",
             len(selection.chosen), len(candidates), selection.total_kw,
             selection.feasible)
    return doc


# ---------------------------------------------------------------- report


def _regression_row(store, name: str, split: str, preds: list[dict]) -> dict:
    lead = preds[0]["lead_seconds"]
    targets = np.asarray([p["target_seconds"] for p in preds])
    predicted = np.asarray([p["predicted_seconds"] for p in preds])
    mae = float(np.mean(np.abs(predicted - targets)))
    train_docs = store.aggregate(DSR_EXAMPLES, [
        {"$match": {"split": "train", "lead_seconds": lead}},
    ])
    if not train_docs:
        raise PipelineError(f"report: no train examples at lead {lead} for baseline")
    train_mean = float(np.mean([d["target_seconds"] for d in train_docs]))
    baseline = float(np.mean(np.abs(targets - train_mean)))
    return {
        "model": name,
        "task": "regression",
        "split": split,
        "lead_seconds": lead,
        "examples": len(preds),
        "mae_s": mae,
        "baseline_mae_s": baseline,
        "improvement": 1.0 - mae / baseline if baseline > 0 else 0.0,
    }


def _classification_row(name: str, split: str, preds: list[dict]) -> dict:
    correct = sum(1 for p in preds if p["label_true"] == p["label_predicted"])
    return {
        "model": name,
        "task": "classification",
        "split": split,
        "examples": len(preds),
        "accuracy": correct / len(preds),
    }


def _render_table(rows: list[dict]) -> str:
    headers = ("model", "task", "lead_s", "n", "mae_s", "baseline_s", "improvement",
               "accuracy")
    table = [headers]
    for row in rows:
        table.append((
            row["model"],
            row["task"],
            f"{row['lead_seconds']:.0f}" if "lead_seconds" in row else "-",
            str(row["examples"]),
            f"{row['mae_s']:.1f}" if "mae_s" in row else "-",
            f"{row['baseline_mae_s']:.1f}" if "baseline_mae_s" in row else "-",
            f"{100 * row['improvement']:.1f}%" if "improvement" in row else "-",
            f"{100 * row['accuracy']:.1f}%" if "accuracy" in row else "-",
        ))
    widths = [max(len(line[i]) for line in table) for i in range(len(headers))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
        for line in table
    ]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)


def make_report(store, config: dict) -> dict:
    """Summarize model quality (and any selection) into one report document.

    The report's 'created' stamp is the newest window end among the
    predictions it covers: time comes from the data, never the wall clock.
    """
    r = config["report"]
    if r is None:
        raise PipelineError("config has no report section")
    rows = []
    created = None
    for name in r["models"]:
        preds = store.aggregate(PREDICTIONS, [
            {"$match": {"model_name": name, "split": r["split"]}},
            {"$sort": {"example_id": 1}},
        ])
        if not preds:
            raise PipelineError(f"report: no predictions for model {name!r} on "
                                f"split {r['split']!r}")
        newest = max(p["window_end_ts"] for p in preds)
        created = newest if created is None else max(created, newest)
        if "predicted_seconds" in preds[0]:
            rows.append(_regression_row(store, name, r["split"], preds))
        else:
            rows.append(_classification_row(name, r["split"], preds))

    selection = None
    if r["selection_tag"] is not None:
        selection = store.get(SELECTIONS, f"selection:{r['selection_tag']}")

    doc = {
        "_id": f"report:{r['tag']}",
        "created": created,
        "split": r["split"],
        "rows": rows,
        "table": _render_table(rows),
        "selection": selection,
    }
    insert_new(store, REPORTS, [doc])
    return doc


# ------------------------------------------------------------ run driver


def sim_config_from(config: dict) -> SimConfig:
    sim = config["simulate"]
    if sim is None:
        raise PipelineError("config has no simulate section")
    sim_config = SimConfig(
        n_fridges=sim["n_fridges"],
        days=sim["days"],
        seed=config["seed"],
        fridges_per_store=sim["fridges_per_store"],
    )
    if not sim["noise"]:
        sim_config = noise_free(sim_config)
    return sim_config


def plan_fleet_faults(sim_config: SimConfig, config: dict):
    """Returns (fault plans, rendered work orders) for the configured fleet."""
    sim = config["simulate"]
    if not sim["faults"] or sim["faults"]["count"] == 0:
        return [], []
    specs = fleet_specs(sim_config)
    plans = plan_faults(specs, sim_config, sim["faults"]["count"], config["seed"])
    orders = workorders_for_plans(plans, specs, config["seed"],
                                  sim["faults"]["noise_workorders"])
    return plans, orders


def midband_setpoints(spec) -> Setpoints:
    """Nominal setpoints recorded as provenance on ingested telemetry."""
    mid = (spec.t_set_low + spec.t_set_high) / 2.0
    return Setpoints(on=mid, off=mid - spec.spread)


def simulate_into_store(store, config: dict) -> dict:
    """Simulate the configured fleet and ingest telemetry plus work orders."""
    sim_config = sim_config_from(config)
    plans, orders = plan_fleet_faults(sim_config, config)
    if orders:
        ingest_workorders(store, orders)
    total = 0
    for spec, records in simulate_fleet(sim_config, plans):
        inserted, _ = ingest_records(store, records, midband_setpoints(spec))
        total += inserted
    summary = {"fridges": sim_config.n_fridges, "records": total,
               "faults": len(plans)}
    log.info("simulate: %s", summary)
    return summary


def _with_store(fn):
    def task(ctx, config):
        with open_store(ctx.store_path, wait_for_lock_s=60.0) as store:
            fn(store, config)

    return task


def _task_learn(ctx, config, name):
    entries = [e for e in config["learn"] or [] if e["name"] == name]
    if not entries:
        raise PipelineError(f"learn task: no model named {name!r} in config")
    with open_store(ctx.store_path, wait_for_lock_s=60.0) as store:
        learn_model(store, entries[0], config["seed"])


def _task_infer(ctx, config, index):
    entries = config["infer"] or []
    with open_store(ctx.store_path, wait_for_lock_s=60.0) as store:
        infer_model(store, entries[index])


REGISTRY = {
    "simulate": _with_store(simulate_into_store),
    "wrangle_dsr": _with_store(wrangle_dsr),
    "wrangle_faults": _with_store(wrangle_faults),
    "learn": _task_learn,
    "infer": _task_infer,
    "select": _with_store(select_dsr),
    "report": _with_store(make_report),
}


def build_stages(config: dict):
    """Translate a validated config into orchestrator stages."""
    from coldflow.orchestrator import ScriptSpec, StageSpec

    width = config["pool_width"]
    stages = []
    wrangle_scripts = [ScriptSpec(name="wrangle_dsr", builtin="wrangle_dsr",
                                  args={"config": config})]
    if config["faults"] is not None:
        wrangle_scripts.append(ScriptSpec(name="wrangle_faults",
                                          builtin="wrangle_faults",
                                          args={"config": config}))
    stages.append(StageSpec(name="wrangle", scripts=tuple(wrangle_scripts),
                            pool_width=width))
    if config["learn"]:
        stages.append(StageSpec(
            name="learn",
            scripts=tuple(
                ScriptSpec(name=f"learn:{entry['name']}", builtin="learn",
                           args={"config": config, "name": entry["name"]})
                for entry in config["learn"]
            ),
            pool_width=width,
        ))
    if config["infer"]:
        # Width 1: prediction documents land in a stable order.
        stages.append(StageSpec(
            name="infer",
            scripts=tuple(
                ScriptSpec(name=f"infer:{entry['model']}", builtin="infer",
                           args={"config": config, "index": i})
                for i, entry in enumerate(config["infer"])
            ),
            pool_width=1,
        ))
    serve_scripts = []
    if config["select"] is not None:
        serve_scripts.append(ScriptSpec(name="select", builtin="select",
                                        args={"config": config}))
    if config["report"] is not None:
        serve_scripts.append(ScriptSpec(name="report", builtin="report",
                                        args={"config": config}))
    if serve_scripts:
        stages.append(StageSpec(name="serve", scripts=tuple(serve_scripts),
                                pool_width=1))
    # User-supplied external stages run last; the orchestrator hands them
    # the store and config through PE_*/STORE_PATH/CONFIG_PATH env vars.
    for stage in config.get("stages") or []:
        stages.append(StageSpec(
            name=stage["name"],
            scripts=tuple(
                ScriptSpec(name=script["name"], command=tuple(script["command"]),
                           flags=tuple(script["flags"]),
                           timeout_s=script["timeout_s"])
                for script in stage["scripts"]
            ),
            pool_width=stage["pool_width"],
        ))
    return stages


def run_project(store_path: str, config: dict, config_path: str | None = None,
                verbose: bool = False):
    """Full pipeline: simulate/ingest, then staged wrangle-learn-infer-serve.

    Returns (stage_reports, ok). Simulation and ingest run sequentially up
    front; the remaining tasks go through the stage orchestrator with a
    barrier between stages. config_path is advertised to external scripts
    via CONFIG_PATH and is only needed when the config defines extra stages.
    """
    from coldflow.orchestrator import run_pipeline

    if config["simulate"] is not None:
        with open_store(store_path, wait_for_lock_s=60.0) as store:
            simulate_into_store(store, config)
    stages = build_stages(config)
    reports = run_pipeline(stages, REGISTRY, store_path, config_path=config_path,
                           verbose=verbose)
    ok = all(report.ok for report in reports) and len(reports) == len(stages)
    return reports, ok
