"""Physics-based retail fridge fleet simulator.

Each fridge is a first-order thermal system driven with forward Euler at
the telemetry cadence. While the compressor runs the cabinet relaxes
toward the low setpoint; while idle or defrosting it relaxes toward
ambient. A thermostat cycles the compressor across the setpoint band, and
a timer fires a few defrosts per day: the compressor stops and the cabinet
warms until it crosses the defrost termination threshold.

With noise disabled the warming segments follow the Euler recurrence
exactly, so measured defrost durations can be checked against the
closed-form time to threshold (:func:`true_time_to_threshold`). That is
the calibration handle for everything downstream: a learner that predicts
defrost durations well is recovering each fridge's warming constant.

Fault injection ramps a fridge's warming constant up over the two days
before a work order lands and superimposes a growing slow oscillation
(compressor hunting); the stream ends at the fault, when the engineer
switches the unit off. Demand-side-response events are modeled by
re-simulating a fridge with a forced-off window; the noise sequence is
drawn per fridge up front, so the pre-event prefix stays bit-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from coldflow.telemetry import CsvSchema, TelemetryRecord

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class SimConfig:
    """Fleet-level simulation settings and per-fridge parameter ranges."""

    n_fridges: int = 50
    days: float = 30.0
    seed: int = 0
    cadence_s: float = 60.0
    start_ts: float = 1_500_000_000.0
    fridges_per_store: int = 10
    defrosts_per_day: int = 4
    defrost_max_s: float = 7200.0
    threshold_temp: float = 8.0
    # Per-fridge uniform sampling ranges. Ambient stays within the narrow
    # band of a climate-controlled sales floor: a short window identifies a
    # fridge's warming rate only as the product k_warm * (ambient - T), so
    # a wide ambient spread would make time-to-threshold unidentifiable
    # from window features alone no matter the model.
    k_cool_range: tuple = (1.0 / 900.0, 1.0 / 300.0)
    k_warm_range: tuple = (1.3e-4, 4.2e-4)
    t_set_low_range: tuple = (0.5, 2.0)
    t_set_high_range: tuple = (3.0, 4.5)
    t_ambient_range: tuple = (19.5, 20.5)
    power_kw_range: tuple = (1.0, 4.0)
    # Sensor repeatability, not absolute accuracy: per-sample jitter of a
    # calibrated probe. Threshold-crossing jitter scales with sigma and
    # sets the noise floor of defrost-duration targets.
    noise_sigma_range: tuple = (0.02, 0.05)
    spread_range: tuple = (1.0, 2.0)


@dataclass(frozen=True)
class FridgeSpec:
    """One fridge's physical parameters, sampled once per fleet."""

    fridge_id: str
    store_id: str
    fridge_index: int
    k_cool: float
    k_warm: float
    t_set_low: float
    t_set_high: float
    t_ambient: float
    threshold_temp: float
    power_kw: float
    noise_sigma: float
    spread: float
    defrost_phase_s: float
    initial_temp: float


@dataclass(frozen=True)
class FaultPlan:
    """A developing fault: warming constant ramps up, hunting sets in.

    The ramp runs over ``ramp_seconds`` ending at ``fault_ts`` (the work
    order timestamp). The telemetry stream stops at the fault: the unit is
    switched off for repair.
    """

    fridge_id: str
    fault_name: str
    fault_ts: float
    ramp_seconds: float = 2.0 * SECONDS_PER_DAY
    k_warm_end_factor: float = 1.6
    osc_amp: float = 0.8
    osc_period_s: float = 900.0


def fleet_specs(config: SimConfig) -> list[FridgeSpec]:
    """Sample the fleet deterministically: fridge i depends only on (seed, i)."""
    period_steps = int(SECONDS_PER_DAY / config.defrosts_per_day / config.cadence_s)
    specs = []
    for i in range(config.n_fridges):
        rng = np.random.default_rng([config.seed, i, 0])
        low = rng.uniform(*config.t_set_low_range)
        high = rng.uniform(*config.t_set_high_range)
        specs.append(
            FridgeSpec(
                fridge_id=f"F{i:04d}",
                store_id=f"S{i // config.fridges_per_store:03d}",
                fridge_index=i,
                k_cool=rng.uniform(*config.k_cool_range),
                k_warm=rng.uniform(*config.k_warm_range),
                t_set_low=low,
                t_set_high=high,
                t_ambient=rng.uniform(*config.t_ambient_range),
                threshold_temp=config.threshold_temp,
                power_kw=rng.uniform(*config.power_kw_range),
                noise_sigma=rng.uniform(*config.noise_sigma_range),
                spread=rng.uniform(*config.spread_range),
                defrost_phase_s=float(rng.integers(0, period_steps)) * config.cadence_s,
                initial_temp=rng.uniform(low, high),
            )
        )
    return specs


def true_time_to_threshold(spec: FridgeSpec, start_temp: float) -> float:
    """Closed-form warming time from start_temp to the defrost threshold."""
    if not start_temp < spec.threshold_temp < spec.t_ambient:
        raise ValueError("need start_temp < threshold < ambient")
    ratio = (spec.t_ambient - start_temp) / (spec.t_ambient - spec.threshold_temp)
    return math.log(ratio) / spec.k_warm


_COOLING, _IDLE, _DEFROST = 0, 1, 2


def simulate_fridge(
    spec: FridgeSpec,
    config: SimConfig,
    fault: FaultPlan | None = None,
    dsr_window: tuple | None = None,
) -> list[TelemetryRecord]:
    """Run one fridge for the configured span at the telemetry cadence.

    The noise sequence is pre-drawn from (seed, fridge_index), so runs with
    different fault plans or DSR windows share it step for step: records
    before any behavioral divergence are bit-identical across runs.
    """
    dt = config.cadence_s
    steps = int(round(config.days * SECONDS_PER_DAY / dt))
    period_steps = int(SECONDS_PER_DAY / config.defrosts_per_day / dt)
    phase_steps = int(round(spec.defrost_phase_s / dt))

    rng = np.random.default_rng([config.seed, spec.fridge_index, 1])
    # Plain Python floats end to end: records go through JSON untouched.
    noise = (
        rng.normal(0.0, spec.noise_sigma, steps).tolist()
        if spec.noise_sigma > 0.0
        else [0.0] * steps
    )

    ramp_start = fault.fault_ts - fault.ramp_seconds if fault else None
    records: list[TelemetryRecord] = []
    temp = spec.initial_temp
    state = _COOLING
    defrost_elapsed = 0.0

    for i in range(steps):
        t = config.start_ts + i * dt
        if fault is not None and t >= fault.fault_ts:
            break
        forced_off = dsr_window is not None and dsr_window[0] <= t < dsr_window[1]

        if forced_off:
            if state == _DEFROST:
                state = _IDLE
        elif state != _DEFROST and (i - phase_steps) % period_steps == 0:
            state = _DEFROST
            defrost_elapsed = 0.0

        progress = 0.0
        if fault is not None and t > ramp_start:
            progress = min(1.0, (t - ramp_start) / fault.ramp_seconds)
        oscillation = (
            fault.osc_amp * progress
            * math.sin(2.0 * math.pi * (t - ramp_start) / fault.osc_period_s)
            if progress > 0.0
            else 0.0
        )

        cooling = state == _COOLING and not forced_off
        air_on = temp + oscillation
        if state == _DEFROST and not forced_off:
            air_off = air_on + spec.spread
        elif cooling:
            air_off = air_on - spec.spread
        else:
            air_off = air_on - 0.2 * spec.spread
        records.append(
            TelemetryRecord(
                timestamp=t,
                fridge_id=spec.fridge_id,
                air_on_temperature=air_on,
                air_off_temperature=air_off,
                defrost_state=1 if state == _DEFROST and not forced_off else 0,
                store_id=spec.store_id,
                extra={"power_kw": spec.power_kw if cooling else 0.0},
            )
        )

        k_warm = spec.k_warm * (1.0 + (fault.k_warm_end_factor - 1.0) * progress) \
            if progress > 0.0 else spec.k_warm
        if cooling:
            temp += dt * (-spec.k_cool) * (temp - spec.t_set_low) + noise[i]
        else:
            temp += dt * k_warm * (spec.t_ambient - temp) + noise[i]

        if forced_off:
            state = _COOLING if temp >= spec.t_set_high else _IDLE
        elif state == _DEFROST:
            defrost_elapsed += dt
            if temp >= spec.threshold_temp or defrost_elapsed >= config.defrost_max_s:
                state = _COOLING
        elif state == _COOLING and temp <= spec.t_set_low:
            state = _IDLE
        elif state == _IDLE and temp >= spec.t_set_high:
            state = _COOLING
    return records


def simulate_fleet(config: SimConfig, fault_plans: list[FaultPlan] | None = None):
    """Yield (spec, records) per fridge; stream-friendly for large fleets."""
    plans = {plan.fridge_id: plan for plan in fault_plans or []}
    for spec in fleet_specs(config):
        yield spec, simulate_fridge(spec, config, fault=plans.get(spec.fridge_id))


def inject_dsr_event(
    spec: FridgeSpec, config: SimConfig, event_start: float, event_end: float
) -> list[TelemetryRecord]:
    """Re-simulate one fridge with a forced-off (demand response) window.

    During [event_start, event_end) the compressor and defrost timer are
    held off and the cabinet drifts warm. Records before event_start match
    the baseline simulation bit for bit.
    """
    if event_end <= event_start:
        raise ValueError("event_end must be after event_start")
    return simulate_fridge(spec, config, dsr_window=(event_start, event_end))


# ------------------------------------------------------ faults and orders

FAULT_NAMES = (
    "icepack",
    "evaporator icing",
    "door gasket",
    "compressor hunting",
    "refrigerant leak",
)

WORKORDER_PATTERNS = [
    r"store (?P<store_id>S\d+) fridge (?P<fridge_id>F\d+) (?P<fault_name>[a-z ]+) fault",
]

NOISE_WORKORDERS = (
    "please mop aisle five",
    "replace strip light in bakery",
    "car park barrier stuck again",
    "freezer aisle trolley left overnight",
)


def plan_faults(specs: list[FridgeSpec], config: SimConfig, n_faults: int,
                seed: int) -> list[FaultPlan]:
    """Pick fridges (at most one fault each) and schedule their failures.

    Fault times are snapped to the sample grid and leave the full ramp plus
    a day of pre-ramp history before them.
    """
    if n_faults > len(specs):
        raise ValueError(f"{n_faults} faults but only {len(specs)} fridges")
    rng = np.random.default_rng([seed, 2])
    chosen = rng.choice(len(specs), size=n_faults, replace=False)
    plans = []
    ramp = 2.0 * SECONDS_PER_DAY
    earliest = ramp + SECONDS_PER_DAY
    latest = config.days * SECONDS_PER_DAY - config.cadence_s
    if latest <= earliest:
        raise ValueError("simulation too short for a fault ramp plus history")
    for index in sorted(chosen):
        spec = specs[index]
        offset = rng.uniform(earliest, latest)
        steps = int(offset / config.cadence_s)
        plans.append(
            FaultPlan(
                fridge_id=spec.fridge_id,
                fault_name=FAULT_NAMES[int(rng.integers(0, len(FAULT_NAMES)))],
                fault_ts=config.start_ts + steps * config.cadence_s,
                ramp_seconds=ramp,
            )
        )
    return plans


def workorders_for_plans(plans: list[FaultPlan], specs: list[FridgeSpec],
                         seed: int, noise_orders: int = 0):
    """Render fault plans as free-text work orders, plus unrelated noise.

    Returns (raw_text, timestamp) tuples shuffled into timestamp order, the
    shape maintenance logs actually arrive in.
    """
    stores = {spec.fridge_id: spec.store_id for spec in specs}
    rng = np.random.default_rng([seed, 3])
    orders = [
        (
            f"store {stores[plan.fridge_id]} fridge {plan.fridge_id} "
            f"{plan.fault_name} fault",
            plan.fault_ts,
        )
        for plan in plans
    ]
    if plans:
        lo = min(plan.fault_ts for plan in plans)
        hi = max(plan.fault_ts for plan in plans)
        for _ in range(noise_orders):
            text = NOISE_WORKORDERS[int(rng.integers(0, len(NOISE_WORKORDERS)))]
            orders.append((text, float(rng.uniform(lo, hi + 1.0))))
    orders.sort(key=lambda pair: pair[1])
    return orders


# ------------------------------------------------------------- csv export

FLEET_CSV_COLUMNS = (
    "TimeStamp", "fridgeId", "storeId", "airOnTemp", "airOffTemp", "Def", "power_kw",
)

FLEET_CSV_SCHEMA = CsvSchema(
    columns={
        "timestamp": "TimeStamp",
        "fridge_id": "fridgeId",
        "store_id": "storeId",
        "air_on": "airOnTemp",
        "air_off": "airOffTemp",
        "defrost": "Def",
    }
)


def write_telemetry_csv(records: list[TelemetryRecord], path) -> None:
    """Write records as a CSV readable back via FLEET_CSV_SCHEMA.

    Floats go out as repr, so a parse round trip reproduces them exactly.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FLEET_CSV_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    repr(rec.timestamp),
                    rec.fridge_id,
                    rec.store_id or "",
                    repr(rec.air_on_temperature),
                    repr(rec.air_off_temperature),
                    rec.defrost_state,
                    repr(rec.extra.get("power_kw", 0.0)),
                ]
            )


def noise_free(config: SimConfig) -> SimConfig:
    """A copy of the config with per-step noise disabled fleet-wide."""
    return replace(config, noise_sigma_range=(0.0, 0.0))
