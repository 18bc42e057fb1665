"""
Picking fridges for a demand-response event
===========================================

When the grid asks for load shedding, the selector chooses which fridges
to switch off. Inputs are each fridge's power draw and its predicted safe
off-time; the greedy largest-first rule meets the shed target with the
fewest units, and a feasible target is never misreported.
"""

from coldflow.pipelines import select_candidates

candidates = [
    {"fridge_id": "F0001", "power_kw": 3.2, "predicted_safe_off_s": 2410.0},
    {"fridge_id": "F0002", "power_kw": 1.8, "predicted_safe_off_s": 1750.0},
    {"fridge_id": "F0003", "power_kw": 2.4, "predicted_safe_off_s": 3020.0},
    {"fridge_id": "F0004", "power_kw": 2.4, "predicted_safe_off_s": 1130.0},
    {"fridge_id": "F0005", "power_kw": 0.9, "predicted_safe_off_s": 2880.0},
]

# Shed 6 kW: the two largest units plus one tie-broken 2.4 kW unit do it.
# Ties on power prefer the longer predicted safe-off time.
selection = select_candidates(candidates, target_kw=6.0)
print("feasible:", selection.feasible)
for c in selection.chosen:
    print(f"  {c['fridge_id']}: {c['power_kw']:.1f} kW, "
          f"safe off {c['predicted_safe_off_s']:.0f}s")
print(f"total {selection.total_kw:.1f} kW against target "
      f"{selection.target_kw:.1f} kW")

# Ask for more than the whole fleet and the result says so instead of
# silently under-delivering.
too_much = select_candidates(candidates, target_kw=25.0)
print("25 kW feasible:", too_much.feasible,
      f"(fleet tops out at {too_much.total_kw:.1f} kW)")
