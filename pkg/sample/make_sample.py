#!/usr/bin/env python3
"""Regenerate the bundled sample dataset (dictionary.json + crashes.csv).

The records are synthetic crash reports with planted structure so every
pipeline stage has something to find: road surface follows weather, single
vehicle crashes concentrate on curves and high speed limits, impairment and
fatal outcomes concentrate in the unlit dark, and a slice of every variable
is 'unknown'. Regeneration is deterministic; the files are committed so the
demo works without running this script.
"""

import csv
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
N_RECORDS = 1200
SEED = 20260815

VARIABLES = [
    ("lighting", ["daylight", "dark_with_streetlight", "dark_no_streetlight", "unknown"]),
    ("severity", ["fatal", "severe", "moderate", "complaint", "no_injury"]),
    ("crash_type", ["single_vehicle", "multi_vehicle"]),
    ("driver_age", ["<25", "25-64", ">64", "unknown"]),
    ("driver_condition", ["normal", "impaired", "fatigued", "unknown"]),
    ("road_surface", ["dry", "wet", "icy", "unknown"]),
    ("weather", ["clear", "rain", "fog", "unknown"]),
    ("alignment", ["straight", "curve", "unknown"]),
    ("shoulder_width", ["narrow", "medium", "wide", "unknown"]),
    ("posted_speed", ["low", "medium", "high"]),
]


def pick(rng, pairs):
    roll = rng.random()
    acc = 0.0
    for value, prob in pairs:
        acc += prob
        if roll < acc:
            return value
    return pairs[-1][0]


def make_record(rng, i):
    lighting = pick(rng, [("daylight", 0.55), ("dark_with_streetlight", 0.20),
                          ("dark_no_streetlight", 0.22), ("unknown", 0.03)])
    weather = pick(rng, [("clear", 0.70), ("rain", 0.20), ("fog", 0.07), ("unknown", 0.03)])
    wet_p = {"rain": 0.85, "fog": 0.30, "clear": 0.05, "unknown": 0.10}[weather]
    if rng.random() < 0.02:
        road_surface = "unknown"
    elif rng.random() < wet_p:
        road_surface = "wet"
    elif rng.random() < 0.03:
        road_surface = "icy"
    else:
        road_surface = "dry"
    alignment = pick(rng, [("straight", 0.62), ("curve", 0.35), ("unknown", 0.03)])
    posted_speed = pick(rng, [("low", 0.30), ("medium", 0.45), ("high", 0.25)])
    shoulder_width = pick(rng, [("narrow", 0.40), ("medium", 0.38),
                                ("wide", 0.19), ("unknown", 0.03)])
    driver_age = pick(rng, [("<25", 0.20), ("25-64", 0.60), (">64", 0.17), ("unknown", 0.03)])

    impaired_p = 0.10 + (0.15 if lighting == "dark_no_streetlight" else 0.0)
    driver_condition = pick(rng, [("impaired", impaired_p), ("fatigued", 0.08),
                                  ("unknown", 0.04),
                                  ("normal", 1.0 - impaired_p - 0.12)])

    single_p = 0.50
    if alignment == "curve":
        single_p += 0.25
    if posted_speed == "high":
        single_p += 0.12
    if road_surface in ("wet", "icy"):
        single_p += 0.08
    crash_type = "single_vehicle" if rng.random() < min(single_p, 0.95) else "multi_vehicle"

    fatal_p = 0.04
    if driver_condition == "impaired":
        fatal_p += 0.10
    if lighting == "dark_no_streetlight":
        fatal_p += 0.06
    if posted_speed == "high":
        fatal_p += 0.05
    if driver_age == ">64":
        fatal_p += 0.04
    severity = pick(rng, [("fatal", fatal_p), ("severe", min(2 * fatal_p, 0.30)),
                          ("moderate", 0.25), ("complaint", 0.20),
                          ("no_injury", 1.0)])

    return {
        "crash_number": f"C{i:06d}",
        "lighting": lighting,
        "severity": severity,
        "crash_type": crash_type,
        "driver_age": driver_age,
        "driver_condition": driver_condition,
        "road_surface": road_surface,
        "weather": weather,
        "alignment": alignment,
        "shoulder_width": shoulder_width,
        "posted_speed": posted_speed,
    }


def main():
    rng = random.Random(SEED)
    dictionary = {
        "version": "sample-1",
        "variables": [
            {"name": name, "categories": cats, "role_hint": "none"}
            for name, cats in VARIABLES
        ],
    }
    (HERE / "dictionary.json").write_text(
        json.dumps(dictionary, indent=2) + "\n", encoding="utf-8"
    )
    rows = [make_record(rng, i + 1) for i in range(N_RECORDS)]
    with open(HERE / "crashes.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["crash_number"] + [v for v, _ in VARIABLES])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} records to {HERE / 'crashes.csv'}")


if __name__ == "__main__":
    main()
