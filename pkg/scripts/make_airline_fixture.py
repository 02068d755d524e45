"""Regenerate src/coc/data/airline_fixture.csv (synthetic, full 29-column schema)."""

import csv
from pathlib import Path

import numpy as np

HEADER = [
    "Year", "Month", "DayofMonth", "DayOfWeek", "DepTime", "CRSDepTime", "ArrTime", "CRSArrTime",
    "UniqueCarrier", "FlightNum", "TailNum", "ActualElapsedTime", "CRSElapsedTime", "AirTime",
    "ArrDelay", "DepDelay", "Origin", "Dest", "Distance", "TaxiIn", "TaxiOut", "Cancelled",
    "CancellationCode", "Diverted", "CarrierDelay", "WeatherDelay", "NASDelay", "SecurityDelay",
    "LateAircraftDelay",
]
DESTS = {"ATL": (700, 0.30), "ORD": (550, 0.35), "DEN": (400, 0.22), "SLC": (250, 0.19), "BOS": (100, 0.28)}
ORIGINS = ["JFK", "LAX", "SFO", "PHX", "IAH", "MSP"]
CARRIERS = ["AA", "DL", "UA", "WN", "US"]
# (CRSArrTime, ArrDelay) rows that pin the boundary behaviour
BOUNDARY = [(730, "15"), (2330, "14"), (2400, "0"), (0, "-3"), (559, "16"), (600, "15"), (2159, "20"), (2200, "-1")]


def hhmm(minutes: int) -> int:
    minutes %= 1440
    return (minutes // 60) * 100 + minutes % 60


def main(out: Path) -> None:
    rng = np.random.default_rng(20070101)
    rows = []
    for dest, (count, rate) in DESTS.items():
        for i in range(count):
            month = int(rng.integers(1, 13))
            dom = int(rng.integers(1, 29))
            dow = int(rng.integers(1, 8))
            crs_arr = hhmm(int(rng.integers(0, 1440)))
            late = rng.random() < rate
            delay = int(rng.integers(15, 180)) if late else int(rng.integers(-20, 15))
            cancelled = rng.random() < 0.03
            diverted = (not cancelled) and rng.random() < 0.01
            if dest == "ATL" and i < len(BOUNDARY):
                crs_arr, d = BOUNDARY[i]
                delay, cancelled, diverted = int(d), False, False
            distance = int(rng.integers(150, 2600))
            elapsed = 30 + distance // 8
            crs_dep = hhmm((crs_arr // 100) * 60 + crs_arr % 100 - elapsed)
            dep_delay = delay + int(rng.integers(-10, 10))
            na = "NA"
            rows.append([
                2007, month, dom, dow,
                na if cancelled else hhmm((crs_dep // 100) * 60 + crs_dep % 100 + dep_delay),
                crs_dep,
                na if cancelled or diverted else hhmm((crs_arr // 100) * 60 + crs_arr % 100 + delay),
                crs_arr,
                CARRIERS[int(rng.integers(len(CARRIERS)))], int(rng.integers(1, 5000)), f"N{int(rng.integers(100, 999))}AA",
                na if cancelled or diverted else elapsed + delay - dep_delay,
                elapsed,
                na if cancelled or diverted else elapsed - 15,
                na if cancelled or diverted else delay,
                na if cancelled else dep_delay,
                ORIGINS[int(rng.integers(len(ORIGINS)))], dest, distance,
                na if cancelled or diverted else 5, na if cancelled or diverted else 10,
                int(cancelled), "B" if cancelled else "", int(diverted),
                0, 0, 0, 0, 0,
            ])
    # two malformed rows: impossible weekday and arrival time
    rows[-1][3] = 9
    rows[-2][7] = 2575
    order = rng.permutation(len(rows))
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for i in order:
            w.writerow(rows[i])


if __name__ == "__main__":
    main(Path(__file__).resolve().parents[1] / "src" / "coc" / "data" / "airline_fixture.csv")
