"""Convert long-format station/grid-cell records into the weekly grid CSV.

Expected input columns: ``date,lat,lon,value`` (ISO dates, one row per
cell and observation). Each distinct (lat, lon) becomes a location with id
``c<lat>_<lon>``; observations are averaged into 7-day bins counted from
``--start`` (a Monday). Bins with no data for a cell are filled by linear
interpolation in time, since grids may not contain NaN.

Gridded products (1x1 degree monthly or daily anomaly fields) need to be
flattened to this long format first, e.g. one row per cell and time step.

    python3 scripts/convert_gridded.py records.csv grid.csv --start 1880-01-05
"""

import argparse
import csv
import datetime as dt
from collections import defaultdict

import numpy as np

from chaotrack.data import GridSeries, Location, save_grid


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("records")
    parser.add_argument("out")
    parser.add_argument("--start", required=True, help="ISO date of week 0")
    args = parser.parse_args()

    start = dt.date.fromisoformat(args.start)
    sums = defaultdict(lambda: defaultdict(float))
    counts = defaultdict(lambda: defaultdict(int))
    with open(args.records, newline="") as fh:
        for row in csv.DictReader(fh):
            week = (dt.date.fromisoformat(row["date"]) - start).days // 7
            if week < 0:
                continue
            cell = (float(row["lat"]), float(row["lon"]))
            sums[cell][week] += float(row["value"])
            counts[cell][week] += 1
    if not sums:
        raise SystemExit("no records on or after --start")

    cells = sorted(sums)
    T = 1 + max(max(weeks) for weeks in sums.values())
    values = np.empty((T, len(cells)))
    t = np.arange(T)
    for k, cell in enumerate(cells):
        weeks = np.array(sorted(sums[cell]))
        means = np.array([sums[cell][w] / counts[cell][w] for w in weeks])
        values[:, k] = np.interp(t, weeks, means)
    locations = [Location(f"c{lat:g}_{lon:g}", lat, lon) for lat, lon in cells]
    save_grid(GridSeries(values, locations, args.start), args.out)
    print(f"wrote {T} weeks x {len(cells)} locations to {args.out}")


if __name__ == "__main__":
    main()
