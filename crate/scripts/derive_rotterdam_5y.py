#!/usr/bin/env python3
"""Add 5-year outcome columns to the Rotterdam tumour-bank extract.

Reads data/rotterdam.csv (as shipped with the R `survival` package) and
writes data/rotterdam_5y.csv with two extra 0/1 columns:

  event_5y  recurrence (rtime) or death (dtime) within 1826 days of surgery
  lost_5y   no event, and follow-up (dtime) ended before day 1826

Only the standard library is used, so the output is reproducible anywhere.
"""

import csv
import sys
from pathlib import Path

HORIZON_DAYS = 1826  # five years including one leap day


def derive(row):
    recur = int(row["recur"]) == 1 and float(row["rtime"]) <= HORIZON_DAYS
    death = int(row["death"]) == 1 and float(row["dtime"]) <= HORIZON_DAYS
    event = recur or death
    lost = not event and float(row["dtime"]) < HORIZON_DAYS
    return int(event), int(lost)


def main(argv):
    root = Path(__file__).resolve().parent.parent
    src = Path(argv[1]) if len(argv) > 1 else root / "data" / "rotterdam.csv"
    dst = Path(argv[2]) if len(argv) > 2 else root / "data" / "rotterdam_5y.csv"
    with src.open(newline="") as fin:
        reader = csv.DictReader(fin)
        fields = list(reader.fieldnames) + ["event_5y", "lost_5y"]
        rows = []
        for row in reader:
            row["event_5y"], row["lost_5y"] = derive(row)
            rows.append(row)
    with dst.open("w", newline="") as fout:
        writer = csv.DictWriter(fout, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    lost = sum(r["lost_5y"] for r in rows)
    print(f"{dst}: {len(rows)} rows, {lost} lost before 5 years", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv)
