"""Download the WCGS data (R package faraway, via Rdatasets) into a CSV.

Usage: python3 scripts/fetch_wcgs.py [DEST]   (default: data/wcgs.csv)

The output keeps the columns the bundled configs use, with ``chd`` as
yes/no and ``arcus`` recoded to 0/1. Rows with missing values are kept;
``fit-compare`` drops them at ingestion.
"""

import csv
import io
import sys
import urllib.request
from pathlib import Path

URL = "https://vincentarelbundock.github.io/Rdatasets/csv/faraway/wcgs.csv"
COLUMNS = ["age", "height", "weight", "sdp", "dbp", "chol", "cigs", "arcus", "chd"]
ARCUS = {"absent": "0", "present": "1", "0": "0", "1": "1"}


def main(dest="data/wcgs.csv"):
    with urllib.request.urlopen(URL, timeout=60) as resp:
        text = resp.read().decode("utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    missing = [c for c in COLUMNS if c not in rows[0]]
    if missing:
        sys.exit(f"downloaded file lacks columns {missing}")
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in rows:
            arcus = ARCUS.get(row["arcus"].strip().lower(), "NA")
            writer.writerow([row[c] if c != "arcus" else arcus for c in COLUMNS])
    print(f"wrote {len(rows)} rows to {dest}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
