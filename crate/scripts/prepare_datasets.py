#!/usr/bin/env python3
"""Build the numeric CSVs in data/ used by the AutoMPG and Heart Disease runs.

By default both datasets are fetched from the UCI repository. Offline copies
bundled with common Python packages can be used instead:

    --islp-auto   path to ISLP/data/Auto.csv (from the ISLP wheel)
    --orange-heart path to Orange/datasets/heart_disease.tab (from the Orange3 wheel)

Output schema
-------------
auto_mpg.csv:  cylinders,displacement,horsepower,weight,acceleration,year,origin,mpg
heart.csv:     age,sex,cp,trestbps,chol,fbs,restecg,thalach,exang,oldpeak,slope,ca,thal,target

Rows with missing values are dropped (AutoMPG: 392 rows, Heart: 297 rows).
Categorical codes follow the UCI "processed.cleveland.data" conventions and
target is 1 when any narrowing (num > 0) is present.
"""
import argparse
import csv
import io
import os
import urllib.request

UCI_AUTO = "https://archive.ics.uci.edu/ml/machine-learning-databases/auto-mpg/auto-mpg.data"
UCI_HEART = ("https://archive.ics.uci.edu/ml/machine-learning-databases/"
             "heart-disease/processed.cleveland.data")

AUTO_COLS = ["cylinders", "displacement", "horsepower", "weight",
             "acceleration", "year", "origin", "mpg"]
HEART_COLS = ["age", "sex", "cp", "trestbps", "chol", "fbs", "restecg", "thalach",
              "exang", "oldpeak", "slope", "ca", "thal", "target"]


def fetch(url):
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read().decode("latin-1")


def fmt(v):
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def auto_from_uci(text):
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        fields = line.split("\t")[0].split()
        if "?" in fields:
            continue
        mpg, cyl, disp, hp, wt, acc, yr, org = fields[:8]
        rows.append([cyl, disp, hp, wt, acc, yr, org, mpg])
    return rows


def auto_from_islp(path):
    rows = []
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            if "?" in r.values():
                continue
            rows.append([r["cylinders"], r["displacement"], r["horsepower"], r["weight"],
                         r["acceleration"], r["year"], r["origin"], r["mpg"]])
    return rows


def heart_from_uci(text):
    rows = []
    for line in text.splitlines():
        fields = line.strip().split(",")
        if len(fields) != 14 or "?" in fields:
            continue
        fields[13] = "1" if float(fields[13]) > 0 else "0"
        rows.append(fields)
    return rows


ORANGE_CODES = {
    "gender": {"female": 0, "male": 1},
    "chest pain": {"typical ang": 1, "atypical ang": 2, "non-anginal": 3, "asymptomatic": 4},
    "rest ECG": {"normal": 0, "ST-T abnormal": 1, "left vent hypertrophy": 2},
    "slope peak exc ST": {"upsloping": 1, "flat": 2, "downsloping": 3},
    "thal": {"normal": 3, "fixed defect": 6, "reversable defect": 7},
}


def heart_from_orange(path):
    with open(path) as f:
        lines = f.read().splitlines()
    header = lines[0].split("\t")
    rows = []
    for line in lines[3:]:
        if not line.strip():
            continue
        cells = dict(zip(header, line.split("\t")))
        if any(v in ("?", "") for v in cells.values()):
            continue
        out = []
        for name in header:
            v = cells[name]
            out.append(str(ORANGE_CODES[name][v]) if name in ORANGE_CODES else v)
        rows.append(out)
    return rows


def write(path, cols, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    print(f"wrote {path}: {len(rows)} rows")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--islp-auto")
    ap.add_argument("--orange-heart")
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    auto = auto_from_islp(args.islp_auto) if args.islp_auto else auto_from_uci(fetch(UCI_AUTO))
    heart = (heart_from_orange(args.orange_heart) if args.orange_heart
             else heart_from_uci(fetch(UCI_HEART)))
    write(os.path.join(args.out_dir, "auto_mpg.csv"), AUTO_COLS, auto)
    write(os.path.join(args.out_dir, "heart.csv"), HEART_COLS, heart)


if __name__ == "__main__":
    main()
