#!/usr/bin/env python3
"""Convert the public Adult Income and COMPAS files into the CSV + schema
layout read by `luskin`.

Inputs (any location, pass with flags):
  adult.data, adult.test              UCI Adult Income release
  compas-scores-two-years.csv         ProPublica COMPAS release

Both are redistributed inside the `responsibly` wheel, so
`pip download responsibly --no-deps` is enough to obtain them offline-ish.
"""
import argparse
import csv
import json
import os
import zipfile

ADULT_COLUMNS = [
    ("age", "numeric", "unprotected"),
    ("workclass", "categorical", "unprotected"),
    ("fnlwgt", "numeric", "ignore"),
    ("education", "categorical", "ignore"),
    ("education_num", "numeric", "unprotected"),
    ("marital_status", "categorical", "unprotected"),
    ("occupation", "categorical", "unprotected"),
    ("relationship", "categorical", "unprotected"),
    ("race", "categorical", "protected"),
    ("sex", "binary", "unprotected"),
    ("capital_gain", "numeric", "unprotected"),
    ("capital_loss", "numeric", "unprotected"),
    ("hours_per_week", "numeric", "unprotected"),
    ("native_country", "categorical", "ignore"),
    ("income", "binary", "label"),
]

COMPAS_COLUMNS = [
    ("sex", "binary", "unprotected"),
    ("age", "numeric", "unprotected"),
    ("juv_fel_count", "numeric", "unprotected"),
    ("juv_misd_count", "numeric", "unprotected"),
    ("priors_count", "numeric", "unprotected"),
    ("c_charge_degree", "binary", "unprotected"),
    ("c_charge_desc", "categorical", "unprotected"),
    ("race", "categorical", "protected"),
    ("two_year_recid", "binary", "label"),
]


def write_schema(path, columns):
    with open(path, "w") as f:
        json.dump([{"name": n, "kind": k, "role": r} for n, k, r in columns], f, indent=2)
        f.write("\n")


def convert_adult(paths, out_dir):
    rows = []
    for path in paths:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("|"):
                    continue
                cells = [c.strip() for c in line.split(",")]
                if len(cells) != len(ADULT_COLUMNS):
                    continue
                income = cells[-1].rstrip(".")
                cells[-1] = "1" if income == ">50K" else "0"
                rows.append(cells)
    with open(os.path.join(out_dir, "adult.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([c[0] for c in ADULT_COLUMNS])
        w.writerows(rows)
    write_schema(os.path.join(out_dir, "adult.schema.json"), ADULT_COLUMNS)
    return len(rows)


def convert_compas(path, out_dir):
    keep = [c[0] for c in COMPAS_COLUMNS]
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        # the release repeats some column names; first occurrence wins
        index = {}
        for i, name in enumerate(header):
            index.setdefault(name, i)
        for cells in reader:
            if cells[index["race"]] not in ("African-American", "Caucasian"):
                continue
            out = [cells[index[name]] for name in keep]
            desc = keep.index("c_charge_desc")
            if not out[desc]:
                out[desc] = "(unrecorded)"
            rows.append(out)
    with open(os.path.join(out_dir, "compas.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(keep)
        w.writerows(rows)
    write_schema(os.path.join(out_dir, "compas.schema.json"), COMPAS_COLUMNS)
    return len(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--wheel", help="responsibly-*.whl containing both datasets")
    ap.add_argument("--adult", nargs="*", default=[], help="adult.data / adult.test")
    ap.add_argument("--compas", help="compas-scores-two-years.csv")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    if args.wheel:
        tmp = os.path.join(args.out, ".raw")
        os.makedirs(tmp, exist_ok=True)
        with zipfile.ZipFile(args.wheel) as z:
            for member in ("adult/adult.data", "adult/adult.test", "compas/compas-scores-two-years.csv"):
                target = os.path.join(tmp, os.path.basename(member))
                with open(target, "wb") as f:
                    f.write(z.read("responsibly/dataset/" + member))
        args.adult = [os.path.join(tmp, "adult.data"), os.path.join(tmp, "adult.test")]
        args.compas = os.path.join(tmp, "compas-scores-two-years.csv")

    if args.adult:
        print("adult rows:", convert_adult(args.adult, args.out))
    if args.compas:
        print("compas rows:", convert_compas(args.compas, args.out))


if __name__ == "__main__":
    main()
