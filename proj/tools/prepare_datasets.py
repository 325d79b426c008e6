#!/usr/bin/env python3
"""Rebuild the benchmark CSVs under data/ from redistributable package copies.

The upstream archives (UCI, ProPublica) are mirrored inside a few PyPI wheels:

  responsibly  -> adult.data, compas-scores-two-years.csv, german.data
  keel-ds      -> pima.dat (768-row Pima Indians diabetes table)
  scikit-learn -> Wisconsin diagnostic breast cancer table

The script only reshapes the raw tables into headered RFC-4180 CSVs. Feature
selection, target binarization and encoding are driven by data/schemas/*.json.
"""

import argparse
import csv
import io
import json
import pathlib
import subprocess
import sys
import tempfile
import zipfile
from datetime import datetime

WHEELS = {
    "responsibly": "responsibly==0.1.2",
    "keel_ds": "keel-ds==0.2.5",
}

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

GERMAN_COLUMNS = [
    ("checking_status", "status"), ("duration", None), ("credit_history", "credit_history"),
    ("purpose", "purpose"), ("credit_amount", None), ("savings", "savings"),
    ("employment", "present_employment"), ("installment_rate", None),
    ("personal_status_sex", "status_sex"), ("other_debtors", "other_debtors"),
    ("residence_since", None), ("property", "property"), ("age", None),
    ("other_installment_plans", "installment_plans"), ("housing", "housing"),
    ("existing_credits", None), ("job", "job"), ("people_liable", None),
    ("telephone", "telephone"), ("foreign_worker", "foreign_worker"), ("credit_risk", None),
]

DIABETES_COLUMNS = [
    "Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin", "BMI",
    "DiabetesPedigreeFunction", "Age", "Outcome",
]

COMPAS_COLUMNS = [
    "age", "age_cat", "sex", "race", "priors_count", "days_b_screening_arrest",
    "c_charge_degree", "is_recid", "is_violent_recid", "two_year_recid",
    "length_of_stay", "score_text",
]


def fetch_wheel(spec, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         "-d", str(dest), spec],
        check=True, stdout=subprocess.DEVNULL)
    name = spec.split("==")[0].replace("-", "_")
    return next(p for p in dest.glob("*.whl") if p.name.lower().startswith(name.lower()))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def prepare_adult(wheel, out):
    raw = wheel.read("responsibly/dataset/adult/adult.data").decode()
    rows = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        rows.append([c.strip() for c in line.split(",")])
    write_csv(out / "adult.csv", ADULT_COLUMNS, rows)


def prepare_german(wheel, out):
    raw = wheel.read("responsibly/dataset/german/german.data").decode()
    maps = json.loads(wheel.read("responsibly/dataset/german/values_maps.json"))
    rows = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        cells = line.split()
        row = []
        for (name, mapping), value in zip(GERMAN_COLUMNS, cells):
            if mapping is None:
                row.append(value)
                continue
            decoded = maps[mapping][value]
            if isinstance(decoded, bool):
                decoded = "yes" if decoded else "no"
            row.append(" ".join(str(decoded).split()))
        rows.append(row)
    write_csv(out / "german.csv", [c for c, _ in GERMAN_COLUMNS], rows)


def day(stamp):
    return datetime.strptime(stamp.split(" ")[0], "%Y-%m-%d")


def prepare_compas(wheel, out):
    raw = wheel.read("responsibly/dataset/compas/compas-scores-two-years.csv").decode()
    reader = csv.DictReader(io.StringIO(raw))
    rows = []
    for rec in reader:
        if rec["c_jail_in"] and rec["c_jail_out"]:
            stay = str((day(rec["c_jail_out"]) - day(rec["c_jail_in"])).days)
        else:
            stay = ""
        rows.append([rec[c] if c != "length_of_stay" else stay for c in COMPAS_COLUMNS])
    write_csv(out / "compas.csv", COMPAS_COLUMNS, rows)


def prepare_diabetes(wheel, out):
    raw = wheel.read("keel_ds/data/balanced/raw/pima.dat").decode()
    rows = []
    for line in raw.splitlines():
        if not line.strip() or line.startswith("@"):
            continue
        cells = [c.strip() for c in line.split(",")]
        cells[-1] = "1" if cells[-1] == "tested_positive" else "0"
        rows.append(cells)
    write_csv(out / "diabetes.csv", DIABETES_COLUMNS, rows)


def prepare_breast_cancer(out):
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    header = [n.replace(" ", "_") for n in bunch.feature_names] + ["diagnosis"]
    rows = []
    for x, y in zip(bunch.data, bunch.target):
        # sklearn codes 0 = malignant, 1 = benign
        rows.append([repr(float(v)) for v in x] + ["M" if y == 0 else "B"])
    write_csv(out / "breast_cancer.csv", header, rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        wheels = {k: zipfile.ZipFile(fetch_wheel(v, tmp)) for k, v in WHEELS.items()}
        prepare_adult(wheels["responsibly"], out)
        prepare_german(wheels["responsibly"], out)
        prepare_compas(wheels["responsibly"], out)
        prepare_diabetes(wheels["keel_ds"], out)
    prepare_breast_cancer(out)


if __name__ == "__main__":
    main()
