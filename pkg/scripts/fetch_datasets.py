#!/usr/bin/env python3
"""Materialize the benchmark datasets as CSV files under data/.

wine and digits ship with scikit-learn and are always written locally.
parkinsons and framingham are downloaded from their public sources; pass
--skip-download to only materialize the bundled ones (the loaders will
tell you which files are still missing).

Expected files and schemas (see README for the column lists):
  data/wine.csv         178 rows, 13 numeric features + ``target``
  data/digits.csv       1797 rows, 64 numeric features + ``target``
  data/parkinsons.csv   Oxford voice recordings; label column ``status``,
                        ``name`` column is dropped by the loader
  data/framingham.csv   Framingham heart study; label column ``TenYearCHD``,
                        rows with missing values are dropped by the loader
"""

import argparse
import sys
import urllib.request
from pathlib import Path

PARKINSONS_URLS = [
    "https://archive.ics.uci.edu/ml/machine-learning-databases/parkinsons/parkinsons.data",
]
# The framingham CSV is distributed via Kaggle (requires an account); these
# public mirrors carry the same 4238-row file.
FRAMINGHAM_URLS = [
    "https://raw.githubusercontent.com/GauravPadawe/Framingham-Heart-Study/master/framingham.csv",
    "https://raw.githubusercontent.com/LisaThumann/framingham/master/framingham.csv",
]


def write_sklearn_datasets(data_dir: Path) -> None:
    import numpy as np
    from sklearn.datasets import load_digits, load_wine

    for name, bundle in (("wine", load_wine()), ("digits", load_digits())):
        path = data_dir / f"{name}.csv"
        header = [f"f{i}" for i in range(bundle.data.shape[1])] + ["target"]
        table = np.column_stack([bundle.data, bundle.target])
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(",".join(header) + "\n")
            for row in table:
                handle.write(",".join(repr(float(v)) for v in row[:-1])
                             + f",{int(row[-1])}\n")
        print(f"wrote {path}")


def download_first(urls, dest: Path) -> bool:
    for url in urls:
        try:
            with urllib.request.urlopen(url, timeout=30) as response:
                payload = response.read()
        except Exception as exc:
            print(f"  {url}: {exc}")
            continue
        dest.write_bytes(payload)
        print(f"wrote {dest} from {url}")
        return True
    return False


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--skip-download", action="store_true",
                        help="only materialize the scikit-learn bundled sets")
    args = parser.parse_args()
    data_dir = Path(args.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    write_sklearn_datasets(data_dir)
    if args.skip_download:
        return 0
    status = 0
    if not (data_dir / "parkinsons.csv").exists():
        if not download_first(PARKINSONS_URLS, data_dir / "parkinsons.csv"):
            print("parkinsons.csv could not be downloaded; place it manually")
            status = 1
    if not (data_dir / "framingham.csv").exists():
        if not download_first(FRAMINGHAM_URLS, data_dir / "framingham.csv"):
            print("framingham.csv could not be downloaded; place it manually")
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
