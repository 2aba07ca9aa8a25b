"""Per-iteration CSV training logs."""
from __future__ import annotations

import csv
from pathlib import Path

LOG_FIELDS = ["iter", "t", "loss", "laplacian", "seconds"]


class CsvLogger:
    """Appends one row per iteration, flushing so interrupts keep the log."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not (append and self.path.exists())
        self._fh = open(self.path, "w" if fresh else "a", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=LOG_FIELDS)
        if fresh:
            self._writer.writeheader()
            self._fh.flush()

    def log(self, **row):
        self._writer.writerow({k: row.get(k, "") for k in LOG_FIELDS})
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"iter": int(r["iter"]), "t": int(r["t"]), "loss": float(r["loss"]),
             "laplacian": float(r["laplacian"]), "seconds": float(r["seconds"])}
            for r in csv.DictReader(fh)
        ]
