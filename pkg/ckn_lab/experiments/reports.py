"""Report files: CSV tables and key/value summaries, each headed by the config manifest."""

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

from ckn_lab.experiments.config import ExperimentConfig

logger = logging.getLogger("experiment")


def fmt(value) -> str:
    """Stable text for a report cell."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.12g}"
    if value is None:
        return "none"
    return str(value)


class ReportWriter:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.written: list[Path] = []

    def _open(self, name: str):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path, path.open("w", newline="")

    def table(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path, fh = self._open(name)
        with fh:
            fh.write(self.config.manifest() + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            count = 0
            for row in rows:
                writer.writerow([fmt(v) for v in row])
                count += 1
        logger.info(f"report:table path={path} rows={count}")
        return path

    def summary(self, name: str, record: dict) -> Path:
        """``key: value`` lines in the record's own order."""
        path, fh = self._open(name)
        with fh:
            fh.write(self.config.manifest() + "\n")
            for key, value in record.items():
                fh.write(f"{key}: {fmt(value)}\n")
        logger.info(f"report:summary path={path} keys={len(record)}")
        return path
