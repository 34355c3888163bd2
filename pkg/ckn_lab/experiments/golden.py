"""Golden records: values frozen by the first verified run and compared on every later one.

A golden file lives at ``<golden.dir>/<experiment>.csv``: the manifest line,
a ``key,value`` header and one row per value. A missing file is written by
the next run that passes; a failing run never writes one.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ckn_lab.errors import InvalidConfig
from ckn_lab.experiments.config import ExperimentConfig
from ckn_lab.experiments.reports import fmt

logger = logging.getLogger("experiment")


@dataclass(frozen=True)
class GoldenCheck:
    path: Path
    recorded: bool
    mismatches: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.mismatches

    @property
    def status(self) -> str:
        if self.mismatches:
            return "mismatch"
        return "recorded" if self.recorded else "matched"


def golden_path(config: ExperimentConfig) -> Optional[Path]:
    if config.golden_dir is None:
        return None
    return Path(config.golden_dir) / f"{config.experiment}.csv"


def read_golden(path: Path) -> dict[str, str]:
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(line for line in fh if not line.startswith("#")) if row]
    if not rows or rows[0] != ["key", "value"] or any(len(row) != 2 for row in rows):
        raise InvalidConfig("golden.dir", f"{path} is not a key,value golden record")
    return {key: value for key, value in rows[1:]}


def golden_reference(config: ExperimentConfig) -> Optional[dict[str, str]]:
    """The frozen record for this experiment, or None when golden checks are off or nothing is recorded yet."""
    path = golden_path(config)
    if path is None or not path.exists():
        return None
    return read_golden(path)


def write_golden(path: Path, config: ExperimentConfig, values: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(config.manifest() + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in values.items():
            writer.writerow([key, fmt(value)])
    logger.info(f"golden:recorded path={path} keys={len(values)}")
    return path


def _matches(expected: str, actual, rtol: float) -> bool:
    if fmt(actual) == expected:
        return True
    if isinstance(actual, bool) or not isinstance(actual, (int, float)):
        return False
    try:
        want = float(expected)
    except ValueError:
        return False
    return math.isclose(float(actual), want, rel_tol=rtol, abs_tol=0.0)


def compare_golden(reference: dict[str, str], values: dict, rtol: float) -> list[str]:
    mismatches = []
    for key, value in values.items():
        if key not in reference:
            mismatches.append(f"{key} not recorded")
        elif not _matches(reference[key], value, rtol):
            mismatches.append(f"{key}={fmt(value)} recorded {reference[key]}")
    mismatches.extend(f"{key} no longer produced" for key in sorted(reference.keys() - values.keys()))
    return mismatches


def freeze_or_compare(config: ExperimentConfig, values: dict, rtol: float, verified: bool) -> Optional[GoldenCheck]:
    """Compare values with the golden record, writing it first if this verified run is the first one."""
    path = golden_path(config)
    if path is None:
        return None
    if not path.exists():
        if not verified:
            logger.warning(f"golden:skip path={path} reason=run_failed")
            return GoldenCheck(path, False, ("run failed before a record existed",))
        write_golden(path, config, values)
        return GoldenCheck(path, True)
    mismatches = compare_golden(read_golden(path), values, rtol)
    for line in mismatches:
        logger.error(f"golden:mismatch path={path} {line}")
    return GoldenCheck(path, False, tuple(mismatches))
