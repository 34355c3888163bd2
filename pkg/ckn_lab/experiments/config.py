"""Flat ``key=value`` experiment configuration.

Lines are ``section.key=value``; ``#`` starts a comment. Every problem is
reported as ``InvalidConfig`` naming the offending key.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Union

from ckn_lab.core.ckn_params import WeightParams, validate
from ckn_lab.core.discrete_fields import BoxGrid, Grid, RadialGrid
from ckn_lab.errors import InvalidConfig, LabError


def _to_int(text: str) -> int:
    return int(text)


def _to_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan")
    return value


def _to_str(text: str) -> str:
    return text


# key -> (attribute, converter)
_KEYS: dict[str, tuple[str, Callable[[str], object]]] = {
    "experiment": ("experiment", _to_str),
    "seed": ("seed", _to_int),
    "params.N": ("N", _to_int),
    "params.a": ("a", _to_float),
    "params.b": ("b", _to_float),
    "params.s": ("s", _to_float),
    "grid.kind": ("grid_kind", _to_str),
    "grid.n_cells": ("n_cells", _to_int),
    "grid.levels": ("levels", _to_int),
    "grid.r_min": ("r_min", _to_float),
    "grid.r_max": ("r_max", _to_float),
    "grid.spacing": ("spacing", _to_str),
    "solver.tol": ("solver_tol", _to_float),
    "solver.max_iter": ("solver_max_iter", _to_int),
    "output.dir": ("output_dir", _to_str),
    "golden.dir": ("golden_dir", _to_str),
    "trials": ("trials", _to_int),
    "envelopes": ("envelopes", _to_int),
    "harnack.s_exp": ("harnack_s_exp", _to_float),
    "regularity.slack": ("regularity_slack", _to_float),
    "holder.seed": ("holder_seed", _to_int),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: Optional[int] = None
    N: int = 3
    a: float = 0.0
    b: float = 0.0
    s: float = math.inf
    grid_kind: str = "radial"
    n_cells: int = 128
    levels: int = 4
    r_min: float = 0.0
    r_max: float = 1.0
    spacing: str = "uniform"
    solver_tol: float = 1e-10
    solver_max_iter: Optional[int] = None
    output_dir: Union[str, Path] = "reports"
    golden_dir: Optional[Union[str, Path]] = None
    trials: Optional[int] = None
    envelopes: Optional[int] = None
    harnack_s_exp: float = 1.0
    regularity_slack: float = 0.1
    holder_seed: Optional[int] = None
    dump_trials: bool = False

    def weight_params(self, holder_mode: bool = False) -> WeightParams:
        try:
            return validate(self.N, self.a, self.b, self.s, holder_mode=holder_mode)
        except LabError as exc:
            raise InvalidConfig("params", str(exc)) from exc

    def grid(self, n_cells: Optional[int] = None) -> Grid:
        """The configured grid; box grids are the cube [-r_max, r_max]^3."""
        n = self.n_cells if n_cells is None else n_cells
        if self.grid_kind == "box":
            if self.N != 3:
                raise InvalidConfig("params.N", "box grids need N = 3")
            return BoxGrid.cube(self.r_max, n)
        try:
            return RadialGrid(self.N, self.r_min, self.r_max, n, self.spacing)
        except ValueError as exc:
            raise InvalidConfig("grid", str(exc)) from exc

    @property
    def pair_seed(self) -> int:
        if self.holder_seed is not None:
            return self.holder_seed
        return self.seed if self.seed is not None else 0

    def manifest(self) -> str:
        """One-line parameter echo written ahead of every report."""
        fields = [
            f"experiment={self.experiment}",
            f"N={self.N}",
            f"a={self.a!r}",
            f"b={self.b!r}",
            f"s={self.s!r}",
            f"grid={self.grid_kind}",
            f"n_cells={self.n_cells}",
            f"levels={self.levels}",
            f"r_min={self.r_min!r}",
            f"r_max={self.r_max!r}",
            f"solver_tol={self.solver_tol!r}",
            f"seed={self.seed}",
        ]
        return "# manifest " + " ".join(fields)


def parse_config(text: str, base_dir: Optional[Path] = None) -> ExperimentConfig:
    values: dict[str, object] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(line, "expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise InvalidConfig(key, "unknown key")
        attr, convert = _KEYS[key]
        try:
            values[attr] = convert(value)
        except ValueError as exc:
            raise InvalidConfig(key, f"cannot parse {value!r}") from exc
    if "experiment" not in values:
        raise InvalidConfig("experiment", "missing")
    config = ExperimentConfig(**values)
    if config.grid_kind not in ("radial", "box"):
        raise InvalidConfig("grid.kind", f"{config.grid_kind!r} is not radial or box")
    if config.spacing not in ("uniform", "geometric"):
        raise InvalidConfig("grid.spacing", f"{config.spacing!r} is not uniform or geometric")
    if config.n_cells < 2:
        raise InvalidConfig("grid.n_cells", "must be at least 2")
    if config.levels < 1:
        raise InvalidConfig("grid.levels", "must be at least 1")
    if not 0.0 <= config.r_min < config.r_max:
        raise InvalidConfig("grid.r_max", "need 0 <= r_min < r_max")
    if not config.solver_tol > 0.0:
        raise InvalidConfig("solver.tol", "must be positive")
    for key, count in (("trials", config.trials), ("envelopes", config.envelopes)):
        if count is not None and count < 1:
            raise InvalidConfig(key, "must be positive")
    return replace(
        config,
        output_dir=_resolve(config.output_dir, base_dir),
        golden_dir=None if config.golden_dir is None else _resolve(config.golden_dir, base_dir),
    )


def _resolve(path: Union[str, Path], base_dir: Optional[Path]) -> Path:
    path = Path(path)
    if base_dir is not None and not path.is_absolute():
        return base_dir / path
    return path


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig("path", f"cannot read {path}: {exc}") from exc
    return parse_config(text, path.parent)
