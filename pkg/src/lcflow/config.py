"""Line-oriented run configuration: ``key = value`` with ``#`` comments.

Every problem in a file is reported at once, each with its line number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .fields import Grid, StateUF
from .littlewood_paley import BesovSpec

PRESETS = ("zero", "shear", "random-band", "file")


class ConfigError(ValueError):
    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = errors
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in errors))


@dataclass(frozen=True)
class Preset:
    kind: str = "zero"
    args: tuple = ()

    def build(self, grid: Grid) -> StateUF:
        from .io import read_snapshot
        from .random_fields import random_band_state, shear_state

        if self.kind == "zero":
            return StateUF.zeros(grid)
        if self.kind == "shear":
            return shear_state(grid, self.args[0])
        if self.kind == "random-band":
            seed, kmin, kmax, amp = self.args
            return random_band_state(grid, seed, kmin, kmax, amp)
        state = read_snapshot(self.args[0])
        if state.grid != grid:
            raise ValueError(f"snapshot grid {state.grid} differs from configured grid {grid}")
        return state

    def __str__(self) -> str:
        return " ".join([self.kind] + [str(a) for a in self.args])


@dataclass(frozen=True)
class RunConfig:
    n: int = 2
    m: int = 64
    L: float = 2 * math.pi
    dt: Optional[float] = None          # None means automatic
    T: float = 1.0
    preset: Preset = Preset()
    besov: tuple[BesovSpec, ...] = ()
    output: str = "out"
    stride: int = 1
    snapshots: int = 65
    eps: float = 0.5
    q1: float = 4.0
    C1: float = 1.0
    C2: float = 1.0
    delta: int = 2
    K: int = 64
    max_iter: int = 30
    tol: float = 1e-10
    perturbation: float = 0.01
    seed: int = 0

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.m, self.L)

    def initial_state(self) -> StateUF:
        return self.preset.build(self.grid)

    def specs(self) -> tuple[BesovSpec, ...]:
        return self.besov or (BesovSpec.critical(self.n, 2.0, 2.0, 4.0),)


_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _parse_float(text: str) -> float:
    t = text.strip().lower().replace(" ", "")
    m = re.fullmatch(rf"({_FLOAT})?\*?pi", t)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if not re.fullmatch(_FLOAT, t):
        raise ValueError(f"not a number: {text!r}")
    return float(t)


def _parse_int(text: str) -> int:
    t = text.strip()
    if not re.fullmatch(r"[-+]?\d+", t):
        raise ValueError(f"not an integer: {text!r}")
    return int(t)


def _parse_preset(text: str) -> Preset:
    words = re.sub(r"[(),]", " ", text).split()
    if not words:
        raise ValueError("empty preset")
    kind = words[0].lower()
    args = words[1:]
    if kind == "zero":
        if args:
            raise ValueError("preset 'zero' takes no arguments")
        return Preset("zero")
    if kind == "shear":
        if len(args) != 1:
            raise ValueError("preset 'shear' takes one amplitude")
        return Preset("shear", (_parse_float(args[0]),))
    if kind == "random-band":
        if len(args) != 4:
            raise ValueError("preset 'random-band' takes seed kmin kmax amplitude")
        seed, kmin, kmax = (_parse_int(a) for a in args[:3])
        amp = _parse_float(args[3])
        if seed < 0:
            raise ValueError("seed must be nonnegative")
        if not 1 <= kmin <= kmax:
            raise ValueError(f"need 1 <= kmin <= kmax, got {kmin}, {kmax}")
        if amp < 0:
            raise ValueError("amplitude must be nonnegative")
        return Preset("random-band", (seed, kmin, kmax, amp))
    if kind == "file":
        if len(args) != 1:
            raise ValueError("preset 'file' takes one path")
        return Preset("file", (args[0],))
    raise ValueError(f"unknown preset {kind!r} (choose from {', '.join(PRESETS)})")


def parse_besov(text: str, n: int) -> BesovSpec:
    """``"s p r q"`` or ``"p r q"`` (regularity on the critical line)."""
    parts = [_parse_float(x) for x in text.replace(",", " ").split()]
    if len(parts) == 4:
        return BesovSpec(*parts)
    if len(parts) == 3:
        return BesovSpec.critical(n, *parts)
    raise ValueError("besov entry needs 's p r q' or 'p r q'")


_SCALARS = {
    "n": _parse_int, "m": _parse_int, "L": _parse_float, "T": _parse_float,
    "stride": _parse_int, "snapshots": _parse_int, "eps": _parse_float, "q1": _parse_float,
    "C1": _parse_float, "C2": _parse_float, "delta": _parse_int, "K": _parse_int,
    "max_iter": _parse_int, "tol": _parse_float, "perturbation": _parse_float, "seed": _parse_int,
}
_KEYS = set(_SCALARS) | {"dt", "preset", "besov", "output"}


def parse_config(text: Union[str, bytes]) -> RunConfig:
    """Parse and validate a configuration, collecting every error."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError([(0, f"not UTF-8: {exc}")]) from None
    errors: list[tuple[int, str]] = []
    values: dict = {}
    lines: dict[str, int] = {}
    besov_raw: list[tuple[int, str]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        if not value:
            errors.append((ln, f"missing value for {key!r}"))
            continue
        if key == "besov":
            besov_raw.append((ln, value))
            continue
        if key in lines:
            errors.append((ln, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue
        lines[key] = ln
        try:
            if key in _SCALARS:
                values[key] = _SCALARS[key](value)
            elif key == "dt":
                values[key] = None if value.lower() == "auto" else _parse_float(value)
            elif key == "preset":
                values[key] = _parse_preset(value)
            else:
                values[key] = value
        except ValueError as exc:
            errors.append((ln, f"{key}: {exc}"))

    def bad(key, msg):
        errors.append((lines.get(key, 0), f"{key}: {msg}"))

    n = values.get("n", 2)
    m = values.get("m", 64)
    if "n" in values and n not in (2, 3):
        bad("n", f"dimension must be 2 or 3, got {n}")
    if "m" in values and (m < 8 or m & (m - 1)):
        bad("m", f"must be a power of two >= 8, got {m}")
    positive = ("L", "T", "eps", "C1", "C2", "tol")
    for key in positive:
        if key in values and not (values[key] > 0 and math.isfinite(values[key])):
            bad(key, f"must be positive and finite, got {values[key]}")
    if values.get("dt") is not None and not values["dt"] > 0:
        bad("dt", f"must be positive or 'auto', got {values['dt']}")
    for key, lo in (("stride", 1), ("snapshots", 2), ("delta", 1), ("K", 8), ("max_iter", 1)):
        if key in values and values[key] < lo:
            bad(key, f"must be at least {lo}, got {values[key]}")
    if "q1" in values and not 2 < values["q1"] < math.inf:
        bad("q1", f"must lie in (2, inf), got {values['q1']}")
    if "perturbation" in values and values["perturbation"] < 0:
        bad("perturbation", "must be nonnegative")
    if "seed" in values and values["seed"] < 0:
        bad("seed", "must be nonnegative")
    preset = values.get("preset")
    if preset is not None and preset.kind == "random-band" and isinstance(m, int) and m >= 8:
        if preset.args[2] >= m // 2:
            bad("preset", f"kmax={preset.args[2]} does not fit a grid with m={m}")

    specs = []
    for ln, value in besov_raw:
        try:
            specs.append(parse_besov(value, n if n in (2, 3) else 2))
        except ValueError as exc:
            errors.append((ln, f"besov: {exc}"))
    if errors:
        raise ConfigError(sorted(errors))
    if specs:
        values["besov"] = tuple(specs)
    return RunConfig(**values)


def load_config(path: Union[str, Path]) -> RunConfig:
    return parse_config(Path(path).read_bytes())
