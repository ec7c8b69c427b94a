"""Run configuration: one dataclass with desk defaults per dimension, plus
key=value text overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class RunConfig:
    dim: int = 1
    half_width: float = 128.0  # grid box [-h, h)^n
    points: int = 4096  # cells per axis
    scales: tuple = (-2, -1, 0, 1)  # tile scales k, |I_s| = 2^{kn}
    tile_half: float = 16.0  # time cubes inside [-a, a)^n
    freq_max: float = 4.0  # frequency cubes and N values inside [-b, b)^n
    F_half: float = 8.0  # random sets F live in [-c, c)^n
    F_scales: tuple = (-4, 1)  # scale range of the dyadic pieces of F
    F_pieces: tuple = (1, 8)
    E_half: float = 8.0
    choice_scale: int = -1  # N is constant on dyadic cells of this scale
    r: int = 2
    gamma: int = 10
    kappa: float = 1.0
    p: float = 2.0
    trials: int = 20
    seed: int = 0
    max_tiles: int = 0  # 0 keeps the whole window, otherwise subsample
    unit_mother: bool = True  # scale packets to a unit-L^2 mother bump
    family: str = "all"  # maximal-function cube family
    depth: int = 40
    refine: bool = False  # rerun on the doubled grid and flag stability
    workers: int = 1

    @classmethod
    def desk(cls, dim: int = 1, **kw) -> RunConfig:
        if dim == 1:
            base = cls()
        elif dim == 2:
            base = cls(dim=2, half_width=32.0, points=128, scales=(0, 1), tile_half=8.0, freq_max=1.0,
                       F_half=8.0, F_scales=(-1, 2), E_half=8.0, choice_scale=0, r=3, gamma=12)
        else:
            raise ValueError("desk defaults exist for n = 1 and n = 2")
        return dataclasses.replace(base, **kw)

    def replace(self, **kw) -> RunConfig:
        return dataclasses.replace(self, **kw)

    def to_json(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in dataclasses.fields(self)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, text: str, current):
    text = text.strip()
    if isinstance(current, bool):
        if text.lower() not in _BOOL:
            raise ValueError(f"{name}: expected a boolean, got {text!r}")
        return _BOOL[text.lower()]
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        items = [t for t in text.replace(" ", "").split(",") if t]
        kind = type(current[0]) if current else int
        return tuple(kind(t) for t in items)
    return text


def parse_overrides(text: str) -> dict:
    """key=value lines; '#' starts a comment; blank lines are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(overrides: dict | None = None, **kw) -> RunConfig:
    """Desk defaults for the requested dim, then text overrides, then keyword ones."""
    raw = dict(overrides or {})
    dim = int(kw.pop("dim", raw.pop("dim", 1)))
    cfg = RunConfig.desk(dim)
    names = {f.name for f in dataclasses.fields(cfg)}
    vals = {}
    for k, v in raw.items():
        if k not in names:
            raise ValueError(f"unknown config key {k!r}")
        vals[k] = _coerce(k, v, getattr(cfg, k))
    for k, v in kw.items():
        if k not in names:
            raise ValueError(f"unknown config key {k!r}")
        vals[k] = v
    return cfg.replace(**vals)


def load_config(path: str | Path | None = None, **kw) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return build_config(parse_overrides(text), **kw)
