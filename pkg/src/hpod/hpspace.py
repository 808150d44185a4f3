"""Mixed hyperparameter spaces: meta-grid enumeration, sampling, encoding.

Numeric components are encoded by min-max scaling over the *meta-grid hull*
rather than the abstract domain, so the performance predictor only ever sees
inputs inside its training support.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigError

KINDS = ("categorical", "integer", "real")


@dataclass(frozen=True)
class HpDomain:
    name: str
    kind: str
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: tuple = ()
    grid: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"{self.name}: unknown domain kind {self.kind!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "choices", tuple(self.choices))
            if len(self.choices) < 2 or len(set(self.choices)) != len(self.choices):
                raise ConfigError(f"{self.name}: need >= 2 distinct choices")
        else:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ConfigError(f"{self.name}: need lo < hi")
        grid = tuple(self.cast(v) for v in self.grid)
        object.__setattr__(self, "grid", grid)
        for v in grid:
            if not self.contains(v):
                raise ConfigError(f"{self.name}: grid value {v!r} outside domain")

    @property
    def numeric(self) -> bool:
        return self.kind != "categorical"

    def cast(self, v):
        if self.kind == "integer":
            if isinstance(v, float) and not float(v).is_integer():
                raise ConfigError(f"{self.name}: {v!r} is not an integer")
            return int(v)
        if self.kind == "real":
            return float(v)
        return str(v)

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return v in self.choices
        if self.kind == "integer" and not float(v).is_integer():
            return False
        return self.lo <= v <= self.hi

    @property
    def hull(self):
        """(min, max) of the meta-grid values, falling back to the domain."""
        if not self.numeric:
            return None
        if self.grid:
            return (min(self.grid), max(self.grid))
        return (self.lo, self.hi)

    @property
    def grid_choices(self) -> tuple:
        if self.numeric:
            raise TypeError("grid_choices is for categorical domains")
        present = set(self.grid) if self.grid else set(self.choices)
        return tuple(c for c in self.choices if c in present)

    @property
    def width(self) -> int:
        return len(self.choices) if self.kind == "categorical" else 1

    def to_json(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            out["choices"] = list(self.choices)
        else:
            out["lo"], out["hi"] = self.lo, self.hi
        out["grid"] = list(self.grid)
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "HpDomain":
        return cls(
            name=doc["name"],
            kind=doc["kind"],
            lo=doc.get("lo"),
            hi=doc.get("hi"),
            choices=tuple(doc.get("choices", ())),
            grid=tuple(doc.get("grid", ())),
        )


@dataclass(frozen=True)
class HpSetting:
    """One value per domain, in the owning space's domain order."""

    values: tuple
    names: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def key(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in zip(self.names, self.values))
        return f"HpSetting({inner})"


@dataclass(frozen=True)
class HpSpace:
    algorithm: str
    domains: tuple
    defaults: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(self.domains))
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate domain names: {names}")
        if not names:
            raise ConfigError("space has no domains")

    @property
    def names(self) -> tuple:
        return tuple(d.name for d in self.domains)

    @property
    def encoding_length(self) -> int:
        return sum(d.width for d in self.domains)

    def domain(self, name) -> HpDomain:
        return self.domains[self.names.index(name)]

    def setting(self, values=None, **kw) -> HpSetting:
        """Build and validate a setting from a sequence or a mapping."""
        if values is None:
            values = kw
        if isinstance(values, dict):
            missing = set(self.names) - set(values)
            extra = set(values) - set(self.names)
            if missing or extra:
                raise ConfigError(f"setting keys mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
            values = [values[n] for n in self.names]
        values = list(values)
        if len(values) != len(self.domains):
            raise ConfigError(f"expected {len(self.domains)} values, got {len(values)}")
        cast = []
        for dom, v in zip(self.domains, values):
            v = dom.cast(v)
            if not dom.contains(v):
                raise ConfigError(f"{dom.name}={v!r} outside its domain")
            cast.append(v)
        return HpSetting(tuple(cast), self.names)

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "domains": [d.to_json() for d in self.domains],
            "defaults": self.defaults,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HpSpace":
        return cls(
            algorithm=doc["algorithm"],
            domains=tuple(HpDomain.from_json(d) for d in doc["domains"]),
            defaults=dict(doc.get("defaults", {})),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_space(path) -> HpSpace:
    with open(path, encoding="utf-8") as fh:
        return HpSpace.from_json(json.load(fh))


def builtin_space(algorithm: str) -> HpSpace:
    name = algorithm.lower()
    if name not in ("lof", "iforest"):
        raise ConfigError(f"no shipped space for algorithm {algorithm!r}")
    text = resources.files("hpod.spaces").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return HpSpace.from_json(json.loads(text))


def meta_grid(space: HpSpace, per_domain_grids: Optional[Sequence[Sequence]] = None) -> list:
    """Full cross-product of per-domain grids, first domain varying slowest."""
    if per_domain_grids is None:
        per_domain_grids = [d.grid for d in space.domains]
    if len(per_domain_grids) != len(space.domains):
        raise ConfigError("one grid per domain required")
    grids = []
    for dom, g in zip(space.domains, per_domain_grids):
        if len(g) == 0:
            raise ConfigError(f"{dom.name}: empty grid")
        vals = [dom.cast(v) for v in g]
        for v in vals:
            if not dom.contains(v):
                raise ConfigError(f"{dom.name}: grid value {v!r} outside domain")
        grids.append(vals)
    return [HpSetting(tuple(combo), space.names) for combo in itertools.product(*grids)]


def sample(space: HpSpace, count: int, seed: int, bounds: Optional[dict] = None) -> list:
    """Uniform draws inside the meta-grid hull.

    ``bounds`` maps domain name to ``(lo, hi)`` for numeric domains or a
    tuple of choices for categorical ones; missing entries use the hull.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rs = np.random.default_rng(seed)
    bounds = bounds or {}
    cols = []
    for dom in space.domains:
        if dom.numeric:
            lo, hi = bounds.get(dom.name, dom.hull)
            draw = rs.uniform(lo, hi, size=count)
            if dom.kind == "integer":
                col = [int(v) for v in np.clip(np.rint(draw), np.ceil(lo), np.floor(hi))]
            else:
                col = [float(v) for v in draw]
        else:
            choices = tuple(bounds.get(dom.name, dom.grid_choices))
            col = [choices[k] for k in rs.integers(0, len(choices), size=count)]
        cols.append(col)
    return [HpSetting(tuple(vals), space.names) for vals in zip(*cols)]


def encode(setting: HpSetting, space: HpSpace) -> np.ndarray:
    parts = []
    for dom, v in zip(space.domains, setting.values):
        if dom.numeric:
            lo, hi = dom.hull
            parts.append([(float(v) - lo) / (hi - lo) if hi > lo else 0.0])
        else:
            hot = [0.0] * len(dom.choices)
            hot[dom.choices.index(v)] = 1.0
            parts.append(hot)
    return np.asarray([x for p in parts for x in p], dtype=float)


def encode_many(settings, space: HpSpace) -> np.ndarray:
    if not settings:
        return np.zeros((0, space.encoding_length))
    return np.vstack([encode(s, space) for s in settings])


def decode(vec, space: HpSpace) -> HpSetting:
    vec = np.asarray(vec, dtype=float)
    vals, pos = [], 0
    for dom in space.domains:
        if dom.numeric:
            lo, hi = dom.hull
            v = lo + vec[pos] * (hi - lo)
            vals.append(int(round(v)) if dom.kind == "integer" else float(f"{v:.12g}"))
            pos += 1
        else:
            block = vec[pos:pos + len(dom.choices)]
            vals.append(dom.choices[int(np.argmax(block))])
            pos += len(dom.choices)
    return HpSetting(tuple(vals), space.names)


def setting_from_dict(space: HpSpace, doc: dict) -> HpSetting:
    return space.setting(doc)
