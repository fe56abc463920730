"""Mixed integer/boolean search spaces and their unit-cube codec.

A :class:`SearchSpace` is an ordered list of :class:`ParameterSpec`.  Every
parameter has a finite, numerically ordered grid; the codec maps grid index
``i`` of a ``k``-value grid to ``i / (k - 1)`` so that the GP sees the unit
hypercube.  Layer groups tie a ``num_layers`` parameter to a fixed number of
per-layer width slots; all slots are always encoded, only the first
``num_layers`` are written to the emitted model config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

GROUPS = ("encoder", "decoder", "length_predictor", "embedding")


class SearchSpaceError(ValueError):
    """Invalid parameter definition, configuration, or unit point."""


@dataclass(frozen=True)
class ParameterSpec:
    """One tunable parameter.

    ``kind`` is ``"int"`` (``lo..hi`` by ``step``), ``"choice"`` (explicit
    increasing integer list) or ``"bool"``.  ``key`` is the name written to
    the model config; it defaults to ``name``.
    """

    name: str
    kind: str
    group: str
    lo: int | None = None
    hi: int | None = None
    step: int | None = None
    choices: tuple[int, ...] | None = None
    key: str | None = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise SearchSpaceError(f"{self.name}: unknown group {self.group!r}")
        if self.kind == "int":
            if self.lo is None or self.hi is None or self.step is None:
                raise SearchSpaceError(f"{self.name}: int parameter needs lo, hi, step")
            if self.lo > self.hi or self.step <= 0 or (self.hi - self.lo) % self.step:
                raise SearchSpaceError(f"{self.name}: bad integer range")
        elif self.kind == "choice":
            if not self.choices:
                raise SearchSpaceError(f"{self.name}: empty choice list")
            object.__setattr__(self, "choices", tuple(int(c) for c in self.choices))
            if any(b <= a for a, b in zip(self.choices, self.choices[1:])):
                raise SearchSpaceError(f"{self.name}: choices must be strictly increasing")
        elif self.kind != "bool":
            raise SearchSpaceError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def grid(self) -> tuple:
        if self.kind == "int":
            return tuple(range(self.lo, self.hi + 1, self.step))
        if self.kind == "choice":
            return self.choices
        return (False, True)

    @property
    def size(self) -> int:
        return len(self.grid)

    @property
    def config_key(self) -> str:
        return self.key or self.name

    def index_of(self, value) -> int:
        if self.kind == "bool":
            if not isinstance(value, (bool, np.bool_)):
                raise SearchSpaceError(f"{self.name}: expected a boolean, got {value!r}")
            return int(bool(value))
        if isinstance(value, (bool, np.bool_)) or int(value) != value:
            raise SearchSpaceError(f"{self.name}: expected an integer, got {value!r}")
        value = int(value)
        if self.kind == "int":
            off = value - self.lo
            if off % self.step or not 0 <= off <= self.hi - self.lo:
                raise SearchSpaceError(f"{self.name}: {value} is off the grid")
            return off // self.step
        try:
            return self.choices.index(value)
        except ValueError:
            raise SearchSpaceError(f"{self.name}: {value} is not one of {self.choices}") from None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind, "group": self.group}
        if self.kind == "int":
            out.update(lo=self.lo, hi=self.hi, step=self.step)
        elif self.kind == "choice":
            out["choices"] = list(self.choices)
        if self.key:
            out["key"] = self.key
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterSpec":
        choices = d.get("choices")
        return cls(
            name=d["name"],
            kind=d["kind"],
            group=d["group"],
            lo=d.get("lo"),
            hi=d.get("hi"),
            step=d.get("step"),
            choices=tuple(choices) if choices is not None else None,
            key=d.get("key"),
        )


@dataclass(frozen=True)
class LayerGroup:
    """A variable-length kernel list: ``num_layers`` picks how many slots are live."""

    group: str
    num_layers: str
    widths: tuple[str, ...]
    key: str


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParameterSpec, ...]
    layer_groups: tuple[LayerGroup, ...] = ()
    name: str = "custom"
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "layer_groups", tuple(self.layer_groups))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SearchSpaceError("duplicate parameter names")
        self._index.update({n: i for i, n in enumerate(names)})
        seen: set[str] = set()
        for lg in self.layer_groups:
            for n in (lg.num_layers, *lg.widths):
                if n not in self._index:
                    raise SearchSpaceError(f"layer group {lg.key!r} references unknown {n!r}")
            if seen.intersection(lg.widths):
                raise SearchSpaceError("width parameter shared between layer groups")
            seen.update(lg.widths)
            n_layers = self[lg.num_layers]
            if n_layers.kind == "bool" or max(n_layers.grid) > len(lg.widths) or min(n_layers.grid) < 1:
                raise SearchSpaceError(f"{lg.num_layers}: layer counts must lie in 1..{len(lg.widths)}")

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def grid_sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.params])

    def __getitem__(self, name: str) -> ParameterSpec:
        try:
            return self.params[self._index[name]]
        except KeyError:
            raise SearchSpaceError(f"unknown parameter {name!r}") from None

    # -- index representation ------------------------------------------------

    def to_indices(self, config: Mapping) -> np.ndarray:
        unknown = set(config) - set(self._index)
        if unknown:
            raise SearchSpaceError(f"unknown parameter(s): {sorted(unknown)}")
        missing = [p.name for p in self.params if p.name not in config]
        if missing:
            raise SearchSpaceError(f"missing parameter(s): {missing}")
        return np.array([p.index_of(config[p.name]) for p in self.params], dtype=np.int64)

    def from_indices(self, idx: Sequence[int]) -> dict:
        return {p.name: p.grid[int(i)] for p, i in zip(self.params, idx)}

    def indices_to_unit(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        span = np.maximum(self.grid_sizes - 1, 1)
        return idx / span

    def unit_to_indices(self, points) -> np.ndarray:
        """Nearest grid index per coordinate; exact halves round down."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise SearchSpaceError(f"expected {self.dim} coordinates, got {pts.shape[-1]}")
        span = self.grid_sizes - 1
        idx = np.ceil(np.clip(pts, 0.0, 1.0) * span - 0.5).astype(np.int64)
        return np.clip(idx, 0, span)

    def snap(self, points) -> np.ndarray:
        return self.indices_to_unit(self.unit_to_indices(points))

    def validate(self, config: Mapping) -> None:
        self.to_indices(config)

    def default_config(self) -> dict:
        return dict(PAPER_DEFAULT) if self.name == "paper" else self.from_indices(np.zeros(self.dim, int))

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": [p.to_dict() for p in self.params],
            "layer_groups": [
                {"group": lg.group, "num_layers": lg.num_layers, "widths": list(lg.widths), "key": lg.key}
                for lg in self.layer_groups
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SearchSpace":
        if isinstance(d, Sequence):
            d = {"params": d}
        return cls(
            params=tuple(ParameterSpec.from_dict(p) for p in d["params"]),
            layer_groups=tuple(
                LayerGroup(lg["group"], lg["num_layers"], tuple(lg["widths"]), lg["key"])
                for lg in d.get("layer_groups", ())
            ),
            name=d.get("name", "custom"),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "SearchSpace":
        return cls.from_dict(json.loads(Path(path).read_text()))


def encode(space: SearchSpace, config: Mapping) -> np.ndarray:
    """Map a configuration to its point in ``[0, 1]^d``."""
    return space.indices_to_unit(space.to_indices(config))


def decode(space: SearchSpace, point) -> dict:
    """Round a unit point to the nearest on-grid configuration."""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.shape[0] != space.dim:
        raise SearchSpaceError(f"expected a point of dimension {space.dim}, got shape {point.shape}")
    return space.from_indices(space.unit_to_indices(point))


def _py(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    return int(value)


def emit_model_config(space: SearchSpace, config: Mapping) -> dict:
    """Nested model-config document; kernel lists are cut to ``num_layers``."""
    space.validate(config)
    doc: dict[str, dict] = {}
    in_groups = set()
    for lg in space.layer_groups:
        in_groups.update((lg.num_layers, *lg.widths))
        n = int(config[lg.num_layers])
        doc.setdefault(lg.group, {})[lg.key] = [_py(config[w]) for w in lg.widths[:n]]
    for p in space.params:
        if p.name not in in_groups:
            doc.setdefault(p.group, {})[p.config_key] = _py(config[p.name])
    return {g: doc[g] for g in GROUPS if g in doc}


def load_model_config_schema() -> dict:
    return json.loads(resources.files("nasbo").joinpath("schemas/model_config.schema.json").read_text())


def validate_model_config(doc: Mapping) -> None:
    import jsonschema

    jsonschema.validate(doc, load_model_config_schema())


# -- the built-in NAS space -------------------------------------------------------


def _layers(group, prefix, n_slots, widths, counts, key):
    params = [
        ParameterSpec(f"{prefix}_kernel_{i}", "choice", group, choices=tuple(widths)) for i in range(n_slots)
    ]
    params.append(ParameterSpec(f"{prefix}_num_layers", "choice", group, choices=tuple(counts)))
    lg = LayerGroup(group, f"{prefix}_num_layers", tuple(p.name for p in params[:-1]), key)
    return params, lg


def build_paper_space() -> SearchSpace:
    """The 24-parameter NLU architecture space."""
    enc, enc_lg = _layers("encoder", "encoder", 6, (3, 5, 7, 9), (4, 5, 6), "encoder_kernel_list")
    dec, dec_lg = _layers("decoder", "decoder", 2, (7, 9, 11, 13, 15), (1, 2), "decoder_kernel_size_list")
    lp, lp_lg = _layers("length_predictor", "length", 2, (3, 5, 7), (1, 2), "length_kernel_list")
    heads = (1, 2, 4)
    other = [
        ParameterSpec("encoder_embed_dim", "int", "encoder", 128, 192, 8),
        ParameterSpec("encoder_self_attention", "choice", "encoder", choices=heads, key="encoder_attention_heads"),
        ParameterSpec("encoder_ffn_dim", "int", "encoder", 32, 192, 8, key="encoder_ffn_embed_dim"),
        ParameterSpec("encoder_normalized", "bool", "encoder", key="encoder_normalize_before"),
        ParameterSpec("decoder_self_attention", "choice", "decoder", choices=heads, key="self_attention_heads"),
        ParameterSpec("decoder_attention_heads", "choice", "decoder", choices=heads),
        ParameterSpec("decoder_ffn_dim", "int", "decoder", 128, 512, 16, key="decoder_ffn_embed_dim"),
        ParameterSpec("length_dim", "int", "length_predictor", 32, 192, 8),
        ParameterSpec("length_num_heads", "choice", "length_predictor", choices=heads),
        ParameterSpec("char_embed_dim", "int", "embedding", 8, 24, 4),
        ParameterSpec("proj_dim", "int", "embedding", 8, 24, 4),
    ]
    return SearchSpace(tuple(enc + dec + lp + other), (enc_lg, dec_lg, lp_lg), name="paper")


# Default architecture; unused width slots sit at the grid minimum.
PAPER_DEFAULT = {
    **{f"encoder_kernel_{i}": w for i, w in enumerate([3, 3, 5, 9, 7, 3])},
    "encoder_num_layers": 5,
    "decoder_kernel_0": 13,
    "decoder_kernel_1": 9,
    "decoder_num_layers": 2,
    "length_kernel_0": 3,
    "length_kernel_1": 7,
    "length_num_layers": 2,
    "encoder_embed_dim": 128,
    "encoder_self_attention": 2,
    "encoder_ffn_dim": 40,
    "encoder_normalized": True,
    "decoder_self_attention": 1,
    "decoder_attention_heads": 2,
    "decoder_ffn_dim": 144,
    "length_dim": 192,
    "length_num_heads": 4,
    "char_embed_dim": 8,
    "proj_dim": 12,
}

PRESETS = {"paper": build_paper_space}


def load_space(name_or_path: str | Path) -> SearchSpace:
    """Built-in preset by name, or a JSON space definition file."""
    if str(name_or_path) in PRESETS:
        return PRESETS[str(name_or_path)]()
    return SearchSpace.from_json(name_or_path)


def grid_total(space: SearchSpace) -> float:
    return math.prod(float(k) for k in space.grid_sizes)
