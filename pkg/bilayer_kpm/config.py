"""
Run configuration and model files.

A run is described by a ``RunConfig`` dataclass that serializes to one JSON
object (it is written into every output header). Values come from, in order
of precedence: command-line flags, the ``[run]``/``[model]`` tables of a TOML
file given with ``--config``, and the defaults below.

Model files either name a built-in model::

    [model]
    builtin = "tbg"
    twist_degrees = 6.0

or describe a custom one::

    [lattice1]
    vectors = [[2.46, 0.0], [1.23, 2.1304]]

    [lattice2]
    vectors = [[2.46, 0.0], [1.23, 2.1304]]

    [[orbitals.sheet1]]
    id = "A1"
    tau = [0.0, 0.0]
    onsite = 0.0

    [hopping]
    t_intra = -2.7
    nn_distance = 1.42
    t_perp = 0.48
    interlayer_distance = 3.35
    decay_length = 0.32
    cutoff = 8.0
"""

from __future__ import annotations

import json
import logging
import sys
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import BilayerKpmError, ConfigError
from .geometry import LatticeBasis
from .model import (
    GRAPHENE_T_INTRA,
    TBG_CUTOFF,
    TBG_DECAY_LENGTH,
    TBG_INTERLAYER_DISTANCE,
    TBG_T_PERP,
    Orbital,
    OrbitalSet,
    TBModel,
    bilayer_hopping,
    builtin_model,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

R_UNITS = ("a", "angstrom")


@dataclass
class ModelSource:
    """Where a model comes from: a built-in name plus overrides, or a custom TOML file."""

    builtin: str | None = "tbg"
    overrides: dict[str, Any] = field(default_factory=dict)
    path: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"builtin": self.builtin, "overrides": dict(self.overrides), "path": self.path}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ModelSource:
        return cls(builtin=data.get("builtin"), overrides=dict(data.get("overrides") or {}), path=data.get("path"))


@dataclass
class RunConfig:
    """Everything needed to reproduce one run."""

    model: ModelSource = field(default_factory=ModelSource)
    command: str = "dos"
    r: float | None = None
    r_units: str = "a"
    p: int = 256
    n_disc: int = 2
    energy_grid: tuple[float, float, int] | None = None
    output_path: str | None = None
    threads: int | None = None
    seed: int = 0
    options: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> RunConfig:
        if self.r is not None and not (np.isfinite(self.r) and self.r > 0):
            raise ConfigError(f"r must be positive, got {self.r}")
        if self.r_units not in R_UNITS:
            raise ConfigError(f"r_units must be one of {R_UNITS}, got {self.r_units!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigError(f"p must be a positive integer, got {self.p}")
        if int(self.n_disc) != self.n_disc or self.n_disc < 1:
            raise ConfigError(f"n_disc must be a positive integer, got {self.n_disc}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.energy_grid is not None:
            lo, hi, count = self.energy_grid
            if not lo < hi or int(count) != count or count < 2:
                raise ConfigError(f"energy grid needs min < max and count >= 2, got {self.energy_grid}")
        return self

    def length(self, value: float, model: TBModel) -> float:
        """Convert a radius in ``r_units`` to Angstrom."""
        return value * model.lattice2.lattice_constant if self.r_units == "a" else value

    def radius(self, model: TBModel) -> float:
        if self.r is None:
            raise ConfigError(f"Command {self.command!r} requires --r")
        return self.length(self.r, model)

    def energies(self) -> np.ndarray | None:
        """Explicit energy grid, or None for the default grid of the window."""
        if self.energy_grid is None:
            return None
        lo, hi, count = self.energy_grid
        return np.linspace(lo, hi, int(count))

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["model"] = self.model.to_dict()
        data["energy_grid"] = list(self.energy_grid) if self.energy_grid is not None else None
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown run settings: {sorted(unknown)}")
        values = dict(data)
        if "model" in values:
            model = values["model"]
            values["model"] = model if isinstance(model, ModelSource) else ModelSource.from_dict(model)
        if values.get("energy_grid") is not None:
            lo, hi, count = values["energy_grid"]
            values["energy_grid"] = (float(lo), float(hi), int(count))
        if values.get("options") is not None:
            values["options"] = dict(values["options"])
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError, ValueError) as e:
            if isinstance(e, BilayerKpmError):
                raise
            raise ConfigError(f"Malformed run configuration: {e}") from e

    @classmethod
    def from_sources(cls, file_values: Mapping[str, Any] | None = None, cli_values: Mapping[str, Any] | None = None) -> RunConfig:
        """Merge defaults < config file < command line; ``None`` on the command line means unset."""
        merged = cls().to_dict()
        for source in (file_values or {}, {k: v for k, v in (cli_values or {}).items() if v is not None}):
            for key, value in source.items():
                if key == "model":
                    merged["model"] = _merge_model(merged["model"], value)
                elif key == "options":
                    merged["options"] = {**merged["options"], **value}
                else:
                    merged[key] = value
        return cls.from_dict(merged).validate()


def _merge_model(base: Mapping[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    if update.get("builtin") is not None:
        merged["builtin"] = update["builtin"]
        merged["path"] = update.get("path")
    elif update.get("path") is not None:
        merged["builtin"] = None
        merged["path"] = update["path"]
    merged["overrides"] = {**merged.get("overrides", {}), **(update.get("overrides") or {})}
    return merged


def load_toml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}") from e


def load_config_file(path: str | Path) -> dict[str, Any]:
    """
    Read run settings and the model source from a TOML file.

    Returns a mapping suitable for ``RunConfig.from_sources(file_values=...)``.
    """
    data = load_toml(path)
    values = dict(data.get("run", {}))
    if "lattice1" in data:
        values["model"] = {"builtin": None, "path": str(path), "overrides": {}}
    elif "model" in data:
        table = dict(data["model"])
        builtin = table.pop("builtin", None)
        if builtin is None:
            raise ConfigError(f"{path}: [model] needs builtin = ... or a custom [lattice1]/[lattice2]/[orbitals]/[hopping] description")
        values["model"] = {"builtin": builtin, "overrides": table}
    if "energy_grid" in values:
        values["energy_grid"] = tuple(values["energy_grid"])
    logger.debug(f"Loaded config {path}: {values}")
    return values


def _vectors(data: Mapping[str, Any], key: str) -> LatticeBasis:
    try:
        a1, a2 = data[key]["vectors"]
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"[{key}] must define vectors = [[x1, y1], [x2, y2]]") from None
    return LatticeBasis.from_vectors(a1, a2)


def _orbitals(data: Mapping[str, Any], sheet: int) -> OrbitalSet:
    entries = data.get("orbitals", {}).get(f"sheet{sheet}", [])
    orbitals = []
    for entry in entries:
        if "id" not in entry:
            raise ConfigError(f"Every orbital of sheet {sheet} needs an id")
        tau = tuple(float(t) for t in entry.get("tau", (0.0, 0.0)))
        orbitals.append(Orbital(str(entry["id"]), tau, float(entry.get("onsite", 0.0))))
    return OrbitalSet(sheet, tuple(orbitals))


def model_from_table(data: Mapping[str, Any], label: str = "custom") -> TBModel:
    """Build a custom model from parsed TOML tables."""
    lattice1 = _vectors(data, "lattice1")
    lattice2 = _vectors(data, "lattice2")
    orbitals1 = _orbitals(data, 1)
    orbitals2 = _orbitals(data, 2)
    hopping = dict(data.get("hopping", {}))
    if "nn_distance" not in hopping:
        raise ConfigError("[hopping] needs nn_distance")
    all_orbitals = (*orbitals1, *orbitals2)
    function = bilayer_hopping(
        sheet_of={**{o.orbital_id: 1 for o in orbitals1}, **{o.orbital_id: 2 for o in orbitals2}},
        onsite={o.orbital_id: o.onsite_energy for o in all_orbitals},
        t_intra=float(hopping.get("t_intra", GRAPHENE_T_INTRA)),
        nn_distance=float(hopping["nn_distance"]),
        t_perp=float(hopping.get("t_perp", TBG_T_PERP)),
        interlayer_distance=float(hopping.get("interlayer_distance", TBG_INTERLAYER_DISTANCE)),
        decay_length=float(hopping.get("decay_length", TBG_DECAY_LENGTH)),
        cutoff=float(hopping.get("cutoff", TBG_CUTOFF)),
    )
    label = data.get("model", {}).get("label", label)
    return TBModel(lattice1, lattice2, orbitals1, orbitals2, function, label=label, params=hopping)


def build_model(source: ModelSource) -> TBModel:
    if source.builtin is not None:
        return builtin_model(source.builtin, source.overrides)
    if source.path is None:
        raise ConfigError("No model given: use --model NAME or --config FILE")
    if source.overrides:
        raise ConfigError(f"Parameter overrides {sorted(source.overrides)} only apply to built-in models")
    return model_from_table(load_toml(source.path))
