"""
Tight-binding models for incommensurate bilayers.

A model is two lattices, an orbital set per sheet and one hopping function
h(alpha, alpha', x) covering intra- and interlayer terms. Energies are in eV,
lengths in Angstrom.

The built-in twisted bilayer graphene model is a two-parameter-family
substitute: first-neighbor intralayer hopping plus an isotropic exponential
interlayer hopping t(d) = t_perp exp(-(d - d0) / delta0), where d includes the
constant vertical separation d0.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import ConfigError, InvalidParameterError, ModelValidationError
from .geometry import LatticeBasis, lattice_points_in_ball, shift_grid

logger = logging.getLogger(__name__)

GRAPHENE_LATTICE_CONSTANT = 2.46
GRAPHENE_T_INTRA = -2.7
TBG_T_PERP = 0.48
TBG_INTERLAYER_DISTANCE = 3.35
TBG_DECAY_LENGTH = 0.32
TBG_CUTOFF = 8.0

SPECTRAL_SAFETY = 1.05
SPECTRAL_SHIFT_SAMPLES = 8

# neighbor shells are matched to within this distance
_SHELL_TOLERANCE = 1e-3

Evaluator = Callable[[str, str, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Orbital:
    orbital_id: str
    tau: tuple[float, float] = (0.0, 0.0)
    onsite_energy: float = 0.0


@dataclass(frozen=True)
class OrbitalSet:
    """Orbitals attached to each unit cell of one sheet."""

    sheet: int
    orbitals: tuple[Orbital, ...] = ()

    def __post_init__(self):
        if self.sheet not in (1, 2):
            raise InvalidParameterError(f"sheet must be 1 or 2, got {self.sheet}")
        ids = [o.orbital_id for o in self.orbitals]
        if len(set(ids)) != len(ids):
            raise ModelValidationError(f"Duplicate orbital ids on sheet {self.sheet}: {ids}")
        object.__setattr__(self, "orbitals", tuple(self.orbitals))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(o.orbital_id for o in self.orbitals)

    def __len__(self) -> int:
        return len(self.orbitals)

    def __iter__(self):
        return iter(self.orbitals)


@dataclass(frozen=True)
class HoppingFunction:
    """
    Hopping h(alpha, alpha', x) with exponential-decay metadata.

    ``evaluator`` is vectorized over displacements: it receives one orbital
    pair and an ``(k, 2)`` array and returns ``k`` values. Calling the
    instance enforces the hard cutoff.
    """

    evaluator: Evaluator
    decay_rate: float
    decay_amplitude: float
    cutoff_radius: float

    def __post_init__(self):
        for name in ("decay_rate", "decay_amplitude", "cutoff_radius"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ModelValidationError(f"{name} must be positive and finite, got {value}")

    def __call__(self, alpha: str, alpha_prime: str, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x.reshape(-1, 2)
        values = np.asarray(self.evaluator(alpha, alpha_prime, x))
        if values.shape != (len(x),):
            values = np.broadcast_to(values, (len(x),)).copy()
        values = np.where(np.einsum("ij,ij->i", x, x) > self.cutoff_radius**2, 0.0, values)
        return values[0] if single else values

    def envelope(self, x) -> np.ndarray:
        """C exp(-gamma |x|)."""
        distance = np.linalg.norm(np.asarray(x, dtype=float).reshape(-1, 2), axis=1)
        return self.decay_amplitude * np.exp(-self.decay_rate * distance)


@dataclass(frozen=True, eq=False)
class TBModel:
    lattice1: LatticeBasis
    lattice2: LatticeBasis
    orbitals1: OrbitalSet
    orbitals2: OrbitalSet
    hopping: HoppingFunction
    label: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.orbitals1.sheet != 1 or self.orbitals2.sheet != 2:
            raise ModelValidationError("orbitals1/orbitals2 must belong to sheets 1 and 2")
        shared = set(self.orbitals1.ids) & set(self.orbitals2.ids)
        if shared:
            raise ModelValidationError(f"Orbital ids must be disjoint across sheets, shared: {sorted(shared)}")
        if not len(self.orbitals1) and not len(self.orbitals2):
            raise ModelValidationError("Model has no orbitals")
        for orbitals in (self.orbitals1, self.orbitals2):
            basis = self.lattice(orbitals.sheet)
            for orbital in orbitals:
                frac = basis.to_fractional(orbital.tau)
                if np.any(frac < -1e-12) or np.any(frac >= 1.0):
                    raise ModelValidationError(f"Orbital {orbital.orbital_id} offset {orbital.tau} lies outside the unit cell")

    def lattice(self, sheet: int) -> LatticeBasis:
        return self.lattice1 if sheet == 1 else self.lattice2

    def orbitals(self, sheet: int) -> OrbitalSet:
        return self.orbitals1 if sheet == 1 else self.orbitals2

    @staticmethod
    def opposite(sheet: int) -> int:
        return 2 if sheet == 1 else 1

    def orbital(self, orbital_id: str) -> tuple[int, Orbital]:
        for orbitals in (self.orbitals1, self.orbitals2):
            for orbital in orbitals:
                if orbital.orbital_id == orbital_id:
                    return orbitals.sheet, orbital
        raise KeyError(orbital_id)

    @property
    def nu(self) -> float:
        """1 / (|A_2| |Gamma_1| + |A_1| |Gamma_2|)."""
        return 1.0 / (len(self.orbitals2) * self.lattice1.cell_area + len(self.orbitals1) * self.lattice2.cell_area)


@dataclass(frozen=True)
class SpectralWindow:
    """Energy bound E >= ||H_{r,j}(b)||_2 and the Chebyshev scaling eta = 1/E."""

    e_bound: float

    def __post_init__(self):
        if not (np.isfinite(self.e_bound) and self.e_bound > 0):
            raise ModelValidationError(f"Spectral bound must be positive and finite, got {self.e_bound}")

    @property
    def eta(self) -> float:
        return 1.0 / self.e_bound


@dataclass(frozen=True)
class DecayReport:
    max_ratio: float
    samples: int
    worst_pair: tuple[str, str] | None
    worst_x: tuple[float, float] | None

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0


def bilayer_hopping(
    sheet_of: Mapping[str, int],
    onsite: Mapping[str, float],
    t_intra: float,
    nn_distance: float,
    t_perp: float,
    interlayer_distance: float,
    decay_length: float,
    cutoff: float,
) -> HoppingFunction:
    """First-neighbor intralayer plus exponential interlayer hopping."""
    if decay_length <= 0 or cutoff <= 0 or nn_distance <= 0:
        raise InvalidParameterError("decay_length, cutoff and nn_distance must be positive")

    def evaluate(alpha: str, alpha_prime: str, x: np.ndarray) -> np.ndarray:
        distance = np.sqrt(np.einsum("ij,ij->i", x, x))
        if sheet_of[alpha] == sheet_of[alpha_prime]:
            values = np.where(np.abs(distance - nn_distance) < _SHELL_TOLERANCE, t_intra, 0.0)
            if alpha == alpha_prime:
                values = np.where(distance == 0.0, onsite.get(alpha, 0.0), values)
            return values
        if t_perp == 0.0:
            return np.zeros(len(x))
        d = np.sqrt(distance**2 + interlayer_distance**2)
        return t_perp * np.exp(-(d - interlayer_distance) / decay_length)

    # |t(d)| <= |t_perp| e^{d0/delta0} e^{-|x|/delta0} because d >= |x|
    decay_rate = 1.0 / decay_length
    amplitude = max(
        abs(t_intra) * np.exp(decay_rate * (nn_distance + _SHELL_TOLERANCE)),
        abs(t_perp) * np.exp(interlayer_distance / decay_length),
        max((abs(v) for v in onsite.values()), default=0.0),
    )
    if amplitude == 0.0:
        amplitude = 1.0
    return HoppingFunction(evaluate, decay_rate=decay_rate, decay_amplitude=float(amplitude), cutoff_radius=cutoff)


def _graphene_orbitals(sheet: int, basis: LatticeBasis, onsite: float) -> OrbitalSet:
    tau_b = basis.to_cartesian((1.0 / 3.0, 1.0 / 3.0))
    return OrbitalSet(
        sheet,
        (
            Orbital(f"A{sheet}", (0.0, 0.0), onsite),
            Orbital(f"B{sheet}", (float(tau_b[0]), float(tau_b[1])), onsite),
        ),
    )


def _float_param(params: Mapping[str, Any], key: str, default: float) -> float:
    value = params.get(key, default)
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Parameter {key!r} must be a number, got {value!r}") from e
    if not np.isfinite(value):
        raise ConfigError(f"Parameter {key!r} must be finite, got {value!r}")
    return value


def _monolayer_graphene(params: Mapping[str, Any]) -> TBModel:
    a = _float_param(params, "lattice_constant", GRAPHENE_LATTICE_CONSTANT)
    t_intra = _float_param(params, "t_intra", GRAPHENE_T_INTRA)
    onsite = _float_param(params, "onsite", 0.0)
    cutoff = _float_param(params, "cutoff", TBG_CUTOFF)
    basis = LatticeBasis.hexagonal(a)
    orbitals1 = _graphene_orbitals(1, basis, onsite)
    hopping = bilayer_hopping(
        sheet_of={o.orbital_id: 1 for o in orbitals1},
        onsite={o.orbital_id: onsite for o in orbitals1},
        t_intra=t_intra,
        nn_distance=a / np.sqrt(3.0),
        t_perp=0.0,
        interlayer_distance=TBG_INTERLAYER_DISTANCE,
        decay_length=TBG_DECAY_LENGTH,
        cutoff=cutoff,
    )
    return TBModel(basis, basis, orbitals1, OrbitalSet(2), hopping, label="monolayer_graphene", params=dict(params))


def _twisted_bilayer_graphene(params: Mapping[str, Any]) -> TBModel:
    if "twist_degrees" not in params:
        raise ConfigError("Model 'tbg' requires the twist_degrees parameter")
    twist = _float_param(params, "twist_degrees", 0.0)
    a = _float_param(params, "lattice_constant", GRAPHENE_LATTICE_CONSTANT)
    t_intra = _float_param(params, "t_intra", GRAPHENE_T_INTRA)
    t_perp = _float_param(params, "t_perp", TBG_T_PERP) * _float_param(params, "interlayer_scale", 1.0)
    interlayer_distance = _float_param(params, "interlayer_distance", TBG_INTERLAYER_DISTANCE)
    decay_length = _float_param(params, "decay_length", TBG_DECAY_LENGTH)
    cutoff = _float_param(params, "cutoff", TBG_CUTOFF)
    onsite = _float_param(params, "onsite", 0.0)
    if decay_length <= 0 or cutoff <= 0 or a <= 0:
        raise ConfigError("lattice_constant, decay_length and cutoff must be positive")

    lattice2 = LatticeBasis.hexagonal(a)
    lattice1 = lattice2.rotated(twist)
    orbitals1 = _graphene_orbitals(1, lattice1, onsite)
    orbitals2 = _graphene_orbitals(2, lattice2, onsite)
    all_orbitals = (*orbitals1, *orbitals2)
    hopping = bilayer_hopping(
        sheet_of={**{o.orbital_id: 1 for o in orbitals1}, **{o.orbital_id: 2 for o in orbitals2}},
        onsite={o.orbital_id: o.onsite_energy for o in all_orbitals},
        t_intra=t_intra,
        nn_distance=a / np.sqrt(3.0),
        t_perp=t_perp,
        interlayer_distance=interlayer_distance,
        decay_length=decay_length,
        cutoff=cutoff,
    )
    logger.debug(f"Built tbg model: twist={twist} deg, t_intra={t_intra} eV, t_perp={t_perp} eV, cutoff={cutoff} A")
    return TBModel(lattice1, lattice2, orbitals1, orbitals2, hopping, label=f"tbg_{twist:g}deg", params=dict(params))


BUILTIN_MODELS: dict[str, Callable[[Mapping[str, Any]], TBModel]] = {
    "monolayer_graphene": _monolayer_graphene,
    "tbg": _twisted_bilayer_graphene,
}


def builtin_model(name: str, params: Mapping[str, Any] | None = None) -> TBModel:
    """Construct a built-in model by name with parameter overrides."""
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ConfigError(f"Unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    return factory(dict(params or {}))


def _neighbor_displacements(model: TBModel, sheet: int, b: np.ndarray, alpha, alpha_prime, sheet_prime: int) -> np.ndarray:
    """Displacements x_alpha - x_{R' alpha'} from the center orbital to every site within the cutoff."""
    center = np.asarray(alpha.tau, dtype=float)
    if sheet_prime == model.opposite(sheet):
        # columns on sheet P_j carry the shift
        offset = np.asarray(alpha_prime.tau, dtype=float) + b
    else:
        offset = np.asarray(alpha_prime.tau, dtype=float)
    reach = model.hopping.cutoff_radius + float(np.linalg.norm(center - offset)) + 1e-9
    _, sites = lattice_points_in_ball(model.lattice(sheet_prime), reach)
    return center - (sites + offset)


def row_sums(model: TBModel, sheet: int, b) -> dict[str, tuple[float, float]]:
    """
    Infinite-lattice Gershgorin row sums for the center orbitals of ``sheet`` at shift ``b``.

    Returns ``{orbital_id: (sum |h|, sum of the decay envelope)}``.
    """
    b = np.asarray(b, dtype=float)
    sums = {}
    for alpha in model.orbitals(sheet):
        total = 0.0
        envelope = 0.0
        for sheet_prime in (1, 2):
            for alpha_prime in model.orbitals(sheet_prime):
                x = _neighbor_displacements(model, sheet, b, alpha, alpha_prime, sheet_prime)
                values = np.abs(model.hopping(alpha.orbital_id, alpha_prime.orbital_id, x))
                total += float(np.sum(values))
                inside = np.einsum("ij,ij->i", x, x) <= model.hopping.cutoff_radius**2
                envelope += float(np.sum(model.hopping.envelope(x[inside])))
        sums[alpha.orbital_id] = (total, envelope)
    return sums


def spectral_bound(model: TBModel, safety: float = SPECTRAL_SAFETY, samples: int = SPECTRAL_SHIFT_SAMPLES) -> SpectralWindow:
    """
    Gershgorin bound on ||H_{r,j}(b)||_2 over all r, j and a sample of shifts b.

    Cluster rows only lose neighbors relative to the infinite lattice, so the
    infinite-lattice row sums bound every cluster.
    """
    worst = 0.0
    for sheet in (1, 2):
        if not len(model.orbitals(sheet)):
            continue
        grid = shift_grid(model.lattice(model.opposite(sheet)), samples)
        for point in grid:
            for orbital_id, (total, envelope) in row_sums(model, sheet, point.b).items():
                if not np.isfinite(total):
                    raise ModelValidationError(f"Row sum for orbital {orbital_id} diverges")
                if total > envelope * (1.0 + 1e-9) + 1e-300:
                    raise ModelValidationError(
                        f"Row sum {total:.6g} eV for orbital {orbital_id} exceeds the declared decay envelope {envelope:.6g} eV"
                    )
                worst = max(worst, total)
    if worst == 0.0:
        raise ModelValidationError("Model Hamiltonian is identically zero; no spectral window")
    window = SpectralWindow(safety * worst)
    logger.info(f"Spectral window for {model.label}: E = {window.e_bound:.6g} eV (eta = {window.eta:.6g} 1/eV)")
    return window


def validate_decay(hopping: HoppingFunction, samples: int, orbital_ids: Sequence[str], seed: int = 0) -> DecayReport:
    """Sample |h(x)| / (C exp(-gamma |x|)) over the cutoff disc for every orbital pair."""
    if samples < 1:
        raise InvalidParameterError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    worst_ratio = 0.0
    worst_pair = None
    worst_x = None
    for alpha in orbital_ids:
        for alpha_prime in orbital_ids:
            radius = hopping.cutoff_radius * np.sqrt(rng.random(samples))
            angle = 2.0 * np.pi * rng.random(samples)
            x = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
            ratio = np.abs(hopping(alpha, alpha_prime, x)) / hopping.envelope(x)
            i = int(np.argmax(ratio))
            if ratio[i] > worst_ratio:
                worst_ratio = float(ratio[i])
                worst_pair = (alpha, alpha_prime)
                worst_x = (float(x[i, 0]), float(x[i, 1]))
    report = DecayReport(worst_ratio, samples, worst_pair, worst_x)
    if not report.passed:
        logger.warning(f"Hopping exceeds its decay envelope: ratio {worst_ratio:.3g} at pair {worst_pair}, x={worst_x}")
    return report
