"""
Instance Model for the Two-Stage Capacitated Facility Location Problem
Problem data, open/close individuals, benchmark-class generator and JSON I/O
"""

import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import InstanceFormatError, InstanceValidationError

logger = logging.getLogger(__name__)

GENERATOR_VERSION = 'pcg64-seedseq-1'
CUSTOM_CLASS = 'custom'
SEED_LIMIT = 2 ** 64

# One generator substream per parameter array. Never renumber an entry:
# old benchmark files must regenerate identically.
PARAMETER_STREAMS = {'q': 0, 'b': 1, 'f': 2, 'p': 3, 'g': 4, 'c': 5, 'd': 6}

# b and p are multiples of B and P; c and d are absolute
CLASS_INTERVALS = {
    1: {'b': (2, 5), 'p': (2, 5), 'c': (35, 45), 'd': (55, 65)},
    2: {'b': (5, 10), 'p': (5, 10), 'c': (35, 45), 'd': (55, 65)},
    3: {'b': (15, 25), 'p': (15, 25), 'c': (35, 45), 'd': (800, 1000)},
    4: {'b': (5, 10), 'p': (5, 10), 'c': (50, 100), 'd': (50, 100)},
    5: {'b': (5, 10), 'p': (5, 10), 'c': (35, 45), 'd': (800, 1000)},
}
PLANT_COST_RANGE = (20000, 30000)
DEPOT_COST_RANGE = (8000, 12000)
DEMAND_RANGE = (10, 20)

ARRAY_FIELDS = ('f', 'b', 'g', 'p', 'c', 'd', 'q')
INSTANCE_KEYS = (
    'version', 'class', 'seed', 'n_plants', 'n_depots', 'n_customers',
    'f', 'b', 'g', 'p', 'q', 'c', 'd',
)


def _as_int_array(name: str, value: Any) -> np.ndarray:
    raw = np.asarray(value)
    if raw.dtype.kind == 'f':
        if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
            raise InstanceValidationError(f"'{name}' must hold integers")
    elif raw.size and raw.dtype.kind not in 'iub':
        raise InstanceValidationError(f"'{name}' must hold integers")
    arr = np.array(raw, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    """TSCFLP data; arrays are converted to read-only int64 on construction"""

    f: np.ndarray
    b: np.ndarray
    g: np.ndarray
    p: np.ndarray
    c: np.ndarray
    d: np.ndarray
    q: np.ndarray
    class_id: Union[int, str] = CUSTOM_CLASS
    seed: int = 0
    generator_version: str = GENERATOR_VERSION

    def __post_init__(self):
        for name in ARRAY_FIELDS:
            object.__setattr__(self, name, _as_int_array(name, getattr(self, name)))

        n_plants, n_depots, n_customers = len(self.f), len(self.g), len(self.q)
        expected = {
            'f': (n_plants,), 'b': (n_plants,),
            'g': (n_depots,), 'p': (n_depots,),
            'c': (n_plants, n_depots), 'd': (n_depots, n_customers),
            'q': (n_customers,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            # an empty matrix built from [] comes out 1-d
            if arr.size == 0 and 0 in shape and arr.shape != shape:
                arr = _as_int_array(name, np.zeros(shape))
                object.__setattr__(self, name, arr)
            if arr.shape != shape:
                raise InstanceValidationError(
                    f"'{name}' has shape {arr.shape}, expected {shape}"
                )

    @property
    def n_plants(self) -> int:
        return len(self.f)

    @property
    def n_depots(self) -> int:
        return len(self.g)

    @property
    def n_customers(self) -> int:
        return len(self.q)

    @property
    def n_facilities(self) -> int:
        return self.n_plants + self.n_depots

    @property
    def total_demand(self) -> int:
        return int(self.q.sum())

    @property
    def meta(self) -> Dict[str, Any]:
        return {
            'class_id': self.class_id,
            'seed': self.seed,
            'generator_version': self.generator_version,
        }

    def validate(self) -> 'Instance':
        """
        Check the model invariants

        Returns:
            The instance itself, for chaining

        Raises:
            InstanceValidationError: on non-positive data, empty sets or
                capacity totals below total demand
        """
        if min(self.n_plants, self.n_depots, self.n_customers) < 1:
            raise InstanceValidationError(
                f"Instance needs at least one plant, depot and customer, got "
                f"{self.n_plants}x{self.n_depots}x{self.n_customers}"
            )
        for name in ARRAY_FIELDS:
            values = getattr(self, name)
            if np.any(values <= 0):
                raise InstanceValidationError(f"'{name}' must be strictly positive")

        demand = self.total_demand
        if int(self.b.sum()) < demand:
            raise InstanceValidationError(
                f"Infeasible instance: total plant capacity {int(self.b.sum())} < total demand {demand}"
            )
        if int(self.p.sum()) < demand:
            raise InstanceValidationError(
                f"Infeasible instance: total depot capacity {int(self.p.sum())} < total demand {demand}"
            )
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return self.meta == other.meta and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ARRAY_FIELDS
        )

    def __hash__(self) -> int:
        return hash((self.class_id, self.seed, self.q.tobytes(), self.c.tobytes()))


@dataclass(eq=False)
class Individual:
    """Open/close chromosome: y over plants, z over depots"""

    y: np.ndarray
    z: np.ndarray
    feasible: Optional[bool] = None

    def __post_init__(self):
        self.y = np.array(self.y, dtype=np.int8).reshape(-1)
        self.z = np.array(self.z, dtype=np.int8).reshape(-1)
        if np.any((self.y != 0) & (self.y != 1)) or np.any((self.z != 0) & (self.z != 1)):
            raise ValueError("Individual genes must be 0 or 1")

    @classmethod
    def from_genes(cls, genes: Sequence[int], n_plants: int) -> 'Individual':
        genes = np.asarray(genes, dtype=np.int8)
        return cls(genes[:n_plants], genes[n_plants:])

    @classmethod
    def from_bitstring(cls, bits: str, n_plants: int) -> 'Individual':
        cleaned = bits.replace('|', '').replace(' ', '')
        if any(ch not in '01' for ch in cleaned):
            raise ValueError(f"Mask must contain only 0/1, got '{bits}'")
        return cls.from_genes([int(ch) for ch in cleaned], n_plants)

    @property
    def genes(self) -> np.ndarray:
        return np.concatenate((self.y, self.z))

    @property
    def n_plants(self) -> int:
        return len(self.y)

    def key(self) -> bytes:
        return self.genes.tobytes()

    def bitstring(self) -> str:
        return ''.join(map(str, self.y)) + '|' + ''.join(map(str, self.z))

    def copy(self) -> 'Individual':
        return Individual(self.y.copy(), self.z.copy(), self.feasible)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Individual):
            return NotImplemented
        return np.array_equal(self.y, other.y) and np.array_equal(self.z, other.z)

    def __hash__(self) -> int:
        return hash((len(self.y), self.key()))

    def __repr__(self) -> str:
        return f"Individual({self.bitstring()})"


def open_capacity(inst: Instance, ind: Individual) -> Tuple[int, int]:
    """Total capacity of open plants and of open depots"""
    return int(inst.b @ ind.y), int(inst.p @ ind.z)


def is_feasible(inst: Instance, ind: Individual) -> bool:
    plant_cap, depot_cap = open_capacity(inst, ind)
    demand = inst.total_demand
    return plant_cap >= demand and depot_cap >= demand


def feasible_flag_consistent(inst: Instance, ind: Individual) -> bool:
    """A stored feasible flag, when set, must agree with the capacity test"""
    return ind.feasible is None or ind.feasible == is_feasible(inst, ind)


def random_individual(inst: Instance, rng: np.random.Generator) -> Individual:
    genes = rng.integers(0, 2, size=inst.n_facilities, dtype=np.int8)
    return Individual.from_genes(genes, inst.n_plants)


# ================================
# Generator
# ================================

def round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def _substream(seed: int, name: str) -> np.random.Generator:
    sequence = np.random.SeedSequence(seed, spawn_key=(PARAMETER_STREAMS[name],))
    return np.random.Generator(np.random.PCG64(sequence))


def _draw(seed: int, name: str, low: int, high: int, size) -> np.ndarray:
    return _substream(seed, name).integers(low, high, size=size, endpoint=True, dtype=np.int64)


def class_bounds(class_id: int, total_demand: int, n_plants: int, n_depots: int) -> Dict[str, Tuple[int, int]]:
    """
    Integer interval of every parameter for one class

    Args:
        class_id: Benchmark class 1..5
        total_demand: Sum of the already drawn demands
        n_plants: |I|
        n_depots: |J|

    Returns:
        Mapping parameter name -> inclusive (low, high)
    """
    ranges = CLASS_INTERVALS[class_id]
    plant_unit = Fraction(total_demand, n_plants)
    depot_unit = Fraction(total_demand, n_depots)
    return {
        'q': DEMAND_RANGE,
        'f': PLANT_COST_RANGE,
        'g': DEPOT_COST_RANGE,
        'b': (round_half_up(ranges['b'][0] * plant_unit), round_half_up(ranges['b'][1] * plant_unit)),
        'p': (round_half_up(ranges['p'][0] * depot_unit), round_half_up(ranges['p'][1] * depot_unit)),
        'c': ranges['c'],
        'd': ranges['d'],
    }


def generate_instance(class_id: int, n_plants: int, seed: int) -> Instance:
    """
    Draw a benchmark instance with |J| = 2|I| and |K| = 4|I|

    Demands are drawn first because the capacity intervals scale with
    B = sum(q)/|I| and P = sum(q)/|J|.

    Args:
        class_id: Benchmark class 1..5
        n_plants: Number of plants |I|
        seed: Integer in [0, 2**64)

    Returns:
        Validated, immutable instance
    """
    if class_id not in CLASS_INTERVALS:
        raise InstanceValidationError(f"Unknown instance class {class_id!r}; expected 1..5")
    if not isinstance(n_plants, (int, np.integer)) or n_plants < 1:
        raise InstanceValidationError(f"n_plants must be a positive integer, got {n_plants!r}")
    if not isinstance(seed, (int, np.integer)) or not 0 <= seed < SEED_LIMIT:
        raise InstanceValidationError(f"seed must be an integer in [0, 2**64), got {seed!r}")

    n_plants = int(n_plants)
    seed = int(seed)
    n_depots = 2 * n_plants
    n_customers = 4 * n_plants

    q = _draw(seed, 'q', DEMAND_RANGE[0], DEMAND_RANGE[1], n_customers)
    bounds = class_bounds(class_id, int(q.sum()), n_plants, n_depots)
    sizes = {
        'b': n_plants, 'f': n_plants,
        'p': n_depots, 'g': n_depots,
        'c': (n_plants, n_depots), 'd': (n_depots, n_customers),
    }
    drawn = {name: _draw(seed, name, *bounds[name], size) for name, size in sizes.items()}

    inst = Instance(q=q, class_id=class_id, seed=seed, **drawn)
    # guaranteed by the 2B / 2P lower bounds
    assert inst.b.sum() >= inst.total_demand and inst.p.sum() >= inst.total_demand
    logger.debug(
        f"Generated class {class_id} instance {n_plants}x{n_depots}x{n_customers} (seed {seed})"
    )
    return inst.validate()


def make_instance(f, b, g, p, c, d, q, class_id: Union[int, str] = CUSTOM_CLASS,
                  seed: int = 0, validate: bool = True) -> Instance:
    """Build an instance from plain sequences; validation can be skipped for degenerate data"""
    inst = Instance(f=f, b=b, g=g, p=p, c=c, d=d, q=q, class_id=class_id, seed=seed)
    return inst.validate() if validate else inst


def instance_summary(inst: Instance) -> Dict[str, Any]:
    demand = inst.total_demand
    plant_cap = int(inst.b.sum())
    depot_cap = int(inst.p.sum())
    return {
        'class': inst.class_id,
        'seed': inst.seed,
        'size': f"{inst.n_plants}x{inst.n_depots}x{inst.n_customers}",
        'total_demand': demand,
        'plant_capacity': plant_cap,
        'depot_capacity': depot_cap,
        'plant_ratio': round(plant_cap / demand, 3) if demand else None,
        'depot_ratio': round(depot_cap / demand, 3) if demand else None,
        'feasible': plant_cap >= demand and depot_cap >= demand,
    }


# ================================
# JSON file format
# ================================

def instance_to_dict(inst: Instance) -> Dict[str, Any]:
    return {
        'version': inst.generator_version,
        'class': inst.class_id,
        'seed': inst.seed,
        'n_plants': inst.n_plants,
        'n_depots': inst.n_depots,
        'n_customers': inst.n_customers,
        'f': inst.f.tolist(),
        'b': inst.b.tolist(),
        'g': inst.g.tolist(),
        'p': inst.p.tolist(),
        'q': inst.q.tolist(),
        'c': inst.c.tolist(),
        'd': inst.d.tolist(),
    }


def _require(payload: Dict[str, Any], key: str) -> Any:
    if key not in payload:
        raise InstanceFormatError(key, "missing")
    return payload[key]


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _int_field(payload: Dict[str, Any], key: str) -> int:
    value = _require(payload, key)
    if not _is_int(value):
        raise InstanceFormatError(key, f"expected an integer, got {type(value).__name__}")
    return value


def _int_vector(payload: Dict[str, Any], key: str, length: int) -> List[int]:
    value = _require(payload, key)
    if not isinstance(value, list) or not all(_is_int(v) for v in value):
        raise InstanceFormatError(key, "expected an array of integers")
    if len(value) != length:
        raise InstanceFormatError(key, f"expected {length} entries, got {len(value)}")
    return value


def _int_matrix(payload: Dict[str, Any], key: str, rows: int, cols: int) -> List[List[int]]:
    value = _require(payload, key)
    if not isinstance(value, list) or len(value) != rows:
        raise InstanceFormatError(key, f"expected {rows} rows")
    for row in value:
        if not isinstance(row, list) or len(row) != cols or not all(_is_int(v) for v in row):
            raise InstanceFormatError(key, f"expected rows of {cols} integers")
    return value


def instance_from_dict(payload: Dict[str, Any]) -> Instance:
    if not isinstance(payload, dict):
        raise InstanceFormatError('<document>', "expected a JSON object")

    version = _require(payload, 'version')
    if not isinstance(version, str):
        raise InstanceFormatError('version', "expected a string")
    class_id = _require(payload, 'class')
    if not (class_id == CUSTOM_CLASS or (_is_int(class_id) and class_id in CLASS_INTERVALS)):
        raise InstanceFormatError('class', f"expected 1..5 or '{CUSTOM_CLASS}', got {class_id!r}")
    seed = _int_field(payload, 'seed')
    if not 0 <= seed < SEED_LIMIT:
        raise InstanceFormatError('seed', "expected a value in [0, 2**64)")

    n_plants = _int_field(payload, 'n_plants')
    n_depots = _int_field(payload, 'n_depots')
    n_customers = _int_field(payload, 'n_customers')
    for key, count in (('n_plants', n_plants), ('n_depots', n_depots), ('n_customers', n_customers)):
        if count < 1:
            raise InstanceFormatError(key, "must be at least 1")

    inst = Instance(
        f=_int_vector(payload, 'f', n_plants),
        b=_int_vector(payload, 'b', n_plants),
        g=_int_vector(payload, 'g', n_depots),
        p=_int_vector(payload, 'p', n_depots),
        q=_int_vector(payload, 'q', n_customers),
        c=_int_matrix(payload, 'c', n_plants, n_depots),
        d=_int_matrix(payload, 'd', n_depots, n_customers),
        class_id=class_id,
        seed=seed,
        generator_version=version,
    )
    return inst.validate()


def _reject_constant(name: str):
    raise InstanceFormatError('<document>', f"non-finite number {name} is not allowed")


def save_instance(inst: Instance, path: Union[str, Path]) -> None:
    """Write the instance as compact UTF-8 JSON; identical instances give identical bytes"""
    text = json.dumps(instance_to_dict(inst), allow_nan=False, separators=(',', ':'))
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(text + '\n')
    logger.debug(f"Instance saved to {path}")


def load_instance(path: Union[str, Path]) -> Instance:
    """
    Read and validate an instance file

    Raises:
        InstanceFormatError: malformed JSON or a missing/ill-typed key
        InstanceValidationError: data violates the model invariants
    """
    with open(path, 'r', encoding='utf-8') as handle:
        text = handle.read()
    try:
        payload = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise InstanceFormatError('<document>', f"invalid JSON ({e})") from e
    inst = instance_from_dict(payload)
    logger.debug(f"Instance loaded from {path}: {inst.n_plants}x{inst.n_depots}x{inst.n_customers}")
    return inst
