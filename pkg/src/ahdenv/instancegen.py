"""Seeded instance generation, dataset files and design/validation splits.

Randomness comes from numpy's PCG64 driven by a ``SeedSequence`` whose spawn
key is ``(role_code, instance_index)``. Instance ``k`` of a dataset can
therefore be regenerated on its own, and design and validation instances
drawn from the same seed never share a stream.

Problem size ``N`` counts cities for TSP, customers for the routing domains
(the depot is an extra node at index 0) and items for MKP.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .domains import get_domain

SCHEMA = "ahdenv.dataset"
SCHEMA_VERSION = 1

DESIGN = "design"
VALIDATION = "validation"
_ROLE_CODES = {DESIGN: 0, VALIDATION: 1}

CVRP_C_CAPACITY = 40
CVRP_ACO_CAPACITY = 50
MKP_CONSTRAINTS = 5
MKP_TIGHTNESS = 0.5

# (design N, design count, validation sizes, validation count per size)
SPLITS = {
    "tsp_c": (50, 64, (50, 100, 200), 64),
    "cvrp_c": (50, 64, (50, 100, 200), 64),
    "ovrp_c": (50, 64, (50, 100, 200), 64),
    "tsp_aco": (50, 16, (50, 100, 200), 64),
    "cvrp_aco": (50, 10, (50, 100, 200), 64),
    "op_aco": (50, 5, (50, 100, 200), 64),
    "mkp_aco": (100, 5, (100, 200, 300), 5),
}


class InvalidSizeError(ValueError):
    pass


class DatasetSchemaError(ValueError):
    pass


def _freeze(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def euclidean_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class EuclideanInstance:
    id: str
    coordinates: np.ndarray
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coordinates", _freeze(self.coordinates))

    @property
    def n(self) -> int:
        return int(self.coordinates.shape[0])

    @cached_property
    def distances(self) -> np.ndarray:
        d = euclidean_distances(self.coordinates)
        d.setflags(write=False)
        return d

    def __eq__(self, other):
        return _same(self, other)


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    base: EuclideanInstance
    demands: np.ndarray
    capacity: int
    depot_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "demands", _freeze(self.demands, dtype=np.int64))

    id = property(lambda self: self.base.id)
    n = property(lambda self: self.base.n)
    coordinates = property(lambda self: self.base.coordinates)
    distances = property(lambda self: self.base.distances)

    @property
    def customers(self) -> int:
        return self.n - 1

    def __eq__(self, other):
        return _same(self, other)


@dataclass(frozen=True, eq=False)
class OrienteeringInstance:
    base: EuclideanInstance
    prizes: np.ndarray
    max_length: float
    depot_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prizes", _freeze(self.prizes))

    id = property(lambda self: self.base.id)
    n = property(lambda self: self.base.n)
    coordinates = property(lambda self: self.base.coordinates)
    distances = property(lambda self: self.base.distances)

    def __eq__(self, other):
        return _same(self, other)


@dataclass(frozen=True, eq=False)
class KnapsackInstance:
    id: str
    values: np.ndarray
    weights: np.ndarray  # (n, m)
    capacities: np.ndarray
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        for name in ("values", "weights", "capacities"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def m(self) -> int:
        return int(self.weights.shape[1])

    def __eq__(self, other):
        return _same(self, other)


Instance = Union[EuclideanInstance, RoutingInstance, OrienteeringInstance, KnapsackInstance]


def _same(a, b) -> bool:
    if type(a) is not type(b):
        return NotImplemented
    return _encode_instance(a) == _encode_instance(b)


@dataclass(frozen=True, eq=False)
class Dataset:
    domain: str
    role: str
    n: int
    seed: int
    instances: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    @property
    def count(self) -> int:
        return len(self.instances)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def by_id(self, instance_id: str):
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return dumps_dataset(self) == dumps_dataset(other)


def instance_rng(seed: int, index: int, role: str = DESIGN) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_ROLE_CODES[role], int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def _instance_id(domain: str, role: str, n: int, seed: int, k: int) -> str:
    return f"{domain}-{role}-n{n}-s{seed}-{k:03d}"


def _check_role(role: str):
    if role not in _ROLE_CODES:
        raise ValueError(f"role must be 'design' or 'validation', got {role!r}")


# -- per-domain generators ----------------------------------------------------


def generate_tsp(n: int, count: int, seed: int, role: str = DESIGN, domain: str = "tsp_c") -> Dataset:
    if n < 3:
        raise InvalidSizeError(f"TSP needs n >= 3 nodes, got {n}")
    _check_role(role)
    _check_count(count)
    insts = []
    for k in range(count):
        rng = instance_rng(seed, k, role)
        insts.append(EuclideanInstance(_instance_id(domain, role, n, seed, k), rng.random((n, 2)), seed, k))
    return Dataset(domain, role, n, seed, insts)


def _routing_instance(n, seed, k, role, domain, variant) -> RoutingInstance:
    rng = instance_rng(seed, k, role)
    if variant == "aco":
        coords = np.vstack([[0.5, 0.5], rng.random((n, 2))])
        capacity = CVRP_ACO_CAPACITY
    else:
        coords = rng.random((n + 1, 2))
        capacity = CVRP_C_CAPACITY
    demands = np.concatenate([[0], rng.integers(1, 10, size=n)])
    base = EuclideanInstance(_instance_id(domain, role, n, seed, k), coords, seed, k)
    return RoutingInstance(base, demands, capacity)


def generate_cvrp(n: int, count: int, seed: int, variant: str = "constructive", role: str = DESIGN,
                  domain: str | None = None) -> Dataset:
    """Capacitated routing instances with ``n`` customers plus a depot at index 0.

    ``variant='constructive'``: depot drawn uniformly, Q = 40.
    ``variant='aco'``: depot fixed at (0.5, 0.5), Q = 50.
    """
    if n < 2:
        raise InvalidSizeError(f"CVRP needs n >= 2 customers, got {n}")
    if variant not in ("constructive", "aco"):
        raise ValueError(f"unknown CVRP variant {variant!r}")
    _check_role(role)
    _check_count(count)
    domain = domain or ("cvrp_aco" if variant == "aco" else "cvrp_c")
    insts = [_routing_instance(n, seed, k, role, domain, variant) for k in range(count)]
    return Dataset(domain, role, n, seed, insts)


def generate_ovrp(n: int, count: int, seed: int, role: str = DESIGN) -> Dataset:
    # Same distribution as constructive CVRP; only the objective differs downstream.
    return generate_cvrp(n, count, seed, "constructive", role, domain="ovrp_c")


def op_max_length(n: int) -> float:
    if n <= 50:
        return 3.0
    if n <= 100:
        return 4.0
    if n <= 200:
        return 5.0
    if n <= 300:
        return 6.0
    raise InvalidSizeError(f"no route-length budget defined for OP size {n} > 300")


def op_prizes(coords: np.ndarray, depot: int = 0) -> np.ndarray:
    d0 = np.sqrt(((coords - coords[depot]) ** 2).sum(axis=1))
    return (1.0 + np.floor(99.0 * d0 / d0.max())) / 100.0


def generate_op(n: int, count: int, seed: int, role: str = DESIGN) -> Dataset:
    if n < 3:
        raise InvalidSizeError(f"OP needs n >= 3 customers, got {n}")
    _check_role(role)
    _check_count(count)
    max_length = op_max_length(n)
    insts = []
    for k in range(count):
        rng = instance_rng(seed, k, role)
        coords = rng.random((n + 1, 2))
        base = EuclideanInstance(_instance_id("op_aco", role, n, seed, k), coords, seed, k)
        insts.append(OrienteeringInstance(base, op_prizes(coords), max_length))
    return Dataset("op_aco", role, n, seed, insts)


def generate_mkp(n: int, count: int, seed: int, role: str = DESIGN, tightness: float = MKP_TIGHTNESS) -> Dataset:
    """MKP instances with unit capacities.

    Raw weights are uniform on [0, 1); each constraint's capacity is
    ``tightness`` times its raw weight sum, and the weights are divided by
    that capacity. For very small ``n`` the capacity is raised to the largest
    single weight so every item stays individually feasible.
    """
    if n < 1:
        raise InvalidSizeError(f"MKP needs n >= 1 items, got {n}")
    _check_role(role)
    _check_count(count)
    insts = []
    for k in range(count):
        rng = instance_rng(seed, k, role)
        values = rng.random(n)
        raw = rng.random((n, MKP_CONSTRAINTS))
        cap = np.maximum(tightness * raw.sum(axis=0), raw.max(axis=0))
        weights = raw / cap
        insts.append(KnapsackInstance(_instance_id("mkp_aco", role, n, seed, k), values, weights,
                                      np.ones(MKP_CONSTRAINTS), seed, k))
    return Dataset("mkp_aco", role, n, seed, insts)


def _check_count(count: int):
    if count < 1:
        raise InvalidSizeError(f"count must be >= 1, got {count}")


def generate(domain: str, n: int, count: int, seed: int, role: str = DESIGN) -> Dataset:
    get_domain(domain)
    if domain in ("tsp_c", "tsp_aco"):
        return generate_tsp(n, count, seed, role, domain=domain)
    if domain == "cvrp_c":
        return generate_cvrp(n, count, seed, "constructive", role)
    if domain == "cvrp_aco":
        return generate_cvrp(n, count, seed, "aco", role)
    if domain == "ovrp_c":
        return generate_ovrp(n, count, seed, role)
    if domain == "op_aco":
        return generate_op(n, count, seed, role)
    return generate_mkp(n, count, seed, role)


def standard_split(domain: str, seed: int) -> tuple[Dataset, list[Dataset]]:
    """Design set plus validation sets at the standard sizes and counts."""
    n_design, c_design, val_sizes, c_val = SPLITS[domain]
    design = generate(domain, n_design, c_design, seed, DESIGN)
    return design, [generate(domain, n, c_val, seed, VALIDATION) for n in val_sizes]


# -- serialization -------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("non-finite value in dataset")
    return format(float(x), ".17g")


def _dump(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return json.dumps(obj if not isinstance(obj, np.bool_) else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode_instance(inst) -> dict:
    if isinstance(inst, EuclideanInstance):
        return {"kind": "euclidean", "id": inst.id, "seed": inst.seed, "index": inst.index,
                "coordinates": inst.coordinates}
    if isinstance(inst, RoutingInstance):
        rec = _encode_instance(inst.base)
        rec.update(kind="routing", depot_index=inst.depot_index, capacity=int(inst.capacity),
                   demands=inst.demands)
        return rec
    if isinstance(inst, OrienteeringInstance):
        rec = _encode_instance(inst.base)
        rec.update(kind="orienteering", depot_index=inst.depot_index, max_length=float(inst.max_length),
                   prizes=inst.prizes)
        return rec
    if isinstance(inst, KnapsackInstance):
        return {"kind": "knapsack", "id": inst.id, "seed": inst.seed, "index": inst.index,
                "values": inst.values, "weights": inst.weights, "capacities": inst.capacities}
    raise TypeError(f"not an instance: {type(inst).__name__}")


def _decode_instance(rec: dict):
    try:
        kind = rec["kind"]
        if kind == "knapsack":
            return KnapsackInstance(rec["id"], np.asarray(rec["values"], float),
                                    np.asarray(rec["weights"], float).reshape(len(rec["values"]), -1),
                                    np.asarray(rec["capacities"], float), int(rec["seed"]), int(rec["index"]))
        base = EuclideanInstance(rec["id"], np.asarray(rec["coordinates"], float).reshape(-1, 2),
                                 int(rec["seed"]), int(rec["index"]))
        if kind == "euclidean":
            return base
        if kind == "routing":
            return RoutingInstance(base, np.asarray(rec["demands"], np.int64), int(rec["capacity"]),
                                   int(rec["depot_index"]))
        if kind == "orienteering":
            return OrienteeringInstance(base, np.asarray(rec["prizes"], float), float(rec["max_length"]),
                                        int(rec["depot_index"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetSchemaError(f"malformed instance record: {exc}") from exc
    raise DatasetSchemaError(f"unknown instance kind {rec.get('kind')!r}")


def dumps_dataset(ds: Dataset) -> str:
    header = {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "domain": ds.domain, "role": ds.role,
              "n": ds.n, "seed": ds.seed, "count": ds.count}
    lines = [_dump(header)] + [_dump(_encode_instance(inst)) for inst in ds.instances]
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DatasetSchemaError("empty dataset file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise DatasetSchemaError(f"dataset file is not valid line-delimited JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("schema") != SCHEMA:
        raise DatasetSchemaError("missing dataset header")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetSchemaError(
            f"schema version {header.get('schema_version')!r} != supported {SCHEMA_VERSION}")
    try:
        count = int(header["count"])
        ds = Dataset(header["domain"], header["role"], int(header["n"]), int(header["seed"]),
                     [_decode_instance(r) for r in records])
    except KeyError as exc:
        raise DatasetSchemaError(f"header field missing: {exc}") from exc
    if ds.count != count:
        raise DatasetSchemaError(f"header declares {count} instances, file holds {ds.count} (truncated?)")
    return ds


def save_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_dataset(ds), encoding="utf-8")
    return path


def load_dataset(path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


def dataset_filename(ds: Dataset) -> str:
    return f"{ds.role}_{ds.n}_{ds.seed}.jsonl"


def dataset_path(root, ds: Dataset) -> Path:
    return Path(root) / "data" / ds.domain / dataset_filename(ds)


def dataset_checksum(ds: Dataset) -> str:
    return hashlib.sha256(dumps_dataset(ds).encode("utf-8")).hexdigest()


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
