"""Seeded item-stream generation, attacked mixtures and JSONL serialization.

Randomness comes from numpy's PCG64. Instance ``i`` of a dataset with master
seed ``m`` draws from ``SeedSequence(m, spawn_key=(i,))``, so instances are
independent of each other and of how many are generated.
"""

import json
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Container, Item

FORMAT = "robustpack-instances"
FORMAT_VERSION = 1
RNG_NAME = "numpy.PCG64/SeedSequence"
DIGITS = 9

DEFAULT_CONTAINERS = {"discrete": (10, 10, 10), "continuous": (1.0, 1.0, 1.0)}
DEFAULT_SIZES = {"discrete": (1, 5), "continuous": (0.1, 0.5)}
DEFAULT_HEIGHTS = (0.1, 0.2, 0.3, 0.4, 0.5)


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    """What to generate.

    Discrete: every extent is an integer in ``sizes`` (inclusive). Continuous:
    width and depth are uniform on ``sizes`` and height is drawn from
    ``heights``.
    """

    mode: str = "discrete"
    container: Optional[Tuple[float, float, float]] = None
    n_items: int = 150
    n_instances: int = 200
    seed: int = 0
    sizes: Optional[Tuple[float, float]] = None
    heights: Tuple[float, ...] = DEFAULT_HEIGHTS

    def __post_init__(self):
        if self.mode not in DEFAULT_CONTAINERS:
            raise InvalidSpec(f"unknown mode {self.mode!r}")
        if self.container is None:
            object.__setattr__(self, "container", DEFAULT_CONTAINERS[self.mode])
        if self.sizes is None:
            object.__setattr__(self, "sizes", DEFAULT_SIZES[self.mode])
        object.__setattr__(self, "container", tuple(self.container))
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "heights", tuple(self.heights))
        if self.n_items < 1 or self.n_instances < 0:
            raise InvalidSpec("need at least one item per instance and a non-negative instance count")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in an unsigned 64-bit integer")
        lo, hi = self.sizes
        if not 0 < lo <= hi:
            raise InvalidSpec(f"bad size range {self.sizes}")
        try:
            Container(*self.container, mode=self.mode)
        except ValueError as exc:
            raise InvalidSpec(str(exc)) from None
        if self.mode == "discrete":
            if lo != int(lo) or hi != int(hi):
                raise InvalidSpec("discrete sizes must be integers")
            if hi > min(self.container) // 2:
                raise InvalidSpec("item extents may not exceed half the container")
        else:
            if not self.heights or min(self.heights) <= 0:
                raise InvalidSpec("heights must be positive")
            if max(hi, max(self.heights)) > min(self.container) / 2 + 1e-12:
                raise InvalidSpec("item extents may not exceed half the container")

    def make_container(self) -> Container:
        return Container(*self.container, mode=self.mode)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "container": _num_list(self.container, self.mode),
            "n_items": self.n_items,
            "n_instances": self.n_instances,
            "seed": self.seed,
            "sizes": _num_list(self.sizes, self.mode),
            "heights": _num_list(self.heights, "continuous"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSpec":
        return cls(
            mode=d["mode"],
            container=tuple(_parse_num(v) for v in d["container"]),
            n_items=int(d["n_items"]),
            n_instances=int(d["n_instances"]),
            seed=int(d["seed"]),
            sizes=tuple(_parse_num(v) for v in d["sizes"]),
            heights=tuple(_parse_num(v) for v in d["heights"]),
        )


@dataclass(frozen=True)
class Instance:
    seed: int
    mode: str
    container: Tuple[float, float, float]
    items: Tuple[Item, ...]
    attacked: bool = False
    attack_trace: Optional[dict] = None

    def make_container(self) -> Container:
        return Container(*self.container, mode=self.mode)


@dataclass
class Dataset:
    spec: InstanceSpec
    instances: List[Instance] = field(default_factory=list)
    beta: float = 0.0

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i) -> Instance:
        return self.instances[i]


def instance_seed(master: int, index: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def draw_items(spec: InstanceSpec, seed: int) -> Tuple[Item, ...]:
    rng = np.random.Generator(np.random.PCG64(seed))
    n = spec.n_items
    lo, hi = spec.sizes
    if spec.mode == "discrete":
        dims = rng.integers(int(lo), int(hi) + 1, size=(n, 3))
        return tuple(Item(int(w), int(d), int(h), id=i) for i, (w, d, h) in enumerate(dims.tolist()))
    wd = np.round(rng.uniform(lo, hi, size=(n, 2)), DIGITS)
    h = np.asarray(spec.heights)[rng.integers(0, len(spec.heights), size=n)]
    return tuple(Item(float(a), float(b), float(c), id=i) for i, ((a, b), c) in enumerate(zip(wd.tolist(), h.tolist())))


def generate(spec: InstanceSpec) -> Dataset:
    out = []
    for i in range(spec.n_instances):
        seed = instance_seed(spec.seed, i)
        out.append(Instance(seed, spec.mode, spec.container, draw_items(spec, seed)))
    return Dataset(spec, out, 0.0)


def select_attacked(n: int, beta: float, seed: int) -> List[int]:
    """Seeded choice of round(beta% of n) instance indices, sorted."""
    if not 0.0 <= beta <= 100.0:
        raise ValueError("beta must lie in [0, 100]")
    k = int(round(n * beta / 100.0))
    if k == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**32,))))
    return sorted(int(i) for i in rng.choice(n, size=k, replace=False))


def mixture(dataset: Dataset, beta: float, attacker, victim, nb: int) -> Dataset:
    """Replace a seeded ``beta``% of instances by their attacked orderings."""
    from .attacker import attack_episode

    chosen = set(select_attacked(len(dataset), beta, dataset.spec.seed))
    out = []
    for i, inst in enumerate(dataset.instances):
        if i not in chosen:
            out.append(inst)
            continue
        res = attack_episode(attacker, inst.items, victim, nb)
        trace = {"attacker": attacker.label, "nb": int(nb), "policy": victim.policy.kind, "actions": list(res.actions)}
        items = tuple(Item(*it.dims, id=k) for k, it in enumerate(res.order))
        out.append(replace(inst, items=items, attacked=True, attack_trace=trace))
    return Dataset(dataset.spec, out, float(beta))


# serialization --------------------------------------------------------------


def _fmt(v, mode):
    if mode == "discrete":
        return int(v)
    return f"{float(v):.{DIGITS}f}"


def _num_list(vals, mode):
    return [_fmt(v, mode) for v in vals]


def _parse_num(v):
    if isinstance(v, str):
        return float(v)
    return v


def _instance_json(inst: Instance) -> str:
    obj = {
        "seed": inst.seed,
        "mode": inst.mode,
        "container": _num_list(inst.container, inst.mode),
        "items": [_num_list(it.dims, inst.mode) for it in inst.items],
        "attacked": inst.attacked,
        "attack_trace": inst.attack_trace,
    }
    return json.dumps(obj, separators=(",", ":"))


def dumps(dataset: Dataset) -> str:
    header = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "rng": RNG_NAME,
        "spec": dataset.spec.to_dict(),
        "beta": dataset.beta,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(_instance_json(inst) for inst in dataset.instances)
    return "\n".join(lines) + "\n"


def loads(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidSpec("empty dataset file")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT or header.get("version") != FORMAT_VERSION:
        raise InvalidSpec(f"unsupported dataset header {header.get('format')!r} v{header.get('version')!r}")
    spec = InstanceSpec.from_dict(header["spec"])
    out = []
    for ln in lines[1:]:
        obj = json.loads(ln)
        mode = obj["mode"]
        items = tuple(Item(*(_parse_num(v) for v in dims), id=k) for k, dims in enumerate(obj["items"]))
        out.append(
            Instance(
                int(obj["seed"]),
                mode,
                tuple(_parse_num(v) for v in obj["container"]),
                items,
                bool(obj["attacked"]),
                obj.get("attack_trace"),
            )
        )
    return Dataset(spec, out, float(header.get("beta", 0.0)))


def save(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(dataset))


def load(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def item_multiset(items: Sequence[Item]) -> list:
    return sorted(it.dims for it in items)
