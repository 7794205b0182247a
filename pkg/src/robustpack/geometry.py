"""Axis-aligned cuboid geometry, bin state and placement feasibility."""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .ems import EPS, ems_update

DEFAULT_TAU = 0.6


class GeometryError(ValueError):
    pass


class FootprintOutOfBounds(GeometryError):
    pass


class InfeasiblePlacement(GeometryError):
    pass


@dataclass(frozen=True)
class Item:
    """A box to pack; extents are along x, y, z and never rotated."""

    width: float
    depth: float
    height: float
    id: int = 0

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError(f"item extents must be positive: {self.dims}")

    @property
    def dims(self) -> Tuple[float, float, float]:
        return (self.width, self.depth, self.height)

    @property
    def volume(self) -> float:
        return self.width * self.depth * self.height


@dataclass(frozen=True)
class Container:
    sx: float
    sy: float
    sz: float
    mode: str = "discrete"

    def __post_init__(self):
        if self.mode not in ("discrete", "continuous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if min(self.dims) <= 0:
            raise ValueError("container extents must be positive")
        if self.discrete and any(float(v) != int(v) for v in self.dims):
            raise ValueError("discrete containers need integral extents")

    @property
    def dims(self) -> Tuple[float, float, float]:
        return (self.sx, self.sy, self.sz)

    @property
    def discrete(self) -> bool:
        return self.mode == "discrete"

    @property
    def volume(self) -> float:
        return self.sx * self.sy * self.sz


@dataclass(frozen=True)
class Placement:
    item: Item
    x: float
    y: float
    z: float

    @property
    def item_id(self) -> int:
        return self.item.id

    @property
    def anchor(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @property
    def box(self) -> np.ndarray:
        w, d, h = self.item.dims
        return np.array([self.x, self.y, self.z, self.x + w, self.y + d, self.z + h], dtype=float)


class Feasibility(NamedTuple):
    ok: bool
    reason: str

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class BinState:
    """Immutable packing state.

    ``boxes`` mirrors ``placements`` as an (n, 6) array, ``heightmap`` is the
    per-cell top height in discrete mode (``None`` otherwise) and ``spaces``
    holds the current empty maximal spaces.
    """

    container: Container
    placements: Tuple[Placement, ...] = ()
    boxes: np.ndarray = field(default_factory=lambda: np.empty((0, 6)))
    heightmap: Optional[np.ndarray] = None
    spaces: np.ndarray = field(default_factory=lambda: np.empty((0, 6)))
    queue: Tuple[Item, ...] = ()

    @classmethod
    def empty(cls, container: Container, queue: Sequence[Item] = ()) -> "BinState":
        hm = None
        if container.discrete:
            hm = np.zeros((int(container.sx), int(container.sy)), dtype=np.int64)
        spaces = np.array([[0.0, 0.0, 0.0, *map(float, container.dims)]])
        return cls(container, (), np.empty((0, 6)), hm, spaces, tuple(queue))

    @property
    def packed_volume(self) -> float:
        return float(sum(p.item.volume for p in self.placements))

    @property
    def utilization(self) -> float:
        return self.packed_volume / self.container.volume

    @property
    def count(self) -> int:
        return len(self.placements)

    def signature(self) -> tuple:
        """Hashable identity of the packed configuration."""
        return tuple(sorted((p.item.id, p.x, p.y, p.z) for p in self.placements))

    def with_queue(self, queue: Sequence[Item]) -> "BinState":
        return BinState(
            self.container, self.placements, self.boxes, self.heightmap, self.spaces, tuple(queue)
        )


def _box(item: Item, anchor) -> np.ndarray:
    x, y, z = anchor
    return np.array([x, y, z, x + item.width, y + item.depth, z + item.height], dtype=float)


def _xy_overlap(boxes: np.ndarray, box: np.ndarray, eps=EPS) -> np.ndarray:
    return (
        (boxes[:, 0] < box[3] - eps)
        & (boxes[:, 3] > box[0] + eps)
        & (boxes[:, 1] < box[4] - eps)
        & (boxes[:, 4] > box[1] + eps)
    )


def drop_z(state: BinState, item: Item, xy) -> float:
    """Resting height when ``item`` is lowered from above at planar anchor ``xy``.

    This is the top of the highest packed box under the footprint, so the
    swept column from the result upward is free.
    """
    x, y = xy
    c = state.container
    if x < -EPS or y < -EPS or x + item.width > c.sx + EPS or y + item.depth > c.sy + EPS:
        raise FootprintOutOfBounds(f"footprint at {(x, y)} leaves the container")
    if state.heightmap is not None and float(x).is_integer() and float(y).is_integer():
        xi, yi = int(x), int(y)
        window = state.heightmap[xi : xi + int(item.width), yi : yi + int(item.depth)]
        return float(window.max()) if window.size else 0.0
    if len(state.boxes) == 0:
        return 0.0
    mask = _xy_overlap(state.boxes, _box(item, (x, y, 0.0)))
    return float(state.boxes[mask, 5].max()) if mask.any() else 0.0


def contact_region(state: BinState, item: Item, anchor):
    """Rectangles where the item's base touches supporter tops at exactly its bottom z."""
    box = _box(item, anchor)
    if len(state.boxes) == 0:
        return np.empty((0, 4))
    b = state.boxes
    mask = (np.abs(b[:, 5] - box[2]) <= EPS) & _xy_overlap(b, box)
    sup = b[mask]
    return np.column_stack(
        [
            np.maximum(sup[:, 0], box[0]),
            np.maximum(sup[:, 1], box[1]),
            np.minimum(sup[:, 3], box[3]),
            np.minimum(sup[:, 4], box[4]),
        ]
    )


def stable(state: BinState, item: Item, anchor, tau: float = DEFAULT_TAU) -> bool:
    """Floor contact, or enough supported area with the centre over the contact hull."""
    x, y, z = anchor
    if z <= EPS:
        return True
    rects = contact_region(state, item, anchor)
    if len(rects) == 0:
        return False
    area = float(np.sum((rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])))
    if area < tau * item.width * item.depth - EPS:
        return False
    cx, cy = x + item.width / 2, y + item.depth / 2
    return bool(
        rects[:, 0].min() - EPS <= cx <= rects[:, 2].max() + EPS
        and rects[:, 1].min() - EPS <= cy <= rects[:, 3].max() + EPS
    )


def is_feasible(state: BinState, item: Item, anchor, tau: float = DEFAULT_TAU) -> Feasibility:
    c = state.container
    box = _box(item, anchor)
    if c.discrete and not all(float(v).is_integer() for v in anchor):
        return Feasibility(False, "grid")
    if np.any(box[:3] < -EPS) or np.any(box[3:] > np.array(c.dims, dtype=float) + EPS):
        return Feasibility(False, "containment")
    if len(state.boxes):
        b = state.boxes
        overlap = np.all(b[:, :3] < box[3:] - EPS, axis=1) & np.all(b[:, 3:] > box[:3] + EPS, axis=1)
        if overlap.any():
            return Feasibility(False, "overlap")
    if not stable(state, item, anchor, tau):
        return Feasibility(False, "stability")
    return Feasibility(True, "ok")


def apply_placement(state: BinState, item: Item, anchor, tau: float = DEFAULT_TAU, check: bool = True) -> BinState:
    """Return the state with ``item`` packed at ``anchor``.

    The heightmap and empty maximal spaces are updated and the item is popped
    from the queue front when it is there.
    """
    if check:
        verdict = is_feasible(state, item, anchor, tau)
        if not verdict.ok:
            raise InfeasiblePlacement(f"{item} at {tuple(anchor)}: {verdict.reason}")
    x, y, z = (float(v) for v in anchor)
    placement = Placement(item, x, y, z)
    box = placement.box
    hm = state.heightmap
    if hm is not None:
        hm = hm.copy()
        xi, yi = int(x), int(y)
        sl = hm[xi : xi + int(item.width), yi : yi + int(item.depth)]
        np.maximum(sl, int(round(z + item.height)), out=sl)
    queue = state.queue
    if queue and queue[0] == item:
        queue = queue[1:]
    return BinState(
        state.container,
        state.placements + (placement,),
        np.vstack([state.boxes, box[None, :]]),
        hm,
        ems_update(state.spaces, box),
        queue,
    )


def surface_integral(state: BinState, rect) -> float:
    """Integral of the top-surface height over the planar rectangle ``rect``."""
    x0, y0, x1, y1 = rect
    hm = state.heightmap
    if hm is not None and all(float(v).is_integer() for v in rect):
        return float(hm[int(x0) : int(x1), int(y0) : int(y1)].sum())
    if len(state.boxes) == 0:
        return 0.0
    b = state.boxes
    probe = np.array([x0, y0, 0.0, x1, y1, 0.0])
    b = b[_xy_overlap(b, probe)]
    if len(b) == 0:
        return 0.0
    xs = np.unique(np.clip(np.concatenate([[x0, x1], b[:, 0], b[:, 3]]), x0, x1))
    ys = np.unique(np.clip(np.concatenate([[y0, y1], b[:, 1], b[:, 4]]), y0, y1))
    mx = (xs[:-1] + xs[1:]) / 2
    my = (ys[:-1] + ys[1:]) / 2
    cover = (
        (b[:, None, None, 0] < mx[None, :, None])
        & (b[:, None, None, 3] > mx[None, :, None])
        & (b[:, None, None, 1] < my[None, None, :])
        & (b[:, None, None, 4] > my[None, None, :])
    )
    tops = np.where(cover, b[:, None, None, 5], 0.0).max(axis=0)
    area = np.diff(xs)[:, None] * np.diff(ys)[None, :]
    return float(np.sum(tops * area))


def check_invariants(state: BinState) -> list:
    """Independent pairwise audit of a state; returns a list of violations."""
    problems = []
    c = state.container
    boxes = [p.box for p in state.placements]
    for i, a in enumerate(boxes):
        if np.any(a[:3] < -EPS) or np.any(a[3:] > np.array(c.dims) + EPS):
            problems.append(f"box {i} outside container")
        for j in range(i):
            b = boxes[j]
            if all(min(a[k + 3], b[k + 3]) - max(a[k], b[k]) > EPS for k in range(3)):
                problems.append(f"boxes {j} and {i} overlap")
        if a[2] > EPS:
            touching = [
                b
                for j, b in enumerate(boxes)
                if j != i
                and abs(b[5] - a[2]) <= EPS
                and min(a[3], b[3]) - max(a[0], b[0]) > EPS
                and min(a[4], b[4]) - max(a[1], b[1]) > EPS
            ]
            if not touching:
                problems.append(f"box {i} floats at z={a[2]}")
    if state.heightmap is not None:
        expect = np.zeros_like(state.heightmap)
        for b in boxes:
            x0, y0, x1, y1 = int(b[0]), int(b[1]), int(b[3]), int(b[4])
            expect[x0:x1, y0:y1] = np.maximum(expect[x0:x1, y0:y1], int(round(b[5])))
        if not np.array_equal(expect, state.heightmap):
            problems.append("heightmap mismatch")
    return problems
