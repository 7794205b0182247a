"""Deterministic heuristic packing policies and the episode loop."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .candidates import DEFAULT_NL, CandidateSet, candidates_for
from .ems import EPS, box_volume, largest_after
from .geometry import DEFAULT_TAU, BinState, Container, Item, Placement, apply_placement, surface_integral

POLICY_KINDS = ("DBL", "BMF", "LSAH", "OnlineBPH", "HMM", "MACS")


def _canonical_kind(kind: str) -> str:
    for k in POLICY_KINDS:
        if k.lower() == str(kind).lower():
            return k
    raise ValueError(f"unknown policy {kind!r}; choose from {', '.join(POLICY_KINDS)}")


def _owning_volumes(state: BinState, cands: CandidateSet, same_corner: bool) -> np.ndarray:
    """Smallest volume of an EMS holding each placed box (inf if none).

    With ``same_corner`` only spaces whose min corner shares the anchor's
    planar position count, i.e. the spaces that generated the candidate.
    """
    spaces = state.spaces
    boxes = cands.boxes()
    if len(spaces) == 0 or len(boxes) == 0:
        return np.full(len(boxes), np.inf)
    inside = np.all(boxes[:, None, :3] >= spaces[None, :, :3] - EPS, axis=2) & np.all(
        boxes[:, None, 3:] <= spaces[None, :, 3:] + EPS, axis=2
    )
    if same_corner:
        inside &= (np.abs(boxes[:, None, 0] - spaces[None, :, 0]) <= EPS) & (
            np.abs(boxes[:, None, 1] - spaces[None, :, 1]) <= EPS
        )
    vol = box_volume(spaces)
    return np.where(inside, vol[None, :], np.inf).min(axis=1)


def _column_occupancy(state: BinState, boxes: np.ndarray, top: float) -> np.ndarray:
    """Packed volume inside each footprint prism [x0, x1] x [y0, y1] x [0, top]."""
    b = state.boxes
    if len(b) == 0:
        return np.zeros(len(boxes))
    ox = np.clip(np.minimum(b[None, :, 3], boxes[:, None, 3]) - np.maximum(b[None, :, 0], boxes[:, None, 0]), 0, None)
    oy = np.clip(np.minimum(b[None, :, 4], boxes[:, None, 4]) - np.maximum(b[None, :, 1], boxes[:, None, 1]), 0, None)
    oz = np.clip(np.minimum(b[None, :, 5], top) - b[None, :, 2], 0, None)
    return (ox * oy * oz).sum(axis=1)


def exposed_area_delta(state: BinState, boxes: np.ndarray) -> np.ndarray:
    """Change in exposed surface of the packed union when adding each box.

    Faces lying on the container walls, floor or ceiling are not exposed.
    """
    c = state.container
    w = boxes[:, 3] - boxes[:, 0]
    d = boxes[:, 4] - boxes[:, 1]
    h = boxes[:, 5] - boxes[:, 2]
    total = 2 * (w * d + w * h + d * h)
    walls = (
        (np.abs(boxes[:, 0]) <= EPS) * d * h
        + (np.abs(boxes[:, 3] - c.sx) <= EPS) * d * h
        + (np.abs(boxes[:, 1]) <= EPS) * w * h
        + (np.abs(boxes[:, 4] - c.sy) <= EPS) * w * h
        + (np.abs(boxes[:, 2]) <= EPS) * w * d
        + (np.abs(boxes[:, 5] - c.sz) <= EPS) * w * d
    )
    b = state.boxes
    contact = np.zeros(len(boxes))
    if len(b):
        B = boxes[:, None, :]
        P = b[None, :, :]
        ov = [np.clip(np.minimum(B[..., k + 3], P[..., k + 3]) - np.maximum(B[..., k], P[..., k]), 0, None) for k in range(3)]
        for k in range(3):
            touch = (np.abs(B[..., k] - P[..., k + 3]) <= EPS) | (np.abs(B[..., k + 3] - P[..., k]) <= EPS)
            o1, o2 = [ov[j] for j in range(3) if j != k]
            contact += (touch * o1 * o2).sum(axis=1)
    return total - walls - 2 * contact


def heightmap_cost(state: BinState, boxes: np.ndarray) -> np.ndarray:
    """Total heightmap growth over the footprint plus the void trapped under the item."""
    out = np.empty(len(boxes))
    for i, (x0, y0, z, x1, y1, top) in enumerate(boxes):
        area = (x1 - x0) * (y1 - y0)
        under = surface_integral(state, (x0, y0, x1, y1))
        growth = area * top - under
        void = area * z - under
        out[i] = growth + void
    return out


@dataclass(frozen=True)
class PackingPolicy:
    """Score-based placement rule; the chosen anchor minimises its key tuple."""

    kind: str = "DBL"

    def __post_init__(self):
        object.__setattr__(self, "kind", _canonical_kind(self.kind))

    def keys(self, state: BinState, item: Item, cands: CandidateSet) -> List[np.ndarray]:
        """Primary sort keys, most significant first; (z, y, x, source) breaks ties."""
        boxes = cands.boxes()
        kind = self.kind
        if kind == "DBL":
            return []
        if kind == "BMF":
            if state.container.discrete:
                return [_owning_volumes(state, cands, same_corner=True) - item.volume]
            c = state.container
            area = item.width * item.depth
            return [area * c.sz - _column_occupancy(state, boxes, c.sz) - item.volume]
        if kind == "OnlineBPH":
            vol = _owning_volumes(state, cands, same_corner=state.container.discrete)
            return [np.isinf(vol).astype(float)]
        if kind == "LSAH":
            return [exposed_area_delta(state, boxes)]
        if kind == "HMM":
            return [heightmap_cost(state, boxes)]
        if kind == "MACS":
            return [-largest_after(state.spaces, boxes)]
        raise AssertionError(kind)

    def tail_keys(self, state, item, cands) -> List[np.ndarray]:
        if self.kind == "OnlineBPH":
            vol = _owning_volumes(state, cands, same_corner=state.container.discrete)
            return [np.where(np.isinf(vol), 0.0, vol)]
        return []

    def select(self, state: BinState, item: Item, cands: CandidateSet) -> Optional[Placement]:
        """Best placement for ``item`` among ``cands``; ``None`` means terminate."""
        if len(cands) == 0:
            return None
        a = cands.anchors
        primary = [np.round(k, 9) for k in self.keys(state, item, cands)]
        tail = [np.round(k, 9) for k in self.tail_keys(state, item, cands)]
        # np.lexsort sorts by the last key first
        order = [cands.sources] + tail[::-1] + [a[:, 0], a[:, 1], a[:, 2]] + primary[::-1]
        best = int(np.lexsort(order)[0])
        x, y, z = a[best].tolist()
        return Placement(item, x, y, z)


@dataclass(frozen=True)
class Packer:
    """A policy bound to a container and candidate settings; the victim in attacks."""

    policy: PackingPolicy
    container: Container
    tau: float = DEFAULT_TAU
    n_l: int = DEFAULT_NL
    full_lines: bool = False

    def choose(self, state: BinState, item: Item) -> Optional[Placement]:
        cands = candidates_for(state, item, self.n_l, self.tau, self.full_lines)
        return self.policy.select(state, item, cands)

    def step(self, state: BinState, item: Item) -> Optional[BinState]:
        placement = self.choose(state, item)
        if placement is None:
            return None
        return apply_placement(state, item, placement.anchor, self.tau, check=False)

    def rollout(self, state: BinState, pending: Sequence[Item], depth: Optional[int] = None) -> float:
        """Utilization after packing ``pending`` in order until the first failure."""
        for n, item in enumerate(pending):
            if depth is not None and n >= depth:
                break
            nxt = self.step(state, item)
            if nxt is None:
                break
            state = nxt
        return state.utilization


@dataclass
class EpisodeResult:
    utilization: float
    count: int
    placements: List[Placement] = field(default_factory=list)
    presented: List[Item] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    order: List[Item] = field(default_factory=list)
    terminated_by: Optional[Item] = None

    @property
    def packed_volume(self) -> float:
        return sum(p.item.volume for p in self.placements)


def move_to_front(queue: Sequence[Item], index: int) -> Tuple[Item, ...]:
    """Move the item at 0-based ``index`` ahead of the rest of the queue."""
    queue = tuple(queue)
    return (queue[index],) + queue[:index] + queue[index + 1 :]


def run_episode(packer: Packer, items: Sequence[Item], nb: int = 1, attacker=None) -> EpisodeResult:
    """Pack a stream with an ``nb``-item observable window.

    If ``attacker`` is given it reorders the window (move-to-front) before
    every placement. The episode stops at the first item the policy cannot
    place or when the stream is exhausted.
    """
    items = list(items)
    nb = max(1, int(nb))
    state = BinState.empty(packer.container)
    queue = tuple(items[:nb])
    pos = len(queue)
    result = EpisodeResult(0.0, 0)
    while queue:
        if attacker is not None:
            action = attacker.attack_step(packer, state, queue, items[pos:])
            queue = move_to_front(queue, action.slot)
            result.actions.append(action.index)
        item = queue[0]
        result.presented.append(item)
        placement = packer.choose(state, item)
        if placement is None:
            result.terminated_by = item
            break
        state = apply_placement(state, item, placement.anchor, packer.tau, check=False)
        result.placements.append(placement)
        queue = queue[1:]
        if pos < len(items):
            queue = queue + (items[pos],)
            pos += 1
    result.order = result.presented + list(queue[1:] if result.terminated_by is not None else queue) + items[pos:]
    result.utilization = state.utilization
    result.count = state.count
    return result
