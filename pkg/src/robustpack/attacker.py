"""Permutation attackers: reorder the observable window to hurt a packing policy.

Every action moves one queued item to the front. The attacker only runs the
victim forward (rollouts) and never looks at its scores.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .geometry import BinState, Item
from .policies import EpisodeResult, Packer, move_to_front, run_episode

ATTACKER_KINDS = ("Greedy", "Beam", "Exhaustive")

# exhaustive search is exponential; refuse anything bigger than this
MAX_EXHAUSTIVE_QUEUE = 6
MAX_EXHAUSTIVE_ITEMS = 10


@dataclass(frozen=True)
class AttackAction:
    """Move queue slot ``index`` (1-based) to the front; index 1 keeps the order."""

    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"attack index must be >= 1, got {self.index}")

    @property
    def slot(self) -> int:
        return self.index - 1


def _distinct_slots(queue: Sequence[Item]) -> List[int]:
    # identical items give identical outcomes; keep the lowest slot of each
    seen = set()
    out = []
    for i, it in enumerate(queue):
        if it.dims not in seen:
            seen.add(it.dims)
            out.append(i)
    return out


def _geom_key(state: BinState) -> tuple:
    return tuple(sorted((p.item.dims, p.anchor) for p in state.placements))


def _dims(items: Sequence[Item]) -> tuple:
    return tuple(it.dims for it in items)


@dataclass
class Attacker:
    """Search-based permutation attacker.

    ``Greedy`` scores each action by one rollout of the victim on the
    reordered stream. ``Beam`` looks ``depth`` placements ahead keeping the
    ``width`` lowest-valued prefixes. ``Exhaustive`` minimises over every
    reachable ordering up to ``horizon`` placements (``None`` = to the end).
    ``rollout_depth`` caps the number of items packed in each rollout.
    """

    kind: str = "Greedy"
    horizon: Optional[int] = None
    width: int = 3
    depth: int = 2
    rollout_depth: Optional[int] = None
    _memo: Dict[tuple, float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for k in ATTACKER_KINDS:
            if k.lower() == str(self.kind).lower():
                self.kind = k
                break
        else:
            raise ValueError(f"unknown attacker {self.kind!r}; choose from {', '.join(ATTACKER_KINDS)}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("exhaustive horizon must be >= 1")
        if self.width < 1 or self.depth < 1:
            raise ValueError("beam width and depth must be >= 1")

    @property
    def label(self) -> str:
        return self.kind

    def _rollout(self, packer: Packer, state: BinState, pending: Sequence[Item]) -> float:
        return packer.rollout(state, pending, self.rollout_depth)

    def attack_step(self, packer: Packer, state: BinState, queue: Sequence[Item], rest: Sequence[Item] = ()) -> AttackAction:
        """Pick the move-to-front action for the current window; ties go to the lowest index."""
        queue = tuple(queue)
        if not queue:
            raise ValueError("attack_step needs a non-empty queue")
        if len(queue) == 1:
            return AttackAction(1)
        rest = tuple(rest)
        if self.kind == "Greedy":
            values = [(self._rollout(packer, state, move_to_front(queue, i) + rest), i) for i in _distinct_slots(queue)]
        elif self.kind == "Beam":
            values = self._beam(packer, state, queue, rest)
        else:
            values = self._exhaustive_root(packer, state, queue, rest)
        best = min(values, key=lambda vi: (round(vi[0], 12), vi[1]))
        return AttackAction(best[1] + 1)

    # beam search ------------------------------------------------------

    def _advance(self, packer, state, queue, rest, slot):
        """Apply one action and let the victim place the front item.

        Returns ``(state, queue, rest, done)``.
        """
        q = move_to_front(queue, slot)
        nxt = packer.step(state, q[0])
        if nxt is None:
            return state, q, rest, True
        q = q[1:]
        if rest:
            q, rest = q + rest[:1], rest[1:]
        return nxt, q, rest, not q

    def _beam(self, packer, state, queue, rest) -> List[Tuple[float, int]]:
        frontier = []
        for i in _distinct_slots(queue):
            s, q, r, done = self._advance(packer, state, queue, rest, i)
            v = s.utilization if done else self._rollout(packer, s, q + r)
            frontier.append((v, i, s, q, r, done))
        scores = {i: v for v, i, *_ in frontier}
        for _ in range(self.depth - 1):
            frontier.sort(key=lambda f: (round(f[0], 12), f[1]))
            frontier = frontier[: self.width]
            grown = []
            for v, first, s, q, r, done in frontier:
                if done or len(q) == 0:
                    grown.append((v, first, s, q, r, True))
                    continue
                for i in _distinct_slots(q):
                    s2, q2, r2, done2 = self._advance(packer, s, q, r, i)
                    v2 = s2.utilization if done2 else self._rollout(packer, s2, q2 + r2)
                    grown.append((v2, first, s2, q2, r2, done2))
            frontier = grown
            for v, first, *_ in frontier:
                scores[first] = min(scores.get(first, v), v)
        return [(v, i) for i, v in sorted(scores.items())]

    # exhaustive search -----------------------------------------------

    def _check_size(self, queue, rest):
        if len(queue) > MAX_EXHAUSTIVE_QUEUE:
            raise ValueError(f"exhaustive attack supports a window of at most {MAX_EXHAUSTIVE_QUEUE} items")
        if self.horizon is None and len(queue) + len(rest) > MAX_EXHAUSTIVE_ITEMS:
            raise ValueError(
                f"exhaustive attack to the episode end supports at most {MAX_EXHAUSTIVE_ITEMS} items; set a horizon"
            )

    def _exhaustive_root(self, packer, state, queue, rest):
        self._check_size(queue, rest)
        h = self.horizon
        out = []
        for i in _distinct_slots(queue):
            s, q, r, done = self._advance(packer, state, queue, rest, i)
            v = s.utilization if done else self._search(packer, s, q, r, None if h is None else h - 1)
            out.append((v, i))
        return out

    def _search(self, packer, state, queue, rest, h) -> float:
        if h == 0:
            return self._rollout(packer, state, queue + rest)
        key = (id(packer), _geom_key(state), _dims(queue), _dims(rest), h)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        best = float("inf")
        for i in _distinct_slots(queue):
            s, q, r, done = self._advance(packer, state, queue, rest, i)
            v = s.utilization if done else self._search(packer, s, q, r, None if h is None else h - 1)
            best = min(best, v)
        self._memo[key] = best
        return best


def attack_episode(attacker: Attacker, items: Sequence[Item], victim: Packer, nb: int) -> EpisodeResult:
    """Run ``victim`` on ``items`` with ``attacker`` reordering the window before every placement."""
    attacker._memo.clear()
    try:
        return run_episode(victim, items, nb=nb, attacker=attacker)
    finally:
        attacker._memo.clear()
