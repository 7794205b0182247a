"""Candidate anchors for the front item: EMS corners (discrete) or intersection points (continuous)."""

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ems import EPS, canonical, ems_update
from .geometry import DEFAULT_TAU, BinState, Item, drop_z, is_feasible

__all__ = [
    "DEFAULT_NL",
    "Candidate",
    "CandidateSet",
    "EmptyMaximalSpace",
    "candidates_for",
    "ems_update",
    "intersection_points",
]

DEFAULT_NL = 120


class EmptyMaximalSpace(NamedTuple):
    lo: tuple
    hi: tuple

    @classmethod
    def from_row(cls, row) -> "EmptyMaximalSpace":
        return cls(tuple(float(v) for v in row[:3]), tuple(float(v) for v in row[3:]))

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


class Candidate(NamedTuple):
    x: float
    y: float
    z: float
    source: int

    @property
    def anchor(self):
        return (self.x, self.y, self.z)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Ordered, feasibility-filtered anchors for one item.

    ``anchors`` is (k, 3); ``sources`` holds the index of the EMS (discrete)
    or intersection point (continuous) each anchor came from.
    """

    item: Item
    anchors: np.ndarray
    sources: np.ndarray
    kind: str

    def __len__(self) -> int:
        return len(self.anchors)

    def __iter__(self) -> Iterator[Candidate]:
        for (x, y, z), s in zip(self.anchors.tolist(), self.sources.tolist()):
            yield Candidate(x, y, z, s)

    def __getitem__(self, i) -> Candidate:
        x, y, z = self.anchors[i].tolist()
        return Candidate(x, y, z, int(self.sources[i]))

    def boxes(self) -> np.ndarray:
        w, d, h = self.item.dims
        a = self.anchors
        return np.column_stack([a, a + np.array([w, d, h])]) if len(a) else np.empty((0, 6))


def _order(anchors, sources, n_l):
    if len(anchors) == 0:
        return anchors, sources
    idx = np.lexsort((sources, anchors[:, 0], anchors[:, 1], anchors[:, 2]))[:n_l]
    return anchors[idx], sources[idx]


def grid_drop_and_stability(state: BinState, item: Item, tau: float = DEFAULT_TAU):
    """Drop heights and stability for every integral planar anchor at once.

    Returns ``(z, ok)`` arrays of shape (Sx - w + 1, Sy - d + 1); ``ok`` also
    covers the ceiling.
    """
    hm = state.heightmap
    c = state.container
    w, d = int(item.width), int(item.depth)
    if w > hm.shape[0] or d > hm.shape[1]:
        return np.empty((0, 0)), np.empty((0, 0), dtype=bool)
    win = sliding_window_view(hm, (w, d))
    z = win.max(axis=(2, 3))
    contact = win == z[:, :, None, None]
    area = contact.sum(axis=(2, 3))
    rows = contact.any(axis=3)
    cols = contact.any(axis=2)
    r0 = rows.argmax(axis=2)
    r1 = w - rows[:, :, ::-1].argmax(axis=2)
    c0 = cols.argmax(axis=2)
    c1 = d - cols[:, :, ::-1].argmax(axis=2)
    com_ok = (r0 <= w / 2) & (w / 2 <= r1) & (c0 <= d / 2) & (d / 2 <= c1)
    supported = (area >= tau * w * d - EPS) & com_ok
    ok = ((z == 0) | supported) & (z + item.height <= c.sz + EPS)
    return z.astype(float), ok


def _ems_candidates(state: BinState, item: Item, tau: float, n_l: int, corners: int = 4) -> CandidateSet:
    spaces = state.spaces
    empty = CandidateSet(item, np.empty((0, 3)), np.empty(0, dtype=np.int64), "ems")
    if len(spaces) == 0:
        return empty
    z, ok = grid_drop_and_stability(state, item, tau)
    if z.size == 0:
        return empty
    w, d = int(item.width), int(item.depth)
    n = len(spaces)
    # the four bottom corners of every space, item flush with each corner
    xs = np.concatenate([spaces[:, 0], spaces[:, 3] - w, spaces[:, 0], spaces[:, 3] - w]).astype(np.int64)
    ys = np.concatenate([spaces[:, 1], spaces[:, 1], spaces[:, 4] - d, spaces[:, 4] - d]).astype(np.int64)
    src = np.tile(np.arange(n), 4)
    inb = (xs >= 0) & (ys >= 0) & (xs < z.shape[0]) & (ys < z.shape[1])
    if corners == 1:
        inb[n:] = False
    if not inb.any():
        return empty
    xs, ys, idx = xs[inb], ys[inb], src[inb]
    # first EMS (canonical order) producing each planar anchor
    key = xs * (z.shape[1] + 1) + ys
    _, first = np.unique(key, return_index=True)
    idx, xs, ys = idx[first], xs[first], ys[first]
    good = ok[xs, ys]
    anchors = np.column_stack([xs[good], ys[good], z[xs[good], ys[good]]]).astype(float)
    anchors, sources = _order(anchors, idx[good], n_l)
    return CandidateSet(item, anchors, sources, "ems")


def _edge_segments(state: BinState, full_lines: bool):
    """Top-view edge segments as (axis, coord, lo, hi); axis 0 means a line x = coord."""
    c = state.container
    segs = [(0, 0.0, 0.0, c.sy), (0, c.sx, 0.0, c.sy), (1, 0.0, 0.0, c.sx), (1, c.sy, 0.0, c.sx)]
    b = state.boxes
    for box in b:
        x0, y0, _, x1, y1, _ = box
        for axis, coord, lo, hi in ((0, x0, y0, y1), (0, x1, y0, y1), (1, y0, x0, x1), (1, y1, x0, x1)):
            if full_lines:
                segs.append((axis, coord, 0.0, c.sy if axis == 0 else c.sx))
                continue
            # extend along the edge until a footprint straddling the line blocks it
            if axis == 0:
                across = (b[:, 0] < coord - EPS) & (b[:, 3] > coord + EPS)
                a_lo, a_hi, limit = b[:, 1], b[:, 4], c.sy
            else:
                across = (b[:, 1] < coord - EPS) & (b[:, 4] > coord + EPS)
                a_lo, a_hi, limit = b[:, 0], b[:, 3], c.sx
            below = across & (a_hi <= lo + EPS)
            above = across & (a_lo >= hi - EPS)
            new_lo = float(a_hi[below].max()) if below.any() else 0.0
            new_hi = float(a_lo[above].min()) if above.any() else limit
            segs.append((axis, float(coord), new_lo, new_hi))
    return segs


def intersection_points(state: BinState, item: Item = None, full_lines: bool = False) -> np.ndarray:
    """Planar intersection points of extended top-view edges, as item anchors.

    Points on the far walls are shifted so the item touches that wall. When
    ``item`` is given, anchors that would leave the container are dropped and
    the rest are returned as (k, 3) with their gravity-resolved z; otherwise
    the raw (k, 2) intersection points are returned.
    """
    c = state.container
    segs = _edge_segments(state, full_lines)
    vert = {}
    horiz = {}
    for axis, coord, lo, hi in segs:
        bucket = vert if axis == 0 else horiz
        bucket.setdefault(round(coord, 9), []).append((lo, hi))
    points = set()
    for xv, vs in vert.items():
        for yh, hs in horiz.items():
            if any(lo - EPS <= yh <= hi + EPS for lo, hi in vs) and any(
                lo - EPS <= xv <= hi + EPS for lo, hi in hs
            ):
                points.add((xv, yh))
    pts = sorted(points, key=lambda p: (p[1], p[0]))
    if item is None:
        return np.array(pts, dtype=float).reshape(-1, 2)
    out = []
    seen = set()
    for px, py in pts:
        ax = c.sx - item.width if abs(px - c.sx) <= EPS else px
        ay = c.sy - item.depth if abs(py - c.sy) <= EPS else py
        ax, ay = round(ax, 9), round(ay, 9)
        if ax < -EPS or ay < -EPS or ax + item.width > c.sx + EPS or ay + item.depth > c.sy + EPS:
            continue
        if (ax, ay) in seen:
            continue
        seen.add((ax, ay))
        out.append((ax, ay, drop_z(state, item, (ax, ay))))
    return np.array(out, dtype=float).reshape(-1, 3)


def _ip_candidates(state, item, tau, n_l, full_lines) -> CandidateSet:
    pts = intersection_points(state, item, full_lines)
    keep = [i for i, a in enumerate(pts) if is_feasible(state, item, tuple(a), tau).ok]
    anchors = pts[keep] if keep else np.empty((0, 3))
    anchors, sources = _order(anchors, np.array(keep, dtype=np.int64), n_l)
    return CandidateSet(item, anchors, sources, "ip")


def candidates_for(
    state: BinState,
    item: Item,
    n_l: int = DEFAULT_NL,
    tau: float = DEFAULT_TAU,
    full_lines: bool = False,
    corners: int = 4,
) -> CandidateSet:
    """Feasible anchors for ``item`` ordered by (z, y, x, source), at most ``n_l``."""
    if state.container.discrete:
        return _ems_candidates(state, item, tau, n_l, corners)
    return _ip_candidates(state, item, tau, n_l, full_lines)


def spaces(state: BinState):
    return [EmptyMaximalSpace.from_row(r) for r in canonical(state.spaces)]
