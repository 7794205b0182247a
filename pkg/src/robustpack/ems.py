"""Empty-maximal-space maintenance by the difference process.

Spaces and boxes are rows ``[x0, y0, z0, x1, y1, z1]``. The functions here are
pure array kernels shared by the geometry and candidate modules.
"""

import numpy as np

EPS = 1e-9


def box_volume(boxes):
    boxes = np.asarray(boxes, dtype=float)
    return np.prod(boxes[..., 3:] - boxes[..., :3], axis=-1)


def canonical(spaces):
    """Sort spaces lexicographically by (z0, y0, x0, z1, y1, x1)."""
    spaces = np.asarray(spaces, dtype=float).reshape(-1, 6)
    if len(spaces) < 2:
        return spaces.copy()
    order = np.lexsort(
        (spaces[:, 3], spaces[:, 4], spaces[:, 5], spaces[:, 0], spaces[:, 1], spaces[:, 2])
    )
    return spaces[order]


def intersects(spaces, box, eps=EPS):
    """Mask of spaces whose interior overlaps ``box``."""
    box = np.asarray(box, dtype=float)
    return np.all(spaces[:, :3] < box[3:] - eps, axis=1) & np.all(
        spaces[:, 3:] > box[:3] + eps, axis=1
    )


def _contained(inner, outer, eps=EPS):
    # inner (n,6), outer (m,6) -> (n,m) bool: inner[i] inside outer[j]
    lo = np.all(inner[:, None, :3] >= outer[None, :, :3] - eps, axis=2)
    hi = np.all(inner[:, None, 3:] <= outer[None, :, 3:] + eps, axis=2)
    return lo & hi


def split(hit, box, eps=EPS):
    """Residual pieces of each space in ``hit`` after removing ``box`` (up to 6 each)."""
    pieces = []
    for axis in range(3):
        low = box[axis] > hit[:, axis] + eps
        p = hit[low].copy()
        p[:, axis + 3] = box[axis]
        pieces.append(p)
        high = box[axis + 3] < hit[:, axis + 3] - eps
        p = hit[high].copy()
        p[:, axis] = box[axis + 3]
        pieces.append(p)
    return np.concatenate(pieces, axis=0) if pieces else np.empty((0, 6))


def ems_update(spaces, box, eps=EPS):
    """Return the maximal empty spaces after inserting ``box``.

    Spaces not touched by the box are kept as-is. Each intersected space is
    split into its residual slabs and any slab contained in another space is
    dropped, which restores maximality.
    """
    spaces = np.asarray(spaces, dtype=float).reshape(-1, 6)
    box = np.asarray(box, dtype=float)
    hit_mask = intersects(spaces, box, eps)
    if not hit_mask.any():
        return spaces.copy()
    keep = spaces[~hit_mask]
    new = split(spaces[hit_mask], box, eps)
    if len(new):
        # an untouched space can never sit inside a residual slab, so only the
        # new slabs need a dominance check
        drop = np.zeros(len(new), dtype=bool)
        if len(keep):
            drop |= _contained(new, keep, eps).any(axis=1)
        inside = _contained(new, new, eps)
        same = inside & inside.T
        idx = np.arange(len(new))
        strictly = inside & ~same
        earlier_dup = same & (idx[None, :] < idx[:, None])
        drop |= (strictly | earlier_dup).any(axis=1)
        new = new[~drop]
    return canonical(np.concatenate([keep, new], axis=0))


def largest_after(spaces, boxes, eps=EPS):
    """Largest remaining space volume after inserting each of ``boxes`` separately.

    Dominated slabs never change the maximum, so the volumes of the raw
    residual pieces are enough.
    """
    spaces = np.asarray(spaces, dtype=float).reshape(-1, 6)
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 6)
    if len(spaces) == 0 or len(boxes) == 0:
        return np.zeros(len(boxes))
    s = spaces[None, :, :]
    b = boxes[:, None, :]
    ext = spaces[:, 3:] - spaces[:, :3]
    vol = np.prod(ext, axis=1)[None, :]
    hit = np.all(s[..., :3] < b[..., 3:] - eps, axis=2) & np.all(
        s[..., 3:] > b[..., :3] + eps, axis=2
    )
    best = np.where(hit, 0.0, vol)
    for axis in range(3):
        lo_len = b[..., axis] - s[..., axis]
        hi_len = s[..., axis + 3] - b[..., axis + 3]
        full = ext[None, :, axis]
        for length in (lo_len, hi_len):
            piece = np.where(hit & (length > eps), vol * length / full, 0.0)
            best = np.maximum(best, piece)
    return best.max(axis=1)
