"""Sublevel-set persistence of functions sampled on small cubical grids.

Only what the spectral selector needs is implemented: the lower-star
filtration of a cubical complex (first axis periodic, the others open and
possibly non-uniform), taken relative to the subcomplex of cells lying
entirely below a level ``b``, and a Z/2 column reduction with clearing
restricted to two consecutive degrees.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import FeasibilityError, InvalidInputError, WindowExhaustionError

__all__ = ["CubicalGrid", "EssentialClass", "relative_essential_classes", "MAX_GRID_DIM"]

MAX_GRID_DIM = 4


@dataclass(frozen=True)
class CubicalGrid:
    """Vertex grid for a cubical complex.

    ``axes[0]`` is the periodic coordinate, sampled on ``[0, 1)`` without the
    right endpoint; the remaining axes are increasing coordinate vectors.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not 1 <= len(axes) <= MAX_GRID_DIM:
            raise FeasibilityError(
                f"cubical persistence supports 1..{MAX_GRID_DIM} variables, got {len(axes)}; "
                "use the continuation backend")
        if any(a.ndim != 1 or a.size < 3 for a in axes):
            raise InvalidInputError("each axis needs at least three samples")
        if any(np.any(np.diff(a) <= 0) for a in axes):
            raise InvalidInputError("axis samples must be increasing")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self):
        return tuple(a.size for a in self.axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def spacing(self, index) -> np.ndarray:
        """Largest adjacent spacing along each axis at a vertex multi-index."""
        out = []
        for j, (a, i) in enumerate(zip(self.axes, index)):
            if j == 0:
                out.append(1.0 / a.size)
                continue
            lo = a[i] - a[i - 1] if i > 0 else 0.0
            hi = a[i + 1] - a[i] if i + 1 < a.size else 0.0
            out.append(max(lo, hi))
        return np.array(out)


@dataclass
class EssentialClass:
    degree: int
    birth: float
    vertex: tuple  # multi-index of the vertex carrying the birth value


def _cells(shape):
    """Enumerate cubical cells as (axes-subset, base-vertex flat indices)."""
    D = len(shape)
    V = int(np.prod(shape))
    idx = np.arange(V).reshape(shape)
    out = []
    for r in range(D + 1):
        for E in itertools.combinations(range(D), r):
            sl = tuple(slice(0, s - 1) if (j in E and j > 0) else slice(None)
                       for j, s in enumerate(shape))
            base = idx[sl].ravel()
            out.append((E, base))
    return out


def _shift(flat, axis, shape):
    """Flat index of the neighbour ``+1`` along ``axis`` (axis 0 wraps).

    On open axes the last layer maps to itself; such entries are never used.
    """
    multi = list(np.unravel_index(flat, shape))
    if axis == 0:
        multi[0] = (multi[0] + 1) % shape[0]
    else:
        multi[axis] = np.minimum(multi[axis] + 1, shape[axis] - 1)
    return np.ravel_multi_index(multi, shape)


def relative_essential_classes(values: np.ndarray, grid: CubicalGrid, b: float,
                               degree: int) -> list[EssentialClass]:
    """Essential classes of ``H_degree(K, K_b)`` in the lower-star filtration.

    ``values`` has the grid's shape.  ``K_b`` is the subcomplex of cells whose
    vertices all lie strictly below ``b``.  Returns every class of the given
    degree that is never killed, with its birth value and birth vertex.
    """
    values = np.asarray(values, dtype=float)
    shape = grid.shape
    if values.shape != shape:
        raise InvalidInputError("values must match the grid shape")
    if degree < 0 or degree > grid.dim:
        return []
    V = values.size
    flatv = values.ravel()
    nbr = [_shift(np.arange(V), j, shape) for j in range(grid.dim)]
    cell_dim, cell_val, cell_vtx, cell_key = [], [], [], {}
    want = {degree, degree + 1}
    catalog = _cells(shape)
    # corners for every cell family
    for E, base in catalog:
        corners = [base]
        for j in E:
            corners = corners + [nbr[j][c] for c in corners]
        stack = np.stack(corners)
        vals = flatv[stack]
        arg = np.argmax(vals, axis=0)
        cval = vals[arg, np.arange(base.size)]
        cvtx = stack[arg, np.arange(base.size)]
        cell_key[E] = (base, cval, cvtx)
    # relative complex: drop cells lying below b
    ids = {}
    for E, (base, cval, cvtx) in cell_key.items():
        keep = cval >= b
        r = len(E)
        if r not in want and r != degree - 1:
            continue
        for fb, v, vx in zip(base[keep], cval[keep], cvtx[keep]):
            ids[(E, int(fb))] = len(cell_dim)
            cell_dim.append(r)
            cell_val.append(float(v))
            cell_vtx.append(int(vx))
    cell_dim = np.array(cell_dim)
    cell_val = np.array(cell_val)
    # filtration order: value, then dimension, then id
    order = np.lexsort((np.arange(cell_dim.size), cell_dim, cell_val))
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)

    def boundary(E, fb):
        out = set()
        for j in E:
            F = tuple(x for x in E if x != j)
            for face in (fb, int(nbr[j][fb])):
                key = (F, face)
                if key in ids:
                    out ^= {int(pos[ids[key]])}
        return out

    by_dim = {r: [] for r in (degree, degree + 1)}
    for (E, fb), cid in ids.items():
        r = len(E)
        if r in by_dim:
            by_dim[r].append((int(pos[cid]), E, fb))
    for r in by_dim:
        by_dim[r].sort()

    # reduce degree+1 columns; their pivots are the paired degree cells
    pivot_owner = {}
    killed = set()
    for p, E, fb in by_dim[degree + 1]:
        col = boundary(E, fb)
        while col:
            low = max(col)
            if low in pivot_owner:
                col ^= pivot_owner[low]
            else:
                pivot_owner[low] = col
                killed.add(low)
                break
    # reduce degree columns, skipping cleared ones
    pivot_owner = {}
    essential = []
    for p, E, fb in by_dim[degree]:
        if p in killed:
            continue
        col = boundary(E, fb)
        while col:
            low = max(col)
            if low in pivot_owner:
                col ^= pivot_owner[low]
            else:
                pivot_owner[low] = col
                break
        if not col:
            essential.append(p)
    inv = order  # position -> cell id
    out = []
    for p in essential:
        cid = inv[p]
        vtx = np.unravel_index(cell_vtx[cid], shape)
        out.append(EssentialClass(degree, float(cell_val[cid]), tuple(int(i) for i in vtx)))
    out.sort(key=lambda c: c.birth)
    return out


def sinh_axis(radius: float, count: int, focus: float = 3.0) -> np.ndarray:
    """Symmetric samples on ``[-radius, radius]`` clustered near 0."""
    if count < 3 or count % 2 == 0:
        raise InvalidInputError("open axes need an odd sample count >= 3")
    s = np.linspace(-1.0, 1.0, count)
    return radius * np.sinh(focus * s) / np.sinh(focus)


def require_class(classes: list[EssentialClass], what: str) -> EssentialClass:
    if len(classes) != 1:
        raise WindowExhaustionError(
            f"expected exactly one essential {what} class, found {len(classes)}; enlarge the window")
    return classes[0]


__all__ += ["sinh_axis", "require_class"]
