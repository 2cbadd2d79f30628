"""Candidate grids over the unit cube and physical-unit normalization."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

MAX_GRID_POINTS = 10_000_000


@dataclass(frozen=True)
class CandidateGrid:
    points: np.ndarray
    provenance: str = "regular"
    seed: int | None = None
    names: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) < 2:
            raise ValueError("a candidate grid needs at least 2 points")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("grid coordinates must lie in [0, 1]")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("grid points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        names = tuple(self.names) or tuple(f"x{j}" for j in range(pts.shape[1]))
        if len(names) != pts.shape[1]:
            raise ValueError("one name per grid dimension required")
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()[:16]


def regular_grid(d: int, counts, cap: int = MAX_GRID_POINTS) -> CandidateGrid:
    """Cartesian product of equispaced points, endpoints included.

    ``counts`` is an int (same for every dimension) or one count per
    dimension. Points are ordered with the last coordinate varying fastest.
    """
    counts = [int(counts)] * d if np.isscalar(counts) else [int(c) for c in counts]
    if len(counts) != d:
        raise ValueError(f"{len(counts)} counts for a {d}-dimensional grid")
    if any(c < 2 for c in counts):
        raise ValueError("each dimension needs at least 2 grid points")
    m = int(np.prod(counts, dtype=object))
    if m > cap:
        raise ValueError(f"grid of {m} points exceeds the cap of {cap}")
    axes = [np.linspace(0.0, 1.0, c) for c in counts]
    mesh = np.meshgrid(*axes, indexing="ij")
    return CandidateGrid(np.stack([g.ravel() for g in mesh], axis=1), "regular")


def lhs(d: int, m: int, seed: int, centered: bool = False) -> CandidateGrid:
    """Latin hypercube of ``m`` points: one point per slab ``[j/m, (j+1)/m)`` in each dimension."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if d < 1:
        raise ValueError("d must be >= 1")
    sampler = qmc.LatinHypercube(d=d, scramble=not centered, rng=np.random.default_rng(seed))
    return CandidateGrid(sampler.random(m), "lhs", seed=seed)


def initial_design(grid: CandidateGrid, t1: int, seed) -> np.ndarray:
    """``t1`` distinct grid indices drawn uniformly without replacement.

    The draw is the prefix of a seeded permutation of all grid indices, so
    ``initial_design(grid, t1 + j, seed)`` extends ``initial_design(grid, t1, seed)``.
    """
    if not 1 <= t1 <= len(grid):
        raise ValueError(f"cannot draw {t1} initial points from a grid of {len(grid)}")
    return design_order(grid, seed)[:t1]


def design_order(grid: CandidateGrid, seed) -> np.ndarray:
    return np.random.default_rng(seed).permutation(len(grid))


@dataclass(frozen=True)
class BoundsMap:
    """Per-dimension physical ``(lo, hi)`` ranges."""

    lo: tuple
    hi: tuple
    names: tuple = ()

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"need lo < hi in every dimension, got {lo} / {hi}")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_pairs(cls, pairs, names=()):
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), tuple(names))

    @property
    def dim(self):
        return len(self.lo)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "names": list(self.names)}

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if x.shape[-1] != len(lo):
            raise ValueError(f"expected {len(lo)} coordinates, got {x.shape[-1]}")
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError(f"{x.tolist()} lies outside the bounds")
        return (x - lo) / (hi - lo)

    def denormalize(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if z.shape[-1] != len(lo):
            raise ValueError(f"expected {len(lo)} coordinates, got {z.shape[-1]}")
        if np.any(z < 0.0) or np.any(z > 1.0):
            raise ValueError(f"{z.tolist()} lies outside the unit cube")
        # endpoint-exact: z=1 must give hi, not lo + (hi - lo) with rounding
        return np.where(z == 1.0, hi, lo + z * (hi - lo))


def normalize(x, bounds: BoundsMap):
    return bounds.normalize(x)


def denormalize(z, bounds: BoundsMap):
    return bounds.denormalize(z)


def write_grid_csv(grid: CandidateGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(grid.names)
        for row in grid.points:
            w.writerow([repr(float(v)) for v in row])


def read_grid_csv(path, provenance: str = "csv") -> CandidateGrid:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty grid file")
    names, body = rows[0], rows[1:]
    pts = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    return CandidateGrid(pts.reshape(-1, len(names)), provenance, names=tuple(names))
