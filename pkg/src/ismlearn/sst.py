"""Estimation of the set of static torques (SST).

The SST is the image of the admissible configuration box under the gravity
term: every torque in it can be statically held. We sample configurations
(stratified grid plus uniform), map them through the plant's gravity term
(each sample therefore has a settled witness), and estimate the boundary
with an alpha-complex over a Delaunay triangulation. Exploration torques
that leave the estimate are clipped to the nearest boundary vertex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .robot import ManipulatorModel


class DegenerateInput(ValueError):
    """Samples are affinely dependent; no triangulation exists."""


class EmptyBoundary(RuntimeError):
    """Boundary queried before the estimate was built."""


def _filtration_radii(points, simplices):
    """Min-enclosing-ball radius of each simplex (the alpha-complex
    filtration value): the circumradius when the circumcenter lies inside
    the simplex, else half the longest edge (exact in 2-D, a tight lower
    bound in higher dimensions). Plain circumradii would misclassify the
    obtuse slivers that Delaunay produces along curved boundaries."""
    radii = np.empty(len(simplices))
    for s, simp in enumerate(simplices):
        p = points[simp]
        a = 2.0 * (p[1:] - p[0])
        b = np.sum(p[1:] ** 2 - p[0] ** 2, axis=1)
        try:
            center = np.linalg.solve(a, b)
            lam = np.linalg.solve((p[1:] - p[0]).T, center - p[0])
            if np.all(lam >= -1e-12) and lam.sum() <= 1.0 + 1e-12:
                radii[s] = np.linalg.norm(center - p[0])
                continue
        except np.linalg.LinAlgError:
            pass
        longest = 0.0
        for i in range(len(p)):
            for j in range(i + 1, len(p)):
                longest = max(longest, float(np.linalg.norm(p[i] - p[j])))
        radii[s] = 0.5 * longest
    return radii


class _IntervalComplex:
    """1-D stand-in for the Delaunay triangulation: consecutive-point
    intervals are the simplices."""

    def __init__(self, pts):
        self.order = np.argsort(pts[:, 0], kind="stable")
        self.points = pts
        x = pts[self.order, 0]
        self.simplices = np.stack([self.order[:-1], self.order[1:]], axis=1)
        self._edges = np.stack([x[:-1], x[1:]], axis=1)

    def find_simplex(self, queries):
        q = np.asarray(queries, dtype=float)[:, 0]
        idx = np.searchsorted(self._edges[:, 0], q, side="right") - 1
        idx = np.clip(idx, 0, len(self._edges) - 1)
        inside = (q >= self._edges[idx, 0]) & (q <= self._edges[idx, 1])
        return np.where(inside, idx, -1)


def estimate_boundary(samples, alpha):
    """Alpha-shape boundary of a torque point cloud.

    Keeps Delaunay simplices with filtration radius <= alpha (everything
    for alpha = inf, i.e. the convex hull) and returns the frontier: facets
    that belong to exactly one kept simplex.

    Returns (vertex_indices, facets, tri, kept_mask); facets index into the
    sample array.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or len(pts) < pts.shape[1] + 2:
        raise DegenerateInput("need at least d + 2 samples")
    if pts.shape[1] == 1:
        tri = _IntervalComplex(pts)
        lengths = 0.5 * (tri._edges[:, 1] - tri._edges[:, 0])
        kept = lengths <= alpha if np.isfinite(alpha) else np.ones(len(lengths), bool)
        if not np.any(kept):
            raise DegenerateInput("alpha too small: no interval survives")
        facet_count: dict[tuple, int] = {}
        for simp in tri.simplices[kept]:
            for v in simp:
                facet_count[(int(v),)] = facet_count.get((int(v),), 0) + 1
        facets = np.array(sorted(f for f, c in facet_count.items() if c == 1), dtype=int)
        vertices = np.unique(facets.ravel())
        return vertices, facets, tri, kept
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateInput(f"degenerate sample cloud: {exc}") from exc
    if np.isfinite(alpha):
        kept = _filtration_radii(pts, tri.simplices) <= alpha
    else:
        kept = np.ones(len(tri.simplices), dtype=bool)
    if not np.any(kept):
        raise DegenerateInput("alpha too small: no simplex survives")

    d = pts.shape[1]
    facet_count: dict[tuple, int] = {}
    for simp in tri.simplices[kept]:
        for drop in range(d + 1):
            facet = tuple(sorted(np.delete(simp, drop)))
            facet_count[facet] = facet_count.get(facet, 0) + 1
    facets = np.array(sorted(f for f, c in facet_count.items() if c == 1), dtype=int)
    vertices = np.unique(facets.ravel()) if len(facets) else np.array([], dtype=int)
    return vertices, facets, tri, kept


def dedupe_points(points, decimals: int = 9) -> np.ndarray:
    """Drop (near-)duplicate rows; symmetric configurations map to the same
    torque, so sampled clouds contain exact repeats that would wreck both
    qhull and the nearest-neighbour scale estimate."""
    pts = np.asarray(points, dtype=float)
    _, idx = np.unique(np.round(pts, decimals), axis=0, return_index=True)
    return pts[np.sort(idx)]


def default_alpha(samples, factor: float = 3.0, quantile: float = 0.99) -> float:
    """factor times an upper quantile of the nearest-neighbour distances.

    The torque image of a uniform configuration sweep is far denser along
    the fold curves than mid-region, so the scale has to follow the sparse
    tail (the median would leave interior holes)."""
    pts = dedupe_points(samples)
    tree = cKDTree(pts)
    dists, _ = tree.query(pts, k=2)
    return float(factor * np.quantile(dists[:, 1], quantile))


@dataclass
class SSTEstimate:
    """Sampled static torques plus an alpha-complex boundary."""

    torque_samples: np.ndarray
    alpha: float
    boundary_vertices: np.ndarray = field(default=None, repr=False)
    boundary_facets: np.ndarray = field(default=None, repr=False)
    _tri: Delaunay = field(default=None, repr=False)
    _kept: np.ndarray = field(default=None, repr=False)

    @classmethod
    def build(cls, torque_samples, alpha: float | None = None) -> "SSTEstimate":
        pts = np.ascontiguousarray(dedupe_points(torque_samples))
        if alpha is None:
            alpha = default_alpha(pts)
        est = cls(torque_samples=pts, alpha=float(alpha))
        est._rebuild()
        return est

    def _rebuild(self):
        verts, facets, tri, kept = estimate_boundary(self.torque_samples, self.alpha)
        self.boundary_vertices = verts
        self.boundary_facets = facets
        self._tri = tri
        self._kept = kept

    @property
    def dim(self) -> int:
        return self.torque_samples.shape[1]

    @property
    def boundary_points(self) -> np.ndarray:
        if self.boundary_vertices is None or len(self.boundary_vertices) == 0:
            raise EmptyBoundary("boundary not built")
        return self.torque_samples[self.boundary_vertices]

    def add_samples(self, torques):
        """Ingest further witnessed torques and rebuild the boundary."""
        torques = np.atleast_2d(np.asarray(torques, dtype=float))
        self.torque_samples = dedupe_points(np.vstack([self.torque_samples, torques]))
        self._rebuild()

    def contains(self, tau) -> bool:
        """Point-in-alpha-complex test (stored samples always count)."""
        tau = np.asarray(tau, dtype=float)
        simp = self._tri.find_simplex(tau[None, :])[0]
        if simp >= 0 and self._kept[simp]:
            return True
        # a witnessed sample is a member even if its simplices were filtered
        d = np.min(np.linalg.norm(self.torque_samples - tau, axis=1))
        return bool(d <= 1e-9 * max(1.0, float(np.abs(self.torque_samples).max())))

    def contains_batch(self, taus) -> np.ndarray:
        taus = np.atleast_2d(np.asarray(taus, dtype=float))
        simp = self._tri.find_simplex(taus)
        inside = (simp >= 0) & np.where(simp >= 0, self._kept[simp], False)
        return inside

    def project_to_boundary(self, tau) -> np.ndarray:
        """Nearest boundary vertex in Euclidean torque distance.

        Ties break toward the lowest vertex index. Intended for torques
        outside the estimate; the result is always a member.
        """
        bp = self.boundary_points
        d2 = np.sum((bp - np.asarray(tau, dtype=float)) ** 2, axis=1)
        return bp[int(np.argmin(d2))].copy()

    def area(self) -> float:
        """Total volume (area in 2-D) of the kept simplices."""
        pts = self.torque_samples
        fact = float(math.factorial(self.dim))
        vol = 0.0
        for simp in self._tri.simplices[self._kept]:
            p = pts[simp]
            vol += abs(np.linalg.det(p[1:] - p[0])) / fact
        return vol

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "sst-v1",
            "alpha": self.alpha,
            "torque_samples": self.torque_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SSTEstimate":
        if data.get("format") != "sst-v1":
            raise ValueError(f"unsupported SST artifact format: {data.get('format')!r}")
        return cls.build(np.asarray(data["torque_samples"], dtype=float), data["alpha"])

    def save(self, path, extra: dict | None = None):
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SSTEstimate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_configurations(model: ManipulatorModel, n_samples: int, rng) -> np.ndarray:
    """Stratified grid plus uniform random draws inside the joint-limit box.

    The grid count per dimension is odd and endpoint-inclusive so box center
    and faces (where the gravity term attains its extremes) are sampled
    exactly."""
    n = model.n
    per_dim = max(3, int(np.floor((n_samples / 2) ** (1.0 / n))))
    if per_dim % 2 == 0:
        per_dim += 1
    axes = [
        np.linspace(model.q_min[i], model.q_max[i], per_dim)
        for i in range(n)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    n_rand = max(0, n_samples - len(grid))
    rand = rng.uniform(model.q_min, model.q_max, size=(n_rand, n))
    return np.vstack([grid, rand])[:n_samples]


def explore_sst(
    model: ManipulatorModel,
    n_samples: int,
    rng_seed: int,
    alpha: float | None = None,
) -> SSTEstimate:
    """Sample the joint-limit box and collect the gravity torques.

    Every returned torque has a settled witness by construction (it is the
    exact holding torque of the sampled configuration).
    """
    if n_samples < model.n + 2:
        raise ValueError("need at least n + 2 samples")
    rng = np.random.default_rng(rng_seed)
    Q = sample_configurations(model, n_samples, rng)
    taus = model.gravity_batch(Q)
    return SSTEstimate.build(taus, alpha)
