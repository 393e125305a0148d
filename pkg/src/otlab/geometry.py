"""Convex domains, weighted point clouds, and affine normalization.

Domains are convex bodies given by half-spaces (polytopes), balls, or
ellipsoids, all supporting membership tests, support functions, boundary
distances and inward normals. Clouds are lattice discretizations carrying
cell masses. Normalization maps a point set to John position (unit-ish
balance) with a volume preserving linear map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog, minimize_scalar
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .errors import DegenerateGeometryError, EmptyDiscretizationError

Float = NDArray[np.float64]


def _as_points(x: Float) -> tuple[Float, bool]:
    """Promote a single point to a batch of one. Returns (batch, was_single)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def unit_directions(dim: int, count: int) -> Float:
    """Deterministic, roughly uniform unit vectors used for direction scans."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        # Fibonacci sphere
        k = np.arange(count, dtype=float)
        z = 1.0 - 2.0 * (k + 0.5) / count
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = np.pi * (1.0 + np.sqrt(5.0)) * k
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(1234567)
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    return np.vstack([axes, v])


class ConvexDomain:
    """Common interface for convex bodies."""

    dim: int

    def contains(self, x: Float, tol: float = 0.0) -> NDArray[np.bool_]:
        raise NotImplementedError

    def support(self, u: Float) -> float:
        """sup of u . x over the body."""
        raise NotImplementedError

    def support_point(self, u: Float) -> Float:
        raise NotImplementedError

    def bounding_box(self) -> tuple[Float, Float]:
        raise NotImplementedError

    def boundary_distance(self, x: Float) -> Float:
        """Signed distance to the boundary, positive inside."""
        raise NotImplementedError

    def inner_normal(self, x: Float) -> Float:
        """Unit inward normal of the nearest boundary piece."""
        raise NotImplementedError

    def translate(self, v: Float) -> "ConvexDomain":
        raise NotImplementedError

    def outline(self, count: int = 256) -> Float:
        """Counter-clockwise boundary polygon, planar bodies only."""
        raise NotImplementedError

    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


class Polytope(ConvexDomain):
    """Intersection of half-spaces {x : normals @ x <= offsets}."""

    def __init__(self, normals: Float, offsets: Float):
        self.normals = np.asarray(normals, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        if self.normals.ndim != 2 or self.normals.shape[0] != self.offsets.shape[0]:
            raise DegenerateGeometryError("half-space data shapes disagree")
        self.dim = self.normals.shape[1]
        self._vertices: Optional[Float] = None

    def _compute_vertices(self) -> Float:
        if self.dim == 1:
            a = self.normals[:, 0]
            pos = a > 0
            neg = a < 0
            if not pos.any() or not neg.any():
                raise DegenerateGeometryError("unbounded interval")
            hi = np.min(self.offsets[pos] / a[pos])
            lo = np.max(self.offsets[neg] / a[neg])
            if lo >= hi:
                raise DegenerateGeometryError("empty interval")
            return np.array([[lo], [hi]])
        # Chebyshev centre gives a strictly interior point for qhull.
        norms = np.linalg.norm(self.normals, axis=1)
        res = linprog(
            c=np.r_[np.zeros(self.dim), -1.0],
            A_ub=np.column_stack([self.normals, norms]),
            b_ub=self.offsets,
            bounds=[(None, None)] * self.dim + [(0.0, None)],
            method="highs",
        )
        if not res.success or res.x[-1] <= 1e-12:
            raise DegenerateGeometryError("polytope has empty interior")
        interior = res.x[: self.dim]
        hs = HalfspaceIntersection(
            np.column_stack([self.normals, -self.offsets]), interior
        )
        return ConvexHull(hs.intersections).points[
            ConvexHull(hs.intersections).vertices
        ]

    @property
    def vertices(self) -> Float:
        if self._vertices is None:
            self._vertices = self._compute_vertices()
        return self._vertices

    def contains(self, x: Float, tol: float = 0.0) -> NDArray[np.bool_]:
        pts, single = _as_points(x)
        ok = np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)
        return ok[0] if single else ok

    def support(self, u: Float) -> float:
        return float(np.max(self.vertices @ np.asarray(u, dtype=float)))

    def support_point(self, u: Float) -> Float:
        vals = self.vertices @ np.asarray(u, dtype=float)
        return self.vertices[int(np.argmax(vals))].copy()

    def bounding_box(self) -> tuple[Float, Float]:
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def boundary_distance(self, x: Float) -> Float:
        pts, single = _as_points(x)
        norms = np.linalg.norm(self.normals, axis=1)
        slack = (self.offsets - pts @ self.normals.T) / norms
        d = slack.min(axis=1)
        return d[0] if single else d

    def inner_normal(self, x: Float) -> Float:
        norms = np.linalg.norm(self.normals, axis=1)
        slack = (self.offsets - np.asarray(x, dtype=float) @ self.normals.T) / norms
        k = int(np.argmin(slack))
        return -self.normals[k] / norms[k]

    def translate(self, v: Float) -> "Polytope":
        v = np.asarray(v, dtype=float)
        return Polytope(self.normals.copy(), self.offsets + self.normals @ v)

    def outline(self, count: int = 256) -> Float:
        if self.dim != 2:
            raise DegenerateGeometryError("outline requires a planar body")
        v = self.vertices
        c = v.mean(axis=0)
        order = np.argsort(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]))
        return v[order]


class Ball(ConvexDomain):
    def __init__(self, center: Float, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise DegenerateGeometryError("ball radius must be positive")
        self.dim = self.center.shape[0]

    def contains(self, x: Float, tol: float = 0.0) -> NDArray[np.bool_]:
        pts, single = _as_points(x)
        ok = np.linalg.norm(pts - self.center, axis=1) <= self.radius + tol
        return ok[0] if single else ok

    def support(self, u: Float) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.center @ u + self.radius * np.linalg.norm(u))

    def support_point(self, u: Float) -> Float:
        u = np.asarray(u, dtype=float)
        return self.center + self.radius * u / np.linalg.norm(u)

    def bounding_box(self) -> tuple[Float, Float]:
        return self.center - self.radius, self.center + self.radius

    def boundary_distance(self, x: Float) -> Float:
        pts, single = _as_points(x)
        d = self.radius - np.linalg.norm(pts - self.center, axis=1)
        return d[0] if single else d

    def inner_normal(self, x: Float) -> Float:
        v = self.center - np.asarray(x, dtype=float)
        n = np.linalg.norm(v)
        if n <= 1e-14:
            raise DegenerateGeometryError("normal undefined at the centre")
        return v / n

    def translate(self, v: Float) -> "Ball":
        return Ball(self.center + np.asarray(v, dtype=float), self.radius)

    def outline(self, count: int = 256) -> Float:
        if self.dim != 2:
            raise DegenerateGeometryError("outline requires a planar body")
        return self.center + self.radius * unit_directions(2, count)


class Ellipsoid(ConvexDomain):
    """{x : (x - c)^T M (x - c) <= 1} with M symmetric positive definite."""

    def __init__(self, center: Float, matrix: Float):
        self.center = np.asarray(center, dtype=float)
        self.matrix = 0.5 * (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T)
        self.dim = self.center.shape[0]
        w, V = np.linalg.eigh(self.matrix)
        if w.min() <= 0:
            raise DegenerateGeometryError("ellipsoid matrix must be positive definite")
        self._inv = V @ np.diag(1.0 / w) @ V.T
        self._inv_sqrt = V @ np.diag(1.0 / np.sqrt(w)) @ V.T

    @classmethod
    def from_semiaxes(cls, center: Float, semiaxes: Sequence[float]) -> "Ellipsoid":
        s = np.asarray(semiaxes, dtype=float)
        return cls(center, np.diag(1.0 / s**2))

    def _qf(self, pts: Float) -> Float:
        d = pts - self.center
        return np.einsum("ij,jk,ik->i", d, self.matrix, d)

    def contains(self, x: Float, tol: float = 0.0) -> NDArray[np.bool_]:
        pts, single = _as_points(x)
        # Tolerance acts on the metric radius so it scales like a length.
        ok = np.sqrt(np.maximum(self._qf(pts), 0.0)) <= 1.0 + tol
        return ok[0] if single else ok

    def support(self, u: Float) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.center @ u + np.sqrt(u @ self._inv @ u))

    def support_point(self, u: Float) -> Float:
        u = np.asarray(u, dtype=float)
        w = self._inv @ u
        return self.center + w / np.sqrt(u @ w)

    def bounding_box(self) -> tuple[Float, Float]:
        half = np.sqrt(np.diag(self._inv))
        return self.center - half, self.center + half

    def boundary_distance(self, x: Float) -> Float:
        pts, single = _as_points(x)
        dirs = unit_directions(self.dim, 512 if self.dim == 2 else 2048)
        h = np.array([self.support(u) for u in dirs])
        d = np.min(h[None, :] - pts @ dirs.T, axis=1)
        return d[0] if single else d

    def inner_normal(self, x: Float) -> Float:
        g = self.matrix @ (np.asarray(x, dtype=float) - self.center)
        n = np.linalg.norm(g)
        if n <= 1e-14:
            raise DegenerateGeometryError("normal undefined at the centre")
        return -g / n

    def translate(self, v: Float) -> "Ellipsoid":
        return Ellipsoid(self.center + np.asarray(v, dtype=float), self.matrix)

    def outline(self, count: int = 256) -> Float:
        if self.dim != 2:
            raise DegenerateGeometryError("outline requires a planar body")
        return self.center + unit_directions(2, count) @ self._inv_sqrt.T


class ClippedDomain(ConvexDomain):
    """A base body intersected with extra half-spaces {a . x <= b}."""

    def __init__(self, base: ConvexDomain, normals: Float, offsets: Float):
        self.base = base
        self.normals = np.atleast_2d(np.asarray(normals, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        self.dim = base.dim

    def contains(self, x: Float, tol: float = 0.0) -> NDArray[np.bool_]:
        pts, single = _as_points(x)
        ok = self.base.contains(pts, tol) & np.all(
            pts @ self.normals.T <= self.offsets + tol, axis=1
        )
        return ok[0] if single else ok

    def bounding_box(self) -> tuple[Float, Float]:
        lo, hi = self.base.bounding_box()
        for a, b in zip(self.normals, self.offsets):
            axes = np.nonzero(np.abs(a) > 1e-14)[0]
            if len(axes) == 1:  # axis-aligned cuts tighten the box exactly
                k = axes[0]
                if a[k] > 0:
                    hi = hi.copy()
                    hi[k] = min(hi[k], b / a[k])
                else:
                    lo = lo.copy()
                    lo[k] = max(lo[k], b / a[k])
        return lo, hi

    def boundary_distance(self, x: Float) -> Float:
        pts, single = _as_points(x)
        norms = np.linalg.norm(self.normals, axis=1)
        slack = (self.offsets - pts @ self.normals.T) / norms
        d = np.minimum(self.base.boundary_distance(pts), slack.min(axis=1))
        return d[0] if single else d

    def inner_normal(self, x: Float) -> Float:
        x = np.asarray(x, dtype=float)
        norms = np.linalg.norm(self.normals, axis=1)
        slack = (self.offsets - x @ self.normals.T) / norms
        k = int(np.argmin(slack))
        if slack[k] <= self.base.boundary_distance(x):
            return -self.normals[k] / norms[k]
        return self.base.inner_normal(x)

    def translate(self, v: Float) -> "ClippedDomain":
        v = np.asarray(v, dtype=float)
        return ClippedDomain(
            self.base.translate(v), self.normals.copy(), self.offsets + self.normals @ v
        )

    def outline(self, count: int = 256) -> Float:
        poly = self.base.outline(max(count, 256))
        for a, b in zip(self.normals, self.offsets):
            poly = _clip_polygon(poly, a, b)
            if len(poly) == 0:
                raise DegenerateGeometryError("clip removed the whole body")
        return poly


def _clip_polygon(poly: Float, normal: Float, offset: float) -> Float:
    """Sutherland-Hodgman clip of a polygon by {x : normal . x <= offset}."""
    out: list[Float] = []
    m = len(poly)
    vals = poly @ normal - offset
    for i in range(m):
        j = (i + 1) % m
        pi, pj = poly[i], poly[j]
        vi, vj = vals[i], vals[j]
        if vi <= 0:
            out.append(pi)
            if vj > 0:
                out.append(pi + (pj - pi) * (-vi) / (vj - vi))
        elif vj <= 0:
            out.append(pi + (pj - pi) * (-vi) / (vj - vi))
    return np.array(out) if out else np.zeros((0, poly.shape[1]))


def box(center: Sequence[float], sides: Sequence[float]) -> Polytope:
    """Axis-aligned box from centre and full side lengths."""
    c = np.asarray(center, dtype=float)
    s = np.asarray(sides, dtype=float)
    if np.any(s <= 0):
        raise DegenerateGeometryError("box sides must be positive")
    n = len(c)
    normals = np.vstack([np.eye(n), -np.eye(n)])
    offsets = np.r_[c + s / 2.0, -(c - s / 2.0)]
    return Polytope(normals, offsets)


def interval(lo: float, hi: float) -> Polytope:
    return box([(lo + hi) / 2.0], [hi - lo])


def clip_halfspace(domain: ConvexDomain, normal: Float, offset: float) -> ConvexDomain:
    """Intersect a domain with {x : normal . x <= offset}."""
    normal = np.asarray(normal, dtype=float)
    if isinstance(domain, Polytope):
        return Polytope(
            np.vstack([domain.normals, normal[None, :]]),
            np.r_[domain.offsets, offset],
        )
    if isinstance(domain, ClippedDomain):
        return ClippedDomain(
            domain.base,
            np.vstack([domain.normals, normal[None, :]]),
            np.r_[domain.offsets, offset],
        )
    return ClippedDomain(domain, normal[None, :], np.array([offset]))


@dataclass
class WeightedCloud:
    """Lattice sample of a density: cell centres, cell masses, grid step.

    ``index`` holds integer lattice coordinates relative to ``origin`` so
    consumers can rebuild 2-D arrays for stencil operations.
    """

    points: Float
    weights: Float
    spacing: float
    origin: Float
    index: NDArray[np.int64]

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        self.index = np.asarray(self.index, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def translate(self, v: Float) -> "WeightedCloud":
        v = np.asarray(v, dtype=float)
        return WeightedCloud(
            self.points + v, self.weights.copy(), self.spacing,
            self.origin + v, self.index.copy(),
        )

    def scaled(self, factor: float) -> "WeightedCloud":
        """Same geometry, weights multiplied by a constant."""
        return WeightedCloud(
            self.points.copy(), self.weights * factor, self.spacing,
            self.origin.copy(), self.index.copy(),
        )

    def subset(self, idx: NDArray[np.int64], weights: Optional[Float] = None) -> "WeightedCloud":
        w = self.weights[idx] if weights is None else np.asarray(weights, dtype=float)
        return WeightedCloud(
            self.points[idx], w, self.spacing, self.origin.copy(), self.index[idx]
        )


def discretize(
    domain: ConvexDomain,
    density: Callable[[Float], Float],
    resolution: int,
) -> WeightedCloud:
    """Sample a domain on a uniform lattice of cell centres.

    The step is the largest bounding-box extent divided by ``resolution``;
    cells whose centres lie inside the domain survive and carry mass
    density * step^dim. Cell counts round up so the lattice covers the box.
    """
    if resolution < 1:
        raise EmptyDiscretizationError("resolution must be at least 1")
    lo, hi = domain.bounding_box()
    extent = hi - lo
    step = float(extent.max()) / resolution
    if step <= 0:
        raise DegenerateGeometryError("domain bounding box is degenerate")
    counts = np.maximum(1, np.ceil(extent / step - 1e-9).astype(int))
    grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    index = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    points = lo + (index + 0.5) * step
    keep = domain.contains(points)
    if not keep.any():
        raise EmptyDiscretizationError("no lattice cell centre falls inside the domain")
    points = points[keep]
    index = index[keep]
    w = np.asarray(density(points), dtype=float) * step**domain.dim
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise EmptyDiscretizationError("density must be positive and finite on the domain")
    return WeightedCloud(points, w, step, lo.copy(), index)


def separation_distance(a: ConvexDomain, b: ConvexDomain, scan: int = 4096) -> float:
    """Euclidean gap between two convex bodies, 0 if they touch or overlap.

    Maximizes the support gap  u -> -h_a(-u) - h_b(u)  over unit directions:
    a coarse deterministic scan locates the best direction, a bounded
    scalar refinement polishes it. The gap of any direction is a certified
    lower bound, so the result errs slightly low, never high.
    """
    dirs = unit_directions(a.dim, scan)
    gaps = np.array([-a.support(-u) - b.support(u) for u in dirs])
    k = int(np.argmax(gaps))
    best = float(gaps[k])
    if best <= 0:
        return 0.0
    if a.dim == 1:
        return best
    if a.dim == 2:
        theta = np.arctan2(dirs[k, 1], dirs[k, 0])
        width = 2.0 * (2.0 * np.pi / scan)

        def neg_gap(t: float) -> float:
            u = np.array([np.cos(t), np.sin(t)])
            return a.support(-u) + b.support(u)

        res = minimize_scalar(
            neg_gap, bounds=(theta - width, theta + width), method="bounded",
            options={"xatol": 1e-12},
        )
        return max(best, float(-res.fun))
    # Higher dimensions: damped support polish, keep the best certificate.
    # The update direction is the current closest support pair; averaging
    # with the previous direction suppresses the period-two oscillation the
    # raw alternation exhibits on smooth bodies.
    u = dirs[k]
    for _ in range(300):
        x = a.support_point(-u)
        y = b.support_point(u)
        v = x - y
        norm = np.linalg.norm(v)
        if norm <= 1e-15:
            return 0.0
        blended = u + v / norm
        blended_norm = np.linalg.norm(blended)
        if blended_norm <= 1e-15:
            break
        u_new = blended / blended_norm
        gap = float(-a.support(-u_new) - b.support(u_new))
        if gap > best:
            best = gap
        if np.allclose(u_new, u, atol=1e-15):
            break
        u = u_new
    return max(best, 0.0)


@dataclass
class AffineNormalization:
    """Volume preserving map x -> matrix @ (x + translation).

    ``matrix`` is symmetric with unit determinant; ``condition`` is its
    eigenvalue ratio and measures the anisotropy that was removed.
    """

    matrix: Float
    translation: Float
    condition: float

    def apply(self, x: Float) -> Float:
        pts, single = _as_points(x)
        out = (pts + self.translation) @ self.matrix.T
        return out[0] if single else out

    def invert(self, z: Float) -> Float:
        pts, single = _as_points(z)
        out = pts @ np.linalg.inv(self.matrix).T - self.translation
        return out[0] if single else out


def _khachiyan(points: Float, tol: float, max_iter: int) -> tuple[Float, Float]:
    """Minimum volume enclosing ellipsoid via Khachiyan's barycentric ascent.

    Returns (shape matrix A, centre c) with the ellipsoid
    {x : (x - c)^T A (x - c) <= 1}.
    """
    pts = np.asarray(points, dtype=float)
    n_pts, d = pts.shape
    q = np.column_stack([pts, np.ones(n_pts)])
    u = np.full(n_pts, 1.0 / n_pts)
    for _ in range(max_iter):
        v = q.T @ (q * u[:, None])
        try:
            inv_v = np.linalg.inv(v)
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometryError("point set spans no full-rank ellipsoid") from exc
        m = np.einsum("ij,jk,ik->i", q, inv_v, q)
        j = int(np.argmax(m))
        maximum = m[j]
        step = (maximum - d - 1.0) / ((d + 1.0) * (maximum - 1.0))
        new_u = (1.0 - step) * u
        new_u[j] += step
        err = np.linalg.norm(new_u - u)
        u = new_u
        if err < tol:
            break
    c = pts.T @ u
    cov = pts.T @ (pts * u[:, None]) - np.outer(c, c)
    try:
        a = np.linalg.inv(cov) / d
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("point set spans no full-rank ellipsoid") from exc
    return 0.5 * (a + a.T), c


def john_normalize(
    points: Float, tol: float = 1e-7, max_iter: int = 20000
) -> AffineNormalization:
    """Fit the minimum volume enclosing ellipsoid and return the volume
    preserving affine map that rounds the set.

    The map is z = M (x - c) with M the symmetric square root of the
    ellipsoid shape matrix rescaled to unit determinant. Degenerate sets
    (rank below the ambient dimension) are refused.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < pts.shape[1] + 1:
        raise DegenerateGeometryError("need at least dim + 1 points")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1.0):
        raise DegenerateGeometryError("point set is degenerate (rank deficient)")
    a, c = _khachiyan(pts, tol, max_iter)
    w, vecs = np.linalg.eigh(a)
    if w.min() <= 0:
        raise DegenerateGeometryError("enclosing ellipsoid is degenerate")
    root = vecs @ np.diag(np.sqrt(w)) @ vecs.T
    det = np.linalg.det(root)
    matrix = root / det ** (1.0 / pts.shape[1])
    cond = float(np.sqrt(w.max() / w.min()))
    return AffineNormalization(matrix=matrix, translation=-c, condition=cond)
