"""Convex analysis on sampled potentials.

A potential is stored as values plus one supporting slope per sample
point, so the natural global extension is the max of the supporting
planes. The gradient measure of a region is computed exactly as the
Lebesgue volume of power cells in slope space: the cell of a point is cut
out by one half-space per competing point, clipped to the convex hull of
all stored slopes so that affine pieces carry zero mass and totals match
the slope range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .errors import (
    FlatPotentialError,
    InsufficientPointsError,
    NullSectionError,
    SectionBalanceError,
)
from .geometry import AffineNormalization, WeightedCloud, john_normalize

Float = NDArray[np.float64]


@dataclass
class DiscretePotential:
    """Sampled convex function: points, values, and supporting slopes.

    ``weights`` are the cell masses of the underlying lattice and feed
    centre-of-mass computations; ``spacing`` is the lattice step.
    """

    points: Float
    values: Float
    slopes: Float
    weights: Float
    spacing: float

    @classmethod
    def from_cloud(cls, cloud: WeightedCloud, values: Float, slopes: Float) -> "DiscretePotential":
        return cls(
            points=cloud.points,
            values=np.asarray(values, dtype=float),
            slopes=np.asarray(slopes, dtype=float),
            weights=cloud.weights,
            spacing=cloud.spacing,
        )

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def plane_intercepts(self) -> Float:
        """c_k such that plane k is  p -> slopes[k] . p + c_k."""
        return self.values - np.einsum("ij,ij->i", self.slopes, self.points)

    def support_defect(self, chunk: int = 512) -> float:
        """Worst overshoot of any supporting plane above any sample value.

        Consistent convex data keeps this at float-noise level; a large
        value means the (value, slope) pairs do not describe one convex
        function.
        """
        intercepts = self.plane_intercepts()
        worst = -np.inf
        for lo in range(0, self.size, chunk):
            hi = min(lo + chunk, self.size)
            planes = self.points[lo:hi] @ self.slopes.T + intercepts[None, :]
            worst = max(worst, float((planes - self.values[lo:hi, None]).max()))
        return worst


def extend(potential: DiscretePotential, query: Float) -> Float:
    """Max of the supporting planes at the query points."""
    vals, _ = extend_with_slopes(potential, query)
    return vals


def extend_with_slopes(potential: DiscretePotential, query: Float) -> tuple[Float, Float]:
    """Extension values and the slope of the winning plane per query point.

    Ties resolve to the lowest plane index (numpy argmax convention), so
    results are reproducible.
    """
    query = np.atleast_2d(np.asarray(query, dtype=float))
    intercepts = potential.plane_intercepts()
    n_q = query.shape[0]
    out_vals = np.empty(n_q)
    out_slopes = np.empty((n_q, potential.dim))
    chunk = max(1, 2**22 // max(potential.size, 1))
    for lo in range(0, n_q, chunk):
        hi = min(lo + chunk, n_q)
        scores = query[lo:hi] @ potential.slopes.T + intercepts[None, :]
        best = np.argmax(scores, axis=1)
        out_vals[lo:hi] = scores[np.arange(hi - lo), best]
        out_slopes[lo:hi] = potential.slopes[best]
    return out_vals, out_slopes


def legendre(potential: DiscretePotential, slopes: Float) -> Float:
    """Discrete Legendre transform  p -> max_k (p . y_k - v_k)."""
    slopes = np.atleast_2d(np.asarray(slopes, dtype=float))
    n_q = slopes.shape[0]
    out = np.empty(n_q)
    chunk = max(1, 2**22 // max(potential.size, 1))
    for lo in range(0, n_q, chunk):
        hi = min(lo + chunk, n_q)
        scores = slopes[lo:hi] @ potential.points.T - potential.values[None, :]
        out[lo:hi] = scores.max(axis=1)
    return out


def _slope_hull_halfspaces(potential: DiscretePotential) -> Optional[tuple[Float, Float]]:
    """Facets of conv(stored slopes) dilated by half a lattice step.

    Boundary samples own unbounded normal cells; clipping to the slope
    hull plus a half-step collar completes them to full lattice cells, so
    the identity gradient on a unit box reports volume one exactly.
    Returns None when the hull is lower dimensional (affine data).
    """
    slopes = potential.slopes
    margin = 0.5 * potential.spacing
    if potential.dim == 1:
        lo, hi = float(slopes.min()), float(slopes.max())
        if hi - lo <= 1e-14:
            return None
        return np.array([[1.0], [-1.0]]), np.array([hi + margin, -(lo - margin)])
    try:
        hull = ConvexHull(slopes)
    except QhullError:
        return None
    eq = hull.equations  # unit normals, so offsets shift by the margin itself
    return eq[:, :-1], -eq[:, -1] + margin


def _cell_volume(normals: Float, offsets: Float, candidate: Float) -> float:
    """Volume of {p : normals @ p <= offsets}, seeded by a near-interior point."""
    dim = normals.shape[1]
    slack = offsets - normals @ candidate
    interior = candidate
    if slack.min() <= 1e-9:
        # Chebyshev centre; radius ~ 0 means an empty or flat cell.
        norms = np.linalg.norm(normals, axis=1)
        res = linprog(
            c=np.r_[np.zeros(dim), -1.0],
            A_ub=np.column_stack([normals, norms]),
            b_ub=offsets,
            bounds=[(None, None)] * dim + [(0.0, None)],
            method="highs",
        )
        if not res.success or res.x[-1] <= 1e-10:
            return 0.0
        interior = res.x[:dim]
    if dim == 1:
        a = normals[:, 0]
        ub = offsets[a > 0] / a[a > 0]
        lb = offsets[a < 0] / a[a < 0]
        if ub.size == 0 or lb.size == 0:
            return 0.0
        return max(0.0, float(ub.min() - lb.max()))
    try:
        hs = HalfspaceIntersection(np.column_stack([normals, -offsets]), interior)
        return float(ConvexHull(hs.intersections).volume)
    except QhullError:
        return 0.0


def cell_masses(potential: DiscretePotential, region: NDArray[np.int64]) -> Float:
    """Exact slope-space cell volume for each region index."""
    region = np.asarray(region, dtype=np.int64)
    clip = _slope_hull_halfspaces(potential)
    if clip is None:
        return np.zeros(len(region))
    clip_n, clip_b = clip
    pts, vals = potential.points, potential.values
    out = np.empty(len(region))
    for pos, k in enumerate(region):
        others = np.arange(potential.size) != k
        normals = np.vstack([pts[others] - pts[k], clip_n])
        offsets = np.r_[vals[others] - vals[k], clip_b]
        out[pos] = _cell_volume(normals, offsets, potential.slopes[k])
    return out


def ma_measure(potential: DiscretePotential, region: NDArray[np.int64]) -> float:
    """Gradient measure of a set of sample indices.

    Cells have disjoint interiors, so the region measure is the sum of the
    per-point cell volumes.
    """
    return float(cell_masses(potential, region).sum())


@dataclass
class Section:
    """Sub-level set of a potential relative to an affine cut."""

    base_index: int
    base_point: Float
    height: float
    slope: Float
    members: NDArray[np.int64]
    kind: str
    centre_of_mass: Float
    normalization: Optional[AffineNormalization] = field(default=None, repr=False)

    @property
    def count(self) -> int:
        return len(self.members)


def _weighted_com(potential: DiscretePotential, members: NDArray[np.int64]) -> Float:
    w = potential.weights[members]
    return (potential.points[members] * w[:, None]).sum(axis=0) / w.sum()


def _members_below(potential: DiscretePotential, base: int, slope: Float, height: float) -> NDArray[np.int64]:
    y0 = potential.points[base]
    cut = potential.values[base] + (potential.points - y0) @ slope + height
    return np.nonzero(potential.values < cut)[0]


def _try_normalization(points: Float) -> Optional[AffineNormalization]:
    try:
        return john_normalize(points)
    except Exception:
        return None


def sublevel_section(potential: DiscretePotential, base_index: int, height: float) -> Section:
    """Points below the supporting plane of the base point raised by ``height``."""
    if height <= 0:
        raise NullSectionError("section height must be positive")
    slope = potential.slopes[base_index].copy()
    members = _members_below(potential, base_index, slope, height)
    return Section(
        base_index=base_index,
        base_point=potential.points[base_index].copy(),
        height=height,
        slope=slope,
        members=members,
        kind="sublevel",
        centre_of_mass=_weighted_com(potential, members),
        normalization=_try_normalization(potential.points[members]),
    )


def _member_diameter(points: Float) -> float:
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points[:, 0].max() - points[:, 0].min())
    try:
        verts = points[ConvexHull(points).vertices]
    except QhullError:
        verts = points
    diff = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2).max()))


def centred_section(
    potential: DiscretePotential,
    base_index: int,
    height: float,
    max_iter: int = 200,
    balance: float = 0.05,
) -> Section:
    """Section whose cutting slope is tuned until the mass centre sits on
    the base point.

    The slope update is a damped Newton step using the curvature scale
    2 h / r^2 implied by the current section radius; quadratic potentials
    converge geometrically. Failure to balance raises, reporting the final
    centre offset.
    """
    if height <= 0:
        raise NullSectionError("section height must be positive")
    y0 = potential.points[base_index]
    slope = potential.slopes[base_index].astype(float).copy()
    dim = potential.dim
    members = _members_below(potential, base_index, slope, height)
    offset_norm = np.inf
    tol = 0.0
    for _ in range(max_iter):
        members = _members_below(potential, base_index, slope, height)
        com = _weighted_com(potential, members)
        offset = y0 - com
        offset_norm = float(np.linalg.norm(offset))
        tol = balance * max(_member_diameter(potential.points[members]), potential.spacing)
        if offset_norm <= tol:
            return Section(
                base_index=base_index,
                base_point=y0.copy(),
                height=height,
                slope=slope,
                members=members,
                kind="centred",
                centre_of_mass=com,
                normalization=_try_normalization(potential.points[members]),
            )
        w = potential.weights[members]
        r2 = float(
            (w * ((potential.points[members] - com) ** 2).sum(axis=1)).sum() / w.sum()
        )
        r2 = max(r2, potential.spacing**2)
        curvature = 2.0 * height * dim / ((dim + 2.0) * r2)
        slope = slope + 0.5 * curvature * offset
    raise SectionBalanceError(offset_norm, tol)


def doubling_ratio(potential: DiscretePotential, section: Section) -> float:
    """Measure of the half-scaled section over the measure of the section.

    The half section dilates the member hull by 1/2 about the mass centre.
    Sections carrying no gradient mass have no ratio and raise.
    """
    full = ma_measure(potential, section.members)
    scale = float(np.abs(potential.values).max()) + 1.0
    if full <= 1e-14 * scale:
        raise NullSectionError("section carries no gradient mass")
    pts = potential.points[section.members]
    com = section.centre_of_mass
    doubled = com + 2.0 * (potential.points - com)
    if potential.dim == 1:
        lo, hi = pts[:, 0].min(), pts[:, 0].max()
        inside = (doubled[:, 0] >= lo) & (doubled[:, 0] <= hi)
    else:
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            raise NullSectionError("section hull is degenerate") from exc
        eq = hull.equations
        inside = np.all(doubled @ eq[:, :-1].T + eq[:, -1][None, :] <= 1e-9, axis=1)
    half_members = np.nonzero(inside)[0]
    if half_members.size == 0:
        return 0.0
    return float(ma_measure(potential, half_members) / full)


class ExponentFit(NamedTuple):
    beta: float
    residual: float


def holder_exponent(
    potential: DiscretePotential, base_index: int, radii: Float
) -> ExponentFit:
    """Growth exponent of the excess above the supporting plane.

    Fits log sup-excess against log radius by least squares and reports
    the fitted growth power minus one, so quadratic growth scores 1.
    Potentials indistinguishable from their supporting plane raise.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise InsufficientPointsError("need at least three radii for a fit")
    y0 = potential.points[base_index]
    plane = (
        potential.values[base_index]
        + (potential.points - y0) @ potential.slopes[base_index]
    )
    excess = np.maximum(potential.values - plane, 0.0)
    dist = np.linalg.norm(potential.points - y0, axis=1)
    sup = np.empty(radii.size)
    for i, r in enumerate(np.sort(radii)):
        inside = dist <= r
        sup[i] = excess[inside].max() if inside.any() else 0.0
    if sup.max() < 1e-12:
        raise FlatPotentialError("flat at base point")
    good = sup > 1e-15
    if good.sum() < 3:
        raise FlatPotentialError("flat at base point")
    lr = np.log(np.sort(radii)[good])
    ls = np.log(sup[good])
    coeff = np.polyfit(lr, ls, 1)
    fit = np.polyval(coeff, lr)
    residual = float(np.sqrt(np.mean((fit - ls) ** 2)))
    return ExponentFit(beta=float(coeff[0] - 1.0), residual=residual)
