"""Partial transport with quadratic cost between two weighted clouds.

A transport fraction m below the marginal masses is handled by one
reservoir node per side: a virtual target absorbing unshipped source mass
and a virtual source filling unmet demand, both connected by zero-cost
arcs, plus a zero-cost link between the two reservoirs. When the clouds
are strictly separated every real pair costs a positive amount, so the
optimum routes nothing through the reservoir link and moves exactly m
between real nodes. Overlapping geometries break that argument and are
refused.

Dual multipliers of the reservoir arcs encode the slack of the obstacle
problem: sigma and tau are the gaps between the constrained potentials and
the obstacle (|x|^2 - lambda) / 2, and lambda itself is the multiplier of
the reservoir link.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .errors import InconsistentPlanError, InvariantViolation, MassError, OverlapError
from .geometry import ConvexDomain, WeightedCloud, separation_distance
from .simplex import solve_transport

Float = NDArray[np.float64]


def pairwise_cost(x: Float, y: Float) -> Float:
    """Quadratic cost matrix |x_i - y_j|^2 / 2."""
    sq = (
        (x**2).sum(axis=1)[:, None]
        + (y**2).sum(axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return 0.5 * np.maximum(sq, 0.0)


def obstacle(points: Float, lam: float) -> Float:
    """Height of the obstacle (|x|^2 - lambda) / 2 at the given points."""
    return 0.5 * ((points**2).sum(axis=1) - lam)


@dataclass
class PartialProblem:
    """Source and target clouds plus the mass fraction to move.

    Domains are optional; when present they gate the overlap refusal and
    feed boundary-aware diagnostics downstream.
    """

    source: WeightedCloud
    target: WeightedCloud
    mass: float
    source_domain: Optional[ConvexDomain] = None
    target_domain: Optional[ConvexDomain] = None

    def __post_init__(self) -> None:
        self.mass = float(self.mass)
        if not np.isfinite(self.mass) or self.mass <= 0:
            raise MassError("transport mass must be positive")
        cap = min(self.source.total_mass, self.target.total_mass)
        if self.mass > cap * (1.0 + 1e-12):
            raise MassError(
                f"mass exceeds marginal: requested {self.mass!r}, available {cap!r}"
            )
        if self.source.dim != self.target.dim:
            raise InvariantViolation("clouds live in different dimensions")

    @property
    def spacing(self) -> float:
        return max(self.source.spacing, self.target.spacing)


@dataclass
class TransportPlan:
    """Sparse support of an optimal plan plus the raw solver potentials.

    ``reservoir_to_target`` and ``source_to_reservoir`` report the virtual
    arcs; ``reservoir_link`` is the mass short-circuiting both reservoirs
    and must vanish for separated geometries.
    """

    src_idx: NDArray[np.int64]
    tgt_idx: NDArray[np.int64]
    mass: Float
    objective: float
    source_to_reservoir: Float
    reservoir_to_target: Float
    reservoir_link: float
    potentials: Optional[tuple[Float, Float]] = field(default=None, repr=False)

    def row_masses(self, n_sources: int) -> Float:
        return np.bincount(self.src_idx, weights=self.mass, minlength=n_sources)

    def col_masses(self, n_targets: int) -> Float:
        return np.bincount(self.tgt_idx, weights=self.mass, minlength=n_targets)

    @property
    def moved(self) -> float:
        return float(self.mass.sum())

    def validate(self, problem: PartialProblem, tol: float = 1e-9) -> None:
        """Feasibility of the stored support against the problem marginals."""
        scale = max(1.0, problem.mass)
        if np.any(self.mass <= 0):
            raise InvariantViolation("plan support carries nonpositive mass")
        if abs(self.moved - problem.mass) > 1e-12 * scale:
            raise InvariantViolation(
                f"plan moves {self.moved!r} instead of {problem.mass!r}"
            )
        rows = self.row_masses(problem.source.size)
        cols = self.col_masses(problem.target.size)
        if np.any(rows > problem.source.weights * (1 + 1e-9) + tol * scale):
            raise InvariantViolation("a source row exceeds its marginal")
        if np.any(cols > problem.target.weights * (1 + 1e-9) + tol * scale):
            raise InvariantViolation("a target column exceeds its marginal")


@dataclass
class DualPair:
    """Constrained potentials of the obstacle formulation.

    psi lives on source points, phi on target points, both bounded below by
    the obstacle with height parameter ``lam``. sigma and tau are the
    obstacle gaps psi - h and phi - h; they vanish off the active regions.
    """

    psi: Float
    phi: Float
    lam: float
    sigma: Float
    tau: Float

    def validate(self, problem: PartialProblem, plan: TransportPlan,
                 rel_tol: float = 1e-6) -> float:
        """Cross-checks duality; returns the relative gap.

        The dual value of the obstacle formulation is
        -<a, sigma> - <b, tau> + m * lambda, which must meet the primal cost.
        """
        a, b = problem.source.weights, problem.target.weights
        dual = float(-(a @ self.sigma) - (b @ self.tau) + problem.mass * self.lam)
        moved = problem.source.points[plan.src_idx] - problem.target.points[plan.tgt_idx]
        primal = float(np.dot(plan.mass, 0.5 * (moved**2).sum(axis=1)))
        gap = abs(primal - dual) / max(1.0, abs(primal))
        if gap > rel_tol:
            raise InconsistentPlanError(
                f"inconsistent plan: relative duality gap {gap:.3e}"
            )
        if self.sigma.min() < -1e-9 or self.tau.min() < -1e-9:
            raise InconsistentPlanError("obstacle gap went negative")
        return gap


def solve_partial(problem: PartialProblem, block_arcs: int = 1 << 17) -> TransportPlan:
    """Solve the partial problem through the reservoir reduction.

    Refuses touching geometries: the reduction is exact only when all real
    pair costs are strictly positive.
    """
    xs, ys = problem.source.points, problem.target.points
    a, b = problem.source.weights, problem.target.weights
    cost = pairwise_cost(xs, ys)
    scale = max(problem.source.spacing, problem.target.spacing)
    if float(cost.min()) <= (1e-9 * scale) ** 2:
        raise OverlapError("overlap unsupported: clouds share a point")
    if problem.source_domain is not None and problem.target_domain is not None:
        if separation_distance(problem.source_domain, problem.target_domain) <= 0.0:
            raise OverlapError("overlap unsupported: domains touch")

    m_src, n_tgt = len(a), len(b)
    slack_src = max(problem.source.total_mass - problem.mass, 0.0)
    slack_tgt = max(problem.target.total_mass - problem.mass, 0.0)
    ext = np.zeros((m_src + 1, n_tgt + 1))
    ext[:m_src, :n_tgt] = cost
    supply = np.r_[a, slack_tgt]
    demand = np.r_[b, slack_src]
    res = solve_transport(ext, supply, demand, block_arcs=block_arcs)

    real = (res.src_idx < m_src) & (res.tgt_idx < n_tgt)
    src = res.src_idx[real]
    tgt = res.tgt_idx[real]
    flow = res.flow[real]

    to_reservoir = np.zeros(m_src)
    sel = (res.src_idx < m_src) & (res.tgt_idx == n_tgt)
    np.add.at(to_reservoir, res.src_idx[sel], res.flow[sel])
    from_reservoir = np.zeros(n_tgt)
    sel = (res.src_idx == m_src) & (res.tgt_idx < n_tgt)
    np.add.at(from_reservoir, res.tgt_idx[sel], res.flow[sel])
    link = res.flow[(res.src_idx == m_src) & (res.tgt_idx == n_tgt)]
    link_mass = float(link.sum()) if link.size else 0.0

    moved = float(flow.sum())
    if abs(moved - problem.mass) > 1e-9 * max(1.0, problem.mass):
        raise InvariantViolation(
            f"reduction moved {moved!r} real mass instead of {problem.mass!r}"
        )
    if link_mass > 1e-12 * max(1.0, problem.mass):
        raise InvariantViolation(
            f"reservoir link carries {link_mass!r} despite separated geometry"
        )

    objective = float(np.dot(flow, cost[src, tgt]))
    plan = TransportPlan(
        src_idx=src,
        tgt_idx=tgt,
        mass=flow,
        objective=objective,
        source_to_reservoir=to_reservoir,
        reservoir_to_target=from_reservoir,
        reservoir_link=link_mass,
        potentials=(res.potential_source, res.potential_target),
    )
    plan.validate(problem)
    return plan


def recover_duals(problem: PartialProblem, plan: TransportPlan,
                  rel_tol: float = 1e-6) -> DualPair:
    """Convert solver potentials to obstacle-problem potentials.

    Plans built by hand (without stored potentials) trigger a fresh solve;
    the given plan is then judged against those optimal potentials and
    rejected as inconsistent if its cost leaves a duality gap.
    """
    if plan.potentials is None:
        solved = solve_partial(problem)
        potentials = solved.potentials
    else:
        potentials = plan.potentials
    u, v = potentials
    m_src, n_tgt = problem.source.size, problem.target.size
    if u.shape[0] != m_src + 1 or v.shape[0] != n_tgt + 1:
        raise InconsistentPlanError("potential vectors do not match the problem")
    u_res, v_res = u[m_src], v[n_tgt]
    sigma = -(u[:m_src] + v_res)
    tau = -(u_res + v[:n_tgt])
    lam = float(-(u_res + v_res))
    # Clamp float noise only; genuinely negative gaps must fail validation.
    if sigma.min() > -1e-9:
        sigma = np.maximum(sigma, 0.0)
    if tau.min() > -1e-9:
        tau = np.maximum(tau, 0.0)
    psi = sigma + obstacle(problem.source.points, lam)
    phi = tau + obstacle(problem.target.points, lam)
    pair = DualPair(psi=psi, phi=phi, lam=lam, sigma=sigma, tau=tau)
    pair.validate(problem, plan, rel_tol=rel_tol)
    return pair


def matched_barycenters(problem: PartialProblem, plan: TransportPlan,
                        side: str = "source") -> Float:
    """Mass-weighted partner barycenter per point; identity where unmatched.

    For sources this is the discrete transport map, the gradient of the
    constrained potential. Points carrying no plan mass sit on the obstacle
    whose gradient is the identity, hence the fallback.
    """
    if side == "source":
        n_pts = problem.source.size
        own = problem.source.points
        other = problem.target.points
        idx, partner = plan.src_idx, plan.tgt_idx
    elif side == "target":
        n_pts = problem.target.size
        own = problem.target.points
        other = problem.source.points
        idx, partner = plan.tgt_idx, plan.src_idx
    else:
        raise ValueError(f"unknown side {side!r}")
    carried = np.bincount(idx, weights=plan.mass, minlength=n_pts)
    out = own.copy()
    dims = other.shape[1]
    numer = np.zeros((n_pts, dims))
    for d in range(dims):
        numer[:, d] = np.bincount(
            idx, weights=plan.mass * other[partner, d], minlength=n_pts
        )
    matched = carried > 0
    out[matched] = numer[matched] / carried[matched, None]
    return out


def cyclical_monotonicity_violation(
    plan: TransportPlan,
    source_points: Float,
    target_points: Float,
    max_exhaustive: int = 10_000,
    samples: int = 1_000_000,
    seed: int = 20_240_501,
) -> float:
    """Worst pairwise swap gain over the plan support, floored at zero.

    For quadratic cost the gain of swapping partners between entries k and l
    is -(x_k - x_l) . (y_k - y_l), so a positive value certifies that the
    support is not cyclically monotone. Exhaustive over all entry pairs up
    to ``max_exhaustive`` support entries, seeded sampling beyond that.
    """
    k = plan.src_idx.shape[0]
    if k <= 1:
        return 0.0
    xe = source_points[plan.src_idx]
    ye = target_points[plan.tgt_idx]
    if k <= max_exhaustive:
        diag = np.einsum("ij,ij->i", xe, ye)
        worst = np.inf
        chunk = max(1, 2**22 // max(k, 1))
        for lo in range(0, k, chunk):
            hi = min(lo + chunk, k)
            g = xe[lo:hi] @ ye.T
            gt = ye[lo:hi] @ xe.T
            d = diag[lo:hi, None] + diag[None, :] - g - gt
            worst = min(worst, float(d.min()))
        return max(0.0, -worst)
    rng = np.random.default_rng(seed)
    first = rng.integers(0, k, size=samples)
    second = rng.integers(0, k, size=samples)
    d = np.einsum(
        "ij,ij->i", xe[first] - xe[second], ye[first] - ye[second]
    )
    return max(0.0, -float(d.min()))
