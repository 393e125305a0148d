"""Primal network simplex for dense balanced transportation problems.

The graph is bipartite: every source connects to every target, plus one
artificial root node tied to each real node by a big-M arc so the initial
spanning tree is strongly feasible. Pivots keep strong feasibility by
always dropping the last blocking arc encountered while walking the pivot
cycle from its apex, which rules out cycling under degeneracy.

Pricing scans the dense cost matrix in contiguous row blocks with a
persistent cursor and picks the most negative reduced cost inside the
block. numpy's argmin returns the first minimum, so ties break toward the
lexicographically smallest (source, target) pair and runs are repeatable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import SolverFailure

Float = NDArray[np.float64]

_NONE = -9  # sentinel parent of the artificial root


@dataclass
class FlowResult:
    """Optimal basis of a balanced transportation problem.

    ``src_idx``, ``tgt_idx``, ``flow`` list the support of the optimal plan.
    ``potential_source`` and ``potential_target`` are simplex multipliers in
    the convention  cost[i, j] - u[i] - v[j] >= 0  with equality on basic
    arcs, i.e. classical transportation duals.
    """

    src_idx: NDArray[np.int64]
    tgt_idx: NDArray[np.int64]
    flow: Float
    potential_source: Float
    potential_target: Float
    objective: float
    iterations: int
    min_reduced_cost: float


class _Simplex:
    def __init__(self, cost: Float, supply: Float, demand: Float, block_arcs: int):
        self.C = np.ascontiguousarray(cost, dtype=float)
        self.m, self.n = self.C.shape
        m, n = self.m, self.n
        self.mn = m * n
        self.root = m + n
        total_in = float(supply.sum())
        total_out = float(demand.sum())
        scale = max(1.0, abs(total_in))
        if abs(total_in - total_out) > 1e-9 * scale:
            raise SolverFailure(
                f"unbalanced problem: supply {total_in!r} vs demand {total_out!r}"
            )
        cmax = float(np.abs(self.C).max()) if self.mn else 1.0
        self.faux_inf = (m + n) * max(cmax, 1.0) + 1.0
        self.tol = 1e-10 * max(1.0, cmax)

        # Artificial arcs, one per real node. Supply nodes and zero-mass
        # nodes point toward the root; that orientation is what makes the
        # initial tree strongly feasible under degeneracy.
        self.art_tail = np.empty(m + n, dtype=np.int64)
        self.art_head = np.empty(m + n, dtype=np.int64)
        for i in range(m):
            self.art_tail[i], self.art_head[i] = i, self.root
        for j in range(n):
            node = m + j
            if demand[j] > 0:
                self.art_tail[node], self.art_head[node] = self.root, node
            else:
                self.art_tail[node], self.art_head[node] = node, self.root

        self.flow = np.zeros(self.mn + m + n)
        self.flow[self.mn : self.mn + m] = supply
        self.flow[self.mn + m :] = demand

        self.pi = np.zeros(m + n + 1)
        self.pi[:m] = self.faux_inf
        for j in range(n):
            self.pi[m + j] = -self.faux_inf if demand[j] > 0 else self.faux_inf

        # Spanning tree state: parent, arc to parent, subtree size, and the
        # depth-first thread (next / prev / last) used for subtree walks.
        nodes = m + n
        self.parent = [self.root] * nodes + [_NONE]
        self.parent_arc = [self.mn + k for k in range(nodes)] + [_NONE]
        self.size = [1] * nodes + [nodes + 1]
        self.next = list(range(1, nodes)) + [self.root, 0]
        self.prev = [self.root] + list(range(nodes - 1)) + [nodes - 1]
        self.last = list(range(nodes)) + [nodes - 1]

        self.block_rows = max(1, min(m, block_arcs // max(n, 1)))
        self.cursor = 0

    # -- arc helpers -------------------------------------------------------

    def endpoints(self, e: int) -> tuple[int, int]:
        if e < self.mn:
            return e // self.n, self.m + e % self.n
        k = e - self.mn
        return int(self.art_tail[k]), int(self.art_head[k])

    def arc_cost(self, e: int) -> float:
        if e < self.mn:
            return float(self.C.flat[e])
        return self.faux_inf

    # -- pricing -----------------------------------------------------------

    def find_entering(self) -> int:
        """Most negative reduced cost within the first block that has one,
        starting at the persistent row cursor. Returns -1 at optimality."""
        m, n = self.m, self.n
        pi_s = self.pi[:m]
        pi_t = self.pi[m : m + n]
        rows_done = 0
        r0 = self.cursor
        while rows_done < m:
            r1 = min(r0 + self.block_rows, m)
            block = self.C[r0:r1] - pi_s[r0:r1, None] + pi_t[None, :]
            k = int(np.argmin(block))
            if block.flat[k] < -self.tol:
                self.cursor = r0
                return (r0 + k // n) * n + k % n
            rows_done += r1 - r0
            r0 = 0 if r1 >= m else r1
        return -1

    # -- tree walks ---------------------------------------------------------

    def trace_path(self, v: int, w: int) -> tuple[list[int], list[int]]:
        nodes = [v]
        arcs = []
        while v != w:
            arcs.append(self.parent_arc[v])
            v = self.parent[v]
            nodes.append(v)
        return nodes, arcs

    def find_apex(self, p: int, q: int) -> int:
        size = self.size
        parent = self.parent
        size_p, size_q = size[p], size[q]
        while True:
            while size_p < size_q:
                p = parent[p]
                size_p = size[p]
            while size_p > size_q:
                q = parent[q]
                size_q = size[q]
            if size_p == size_q:
                if p != q:
                    p = parent[p]
                    size_p = size[p]
                    q = parent[q]
                    size_q = size[q]
                else:
                    return p

    def find_cycle(self, e: int, p: int, q: int) -> tuple[list[int], list[int]]:
        """Cycle nodes and arcs in traversal order apex -> p -> q -> apex.
        nodes[k] is the start node of arcs[k] along the traversal."""
        w = self.find_apex(p, q)
        nodes, arcs = self.trace_path(p, w)
        nodes.reverse()
        arcs.reverse()
        arcs.append(e)
        nodes_r, arcs_r = self.trace_path(q, w)
        del nodes_r[-1]
        nodes += nodes_r
        arcs += arcs_r
        return nodes, arcs

    # -- pivot --------------------------------------------------------------

    def residual(self, e: int, start: int) -> float:
        tail, _ = self.endpoints(e)
        if tail == start:
            return np.inf  # forward arc, uncapacitated
        return float(self.flow[e])

    def find_leaving(self, nodes: list[int], arcs: list[int]) -> tuple[int, int, int]:
        """Last blocking arc while walking the cycle backward from the
        apex keeps the basis strongly feasible."""
        best = np.inf
        leave = -1
        start = -1
        for s, e in zip(reversed(nodes), reversed(arcs)):
            r = self.residual(e, s)
            if r < best:
                best = r
                leave = e
                start = s
        if leave < 0 or not np.isfinite(best):
            raise SolverFailure("pivot cycle has no blocking arc")
        tail, head = self.endpoints(leave)
        other = head if tail == start else tail
        return leave, start, other

    def augment(self, nodes: list[int], arcs: list[int], delta: float) -> None:
        if delta == 0.0:
            return
        for s, e in zip(nodes, arcs):
            tail, _ = self.endpoints(e)
            if tail == s:
                self.flow[e] += delta
            else:
                self.flow[e] -= delta

    def remove_edge(self, s: int, t: int) -> None:
        """Detach the subtree rooted at t, where s is t's parent."""
        size_t = self.size[t]
        prev_t = self.prev[t]
        last_t = self.last[t]
        next_last_t = self.next[last_t]
        self.parent[t] = _NONE
        self.parent_arc[t] = _NONE
        self.next[prev_t] = next_last_t
        self.prev[next_last_t] = prev_t
        self.next[last_t] = t
        self.prev[t] = last_t
        while s != _NONE:
            self.size[s] -= size_t
            if self.last[s] == last_t:
                self.last[s] = prev_t
            s = self.parent[s]

    def make_root(self, q: int) -> None:
        """Reverse parent pointers so q becomes the root of its subtree."""
        ancestors = []
        v = q
        while v != _NONE:
            ancestors.append(v)
            v = self.parent[v]
        ancestors.reverse()
        for p, q_ in zip(ancestors, ancestors[1:]):
            size_p = self.size[p]
            last_p = self.last[p]
            prev_q = self.prev[q_]
            last_q = self.last[q_]
            next_last_q = self.next[last_q]
            self.parent[p] = q_
            self.parent[q_] = _NONE
            self.parent_arc[p] = self.parent_arc[q_]
            self.parent_arc[q_] = _NONE
            self.size[p] = size_p - self.size[q_]
            self.size[q_] = size_p
            self.next[prev_q] = next_last_q
            self.prev[next_last_q] = prev_q
            self.next[last_q] = q_
            self.prev[q_] = last_q
            if last_p == last_q:
                self.last[p] = prev_q
                last_p = prev_q
            self.prev[p] = last_q
            self.next[last_q] = p
            self.next[last_p] = q_
            self.prev[q_] = last_p
            self.last[q_] = last_p

    def add_edge(self, e: int, p: int, q: int) -> None:
        """Attach the subtree rooted at q under p via arc e."""
        last_p = self.last[p]
        next_last_p = self.next[last_p]
        size_q = self.size[q]
        last_q = self.last[q]
        self.parent[q] = p
        self.parent_arc[q] = e
        self.next[last_p] = q
        self.prev[q] = last_p
        self.prev[next_last_p] = last_q
        self.next[last_q] = next_last_p
        while p != _NONE:
            self.size[p] += size_q
            if self.last[p] == last_p:
                self.last[p] = last_q
            p = self.parent[p]

    def subtree(self, q: int) -> list[int]:
        out = []
        v = q
        for _ in range(self.size[q]):
            out.append(v)
            v = self.next[v]
        return out

    def update_potentials(self, e: int, p: int, q: int) -> None:
        tail, head = self.endpoints(e)
        c = self.arc_cost(e)
        if q == head:
            d = self.pi[p] - c - self.pi[q]
        else:
            d = self.pi[p] + c - self.pi[q]
        self.pi[np.array(self.subtree(q), dtype=np.int64)] += d

    def pivot(self, e: int) -> None:
        p, q = self.endpoints(e)
        nodes, arcs = self.find_cycle(e, p, q)
        leave, s, t = self.find_leaving(nodes, arcs)
        self.augment(nodes, arcs, self.residual(leave, s))
        if e != leave:
            if self.parent[t] != s:
                s, t = t, s
            if arcs.index(e) > arcs.index(leave):
                p, q = q, p
            self.remove_edge(s, t)
            self.make_root(q)
            self.add_edge(e, p, q)
            self.update_potentials(e, p, q)

    # -- final extraction ----------------------------------------------------

    def recompute_potentials(self) -> None:
        """Rebuild exact potentials from the final tree in one pass; the
        thread visits parents before children."""
        self.pi[self.root] = 0.0
        v = self.next[self.root]
        while v != self.root:
            e = self.parent_arc[v]
            tail, head = self.endpoints(e)
            c = self.arc_cost(e)
            if v == head:
                self.pi[v] = self.pi[tail] - c
            else:
                self.pi[v] = self.pi[head] + c
            v = self.next[v]

    def solve(self) -> FlowResult:
        m, n = self.m, self.n
        cap = 200_000 + 50 * (m + n)
        iterations = 0
        while True:
            e = self.find_entering()
            if e < 0:
                break
            iterations += 1
            if iterations > cap:
                raise SolverFailure(f"pivot cap {cap} exceeded; basis is cycling")
            self.pivot(e)
        art = self.flow[self.mn :]
        total = max(1.0, float(self.flow[: self.mn].sum()))
        if float(np.abs(art).max(initial=0.0)) > 1e-9 * total:
            raise SolverFailure("artificial arcs still carry flow at optimality")
        self.recompute_potentials()
        real = self.flow[: self.mn]
        support = np.nonzero(real > 0.0)[0]
        src = (support // n).astype(np.int64)
        tgt = (support % n).astype(np.int64)
        flows = real[support].copy()
        objective = float(np.dot(flows, self.C[src, tgt]))
        u = self.pi[:m].copy()
        v = -self.pi[m : m + n].copy()
        rc_min = float((self.C - u[:, None] - v[None, :]).min()) if self.mn else 0.0
        return FlowResult(
            src_idx=src,
            tgt_idx=tgt,
            flow=flows,
            potential_source=u,
            potential_target=v,
            objective=objective,
            iterations=iterations,
            min_reduced_cost=rc_min,
        )


def solve_transport(
    cost: Float,
    supply: Float,
    demand: Float,
    block_arcs: int = 1 << 17,
) -> FlowResult:
    """Solve min sum cost[i, j] * x[i, j] over x >= 0 with fixed row sums
    ``supply`` and column sums ``demand`` (which must balance).

    Zero supplies and demands are allowed. The returned basis satisfies
    complementary slackness against the returned potentials to within the
    pricing tolerance.
    """
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    if cost.ndim != 2 or cost.shape != (supply.shape[0], demand.shape[0]):
        raise SolverFailure("cost matrix shape does not match the marginals")
    if np.any(supply < 0) or np.any(demand < 0):
        raise SolverFailure("marginals must be nonnegative")
    if not (np.all(np.isfinite(cost)) and np.all(np.isfinite(supply)) and np.all(np.isfinite(demand))):
        raise SolverFailure("inputs must be finite")
    return _Simplex(cost, supply, demand, block_arcs).solve()
