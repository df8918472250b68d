"""Discrete convex envelopes on rectangular lattices by policy iteration.

The largest grid function that is midpoint-convex along a finite set of
lattice directions, stays below an optional obstacle, matches Dirichlet data,
and satisfies one-sided slope caps at the ends of a designated axis solves

    value[P] = min over candidates of  (average / cap / obstacle)(P)

at every free node.  This is a monotone degenerate-elliptic scheme; we solve
it with Howard's algorithm: pick the active candidate per node, solve the
resulting sparse linear system exactly, re-select, and stop once the residual
against the true minimum falls below tolerance.  Each policy system is an
M-matrix anchored by the Dirichlet rows, so the sparse direct solve is exact
up to rounding and the iteration converges in a handful of steps.

Direction sets are primitive integer vectors of bounded width; widening the
stencil with resolution (width ~ h^{-1/2}) balances the directional and
Taylor consistency errors and yields first-order convergence overall.
"""

from math import gcd

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import MaxIterExceeded


def primitive_directions(ndim, width, cross_width=None):
    """Primitive lattice directions, one per line through the origin.

    Axis directions are always included.  For ndim == 2 the off-axis set is
    all coprime (a, b) with 1 <= a <= width and 1 <= |b| <= width; for
    ndim == 3 the transverse width can be reduced via ``cross_width``.
    """
    if cross_width is None:
        cross_width = width
    dirs = [tuple(int(i == a) for i in range(ndim)) for a in range(ndim)]
    if ndim == 2:
        for a in range(1, width + 1):
            for b in range(-width, width + 1):
                if b != 0 and gcd(a, abs(b)) == 1:
                    dirs.append((a, b))
    elif ndim == 3:
        rng = range(-cross_width, cross_width + 1)
        seen = set(dirs)
        for a in range(0, width + 1):
            for b in rng:
                for c in rng:
                    v = (a, b, c)
                    if v == (0, 0, 0):
                        continue
                    # keep one representative per line
                    if a == 0 and (b < 0 or (b == 0 and c < 0)):
                        continue
                    if a == 0 and b == 0:
                        continue
                    g = gcd(gcd(abs(a), abs(b)), abs(c))
                    if g != 1:
                        continue
                    if v not in seen:
                        seen.add(v)
                        dirs.append(v)
    else:
        raise ValueError("only 2-D and 3-D lattices are supported")
    return np.array(dirs, dtype=np.int64)


class EnvelopeProblem:
    """Assembled candidate structure for one lattice envelope solve."""

    def __init__(self, shape, dirichlet_mask, dirichlet_values, directions,
                 cap_axis=None, cap_low=0.0, cap_high=0.0, obstacle=None):
        self.shape = tuple(shape)
        self.n = int(np.prod(self.shape))
        self.dir_mask = np.asarray(dirichlet_mask, bool).ravel()
        self.dir_vals = np.asarray(dirichlet_values, float).ravel()
        self.obstacle = None if obstacle is None else np.asarray(obstacle, float).ravel()
        self.free = ~self.dir_mask
        strides = np.array(
            [int(np.prod(self.shape[d + 1:])) for d in range(len(self.shape))],
            dtype=np.int64,
        )
        idx = np.indices(self.shape).reshape(len(self.shape), -1)

        # averaging candidates: one per direction, valid where both the
        # forward and backward neighbor stay on the grid
        self.avg_offsets = []
        self.avg_valid = []
        for v in np.asarray(directions, dtype=np.int64):
            off = int(v @ strides)
            ok = np.ones(self.n, dtype=bool)
            for d, step in enumerate(v):
                if step:
                    ok &= (idx[d] + step < self.shape[d]) & (idx[d] + step >= 0)
                    ok &= (idx[d] - step < self.shape[d]) & (idx[d] - step >= 0)
            ok &= self.free
            self.avg_offsets.append(off)
            self.avg_valid.append(ok)

        # slope caps at the two ends of cap_axis: value <= inner + constant
        self.cap_nodes = []
        self.cap_inner = []
        self.cap_const = []
        if cap_axis is not None:
            ax_stride = int(strides[cap_axis])
            lo_nodes = np.flatnonzero((idx[cap_axis] == 0) & self.free)
            hi_nodes = np.flatnonzero(
                (idx[cap_axis] == self.shape[cap_axis] - 1) & self.free
            )
            self.cap_nodes = [lo_nodes, hi_nodes]
            self.cap_inner = [lo_nodes + ax_stride, hi_nodes - ax_stride]
            self.cap_const = [cap_low, cap_high]

    def candidate_min(self, u):
        """Pointwise minimum over all candidates, +inf where none applies."""
        best = np.full(self.n, np.inf)
        for off, ok in zip(self.avg_offsets, self.avg_valid):
            vals = np.full(self.n, np.inf)
            nodes = np.flatnonzero(ok)
            vals[nodes] = 0.5 * (u[nodes + off] + u[nodes - off])
            np.minimum(best, vals, out=best)
        for nodes, inner, c in zip(self.cap_nodes, self.cap_inner, self.cap_const):
            np.minimum.at(best, nodes, u[inner] + c)
        if self.obstacle is not None:
            np.minimum(best, np.where(self.free, self.obstacle, np.inf), out=best)
        return best

    def active_policy(self, u):
        """Per-node argmin over candidates, encoded for row assembly.

        Returns (kind, aux) arrays: kind 0 = averaging with offset aux,
        kind 1 = cap toward node aux (constant looked up separately),
        kind 2 = obstacle, kind 3 = Dirichlet.
        """
        best = np.full(self.n, np.inf)
        kind = np.full(self.n, -1, dtype=np.int8)
        aux = np.zeros(self.n, dtype=np.int64)
        cap_c = np.zeros(self.n)
        for off, ok in zip(self.avg_offsets, self.avg_valid):
            nodes = np.flatnonzero(ok)
            vals = 0.5 * (u[nodes + off] + u[nodes - off])
            upd = vals < best[nodes]
            sel = nodes[upd]
            best[sel] = vals[upd]
            kind[sel] = 0
            aux[sel] = off
        for nodes, inner, c in zip(self.cap_nodes, self.cap_inner, self.cap_const):
            vals = u[inner] + c
            upd = vals < best[nodes]
            sel = nodes[upd]
            best[sel] = vals[upd]
            kind[sel] = 1
            aux[sel] = inner[upd]
            cap_c[sel] = c
        if self.obstacle is not None:
            nodes = np.flatnonzero(self.free)
            upd = self.obstacle[nodes] < best[nodes]
            sel = nodes[upd]
            kind[sel] = 2
        kind[self.dir_mask] = 3
        return kind, aux, cap_c

    def solve_policy(self, kind, aux, cap_c):
        """Exact solve of the linear system fixed by one policy."""
        rows = [np.arange(self.n)]
        cols = [np.arange(self.n)]
        data = [np.ones(self.n)]
        rhs = np.zeros(self.n)

        avg = np.flatnonzero(kind == 0)
        off = aux[avg]
        rows.append(np.concatenate([avg, avg]))
        cols.append(np.concatenate([avg + off, avg - off]))
        data.append(np.full(2 * avg.size, -0.5))

        cap = np.flatnonzero(kind == 1)
        rows.append(cap)
        cols.append(aux[cap])
        data.append(np.full(cap.size, -1.0))
        rhs[cap] = cap_c[cap]

        if self.obstacle is not None:
            obs = np.flatnonzero(kind == 2)
            rhs[obs] = self.obstacle[obs]
        rhs[self.dir_mask] = self.dir_vals[self.dir_mask]

        a = sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        )
        return spla.spsolve(a, rhs)


def solve_envelope(shape, init, dirichlet_mask, dirichlet_values, directions,
                   cap_axis=None, cap_low=0.0, cap_high=0.0, obstacle=None,
                   tol=1e-10, max_iter=80):
    """Run Howard iteration to the discrete envelope fixed point.

    Returns (values, info) where info records iterations and final residual.
    Residual is ``max over free nodes of |u - min(candidates)(u)|``, measured
    against the true pointwise minimum, not the last policy.
    """
    prob = EnvelopeProblem(shape, dirichlet_mask, dirichlet_values, directions,
                           cap_axis, cap_low, cap_high, obstacle)
    u = np.asarray(init, float).ravel().copy()
    u[prob.dir_mask] = prob.dir_vals[prob.dir_mask]
    residual = np.inf
    best_residual = np.inf
    stall = 0
    prev_kind = None
    for it in range(1, max_iter + 1):
        kind, aux, cap_c = prob.active_policy(u)
        if np.any(kind < 0):
            raise MaxIterExceeded("isolated node with no applicable constraint")
        u_new = prob.solve_policy(kind, aux, cap_c)
        if not np.all(np.isfinite(u_new)):
            # singular transient policy: damp toward the candidate minimum
            cand = prob.candidate_min(u)
            u_new = np.where(prob.free & np.isfinite(cand), cand, u)
        u = u_new
        cand = prob.candidate_min(u)
        free_ok = prob.free & np.isfinite(cand)
        residual = float(np.max(np.abs(u[free_ok] - cand[free_ok]), initial=0.0))
        stable = prev_kind is not None and np.array_equal(kind, prev_kind)
        prev_kind = kind
        if residual < tol and (stable or it > 1):
            return u.reshape(shape), {"iterations": it, "residual": residual}
        # accept a rounding-level stall: the policy churns between candidates
        # that agree to machine precision without improving the residual
        if residual < best_residual * 0.5:
            stall = 0
        else:
            stall += 1
        best_residual = min(best_residual, residual)
        if stall >= 5 and best_residual < 100.0 * tol:
            return u.reshape(shape), {"iterations": it, "residual": residual,
                                      "stalled": True}
    raise MaxIterExceeded(
        f"envelope iteration did not reach tol {tol:g}", residual=residual
    )
