"""Dirichlet problem for the degenerate metric-interpolation equation.

On a strip or annulus base (one reduced real coordinate t in [0, 1]) the
solution with invariant boundary potentials is the Mabuchi geodesic: an
affine path of Legendre duals.  ``solve_geodesic`` evaluates that path in
closed form, exactly, by conjugating against the union of the endpoint
difference quotients (the conjugate of a piecewise-linear convex function is
piecewise linear with breakpoints at those slopes, so no slope quantization
is introduced).  ``solve_hcma_fd`` is an independent monotone finite
difference oracle: the largest grid function convex along a wide stencil of
lattice lines in (t, x), below the Dirichlet slices at t = 0, 1, with slope
caps 0 and 1 at the x-ends.  The two agree to first order in the grid step;
the oracle also runs on the bidisc tube (two base coordinates).
"""

from dataclasses import dataclass

import numpy as np

from . import envelope_kernel as ek
from .errors import GridMismatch, NonConvexInput, NoSubsolution, SlopeOutOfRange
from .toric import ToricPotential, softplus

TOL_BDRY = 1e-6


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Reduced base domain: strip/annulus (1-D) or bidisc tube (2-D).

    The annulus e^{-1} <= |w| <= 1 reduces to the same interval as the strip
    through t = -log|w|; the strictly convex defining function t^2 - t
    (summed over coordinates for the bidisc) is carried for the background
    constructions and for validation.
    """

    kind: str
    t: np.ndarray

    def __post_init__(self):
        if self.kind not in ("strip", "annulus", "bidisc"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    @property
    def ndim_base(self):
        return 2 if self.kind == "bidisc" else 1

    @property
    def n_t(self):
        return self.t.size

    @property
    def h_t(self):
        return self.t[1] - self.t[0]

    def rho(self):
        """Strictly convex shape function for the background constructions.

        Sums t^2 - t over the base axes; negative inside, vanishing on the
        1-D boundary and on the bidisc corners (the bidisc edges carry the
        nonzero cross term, so use ``defining_function`` for boundary tests).
        """
        r = self.t * self.t - self.t
        if self.kind == "bidisc":
            return r[:, None] + r[None, :]
        return r

    def defining_function(self):
        """Defining function: negative inside, exactly zero on the boundary."""
        r = self.t * self.t - self.t
        if self.kind == "bidisc":
            return np.maximum(r[:, None], r[None, :])
        return r

    def boundary_mask(self):
        """Boolean mask of boundary nodes on the base grid."""
        n = self.n_t
        if self.kind == "bidisc":
            m = np.zeros((n, n), dtype=bool)
            m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
            return m
        m = np.zeros(n, dtype=bool)
        m[0] = m[-1] = True
        return m

    def validate(self):
        second = np.diff(self.t, 2)
        if second.size and np.abs(second).max() > 1e-12:
            raise GridMismatch("base grid must be uniform")
        # rho = t^2 - t has discrete second difference exactly 2 h^2 > 0
        return self


def make_domain(kind, n_t):
    """Domain over [0, 1] per base coordinate with n_t nodes per axis."""
    return DomainSpec(kind, np.linspace(0.0, 1.0, n_t)).validate()


@dataclass(frozen=True, eq=False)
class GeodesicField:
    """Path of invariant potentials: psi(t_i, x_j) with admissible slices."""

    t: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    info: dict = None

    def __post_init__(self):
        if self.psi.shape != (self.t.size, self.x.size):
            raise GridMismatch("psi must have shape (n_t, n_x)")

    @property
    def u(self):
        return self.psi - softplus(self.x)[None, :]

    def slice(self, i):
        return ToricPotential(self.x, self.psi[i])

    def validate(self, u0=None, u1=None, tol_bdry=TOL_BDRY):
        for i in range(self.t.size):
            self.slice(i).validate()
        if u0 is not None and np.max(np.abs(self.psi[0] - u0.psi)) > tol_bdry:
            raise GridMismatch("t=0 slice does not match boundary data")
        if u1 is not None and np.max(np.abs(self.psi[-1] - u1.psi)) > tol_bdry:
            raise GridMismatch("t=1 slice does not match boundary data")
        tol = 1e-9 * max(1.0, np.abs(self.psi).max())
        for dt, dx in ((1, 0), (0, 1), (1, 1), (1, -1)):
            second = _directional_second(self.psi, dt, dx)
            if second.size and second.min() < -tol:
                raise NonConvexInput(
                    f"joint convexity fails along ({dt},{dx}): {second.min():.3e}"
                )
        return self


def _directional_second(field, *step):
    """Interior second differences of a grid field along an integer step."""
    slices_p, slices_m, slices_0 = [], [], []
    for d, s in enumerate(step):
        n = field.shape[d]
        a = abs(s)
        slices_0.append(slice(a, n - a))
        slices_p.append(slice(a + s, n - a + s if n - a + s != 0 else None))
        slices_m.append(slice(a - s, n - a - s if n - a - s != 0 else None))
    return (field[tuple(slices_p)] + field[tuple(slices_m)]
            - 2.0 * field[tuple(slices_0)])


def _check_shared_grid(u0, u1):
    if u0.x.shape != u1.x.shape or np.max(np.abs(u0.x - u1.x)) > 0:
        raise GridMismatch("endpoint potentials live on different grids")


def solve_geodesic(u0, u1, n_t):
    """Mabuchi geodesic between two admissible potentials, in closed form.

    The path of Legendre duals is affine; values are recovered by maximizing
    ``p x - (1-t) psi0*(p) - t psi1*(p)`` over the finite set of breakpoint
    slopes of both endpoints, which is the exact supremum over all p.
    """
    u0.validate()
    u1.validate()
    _check_shared_grid(u0, u1)
    x = u0.x
    slopes = np.concatenate((
        [0.0, 1.0], np.diff(u0.psi) / u0.h, np.diff(u1.psi) / u1.h,
    ))
    p = np.unique(np.clip(slopes, 0.0, 1.0))
    phi0 = _conjugate(p, x, u0.psi)
    phi1 = _conjugate(p, x, u1.psi)
    t = np.linspace(0.0, 1.0, n_t)
    psi = np.empty((n_t, x.size))
    for i, ti in enumerate(t):
        blend = (1.0 - ti) * phi0 + ti * phi1
        psi[i] = _conjugate(x, p, blend)
    psi[0] = u0.psi
    psi[-1] = u1.psi
    return GeodesicField(t, x, psi)


def _conjugate(eval_points, nodes, values, chunk=128):
    out = np.empty(np.asarray(eval_points).shape)
    ep = np.asarray(eval_points, float)
    for lo in range(0, ep.size, chunk):
        block = ep[lo:lo + chunk, None]
        out[lo:lo + chunk] = np.max(block * nodes[None, :] - values[None, :], axis=1)
    return out


def default_stencil_width(n_x):
    """Stencil width ~ h^{-1/2}, balancing angular and Taylor errors."""
    return max(2, int(round(0.45 * np.sqrt(n_x - 1))))


def solve_hcma_fd(dom, boundary, width=None, tol=1e-10, max_iter=80):
    """Finite difference Perron envelope for the reduced Dirichlet problem.

    ``boundary`` is a pair of admissible potentials for a 1-D base, or a
    callable (t1, t2) -> psi-values on a shared x-grid for the bidisc tube.
    Returns a GeodesicField (1-D base) or a raw psi array (bidisc).
    """
    dom.validate()
    if dom.ndim_base == 1:
        u0, u1 = boundary
        try:
            u0.validate()
            u1.validate()
        except (NonConvexInput, SlopeOutOfRange) as exc:
            raise NoSubsolution(f"inadmissible boundary slice: {exc}") from exc
        _check_shared_grid(u0, u1)
        x = u0.x
        n_t, n_x = dom.n_t, x.size
        shape = (n_t, n_x)
        t = dom.t
        init = (1.0 - t)[:, None] * u0.psi[None, :] + t[:, None] * u1.psi[None, :]
        mask = np.zeros(shape, dtype=bool)
        mask[0] = mask[-1] = True
        vals = np.zeros(shape)
        vals[0] = u0.psi
        vals[-1] = u1.psi
        if width is None:
            width = default_stencil_width(n_x)
        dirs = ek.primitive_directions(2, width)
        h_x = x[1] - x[0]
        psi, info = ek.solve_envelope(
            shape, init, mask, vals, dirs,
            cap_axis=1, cap_low=0.0, cap_high=h_x, tol=tol, max_iter=max_iter,
        )
        return GeodesicField(t, x, psi, info)

    # bidisc tube: two base axes, boundary supplied as a callable
    t = dom.t
    n = t.size
    bmask = dom.boundary_mask()
    x = boundary(t[0], t[0]).x
    n_x = x.size
    shape = (n, n, n_x)
    vals = np.zeros(shape)
    for i in range(n):
        for j in range(n):
            if bmask[i, j]:
                pot = boundary(t[i], t[j])
                try:
                    pot.validate()
                except (NonConvexInput, SlopeOutOfRange) as exc:
                    raise NoSubsolution(
                        f"inadmissible boundary slice at ({t[i]}, {t[j]}): {exc}"
                    ) from exc
                vals[i, j] = pot.psi
    mask = np.broadcast_to(bmask[:, :, None], shape).copy()
    # initialize from the transfinite affine blend of the edge data
    init = np.zeros(shape)
    for i in range(n):
        a = t[i]
        init[i] = ((1 - a) * vals[0] + a * vals[-1]
                   + (1 - t)[:, None] * vals[i, 0][None, :]
                   + t[:, None] * vals[i, -1][None, :]) / 2.0
    if width is None:
        width = 2
    dirs = ek.primitive_directions(3, width)
    h_x = x[1] - x[0]
    psi, info = ek.solve_envelope(
        shape, init, mask, vals, dirs,
        cap_axis=2, cap_low=0.0, cap_high=h_x, tol=tol, max_iter=max_iter,
    )
    return psi, info


@dataclass(frozen=True)
class ComparisonReport:
    """Outcome of a discrete comparison-principle check."""

    boundary_gap: float
    max_violation: float
    location: tuple
    holds: bool


def check_comparison(a, b, dom, tol=1e-8):
    """Check the maximum principle: a <= b on the boundary forces it inside.

    The reported violation is the interior excess of ``a - b`` over its
    boundary maximum (clipped at zero), so a monotone solver yields zero.
    """
    a = a.psi if hasattr(a, "psi") else np.asarray(a, float)
    b = b.psi if hasattr(b, "psi") else np.asarray(b, float)
    if a.shape != b.shape:
        raise GridMismatch(f"field shapes differ: {a.shape} vs {b.shape}")
    bmask = dom.boundary_mask()
    if bmask.shape != a.shape[:bmask.ndim]:
        raise GridMismatch("domain base grid does not match the fields")
    full_mask = np.broadcast_to(
        bmask.reshape(bmask.shape + (1,) * (a.ndim - bmask.ndim)), a.shape
    )
    gap = a - b
    boundary_gap = float(gap[full_mask].max())
    excess = gap - max(boundary_gap, 0.0)
    loc = np.unravel_index(np.argmax(excess), a.shape)
    max_violation = float(max(excess.max(), 0.0))
    return ComparisonReport(boundary_gap, max_violation, tuple(int(i) for i in loc),
                            max_violation <= tol)


def smooth_boundary_family(v, k):
    """Strictly admissible decreasing-in-k smoothing of a boundary potential.

    Blends 1/k of the reference profile into v and shifts so the family
    decreases pointwise to v: the result is within osc(u)/k of v, has second
    differences bounded below by the reference's over k, and difference
    quotients strictly inside (0, 1).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v.validate()
    u = v.u
    correction = (u.max() - u) / k
    return ToricPotential(v.x, v.psi + correction)


def degeneracy_stat(field, h_t, h_x, width=4):
    """Median over interior nodes of the smallest directional curvature.

    For each interior node, take the minimum over stencil lines of the
    absolute second difference divided by the squared real step; solutions of
    the degenerate equation are affine along some line through almost every
    node, so the median vanishes at solver tolerance, while strictly convex
    fields stay bounded away from zero.
    """
    psi = field.psi if hasattr(field, "psi") else np.asarray(field, float)
    dirs = ek.primitive_directions(2, width)
    n_t, n_x = psi.shape
    best = None
    for dt, dx in dirs:
        a, b = abs(int(dt)), abs(int(dx))
        second = _directional_second(psi, int(dt), int(dx))
        step2 = (dt * h_t) ** 2 + (dx * h_x) ** 2
        val = np.full(psi.shape, np.inf)
        val[a:n_t - a, b:n_x - b] = np.abs(second) / step2
        best = val if best is None else np.minimum(best, val)
    interior = best[1:-1, 1:-1]
    return float(np.median(interior[np.isfinite(interior)]))
