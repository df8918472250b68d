"""Negatively curved envelopes on the trivial rank-2 bundle over a tube base.

A torus-invariant Finsler metric on the fiber is stored through the convex
log profile ``G(eta) = log f^2(1, e^{eta/2})`` in the fiber log coordinate;
negativity of the family over the base (strip/annulus coordinate t, or two
such coordinates for the bidisc tube) is joint convexity of ``G(t, eta)``
with fiber slopes in [0, 1].  The module provides:

* diagonal and full-matrix geodesics of positive Hermitian forms,
* a certified strictly-negative background ``h * e^{strength * rho}``,
* the Perron envelope of boundary Finsler data (largest jointly convex field
  below the boundary slices, clamped under the linear trace barrier),
* the norm-constrained envelope via fiberwise gauge biconjugation,
* the linear trace-equation barrier solver, and
* plurisubharmonicity certificates on the total space.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from . import envelope_kernel as ek
from .errors import (
    BoundaryNotNorm,
    BoundaryNotPsh,
    DimensionMismatch,
    GridMismatch,
    InsufficientStrength,
    MaxIterExceeded,
    NonConvexInput,
    SingularForm,
    ZeroEvaluation,
)
from .hcma import DomainSpec, _directional_second
from .quantize import HermitianForm
from .toric import _lower_hull, softplus

DEFAULT_ETA_MAX = 20.0


def eta_grid(resolution=256, eta_max=DEFAULT_ETA_MAX):
    """Uniform fiber log-coordinate grid with ``resolution`` intervals."""
    return np.linspace(-eta_max, eta_max, resolution + 1)


# ---------------------------------------------------------------------------
# Fiber metrics

@dataclass(frozen=True, eq=False)
class GridFinsler:
    """Invariant Finsler metric on C^2, stored as a fiber log profile.

    ``log_sq`` holds G on the eta grid; evaluation extends linearly with the
    end slopes, so ``f(0, xi1) = |xi1| exp((G - eta)/2)`` at the right
    asymptote.  Homogeneity f(lambda xi) = |lambda| f(xi) is structural.
    """

    eta: np.ndarray
    log_sq: np.ndarray
    norm_flag: bool = False

    def __post_init__(self):
        if self.eta.shape != self.log_sq.shape:
            raise GridMismatch("eta and log_sq must share a shape")

    @property
    def h(self):
        return self.eta[1] - self.eta[0]

    def profile(self, eta):
        """G at arbitrary eta, linear extension by the end slopes."""
        eta = np.asarray(eta, dtype=float)
        g = np.interp(eta, self.eta, self.log_sq)
        s_lo = (self.log_sq[1] - self.log_sq[0]) / self.h
        s_hi = (self.log_sq[-1] - self.log_sq[-2]) / self.h
        lo = eta < self.eta[0]
        hi = eta > self.eta[-1]
        g = np.where(lo, self.log_sq[0] + s_lo * (eta - self.eta[0]), g)
        g = np.where(hi, self.log_sq[-1] + s_hi * (eta - self.eta[-1]), g)
        return g

    def evaluate(self, xi):
        """f(xi) for a 2-vector, phase-invariant, 1-homogeneous."""
        xi = np.asarray(xi, dtype=complex)
        if xi.shape != (2,):
            raise DimensionMismatch("GridFinsler lives on C^2")
        a0, a1 = np.abs(xi)
        if a0 == 0.0 and a1 == 0.0:
            return 0.0
        eta = 2.0 * (np.log(max(a1, 1e-300)) - np.log(max(a0, 1e-300)))
        if a0 >= a1:
            return float(a0 * np.exp(self.profile(eta) / 2.0))
        # evaluate through the other chart for stability at large eta
        return float(a1 * np.exp((self.profile(eta) - eta) / 2.0))

    def validate_psh(self, tol=None):
        """Fiberwise admissibility: G convex with slopes in [0, 1]."""
        g = self.log_sq
        if tol is None:
            tol = 1e-9 * max(1.0, np.abs(np.diff(g)).max() / self.h)
        second = g[2:] - 2.0 * g[1:-1] + g[:-2]
        if second.size and second.min() < -tol:
            raise BoundaryNotPsh(
                f"fiber log profile not convex: {second.min():.3e}"
            )
        slopes = np.diff(g) / self.h
        if slopes.min() < -1e-8 or slopes.max() > 1.0 + 1e-8:
            raise BoundaryNotPsh("fiber slopes leave [0, 1]")
        return self


def hermitian_profile(eta, form):
    """GridFinsler of a positive diagonal 2x2 Hermitian form."""
    form.validate()
    if form.dim != 2:
        raise DimensionMismatch("fiber forms must be 2x2")
    if form.is_diagonal:
        l0, l1 = form.log_diag
    else:
        m = form.matrix
        if abs(m[0, 1]) > 1e-14 * max(abs(m[0, 0]), abs(m[1, 1])):
            raise SingularForm("invariant reduction requires a diagonal form")
        l0, l1 = np.log(np.real(np.diag(m)))
    g = l0 + softplus(np.asarray(eta, float) + (l1 - l0))
    return GridFinsler(np.asarray(eta, float), g, norm_flag=True)


@dataclass(frozen=True, eq=False)
class HermitianFinsler:
    """Finsler metric induced by a positive Hermitian form, any dimension."""

    form: HermitianForm

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=complex)
        m = self.form.as_matrix()
        if xi.shape != (m.shape[0],):
            raise DimensionMismatch("vector dimension does not match the form")
        val = np.real(xi.conj() @ m @ xi)
        if val < 0.0:
            raise ZeroEvaluation("form not positive on the given vector")
        return float(np.sqrt(val))


def matrix_geodesic(g0, g1, t):
    """Geometric interpolation G0^{1/2} (G0^{-1/2} G1 G0^{-1/2})^t G0^{1/2}.

    Diagonal inputs interpolate entrywise in log space, exactly at the
    endpoints; log det is affine in t by multiplicativity.
    """
    g0.validate()
    g1.validate()
    if g0.dim != g1.dim:
        raise DimensionMismatch(f"dims {g0.dim} vs {g1.dim}")
    if g0.space_tag != g1.space_tag:
        raise ValueError("endpoint forms live on different spaces")
    if g0.is_diagonal and g1.is_diagonal:
        return HermitianForm(
            g0.space_tag,
            log_diag=(1.0 - t) * g0.log_diag + t * g1.log_diag,
        )
    m0 = g0.as_matrix()
    m1 = g1.as_matrix()
    w, v = np.linalg.eigh(m0)
    root = (v * np.sqrt(w)) @ v.conj().T
    inv_root = (v / np.sqrt(w)) @ v.conj().T
    mid = inv_root @ m1 @ inv_root
    mid = 0.5 * (mid + mid.conj().T)
    wm, vm = np.linalg.eigh(mid)
    power = (vm * wm ** t) @ vm.conj().T
    out = root @ power @ root
    return HermitianForm(g0.space_tag, matrix=0.5 * (out + out.conj().T))


# ---------------------------------------------------------------------------
# Background metric

@dataclass(frozen=True, eq=False)
class ReducedBackground:
    """Strictly negative reference metric h * e^{strength * rho}, reduced.

    ``log_total`` is the log-squared metric of the tautological frame on the
    (base, eta) grid; its Hessian is diagonal with base entries
    2 * strength per axis and fiber entry sigma(1 - sigma) at the shifted
    fiber coordinate.
    """

    dom: DomainSpec
    eta: np.ndarray
    strength: float
    fiber_shift: float
    fiber_offset: float

    @property
    def base_shape(self):
        n = self.dom.n_t
        return (n, n) if self.dom.kind == "bidisc" else (n,)

    def fiber_profile(self):
        return self.fiber_offset + softplus(self.eta + self.fiber_shift)

    def log_total(self):
        rho = self.strength * self.dom.rho()
        fib = self.fiber_profile()
        return rho[..., None] + fib.reshape((1,) * len(self.base_shape) + (-1,))

    def fiber_curvature(self):
        """sigma(1-sigma) at the shifted coordinate, per eta node."""
        s = expit(self.eta + self.fiber_shift)
        return s * (1.0 - s)

    @property
    def base_curvature(self):
        """Hessian entry of strength*rho per base axis (rho'' = 2)."""
        return 2.0 * self.strength


def background_metric(dom, base_h, strength, eta):
    """Certified strictly negative background on the reduced grid.

    ``base_h`` is a positive diagonal 2x2 form (None for the flat one).
    Raises InsufficientStrength with the failing direction when some sampled
    lattice line has vanishing curvature margin.
    """
    dom.validate()
    eta = np.asarray(eta, dtype=float)
    if base_h is None:
        l0 = l1 = 0.0
    elif base_h.is_diagonal:
        l0, l1 = (float(v) for v in base_h.log_diag)
    else:
        base_h.validate()
        m = base_h.matrix
        if abs(m[0, 1]) > 1e-14 * max(abs(m[0, 0]), abs(m[1, 1])):
            raise SingularForm("invariant reduction requires a diagonal form")
        l0, l1 = (float(np.log(np.real(d))) for d in np.diag(m))
    bg = ReducedBackground(dom, eta, float(strength), l1 - l0, l0)
    total = bg.log_total()
    h_t = dom.h_t
    h_e = eta[1] - eta[0]
    ndim = total.ndim
    dirs = ek.primitive_directions(ndim, 2) if ndim <= 3 else None
    steps = (h_t,) * (ndim - 1) + (h_e,)
    worst = np.inf
    worst_dir = None
    for v in dirs:
        second = _directional_second(total, *(int(c) for c in v))
        step2 = sum((c * h) ** 2 for c, h in zip(v, steps))
        margin = second.min() / step2
        if margin < worst:
            worst = margin
            worst_dir = tuple(int(c) for c in v)
    if worst <= 1e-12:
        raise InsufficientStrength(
            f"background curvature margin {worst:.3e} along {worst_dir}",
            direction=worst_dir,
        )
    return bg


# ---------------------------------------------------------------------------
# Linear trace barrier

def solve_hym(dom, boundary, bg):
    """Barrier for the envelope: linear trace equation on the reduced grid.

    Solves ``sum_base phi_tt / (2 strength) + phi_eta_eta / (sigma(1-sigma))
    = -(m + 1)`` (row-multiplied by the fiber curvature so the fiber tails
    reduce to the correct one-sided pole conditions) with Dirichlet data
    ``G_boundary - G_background`` on the base boundary and even reflection at
    the fiber ends.  Returns the potential phi relative to the background.
    """
    eta = bg.eta
    n_e = eta.size
    base_shape = bg.base_shape
    m_base = len(base_shape)
    shape = base_shape + (n_e,)
    n = int(np.prod(shape))
    h_t = dom.h_t
    h_e = eta[1] - eta[0]
    curv = bg.fiber_curvature()
    fib_bg = bg.fiber_profile()

    bmask = dom.boundary_mask()
    full_mask = np.broadcast_to(bmask[..., None], shape)
    dir_vals = np.zeros(shape)
    if m_base == 1:
        g0, g1 = boundary
        dir_vals[0] = g0.profile(eta) - (bg.strength * dom.rho()[0] + fib_bg)
        dir_vals[-1] = g1.profile(eta) - (bg.strength * dom.rho()[-1] + fib_bg)
    else:
        rho = bg.strength * dom.rho()
        t = dom.t
        for i in range(dom.n_t):
            for jj in range(dom.n_t):
                if bmask[i, jj]:
                    g = boundary(t[i], t[jj])
                    dir_vals[i, jj] = g.profile(eta) - (rho[i, jj] + fib_bg)

    idx = np.indices(shape).reshape(m_base + 1, -1)
    strides = np.array(
        [int(np.prod(shape[d + 1:])) for d in range(m_base + 1)], dtype=np.int64
    )
    flat_mask = full_mask.ravel()
    free = np.flatnonzero(~flat_mask)
    rows, cols, data = [], [], []
    rhs = np.zeros(n)
    diag = np.zeros(n)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        data.append(v)

    c_here = curv[idx[m_base][free]]
    # base second differences, coefficient curv / (2 strength h_t^2)
    coef_t = c_here / (bg.base_curvature * h_t * h_t)
    for d in range(m_base):
        off = int(strides[d])
        add(free, free + off, coef_t)
        add(free, free - off, coef_t)
        diag[free] -= 2.0 * coef_t
    # fiber second differences with even reflection at the ends
    j = idx[m_base][free]
    off = int(strides[m_base])
    inv_he2 = 1.0 / (h_e * h_e)
    up = np.where(j + 1 < n_e, off, -off)
    dn = np.where(j - 1 >= 0, -off, off)
    add(free, free + up, np.full(free.size, inv_he2))
    add(free, free + dn, np.full(free.size, inv_he2))
    diag[free] -= 2.0 * inv_he2
    rhs[free] = -(m_base + 1) * c_here

    fixed = np.flatnonzero(flat_mask)
    diag[fixed] = 1.0
    rhs[fixed] = dir_vals.ravel()[fixed]
    add(np.arange(n), np.arange(n), diag)

    a = sp.csr_matrix(
        (np.concatenate([np.asarray(d, float) for d in data]),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    phi = spla.spsolve(a, rhs)
    return phi.reshape(shape)


# ---------------------------------------------------------------------------
# Perron envelopes

@dataclass(frozen=True, eq=False)
class EnvelopeGrid:
    """Envelope potential relative to the background, plus its barrier."""

    dom: DomainSpec
    background: ReducedBackground
    psi: np.ndarray          # G - G_background on the (base, eta) grid
    barrier: np.ndarray      # HYM potential phi on the same grid
    info: dict = None

    @property
    def eta(self):
        return self.background.eta

    @property
    def log_total(self):
        return self.background.log_total() + self.psi

    def boundary_gap(self, boundary):
        """Sup distance to the boundary profiles on boundary base nodes."""
        g_tot = self.log_total
        eta = self.eta
        if self.dom.ndim_base == 1:
            g0, g1 = boundary
            return float(max(
                np.max(np.abs(g_tot[0] - g0.profile(eta))),
                np.max(np.abs(g_tot[-1] - g1.profile(eta))),
            ))
        t = self.dom.t
        bmask = self.dom.boundary_mask()
        worst = 0.0
        for i in range(t.size):
            for jj in range(t.size):
                if bmask[i, jj]:
                    g = boundary(t[i], t[jj])
                    worst = max(worst, float(
                        np.max(np.abs(g_tot[i, jj] - g.profile(eta)))
                    ))
        return worst


def _envelope_setup(dom, boundary, bg, check_psh=True):
    eta = bg.eta
    g_bg = bg.log_total()
    shape = g_bg.shape
    bmask = dom.boundary_mask()
    mask = np.broadcast_to(bmask[..., None], shape).copy()
    vals = np.zeros(shape)
    if dom.ndim_base == 1:
        g0, g1 = boundary
        if check_psh:
            g0.validate_psh()
            g1.validate_psh()
        vals[0] = g0.profile(eta)
        vals[-1] = g1.profile(eta)
        t = dom.t
        init = (1.0 - t)[:, None] * vals[0][None, :] + t[:, None] * vals[-1][None, :]
    else:
        t = dom.t
        for i in range(t.size):
            for jj in range(t.size):
                if bmask[i, jj]:
                    g = boundary(t[i], t[jj])
                    if check_psh:
                        g.validate_psh()
                    vals[i, jj] = g.profile(eta)
        init = np.zeros(shape)
        for i in range(t.size):
            a = t[i]
            init[i] = ((1 - a) * vals[0] + a * vals[-1]
                       + (1 - t)[:, None] * vals[i, 0][None, :]
                       + t[:, None] * vals[i, -1][None, :]) / 2.0
    return shape, mask, vals, init


def perron_envelope(dom, boundary, bg, width=None, tol=1e-10, max_iter=80):
    """Largest negatively curved metric family below the boundary data.

    Discretely: the largest grid field jointly convex along the stencil
    lines, with fiber slope caps [0, 1], Dirichlet boundary slices, and the
    linear trace barrier as an obstacle from above.
    """
    dom.validate()
    shape, mask, vals, init = _envelope_setup(dom, boundary, bg)
    phi = solve_hym(dom, boundary, bg)
    obstacle = bg.log_total() + phi
    eta = bg.eta
    h_e = eta[1] - eta[0]
    if width is None:
        width = max(2, int(round(0.45 * np.sqrt(eta.size - 1))))
    if dom.ndim_base == 1:
        dirs = ek.primitive_directions(2, width)
    else:
        dirs = ek.primitive_directions(3, 2)
    g_field, info = ek.solve_envelope(
        shape, np.minimum(init, obstacle), mask, vals, dirs,
        cap_axis=len(shape) - 1, cap_low=0.0, cap_high=h_e,
        obstacle=obstacle, tol=tol, max_iter=max_iter,
    )
    clamp_active = int(np.sum(np.abs(g_field - obstacle)[~mask] < 1e-13))
    info = dict(info, clamp_active=clamp_active)
    return EnvelopeGrid(dom, bg, g_field - bg.log_total(), phi, info)


def largest_norm_below(eta, g_profile):
    """Fiberwise largest invariant norm below an invariant metric profile.

    With w = e^{eta/2} the profile is g = log phi(w)^2, and the gauge
    ``f(|xi0|, |xi1|) = |xi0| phi(|xi1| / |xi0|)`` is a norm exactly when
    phi is convex and nondecreasing in w.  The largest such minorant at the
    nodes is the lower convex hull of (w, phi) flattened left of its minimum;
    both steps are exact on the grid, so norm profiles are reproduced
    pointwise and the operation is idempotent.
    """
    eta = np.asarray(eta, float)
    g = np.asarray(g_profile, float)
    w = np.exp(eta / 2.0)
    phi = np.exp(g / 2.0)
    hull = _lower_hull(w, phi)
    # largest nondecreasing convex minorant: constant up to the hull minimum
    hull = np.minimum.accumulate(hull[::-1])[::-1]
    return np.minimum(2.0 * np.log(hull), g)


def check_norm_profile(eta, g_profile, tol=1e-3):
    """Raise unless the invariant profile is fiberwise a norm (gauge-convex)."""
    g_new = largest_norm_below(eta, g_profile)
    gap = float(np.max(np.asarray(g_profile) - g_new))
    if gap > tol:
        raise BoundaryNotNorm(f"gauge biconjugation drops the profile by {gap:.3e}")


def perron_envelope_norms(dom, boundary, bg, width=None, tol=1e-9,
                          max_iter=200):
    """Norm-constrained envelope: alternate envelope sweeps and fiberwise
    replacement by the largest norm below, starting from the metric envelope.

    Both operations are monotone decreasing, so the iteration converges to
    the largest negatively curved *norm* family below the boundary; the
    output is bounded by the metric envelope by construction.
    """
    dom.validate()
    env = perron_envelope(dom, boundary, bg, width=width)
    eta = bg.eta
    if dom.ndim_base == 1:
        for g in boundary:
            check_norm_profile(eta, g.log_sq)
    else:
        t = dom.t
        bmask = dom.boundary_mask()
        for i in range(t.size):
            for jj in range(t.size):
                if bmask[i, jj]:
                    check_norm_profile(eta, boundary(t[i], t[jj]).log_sq)
    g_bg = bg.log_total()
    obstacle = g_bg + env.barrier
    shape, mask, vals, _ = _envelope_setup(dom, boundary, bg, check_psh=False)
    h_e = eta[1] - eta[0]
    if width is None:
        width = max(2, int(round(0.45 * np.sqrt(eta.size - 1))))
    dirs = (ek.primitive_directions(2, width) if dom.ndim_base == 1
            else ek.primitive_directions(3, 2))
    g_field = g_bg + env.psi
    flat_base = int(np.prod(shape[:-1]))
    base_mask = dom.boundary_mask().ravel()
    for cycle in range(1, max_iter + 1):
        prev = g_field
        # fiberwise norm projection on interior base nodes
        flat = g_field.reshape(flat_base, eta.size).copy()
        for b in range(flat_base):
            if not base_mask[b]:
                flat[b] = largest_norm_below(eta, flat[b])
        g_field = flat.reshape(shape)
        # envelope sweep below the current field
        g_field, info = ek.solve_envelope(
            shape, g_field, mask, vals, dirs,
            cap_axis=len(shape) - 1, cap_low=0.0, cap_high=h_e,
            obstacle=np.minimum(g_field, obstacle), tol=1e-10, max_iter=80,
        )
        change = float(np.max(np.abs(g_field - prev)))
        if change < tol:
            out_info = dict(info, cycles=cycle, last_change=change)
            return EnvelopeGrid(dom, bg, g_field - g_bg, env.barrier, out_info)
    raise MaxIterExceeded(
        f"norm envelope alternation did not settle below {tol:g}",
        residual=change,
    )


def quadratic_fit_residual(eta, g_profile):
    """Sup distance of a fiber profile from the nearest Hermitian profile.

    Hermitian means G = log(a + b e^eta); fit log-linearly via least squares
    on the metric values weighted to the central window.
    """
    eta = np.asarray(eta, float)
    g = np.asarray(g_profile, float)
    win = np.abs(eta) <= 6.0
    ew = eta[win]
    vals = np.exp(g[win])
    a_mat = np.stack([np.ones(ew.size), np.exp(ew)], axis=1)
    w = 1.0 / np.maximum(vals, 1e-300)
    coef, *_ = np.linalg.lstsq(a_mat * w[:, None], vals * w, rcond=None)
    coef = np.maximum(coef, 1e-300)
    fit = np.log(a_mat @ coef)
    return float(np.max(np.abs(fit - g[win])))


# ---------------------------------------------------------------------------
# Certification and degeneracy statistics

@dataclass(frozen=True)
class Certificate:
    """Worst discrete curvature margins for the three equivalent psh tests."""

    margin_total_metric: float    # convexity of e^Phi (metric psh)
    margin_total_log: float       # convexity of Phi (log metric psh)
    margin_chart_log: float       # convexity of Phi on the two chart slices
    grid: tuple

    @property
    def signs(self):
        return tuple(np.sign([
            self.margin_total_metric, self.margin_total_log,
            self.margin_chart_log,
        ]))

    @property
    def negative(self):
        return min(self.margin_total_metric, self.margin_total_log,
                   self.margin_chart_log) >= -1e-10


def certify_griffiths_negative(g_field, h_base, h_eta, clip_margin=1e-12):
    """Discrete sub-mean-value certificates for a reduced log metric family.

    ``g_field`` is G(t, eta) (or G(t1, t2, eta)); the three margins test the
    metric on the total space, its log, and the log of the tautological
    metric on the coordinate chart slices.  Margins below are per unit
    squared step; their signs agree up to grid error.
    """
    g = np.asarray(g_field, float)
    ndim = g.ndim
    steps = (h_base,) * (ndim - 1) + (h_eta,)
    dirs = ek.primitive_directions(ndim, 2)

    def scan(field):
        worst = np.inf
        for v in dirs:
            second = _directional_second(field, *(int(c) for c in v))
            step2 = sum((c * h) ** 2 for c, h in zip(v, steps))
            if second.size:
                worst = min(worst, second.min() / step2)
        return worst

    # (log metric) Phi = (y0 + G)/2; linear terms drop from second differences
    margin_log = scan(g) / 2.0

    # (metric) test exp Phi along directions that also move y0 = a * h_eta
    worst_metric = np.inf
    f0 = np.exp(0.5 * g)
    for a in (-1, 0, 1):
        scale = np.exp(0.5 * a * h_eta)
        for v in dirs:
            base_step = tuple(int(c) for c in v)
            sec = (_shift(f0, base_step, +1) * scale
                   + _shift(f0, base_step, -1) / scale
                   - 2.0 * _crop(f0, base_step))
            step2 = sum((c * h) ** 2 for c, h in zip(v, steps)) + (a * h_eta) ** 2
            if sec.size:
                worst_metric = min(worst_metric, sec.min() / step2)

    # chart slices: y0 = 0 gives G itself; y1 = 0 gives G(t, -y0) + y0, whose
    # second differences equal those of G reflected in eta
    margin_chart = margin_log

    def clipz(v):
        return 0.0 if abs(v) < clip_margin else v

    return Certificate(
        clipz(worst_metric), clipz(margin_log), clipz(margin_chart),
        tuple(steps),
    )


def _crop(field, step):
    slices = []
    for d, s in enumerate(step):
        a = abs(s)
        slices.append(slice(a, field.shape[d] - a))
    return field[tuple(slices)]


def _shift(field, step, sign):
    slices = []
    for d, s in enumerate(step):
        a = abs(s)
        lo = a + sign * s
        hi = field.shape[d] - a + sign * s
        slices.append(slice(lo, hi if hi != 0 else None))
    return field[tuple(slices)]


def envelope_degeneracy(env_psi_total, h_base, h_eta, window=None, width=4):
    """Median over interior nodes of the smallest |second difference| per
    squared step along stencil lines; ~0 for degenerate envelopes."""
    g = np.asarray(env_psi_total, float)
    dirs = ek.primitive_directions(g.ndim, width)
    steps = (h_base,) * (g.ndim - 1) + (h_eta,)
    best = np.full(g.shape, np.inf)
    for v in dirs:
        second = _directional_second(g, *(int(c) for c in v))
        step2 = sum((c * h) ** 2 for c, h in zip(v, steps))
        pad = tuple(slice(abs(int(c)), g.shape[d] - abs(int(c)))
                    for d, c in enumerate(v))
        tmp = np.full(g.shape, np.inf)
        tmp[pad] = np.abs(second) / step2
        np.minimum(best, tmp, out=best)
    inner = best[tuple(slice(1, -1) for _ in range(g.ndim))]
    if window is not None:
        inner = inner[..., window[0]:window[1]]
    vals = inner[np.isfinite(inner)]
    return float(np.median(vals))


def hym_nondegeneracy(env, window_eta=6.0):
    """Median smallest |generalized eigenvalue| of the barrier's curvature.

    Eigenvalues are taken against the background form; the trace equation
    makes them sum to zero pointwise, so nondegeneracy is a bounded-below
    smallest magnitude.  Restricted to the central fiber window where the
    curvature coefficients are resolved.
    """
    bg = env.background
    dom = env.dom
    if dom.ndim_base != 1:
        raise NotImplementedError("statistic implemented for 1-D bases")
    phi = env.barrier
    eta = bg.eta
    h_t = dom.h_t
    h_e = eta[1] - eta[0]
    sel = np.abs(eta) <= window_eta
    a_t = bg.base_curvature
    a_e = bg.fiber_curvature()
    phi_tt = (phi[2:, :] - 2 * phi[1:-1, :] + phi[:-2, :]) / h_t ** 2
    phi_ee = (phi[:, 2:] - 2 * phi[:, 1:-1] + phi[:, :-2]) / h_e ** 2
    phi_te = ((phi[2:, 2:] - phi[2:, :-2] - phi[:-2, 2:] + phi[:-2, :-2])
              / (4 * h_t * h_e))
    h11 = a_t + phi_tt[:, 1:-1]
    h22 = a_e[1:-1][None, :] + phi_ee[1:-1, :]
    h12 = phi_te
    # eigenvalues of diag(a)^{-1} H for the 2x2 pencil
    m11 = h11 / a_t
    m22 = h22 / a_e[1:-1][None, :]
    m12sq = (h12 * h12) / (a_t * a_e[1:-1][None, :])
    tr = m11 + m22
    det = m11 * m22 - m12sq
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    lam1 = tr / 2.0 - disc
    lam2 = tr / 2.0 + disc
    small = np.minimum(np.abs(lam1), np.abs(lam2))
    small = small[:, sel[1:-1]]
    return float(np.median(small))
