"""Torus-invariant potentials on the round sphere in log coordinates.

A rotation-invariant metric potential on the Riemann sphere is stored through
its convex profile ``psi(x) = log(1+e^x) + u(x)`` on a uniform grid in the log
coordinate ``x = log|z|^2``.  Positivity of the curvature form is equivalent to
``psi`` being convex with difference quotients in [0, 1], and boundedness of
``u`` pins the asymptotic slopes to 0 and 1.  The module provides the discrete
Legendre transform on the moment interval [0, 1], the projection onto
admissible profiles (largest convex minorant with constrained slopes), the
Monge-Ampere energy, and a modulus of continuity measured in the round metric.

The area form is normalized to total mass 1, so the energy of a constant
potential equals that constant and the sphere has radius ``1/(2 sqrt(pi))``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import GridMismatch, NonConvexInput, SlopeOutOfRange

DEFAULT_X_MAX = 20.0
SLOPE_TOL = 1e-8

# Radius of the round sphere of total area 1; arc length between the points
# with log coordinates x, y is radius * |theta(x) - theta(y)| with
# theta = 2 arctan(e^{x/2}).
SPHERE_RADIUS = 1.0 / (2.0 * np.sqrt(np.pi))


def x_grid(resolution=1024, x_max=DEFAULT_X_MAX):
    """Uniform log-coordinate grid with ``resolution`` intervals on [-x_max, x_max]."""
    return np.linspace(-x_max, x_max, resolution + 1)


def softplus(x):
    """log(1 + e^x), overflow-safe; the profile of the zero potential."""
    return np.logaddexp(0.0, x)


def fs_weights(x):
    """Trapezoid quadrature weights for the normalized area measure.

    The density in the log coordinate is e^x/(1+e^x)^2 dx, which integrates
    to 1 over the whole line; truncation at |x| = 20 loses ~2e-9 mass.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    w = np.full(x.shape, h)
    w[0] = w[-1] = h / 2.0
    s = expit(x)
    return w * s * (1.0 - s)


def _convexity_tolerance(psi):
    lip = np.max(np.abs(np.diff(psi)))
    return 1e-9 * max(lip, 1.0)


@dataclass(frozen=True, eq=False)
class ToricPotential:
    """Admissible invariant potential: convex profile with slopes in [0, 1]."""

    x: np.ndarray
    psi: np.ndarray
    slope_left: float = 0.0
    slope_right: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float))
        if self.x.shape != self.psi.shape or self.x.ndim != 1:
            raise GridMismatch("x and psi must be 1-D arrays of equal length")

    @property
    def h(self):
        return self.x[1] - self.x[0]

    @property
    def u(self):
        """Bounded potential relative to the reference profile."""
        return self.psi - softplus(self.x)

    @classmethod
    def from_u(cls, x, u):
        x = np.asarray(x, dtype=float)
        return cls(x, softplus(x) + np.asarray(u, dtype=float))

    @classmethod
    def zero(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, softplus(x))

    def validate(self, tol_convex=None):
        """Raise if discrete convexity or the slope range [0, 1] fails."""
        psi = self.psi
        if tol_convex is None:
            tol_convex = _convexity_tolerance(psi)
        second = psi[2:] - 2.0 * psi[1:-1] + psi[:-2]
        worst = second.min() if second.size else 0.0
        if worst < -tol_convex:
            raise NonConvexInput(
                f"second difference {worst:.3e} below -{tol_convex:.3e}"
            )
        slopes = np.diff(psi) / self.h
        if slopes.min() < -SLOPE_TOL or slopes.max() > 1.0 + SLOPE_TOL:
            raise SlopeOutOfRange(
                f"difference quotients in [{slopes.min():.3e}, {slopes.max():.3e}]"
            )
        return self

    def shifted(self, c):
        return replace(self, psi=self.psi + c)


@dataclass(frozen=True, eq=False)
class SymplecticPotential:
    """Legendre dual profile on the moment interval [0, 1]."""

    p: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.p.shape != self.values.shape or self.p.ndim != 1:
            raise GridMismatch("p and values must be 1-D arrays of equal length")

    @property
    def h(self):
        return self.p[1] - self.p[0]

    def validate(self, tol_convex=None):
        v = self.values
        if tol_convex is None:
            tol_convex = _convexity_tolerance(v)
        second = v[2:] - 2.0 * v[1:-1] + v[:-2]
        if second.size and second.min() < -tol_convex:
            raise NonConvexInput(
                f"second difference {second.min():.3e} below -{tol_convex:.3e}"
            )
        return self


def _sup_conv(eval_points, nodes, values, chunk=64):
    """max over nodes of (p*x - v) for p in eval_points against (x, v) pairs.

    Works for either direction of the Legendre transform; ties resolve to the
    first (smallest) node because np.argmax is used implicitly via max order.
    """
    eval_points = np.asarray(eval_points, dtype=float)
    out = np.empty(eval_points.shape)
    for lo in range(0, eval_points.size, chunk):
        block = eval_points[lo:lo + chunk, None]
        out[lo:lo + chunk] = np.max(block * nodes[None, :] - values[None, :], axis=1)
    return out


def legendre(pot, n_p=None):
    """Legendre transform of an admissible profile, on a uniform [0, 1] grid.

    Returns sup over grid nodes of ``p x - psi(x)``; since the slopes of an
    admissible profile lie in [0, 1], this is finite and convex on the moment
    interval, and the double transform reproduces the input to O(h).
    """
    pot.validate()
    if n_p is None:
        n_p = pot.x.size
    p = np.linspace(0.0, 1.0, n_p)
    return SymplecticPotential(p, _sup_conv(p, pot.x, pot.psi))


def legendre_inverse(phi, x):
    """Inverse transform: ``psi(x) = max_p (p x - phi(p))`` on the given grid.

    The output is a max of affine functions with slopes in [0, 1], hence
    admissible by construction.
    """
    phi.validate()
    x = np.asarray(x, dtype=float)
    psi = _sup_conv(x, phi.p, phi.values)
    return ToricPotential(x, psi)


def _lower_hull(x, y):
    """Values of the lower convex hull of the points (x_i, y_i) at the nodes."""
    n = x.size
    stack = [0]
    for i in range(1, n):
        while len(stack) >= 2:
            j, k = stack[-2], stack[-1]
            # pop k if it lies on or above the chord from j to i
            if (y[k] - y[j]) * (x[i] - x[j]) >= (y[i] - y[j]) * (x[k] - x[j]):
                stack.pop()
            else:
                break
        stack.append(i)
    hull_x = x[stack]
    hull_y = y[stack]
    return np.interp(x, hull_x, hull_y)


def project_psh(x, f):
    """Largest admissible potential below the grid function ``f``.

    Computes the convex envelope of ``log(1+e^x) + f`` (exact lower hull at
    the nodes) followed by the largest minorant with slopes in [0, 1], an
    inf-convolution with ``d -> max(d, 0)``.  Both steps are exact on the
    grid, so admissible inputs are reproduced pointwise.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    raw = softplus(x) + f
    hull = _lower_hull(x, raw)
    # largest slope-[0,1] minorant: H(x_j) = min_i hull_i + max(0, x_j - x_i)
    n = x.size
    out = np.empty(n)
    chunk = 256
    for lo in range(0, n, chunk):
        diff = x[lo:lo + chunk, None] - x[None, :]
        out[lo:lo + chunk] = np.min(hull[None, :] + np.maximum(diff, 0.0), axis=1)
    return ToricPotential(x, out)


def ma_masses(pot):
    """Node masses of the curvature measure; they sum to exactly 1.

    Interior masses are second differences of psi divided by h; the end nodes
    collect the defect between the boundary difference quotient and the pinned
    asymptotic slope, which telescopes the total to slope_right - slope_left.
    """
    psi = pot.psi
    h = pot.h
    m = np.empty(psi.shape)
    m[1:-1] = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / h
    m[0] = (psi[1] - psi[0]) / h - pot.slope_left
    m[-1] = pot.slope_right - (psi[-1] - psi[-2]) / h
    return m


def ma_energy(pot):
    """Monge-Ampere energy I(u) = (1/2) * integral of u against (omega + omega_u).

    Normalized so that I(0) = 0 and I(c) = c exactly for constants.
    """
    pot.validate()
    u = pot.u
    m0 = ma_masses(ToricPotential.zero(pot.x))
    mu = ma_masses(pot)
    return 0.5 * float(np.dot(u, m0 + mu))


def arc_coordinate(x):
    """Arc-length coordinate on the meridian of the area-1 round sphere."""
    return SPHERE_RADIUS * 2.0 * np.arctan(np.exp(np.asarray(x, dtype=float) / 2.0))


def modulus_of_continuity(pot, r):
    """max |u(x) - u(y)| over grid pairs within round distance r."""
    if r <= 0:
        raise ValueError("r must be positive")
    s = arc_coordinate(pot.x)
    u = pot.u
    best = 0.0
    j_lo = 0
    j_hi = 0
    n = s.size
    for i in range(n):
        while s[i] - s[j_lo] > r:
            j_lo += 1
        while j_hi + 1 < n and s[j_hi + 1] - s[i] <= r:
            j_hi += 1
        window = u[j_lo:j_hi + 1]
        best = max(best, window.max() - u[i], u[i] - window.min())
    return float(best)


# ---------------------------------------------------------------------------
# Named analytic profiles, used by the harness to resolve boundary recipes.

def profile_zero(x):
    return ToricPotential.zero(x)


def profile_constant(x, c=1.0):
    return ToricPotential(np.asarray(x, float), softplus(x) + c)


def profile_blend(x, a=0.5, b=2.0):
    """Smooth strictly admissible profile: psi = a*softplus(x-b) + (1-a)*softplus(x).

    Requires a in (0, 1); the second derivative stays comparable to the
    reference profile's on the whole line.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("blend weight must lie strictly between 0 and 1")
    x = np.asarray(x, dtype=float)
    return ToricPotential(x, a * softplus(x - b) + (1.0 - a) * softplus(x))


def profile_kink(x, x0=0.0):
    """Slope-saturated profile psi = max(0, x - x0); u has a kink at x0."""
    x = np.asarray(x, dtype=float)
    return ToricPotential(x, np.maximum(0.0, x - x0))


def profile_rooftop(x, a=0.6, b=3.0):
    """Projection of the minimum of two smooth admissible profiles."""
    x = np.asarray(x, dtype=float)
    u0 = profile_blend(x, a, b).u
    u1 = profile_blend(x, 1.0 - a, -b).u
    return project_psh(x, np.minimum(u0, u1))


PROFILES = {
    "zero": profile_zero,
    "constant": profile_constant,
    "blend": profile_blend,
    "kink": profile_kink,
    "rooftop": profile_rooftop,
}


def make_profile(name, x, *params):
    """Resolve a named profile with positional numeric parameters."""
    if name not in PROFILES:
        raise KeyError(f"unknown profile {name!r}")
    return PROFILES[name](x, *[float(p) for p in params])
