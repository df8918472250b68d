"""Hilbert and Fubini-Study maps on sections of the degree-k line bundle.

For a rotation-invariant potential the Gram matrix of the monomial basis
``1, z, ..., z^k`` is diagonal, and everything reduces to log-space quadrature
over the log-coordinate grid: ``log G_jj`` is a log-sum-exp of
``j x - k log(1+e^x) - k u(x)`` against the normalized area weights.  Dual
forms use the inverse-conjugate convention so that duality is an involution
and composes the antitone Hilbert/FS maps into monotone ones.

Two independent numerical routes compute the Fubini-Study value at a point:
``fs`` solves a triangular system from the Cholesky factor of the Gram
matrix, while ``fs_star`` evaluates the dual form on the evaluation covector.
Their agreement is the discrete Kobayashi-Royden/Wu-type equality test.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    QuadratureUnderflow,
    SingularForm,
    ZeroEvaluation,
)
from .toric import ToricPotential, fs_weights, softplus

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HermitianForm:
    """Positive-definite Hermitian form on sections or dual sections.

    Diagonal (invariant) forms are stored through ``log_diag`` to stay well
    conditioned up to k = 64; generic forms store the full complex matrix.
    Exactly one of the two representations is set.
    """

    space_tag: str  # "sections" or "dual_sections"
    log_diag: np.ndarray = None
    matrix: np.ndarray = None

    def __post_init__(self):
        if (self.log_diag is None) == (self.matrix is None):
            raise ValueError("exactly one of log_diag, matrix must be given")
        if self.space_tag not in ("sections", "dual_sections"):
            raise ValueError(f"bad space_tag {self.space_tag!r}")
        if self.log_diag is not None:
            object.__setattr__(
                self, "log_diag", np.asarray(self.log_diag, dtype=float)
            )
        else:
            object.__setattr__(
                self, "matrix", np.asarray(self.matrix, dtype=complex)
            )

    @property
    def dim(self):
        if self.log_diag is not None:
            return self.log_diag.size
        return self.matrix.shape[0]

    @property
    def is_diagonal(self):
        return self.log_diag is not None

    def as_matrix(self):
        if self.is_diagonal:
            return np.diag(np.exp(self.log_diag)).astype(complex)
        return self.matrix

    def validate(self):
        if self.is_diagonal:
            if not np.all(np.isfinite(self.log_diag)):
                raise SingularForm("non-finite diagonal entries")
            return self
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SingularForm("matrix must be square")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.conj().T).max() > HERMITIAN_TOL * scale:
            raise SingularForm("matrix is not Hermitian to 1e-12")
        eigs = np.linalg.eigvalsh(m)
        if eigs.min() <= 0.0:
            raise SingularForm(f"smallest eigenvalue {eigs.min():.3e} not positive")
        return self


def dual(form):
    """Dual form on the dual space: inverse-conjugate matrix, tag flipped.

    For diagonal forms this negates the log entries, which makes duality an
    exact involution.
    """
    form.validate()
    tag = "dual_sections" if form.space_tag == "sections" else "sections"
    if form.is_diagonal:
        return HermitianForm(tag, log_diag=-form.log_diag)
    return HermitianForm(tag, matrix=np.linalg.inv(form.matrix).conj())


def hilbert_map(pot, k):
    """Gram form of the monomial sections under the weighted L2 pairing.

    ``log G_jj = logsumexp_x [ j x - k log(1+e^x) - k u(x) + log w(x) ]``
    with the normalized area weights w.  For u = 0 this reproduces the Beta
    integrals ``G_jj = 1/((k+1) binom(k, j))``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pot.validate()
    x = pot.x
    logw = np.log(fs_weights(x))
    base = -k * softplus(x) - k * pot.u + logw
    j = np.arange(k + 1)
    log_g = logsumexp(j[:, None] * x[None, :] + base[None, :], axis=1)
    if not np.all(np.isfinite(log_g)):
        raise QuadratureUnderflow("Gram quadrature lost all mass on the grid")
    return HermitianForm("sections", log_diag=log_g)


@dataclass(frozen=True, eq=False)
class EvaluationCovector:
    """Pointwise evaluation functional at a log coordinate, phase-free.

    ``coords_j = exp(j x / 2 - (k/2) log(1+e^x))`` in the dual monomial
    basis; ``log_coords`` carries the same data without underflow.  All
    consumers must be invariant under a global unimodular factor.
    """

    point: float
    k: int
    log_coords: np.ndarray

    @property
    def coords(self):
        return np.exp(self.log_coords).astype(complex)

    def with_phase(self, theta):
        return np.exp(1j * theta) * self.coords


def evaluation_covector(x, k):
    """Unit-norm evaluation covector at log coordinate x, real phase choice."""
    if k < 1:
        raise ValueError("k must be >= 1")
    j = np.arange(k + 1)
    log_coords = 0.5 * j * x - 0.5 * k * softplus(np.asarray(x, float))
    return EvaluationCovector(float(x), int(k), log_coords)


def fs_star(metric, k, x):
    """Dual Fubini-Study value ``(2/k) log metric(evaluation covector)``.

    ``metric`` is either a HermitianForm tagged dual_sections or any object
    with an ``evaluate(coords)`` method that is absolutely 1-homogeneous.
    """
    cov = evaluation_covector(x, k)
    if isinstance(metric, HermitianForm):
        if metric.space_tag != "dual_sections":
            raise ValueError("fs_star expects a form on the dual space")
        if metric.dim != k + 1:
            raise DimensionMismatch(f"form dim {metric.dim} != k+1 = {k + 1}")
        if metric.is_diagonal:
            return float(logsumexp(2.0 * cov.log_coords + metric.log_diag) / k)
        c = cov.coords
        val = np.real(c.conj() @ metric.matrix @ c)
        if val <= 0.0:
            raise ZeroEvaluation("dual form vanished on the evaluation covector")
        return float(np.log(val) / k)
    val = metric.evaluate(cov.coords)
    if not val > 0.0:
        raise ZeroEvaluation("metric vanished on the evaluation covector")
    return float(2.0 * np.log(val) / k)


def fs(form, k, x):
    """Fubini-Study value via the primal route.

    Computes the square of the dual norm of the evaluation covector over the
    unit ball of the Gram form, through a triangular solve against the
    Cholesky factor; independent of the ``dual``-based route up to rounding.
    """
    form.validate()
    if form.space_tag != "sections":
        raise ValueError("fs expects a form on sections")
    if form.dim != k + 1:
        raise DimensionMismatch(f"form dim {form.dim} != k+1 = {k + 1}")
    cov = evaluation_covector(x, k)
    if form.is_diagonal:
        return float(logsumexp(2.0 * cov.log_coords - form.log_diag) / k)
    low = cholesky(form.matrix, lower=True)
    y = solve_triangular(low.conj(), cov.coords, lower=True)
    val = np.real(y.conj() @ y)
    if val <= 0.0:
        raise ZeroEvaluation("evaluation covector annihilated by the form")
    return float(np.log(val) / k)


def fs_hilb(pot, k):
    """Profile of FS_k(Hilbert_k(pot)) on the potential's own grid."""
    g = hilbert_map(pot, k)
    x = pot.x
    j = np.arange(k + 1)
    # log |coords_j(x)|^2 = j x - k softplus(x)
    log_c2 = j[:, None] * x[None, :] - k * softplus(x)[None, :]
    return logsumexp(log_c2 - g.log_diag[:, None], axis=0) / k


def fs_hilb_gap(pot, k):
    """Two-sided sup gaps between a potential and its quantized round trip."""
    pot.validate()
    prof = fs_hilb(pot, k)
    u = pot.u
    lower = float(np.max(u - prof))
    upper = float(np.max(prof - u))
    return lower, upper
