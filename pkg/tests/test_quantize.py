import numpy as np
import pytest
from scipy.special import gammaln

from kq import quantize, toric
from kq.errors import DimensionMismatch, SingularForm
from kq.quantize import (
    HermitianForm,
    dual,
    evaluation_covector,
    fs,
    fs_hilb,
    fs_hilb_gap,
    fs_star,
    hilbert_map,
)
from kq.toric import ToricPotential, make_profile, x_grid

X = x_grid(1024)


def random_pd(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return HermitianForm("sections", matrix=a @ a.conj().T + 0.1 * np.eye(n))


def test_hilbert_map_zero_potential_beta_integrals():
    # G_jj = B(j+1, k-j+1) = 1 / ((k+1) binom(k, j))
    for k in (1, 2, 5, 16):
        g = hilbert_map(ToricPotential.zero(X), k)
        j = np.arange(k + 1)
        exact = -(
            np.log(k + 1.0)
            + gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1)
        )
        assert np.max(np.abs(g.log_diag - exact)) < 1e-6


def test_hilbert_map_monotone_antitone():
    lo = make_profile("blend", X, 0.6, 1.0)
    hi = ToricPotential.from_u(X, lo.u + 0.2)
    g_lo = hilbert_map(lo, 8)
    g_hi = hilbert_map(hi, 8)
    # larger potential => smaller Gram integrals
    assert np.all(g_hi.log_diag < g_lo.log_diag)


def test_dual_is_involution():
    rng = np.random.default_rng(11)
    for n in (2, 4, 7):
        form = random_pd(rng, n)
        back = dual(dual(form))
        assert back.space_tag == form.space_tag
        assert np.max(np.abs(back.matrix - form.matrix)) < 1e-10
    diag = HermitianForm("sections", log_diag=rng.normal(size=5))
    assert np.max(np.abs(dual(dual(diag)).log_diag - diag.log_diag)) == 0.0


def test_validate_rejects_non_hermitian_and_non_pd():
    m = np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex)
    with pytest.raises(SingularForm):
        HermitianForm("sections", matrix=m).validate()
    m = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    with pytest.raises(SingularForm):
        HermitianForm("sections", matrix=m).validate()


def test_evaluation_covector_phase_invariance():
    cov = evaluation_covector(0.7, 6)
    form = HermitianForm("dual_sections", log_diag=np.linspace(-1, 1, 7))
    base = float(np.real(cov.coords.conj() @ form.as_matrix() @ cov.coords))
    rot = cov.with_phase(1.3)
    assert float(np.real(rot.conj() @ form.as_matrix() @ rot)) == pytest.approx(
        base, rel=1e-12
    )


def test_fs_and_fs_star_agree_on_random_forms():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        form = random_pd(rng, n)
        k = n - 1
        for x in rng.uniform(-8.0, 8.0, 5):
            assert abs(fs(form, k, x) - fs_star(dual(form), k, x)) < 1e-10


def test_fs_star_accepts_evaluate_objects():
    class DualNorm:
        def __init__(self, form):
            self.m = form.as_matrix()

        def evaluate(self, coords):
            return float(np.sqrt(np.real(coords.conj() @ self.m @ coords)))

    rng = np.random.default_rng(2)
    form = random_pd(rng, 4)
    d = dual(form)
    d_obj = DualNorm(d)
    for x in (-2.0, 0.0, 1.5):
        assert fs_star(d_obj, 3, x) == pytest.approx(fs_star(d, 3, x), abs=1e-12)


def test_fs_dimension_mismatch():
    form = HermitianForm("sections", log_diag=np.zeros(4))
    with pytest.raises(DimensionMismatch):
        fs(form, 5, 0.0)


def test_fs_hilb_zero_potential_constant_gap():
    # FS_k(Hilbert_k(0)) = log(k+1)/k exactly
    for k in (1, 2, 4, 8, 32):
        prof = fs_hilb(ToricPotential.zero(X), k)
        exact = np.log(k + 1.0) / k
        assert np.max(np.abs(prof - exact)) < 1e-7


def test_fs_hilb_gap_signs_and_decay():
    v = make_profile("blend", X, 0.5, 0.0)
    lowers, uppers = zip(*(fs_hilb_gap(v, k) for k in (4, 8, 16, 32)))
    # round trip dominates the potential from above at these levels
    assert all(lo <= 1e-8 for lo in lowers)
    assert all(up > 0 for up in uppers)
    assert all(b < a for a, b in zip(uppers, uppers[1:]))


def test_hilbert_map_shift_covariance():
    v = make_profile("blend", X, 0.6, 1.0)
    k = 6
    g = hilbert_map(v, k)
    g_shift = hilbert_map(ToricPotential.from_u(X, v.u + 0.5), k)
    assert np.max(np.abs(g_shift.log_diag - (g.log_diag - k * 0.5))) < 1e-10
