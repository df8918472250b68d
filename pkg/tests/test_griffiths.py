import numpy as np
import pytest

from kq import griffiths as gr
from kq.errors import BoundaryNotNorm, InsufficientStrength
from kq.griffiths import (
    GridFinsler,
    background_metric,
    certify_griffiths_negative,
    check_norm_profile,
    envelope_degeneracy,
    eta_grid,
    hermitian_profile,
    hym_nondegeneracy,
    largest_norm_below,
    matrix_geodesic,
    perron_envelope,
    perron_envelope_norms,
    quadratic_fit_residual,
    solve_hym,
)
from kq.hcma import make_domain
from kq.quantize import HermitianForm

ETA = eta_grid(128)
F0 = HermitianForm("dual_sections", log_diag=np.array([0.3, -0.5]))
F1 = HermitianForm("dual_sections", log_diag=np.array([-0.8, 0.6]))
G0 = hermitian_profile(ETA, F0)
G1 = hermitian_profile(ETA, F1)


def closed_form_family(dom, f0=F0, f1=F1):
    return np.array([
        hermitian_profile(ETA, matrix_geodesic(f0, f1, t)).log_sq
        for t in dom.t
    ])


def test_hermitian_profile_identity_is_softplus():
    ident = HermitianForm("dual_sections", log_diag=np.zeros(2))
    prof = hermitian_profile(ETA, ident)
    assert np.max(np.abs(prof.log_sq - np.logaddexp(0.0, ETA))) < 1e-12
    prof.validate_psh()


def test_grid_finsler_evaluate_matches_profile():
    xi = np.array([0.7, 0.4j])
    eta_pt = 2.0 * np.log(0.4 / 0.7)
    val = G0.evaluate(xi)
    expect = 0.7 * np.exp(G0.profile(eta_pt) / 2.0)
    assert val == pytest.approx(expect, rel=1e-10)
    # absolute homogeneity
    assert G0.evaluate(1.7j * xi) == pytest.approx(1.7 * val, rel=1e-12)


def test_matrix_geodesic_endpoints_and_diagonal_log_affine():
    for t in (0.0, 0.25, 1.0):
        g = matrix_geodesic(F0, F1, t)
        exact = (1 - t) * F0.log_diag + t * F1.log_diag
        assert np.max(np.abs(g.log_diag - exact)) < 1e-12


def test_matrix_geodesic_full_matrix_route_agrees():
    m0 = HermitianForm("dual_sections", matrix=np.diag(np.exp(F0.log_diag)).astype(complex))
    m1 = HermitianForm("dual_sections", matrix=np.diag(np.exp(F1.log_diag)).astype(complex))
    g = matrix_geodesic(m0, m1, 0.35)
    exact = np.diag(np.exp(0.65 * F0.log_diag + 0.35 * F1.log_diag))
    assert np.max(np.abs(g.as_matrix() - exact)) < 1e-12


def test_largest_norm_below_fixes_norms_and_is_idempotent():
    for prof in (G0, G1):
        out = largest_norm_below(ETA, prof.log_sq)
        assert np.max(np.abs(out - prof.log_sq)) < 1e-12
    broken = np.minimum(G0.log_sq, G1.log_sq)  # min of norms is not a norm
    out = largest_norm_below(ETA, broken)
    assert np.max(broken - out) > 0.1
    again = largest_norm_below(ETA, out)
    assert np.max(np.abs(again - out)) < 1e-12


def test_check_norm_profile_rejects_non_norm():
    check_norm_profile(ETA, G0.log_sq)
    with pytest.raises(BoundaryNotNorm):
        check_norm_profile(ETA, np.minimum(G0.log_sq, G1.log_sq))


def test_background_metric_requires_strength():
    dom = make_domain("annulus", 17)
    background_metric(dom, None, 4.0, ETA)
    with pytest.raises(InsufficientStrength):
        background_metric(dom, None, 0.0, ETA)


def test_solve_hym_shift_covariance():
    dom = make_domain("annulus", 17)
    bg = background_metric(dom, None, 4.0, ETA)
    phi = solve_hym(dom, (G0, G1), bg)
    shift = 0.7
    g0s = GridFinsler(ETA, G0.log_sq + shift)
    g1s = GridFinsler(ETA, G1.log_sq + shift)
    phi_s = solve_hym(dom, (g0s, g1s), bg)
    assert np.max(np.abs(phi_s - (phi + shift))) < 1e-9


def test_perron_envelope_matches_matrix_geodesic():
    dom = make_domain("annulus", 33)
    bg = background_metric(dom, None, 4.0, ETA)
    env = perron_envelope(dom, (G0, G1), bg)
    closed = closed_form_family(dom) - bg.log_total()
    assert np.max(np.abs(env.psi - closed)) < 5e-3
    assert env.boundary_gap((G0, G1)) < 1e-12


def test_norm_envelope_below_metric_envelope_below_barrier():
    dom = make_domain("annulus", 33)
    bg = background_metric(dom, None, 4.0, ETA)
    env = perron_envelope(dom, (G0, G1), bg)
    env_n = perron_envelope_norms(dom, (G0, G1), bg)
    assert np.max(env_n.psi - env.psi) <= 1e-8
    assert np.max(env.psi - env.barrier) <= 1e-8
    assert env_n.boundary_gap((G0, G1)) < 1e-10


def test_envelope_degenerate_barrier_nondegenerate():
    dom = make_domain("annulus", 33)
    bg = background_metric(dom, None, 4.0, ETA)
    env = perron_envelope(dom, (G0, G1), bg)
    h_e = ETA[1] - ETA[0]
    assert envelope_degeneracy(env.log_total, dom.h_t, h_e) <= 1e-8
    assert hym_nondegeneracy(env) >= 1e-3


def test_quadratic_fit_residual_separates_hermitian_profiles():
    assert quadratic_fit_residual(ETA, G0.log_sq) < 1e-8
    bent = G0.log_sq + 0.3 * np.exp(-0.5 * ETA**2)
    assert quadratic_fit_residual(ETA, bent) > 0.05


def test_certificate_flags_flat_family_negative():
    dom = make_domain("annulus", 33)
    h_e = ETA[1] - ETA[0]
    closed = closed_form_family(dom)
    cert = certify_griffiths_negative(closed, dom.h_t, h_e)
    assert cert.negative
    assert min(cert.signs) >= 0.0


def test_certificate_flags_concave_bump_positive():
    dom = make_domain("annulus", 33)
    h_e = ETA[1] - ETA[0]
    t = dom.t
    bumped = closed_form_family(dom) + 3.0 * (t * (1.0 - t))[:, None]
    cert = certify_griffiths_negative(bumped, dom.h_t, h_e)
    assert not cert.negative
    assert max(cert.signs) < 0.0


def test_certificate_sign_agreement_random_families():
    dom = make_domain("annulus", 17)
    h_e = ETA[1] - ETA[0]
    rng = np.random.default_rng(23)
    t = dom.t
    for _ in range(20):
        f0 = HermitianForm("dual_sections", log_diag=rng.normal(scale=0.8, size=2))
        f1 = HermitianForm("dual_sections", log_diag=rng.normal(scale=0.8, size=2))
        c = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
        fam = closed_form_family(dom, f0, f1) + c * (t * (1.0 - t))[:, None]
        cert = certify_griffiths_negative(fam, dom.h_t, h_e)
        assert len(set(cert.signs)) == 1
        assert cert.negative == (c < 0.0)
