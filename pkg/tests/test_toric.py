import numpy as np
import pytest

from kq import toric
from kq.errors import NonConvexInput, SlopeOutOfRange
from kq.toric import (
    SymplecticPotential,
    ToricPotential,
    arc_coordinate,
    fs_weights,
    legendre,
    legendre_inverse,
    ma_energy,
    ma_masses,
    make_profile,
    modulus_of_continuity,
    project_psh,
    softplus,
    x_grid,
)

X = x_grid(512)


def admissible_samples():
    return [
        ToricPotential.zero(X),
        make_profile("blend", X, 0.6, 1.0),
        make_profile("blend", X, 0.4, -1.0),
        make_profile("kink", X, 0.5),
        make_profile("rooftop", X, 0.6, 3.0),
        make_profile("constant", X, -0.7),
    ]


def test_fs_weights_normalized():
    # the grid truncates two tails of mass ~e^{-x_max} each
    assert np.sum(fs_weights(X)) == pytest.approx(1.0, abs=1e-8)
    assert np.all(fs_weights(X) > 0)


def test_zero_potential_round_trip():
    pot = ToricPotential.zero(X)
    assert np.max(np.abs(pot.u)) == 0.0
    back = ToricPotential.from_u(X, pot.u)
    assert np.max(np.abs(back.psi - pot.psi)) == 0.0


def test_validate_rejects_nonconvex():
    bad = ToricPotential(X, softplus(X) - 0.05 * X * X)
    with pytest.raises(NonConvexInput):
        bad.validate()


def test_validate_rejects_slope_out_of_range():
    bad = ToricPotential(X, 1.5 * X)
    with pytest.raises((SlopeOutOfRange, NonConvexInput)):
        bad.validate()


def test_legendre_of_zero_is_negative_entropy():
    # psi = log(1+e^x) has conjugate p log p + (1-p) log(1-p)
    phi = legendre(ToricPotential.zero(X))
    p = phi.p
    inner = (p > 1e-12) & (p < 1.0 - 1e-12)
    exact = p[inner] * np.log(p[inner]) + (1 - p[inner]) * np.log(1 - p[inner])
    assert np.max(np.abs(phi.values[inner] - exact)) < 5e-4


def test_legendre_round_trip_on_admissible():
    for pot in admissible_samples():
        phi = legendre(pot)
        phi.validate()
        back = legendre_inverse(phi, X)
        assert np.max(np.abs(back.psi - pot.psi)) < 1e-3


def test_legendre_shift_covariance():
    pot = make_profile("blend", X, 0.6, 1.0)
    phi = legendre(pot)
    phi_shift = legendre(pot.shifted(0.3))
    assert np.max(np.abs(phi_shift.values - (phi.values - 0.3))) < 1e-12


def test_project_psh_fixes_admissible():
    for pot in admissible_samples():
        proj = project_psh(X, pot.u)
        assert np.max(np.abs(proj.u - pot.u)) < 1e-12


def test_project_psh_is_monotone_dominated_idempotent():
    rng = np.random.default_rng(3)
    f = np.cumsum(rng.normal(scale=0.05, size=X.size))
    proj = project_psh(X, f)
    proj.validate()
    assert np.max(proj.u - f) <= 1e-12
    again = project_psh(X, proj.u)
    assert np.max(np.abs(again.u - proj.u)) < 1e-12
    g = f + np.abs(np.sin(X))
    proj_g = project_psh(X, g)
    assert np.min(proj_g.u - proj.u) >= -1e-12


def test_ma_masses_sum_to_one():
    for pot in admissible_samples():
        assert np.sum(ma_masses(pot)) == pytest.approx(1.0, abs=1e-12)
        assert np.min(ma_masses(pot)) >= -1e-12


def test_ma_energy_normalization_and_constants():
    assert ma_energy(ToricPotential.zero(X)) == 0.0
    for c in (-1.3, 0.4, 2.0):
        assert ma_energy(ToricPotential.zero(X).shifted(c)) == pytest.approx(
            c, abs=1e-12
        )


def test_ma_energy_monotone_in_pointwise_order():
    lo = make_profile("blend", X, 0.6, 1.0)
    hi = ToricPotential.from_u(X, lo.u + 0.25)
    assert ma_energy(hi) > ma_energy(lo)


def test_arc_coordinate_range_and_midpoint():
    s = arc_coordinate(X)
    assert np.all(np.diff(s) > 0)
    # total meridian length of the area-1 round sphere is pi * (2 r0) / 2
    r0 = 1.0 / (2.0 * np.sqrt(np.pi))
    assert arc_coordinate(0.0) == pytest.approx(np.pi * r0 / 2.0, abs=1e-12)
    assert s[-1] < np.pi * r0


def test_modulus_of_continuity_nondecreasing():
    pot = make_profile("blend", X, 0.4, -1.0)
    radii = [0.01, 0.05, 0.1, 0.2, 0.5]
    vals = [modulus_of_continuity(pot, r) for r in radii]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    osc = float(np.max(pot.u) - np.min(pot.u))
    assert vals[-1] <= osc + 1e-12


def test_modulus_of_continuity_of_constant_is_zero():
    pot = make_profile("constant", X, 0.8)
    assert modulus_of_continuity(pot, 0.2) <= 1e-12


def test_symplectic_potential_validates_convexity():
    p = np.linspace(0.0, 1.0, 65)
    with pytest.raises(NonConvexInput):
        SymplecticPotential(p, -p * p).validate()


def test_make_profile_rejects_unknown():
    with pytest.raises(KeyError):
        make_profile("spiral", X)
