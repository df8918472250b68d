"""Property-based invariants on randomly generated grid data."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kq.toric import (
    ToricPotential,
    ma_masses,
    modulus_of_continuity,
    project_psh,
    x_grid,
)

X = x_grid(128)

bounded_floats = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=30, deadline=None)
@given(st.lists(bounded_floats, min_size=8, max_size=8), st.integers(0, 10**6))
def test_projection_is_dominated_monotone_idempotent(vals, seed):
    rng = np.random.default_rng(seed)
    # random continuous grid function: smooth interpolation plus noise
    anchors = np.linspace(X[0], X[-1], len(vals))
    f = np.interp(X, anchors, np.array(vals)) + 0.01 * rng.normal(size=X.size)
    proj = project_psh(X, f)
    proj.validate()
    assert np.max(proj.u - f) <= 1e-10
    again = project_psh(X, proj.u)
    assert np.max(np.abs(again.u - proj.u)) <= 1e-10
    higher = project_psh(X, f + 0.5)
    assert np.min(higher.u - proj.u) >= -1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-5.0, 5.0), st.floats(-2.0, 2.0))
def test_masses_sum_and_shift_invariance(a, b, c):
    from kq.toric import make_profile

    pot = make_profile("blend", X, a, b)
    assert abs(np.sum(ma_masses(pot)) - 1.0) < 1e-10
    shifted = pot.shifted(c)
    assert np.max(np.abs(ma_masses(shifted) - ma_masses(pot))) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-3.0, 3.0),
       st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(-2.0, 2.0))
def test_modulus_monotone_and_shift_invariant(a, b, r1, r2, c):
    from kq.toric import make_profile

    pot = make_profile("blend", X, a, b)
    lo, hi = sorted((r1, r2))
    assert modulus_of_continuity(pot, lo) <= modulus_of_continuity(pot, hi)
    shifted = pot.shifted(c)
    assert modulus_of_continuity(shifted, hi) == pytest.approx(
        modulus_of_continuity(pot, hi), abs=1e-12
    )
