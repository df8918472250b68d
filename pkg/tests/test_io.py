import numpy as np
import pytest

from kq import io as kio
from kq.errors import IoFailure
from kq.hcma import make_domain, solve_geodesic
from kq.quantize import HermitianForm
from kq.toric import make_profile, x_grid

X = x_grid(64)


def test_potential_round_trip(tmp_path):
    pot = make_profile("blend", X, 0.6, 1.0)
    path = tmp_path / "pot.csv"
    kio.save_potential(path, pot)
    back = kio.load_potential(path)
    assert np.array_equal(back.x, pot.x)
    assert np.array_equal(back.psi, pot.psi)


def test_save_is_byte_stable(tmp_path):
    pot = make_profile("kink", X, 0.3)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    kio.save_potential(a, pot)
    kio.save_potential(b, pot)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "x,psi"


def test_field_round_trip(tmp_path):
    v0 = make_profile("blend", X, 0.6, 1.0)
    v1 = make_profile("blend", X, 0.4, -1.0)
    geo = solve_geodesic(v0, v1, 5)
    path = tmp_path / "field.csv"
    kio.save_field(path, geo)
    back = kio.load_field(path)
    assert np.array_equal(back.psi, geo.psi)
    assert np.array_equal(back.t, geo.t)


def test_form_round_trips_diagonal_and_dense(tmp_path):
    diag = HermitianForm("sections", log_diag=np.array([0.1, -0.4, 2.0]))
    p = tmp_path / "diag.csv"
    kio.save_form(p, diag)
    assert p.read_text().splitlines()[0] == "j,log_g"
    back = kio.load_form(p)
    assert np.array_equal(back.log_diag, diag.log_diag)

    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    dense = HermitianForm("sections", matrix=a @ a.conj().T + np.eye(3))
    q = tmp_path / "dense.csv"
    kio.save_form(q, dense)
    assert q.read_text().splitlines()[0] == "i,j,re,im"
    back = kio.load_form(q)
    assert np.max(np.abs(back.matrix - dense.matrix)) == 0.0


def test_header_mismatch_raises(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(IoFailure):
        kio.load_potential(p)


def test_report_serialization_cleans_numpy_types(tmp_path):
    report = {
        "margin": np.float64(1.5),
        "count": np.int64(3),
        "flag": np.bool_(True),
        "nested": {"values": [np.float64(0.1)]},
    }
    p = tmp_path / "report.json"
    kio.save_report(p, report)
    text = p.read_text()
    assert '"margin": 1.5' in text
    assert '"flag": true' in text
