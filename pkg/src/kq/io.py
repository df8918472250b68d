"""Deterministic CSV / JSON serialization for all solver artifacts.

Numbers are written with the %.17g format, which round-trips IEEE doubles
exactly, so re-running the same configuration yields byte-identical files.
All files are UTF-8 with LF line endings.
"""

import json

import numpy as np

from .errors import IoFailure
from .quantize import HermitianForm
from .toric import ToricPotential


def _fmt(v):
    return "%.17g" % float(v)


def _write_rows(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_rows(path, header):
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
            if first != header:
                raise IoFailure(f"{path}: expected header {header!r}, got {first!r}")
            return np.array(
                [[float(v) for v in line.split(",")] for line in fh if line.strip()]
            )
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def save_potential(path, pot):
    """Write a toric potential as CSV rows ``x,psi``."""
    _write_rows(path, "x,psi", zip(pot.x, pot.psi))


def load_potential(path):
    data = _read_rows(path, "x,psi")
    return ToricPotential(x=data[:, 0], psi=data[:, 1]).validate()


def save_field(path, field):
    """Write a geodesic/solution field as CSV rows ``t,x,psi,u``."""
    t, x, psi, u = field.t, field.x, field.psi, field.u
    rows = (
        (t[i], x[j], psi[i, j], u[i, j])
        for i in range(t.size)
        for j in range(x.size)
    )
    _write_rows(path, "t,x,psi,u", rows)


def load_field(path):
    from .hcma import GeodesicField

    data = _read_rows(path, "t,x,psi,u")
    t = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    if t.size * x.size != data.shape[0]:
        raise IoFailure(f"{path}: rows do not form a full t-x grid")
    psi = data[:, 2].reshape(t.size, x.size)
    return GeodesicField(t=t, x=x, psi=psi)


def save_form(path, form):
    """Write a Hermitian form: diagonal shortcut ``j,log_g`` when available,
    dense rows ``i,j,re,im`` otherwise."""
    if form.is_diagonal:
        _write_rows(path, "j,log_g", enumerate(form.log_diag))
        return
    m = form.matrix
    rows = (
        (i, j, m[i, j].real, m[i, j].imag)
        for i in range(m.shape[0])
        for j in range(m.shape[1])
    )
    _write_rows(path, "i,j,re,im", rows)


def load_form(path, space_tag="sections"):
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if header == "j,log_g":
        data = _read_rows(path, "j,log_g")
        order = np.argsort(data[:, 0])
        return HermitianForm(space_tag, log_diag=data[order, 1])
    data = _read_rows(path, "i,j,re,im")
    n = int(data[:, 0].max()) + 1
    m = np.zeros((n, n), dtype=complex)
    for i, j, re, im in data:
        m[int(i), int(j)] = re + 1j * im
    return HermitianForm(space_tag, matrix=m).validate()


def save_envelope(path, env):
    """Write an envelope grid: base coordinates, fiber coordinate, value."""
    eta = env.eta
    t = env.dom.t
    if env.psi.ndim == 2:
        rows = (
            (t[i], eta[j], env.psi[i, j])
            for i in range(t.size)
            for j in range(eta.size)
        )
        _write_rows(path, "t,eta,psi", rows)
    else:
        rows = (
            (t[i], t[j], eta[l], env.psi[i, j, l])
            for i in range(t.size)
            for j in range(t.size)
            for l in range(eta.size)
        )
        _write_rows(path, "t1,t2,eta,psi", rows)


def save_report(path, report):
    """Write a structured report (certificates, check results) as JSON."""

    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.floating, float)):
            return float(v)
        if isinstance(v, (np.integer, int)):
            return int(v)
        if isinstance(v, (np.bool_, bool)):
            return bool(v)
        return v

    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(clean(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_table(path, table):
    """Write a convergence table: ``k,sup_error_n,sup_error_m,rate,fitted_c``."""
    header = "k,sup_error_n,sup_error_m,rate,fitted_c"
    _write_rows(path, header, table.rows)
