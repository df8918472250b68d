"""Experiment orchestration: configuration, convergence pipeline, emission.

Configurations are flat INI files with one section per module; the packaged
``data/default.ini`` reproduces the standard battery without authoring.  Per
level k the pipeline quantizes the boundary data, interpolates the dual forms
across the base, pulls back through the dual Fubini-Study map, and measures
the sup gap against the exact geodesic.  Per-k stages run in a thread pool
capped by the KQ_THREADS environment variable; emission is serialized and
deterministic (identical config => byte-identical files).
"""

import configparser
import hashlib
import importlib.resources
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import io as kio
from . import quantize, toric
from .errors import ConfigError, IoFailure
from .hcma import GeodesicField, make_domain, solve_geodesic
from .toric import PROFILES, ToricPotential, make_profile, softplus, x_grid

KINDS = ("geodesic", "quantize", "envelope", "hym", "converge", "certify")
DOMAIN_KINDS = ("strip", "annulus", "bidisc")


def thread_count():
    """Parallelism cap from KQ_THREADS (default 4, minimum 1)."""
    try:
        return max(1, int(os.environ.get("KQ_THREADS", "4")))
    except ValueError:
        return 4


@dataclass
class ExperimentConfig:
    """Validated experiment description; one instance drives one run."""

    kind: str = "converge"
    domain_kind: str = "annulus"
    n_t: int = 33
    resolution: int = 512
    eta_resolution: int = 128
    k_list: tuple = (2, 4, 8, 16, 32)
    v0: str = "blend:0.6,1.0"
    v1: str = "blend:0.4,-1.0"
    log_diag0: tuple = (0.3, -0.5)
    log_diag1: tuple = (-0.8, 0.6)
    strength: float = 4.0
    fit_residual: float = 0.25
    tol_bdry: float = 1e-6
    out_dir: str = "out"

    def canonical_text(self):
        items = sorted(
            (k, v) for k, v in self.__dict__.items() if not k.startswith("_")
        )
        return "\n".join(f"{k} = {v}" for k, v in items) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.domain_kind not in DOMAIN_KINDS:
            raise ConfigError(f"unknown domain kind {self.domain_kind!r}")
        ks = tuple(self.k_list)
        if any(b <= a for a, b in zip(ks, ks[1:])) or any(k < 1 for k in ks):
            raise ConfigError(f"k_list must be strictly increasing: {ks}")
        for name, res in (("resolution", self.resolution),
                          ("eta_resolution", self.eta_resolution)):
            if res < 2 or res & (res - 1):
                raise ConfigError(f"{name} must be a power of two, got {res}")
        if self.n_t < 3:
            raise ConfigError("n_t must be at least 3")
        for recipe in (self.v0, self.v1):
            name = recipe.split(":", 1)[0]
            if name not in PROFILES:
                raise ConfigError(f"unresolvable profile {name!r} in {recipe!r}")
        return self

    def profile(self, recipe):
        """Resolve a ``name:p1,p2`` recipe on the configured x grid."""
        x = x_grid(self.resolution)
        name, _, params = recipe.partition(":")
        args = [p for p in params.split(",") if p] if params else []
        try:
            return make_profile(name, x, *args)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad profile recipe {recipe!r}: {exc}") from exc

    def boundary_pair(self):
        return self.profile(self.v0), self.profile(self.v1)


def _parse_list(text, cast):
    return tuple(cast(v) for v in text.replace(" ", "").split(",") if v)


def load_config(path=None, overrides=None):
    """Read an INI config (packaged default when path is None) and validate."""
    parser = configparser.ConfigParser()
    if path is None:
        text = (
            importlib.resources.files("kq") / "data" / "default.ini"
        ).read_text(encoding="utf-8")
        parser.read_string(text)
    else:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    cfg = ExperimentConfig()
    try:
        get = parser.get
        if parser.has_option("experiment", "kind"):
            cfg.kind = get("experiment", "kind")
        if parser.has_option("domain", "kind"):
            cfg.domain_kind = get("domain", "kind")
        if parser.has_option("domain", "n_t"):
            cfg.n_t = parser.getint("domain", "n_t")
        if parser.has_option("grids", "resolution"):
            cfg.resolution = parser.getint("grids", "resolution")
        if parser.has_option("grids", "eta_resolution"):
            cfg.eta_resolution = parser.getint("grids", "eta_resolution")
        if parser.has_option("quantize", "k_list"):
            cfg.k_list = _parse_list(get("quantize", "k_list"), int)
        if parser.has_option("boundary", "v0"):
            cfg.v0 = get("boundary", "v0").strip()
        if parser.has_option("boundary", "v1"):
            cfg.v1 = get("boundary", "v1").strip()
        if parser.has_option("griffiths", "log_diag0"):
            cfg.log_diag0 = _parse_list(get("griffiths", "log_diag0"), float)
        if parser.has_option("griffiths", "log_diag1"):
            cfg.log_diag1 = _parse_list(get("griffiths", "log_diag1"), float)
        if parser.has_option("griffiths", "strength"):
            cfg.strength = parser.getfloat("griffiths", "strength")
        if parser.has_option("tolerances", "fit_residual"):
            cfg.fit_residual = parser.getfloat("tolerances", "fit_residual")
        if parser.has_option("tolerances", "boundary"):
            cfg.tol_bdry = parser.getfloat("tolerances", "boundary")
        if parser.has_option("output", "dir"):
            cfg.out_dir = get("output", "dir")
    except (configparser.Error, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for key, value in (overrides or {}).items():
        setattr(cfg, key, value)
    return cfg.validate()


@dataclass
class ConvergenceTable:
    """Per-k sup errors of the quantized envelope against the geodesic."""

    rows: list                       # (k, err_n, err_m, log(k)/k, fitted_c)
    config_hash: str = ""
    wall_time: float = 0.0
    fit_residual: float = 0.0

    def validate(self):
        ks = [r[0] for r in self.rows]
        if ks != sorted(ks):
            raise ValueError("rows must be sorted by k")
        if any(r[1] < 0 or r[2] < 0 for r in self.rows):
            raise ValueError("sup errors must be nonnegative")
        return self


def dual_fs_profile(log_diag_dual, k, x):
    """Profile ``x -> FS*_k`` of a diagonal dual form, relative potential."""
    j = np.arange(k + 1)
    expo = (log_diag_dual[:, None] + j[:, None] * x[None, :]
            - k * softplus(x)[None, :])
    return logsumexp(expo, axis=0) / k


def quantized_family(v0, v1, t, k, norms=False):
    """Pull back the interpolated quantized boundary data through FS*.

    The dual Gram forms of the endpoints are interpolated by the matrix
    geodesic (log-affine for these diagonal forms) across the base; with
    circle-invariant boundary data the norm-constrained and the Hermitian
    interpolations coincide, so ``norms`` only switches the evaluation to the
    generic covector route as an independent check.
    """
    ld0 = -quantize.hilbert_map(v0, k).log_diag
    ld1 = -quantize.hilbert_map(v1, k).log_diag
    x = v0.x
    out = np.empty((t.size, x.size))
    for i, ti in enumerate(t):
        ld = (1.0 - ti) * ld0 + ti * ld1
        if norms:
            form = quantize.HermitianForm("dual_sections", log_diag=ld)
            out[i] = [quantize.fs_star(form, k, xx) for xx in x]
        else:
            out[i] = dual_fs_profile(ld, k, x)
    return out


def run_convergence(cfg):
    """Errors of the quantized-envelope pipeline per level k.

    Emits both the norm-constrained (N) and Hermitian (M) error columns and
    the single constant C fitted to err ~ C log(k)/k by least squares.
    """
    cfg.validate()
    start = time.time()
    v0, v1 = cfg.boundary_pair()
    geo = solve_geodesic(v0, v1, cfg.n_t)
    u = geo.u
    t = geo.t

    def one_k(k):
        err_m = float(np.max(np.abs(quantized_family(v0, v1, t, k) - u)))
        err_n = float(np.max(np.abs(
            quantized_family(v0, v1, t, k, norms=True) - u)))
        return err_n, err_m

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        errs = list(pool.map(one_k, cfg.k_list))

    ks = np.array(cfg.k_list, float)
    rate = np.where(ks > 1, np.log(np.maximum(ks, 1.0)) / ks, 0.0)
    err_m = np.array([e[1] for e in errs])
    active = rate > 0
    denom = float(rate[active] @ rate[active])
    fitted_c = float(rate[active] @ err_m[active] / denom) if denom else 0.0
    resid = (
        float(np.max(np.abs(err_m[active] - fitted_c * rate[active]))
              / np.max(err_m[active]))
        if np.any(active) and np.max(err_m[active]) > 0 else 0.0
    )
    rows = [
        (int(k), errs[i][0], errs[i][1], rate[i], fitted_c)
        for i, k in enumerate(cfg.k_list)
    ]
    return ConvergenceTable(
        rows=rows,
        config_hash=cfg.config_hash(),
        wall_time=time.time() - start,
        fit_residual=resid,
    ).validate()


JOINT_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


def joint_psh_margin(t, x, psi):
    """Worst discrete joint-convexity and slope margin of a base-fiber field.

    Second differences along the four lattice directions of the (t, x) grid
    divided by the squared step, plus the fiber slope-range margins; all
    nonnegative exactly when every reduced direction is admissible.
    """
    h_t = t[1] - t[0]
    h_x = x[1] - x[0]
    worst = np.inf
    for dt, dx in JOINT_DIRECTIONS:
        step2 = (dt * h_t) ** 2 + (dx * h_x) ** 2
        second = (
            np.roll(np.roll(psi, -dt, axis=0), -dx, axis=1)
            - 2.0 * psi
            + np.roll(np.roll(psi, dt, axis=0), dx, axis=1)
        )
        ti = slice(abs(dt), psi.shape[0] - abs(dt) or None)
        xi = slice(abs(dx), psi.shape[1] - abs(dx) or None)
        worst = min(worst, float(np.min(second[ti, xi]) / step2))
    slopes = np.diff(psi, axis=1) / h_x
    worst = min(worst, float(np.min(slopes)), float(np.min(1.0 - slopes)))
    return worst


def run_semiclassical_psh_check(cfg, positive_control=False):
    """Joint admissibility of the pulled-back quantized families per k.

    With ``positive_control`` a concave-in-t bump is added to the family, so
    the check must fail with a strictly negative margin; this guards the test
    against vacuous passes.
    """
    cfg.validate()
    start = time.time()
    v0, v1 = cfg.boundary_pair()
    x = v0.x
    t = make_domain(cfg.domain_kind if cfg.domain_kind != "bidisc" else "annulus",
                    cfg.n_t).t
    sp = softplus(x)
    tol = 1e-9

    def one_k(k):
        fam = quantized_family(v0, v1, t, k)
        if positive_control:
            fam = fam + 0.5 * (t * (1.0 - t))[:, None]
        margin = joint_psh_margin(t, x, fam + sp[None, :])
        return {"k": int(k), "worst_margin": margin, "passes": margin >= -tol}
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        per_k = list(pool.map(one_k, cfg.k_list))
    all_pass = all(r["passes"] for r in per_k)
    return {
        "check": "joint_psh",
        "positive_control": positive_control,
        "per_k": per_k,
        "worst_margin": min(r["worst_margin"] for r in per_k),
        "passes": all_pass if not positive_control else not all_pass,
        "wall_time": time.time() - start,
        "config_hash": cfg.config_hash(),
    }


def emit(cfg, artifacts):
    """Write all artifacts plus a manifest; collect invariant failures.

    Returns (exit_code, written_paths): 0 on success, 2 when any artifact
    reported an invariant failure (also writes ``failures.csv``).
    """
    created = not os.path.isdir(cfg.out_dir)
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {cfg.out_dir}: {exc}") from exc
    written = []
    failures = []
    wall_times = {}
    for name, art in artifacts.items():
        path = os.path.join(cfg.out_dir, name)
        if isinstance(art, ConvergenceTable):
            kio.save_table(path, art)
            wall_times[name] = art.wall_time
        elif isinstance(art, GeodesicField):
            kio.save_field(path, art)
        elif isinstance(art, ToricPotential):
            kio.save_potential(path, art)
        elif isinstance(art, quantize.HermitianForm):
            kio.save_form(path, art)
        elif isinstance(art, dict):
            kio.save_report(path, art)
            if "wall_time" in art:
                wall_times[name] = art["wall_time"]
            if art.get("passes") is False:
                failures.append((name, art.get("worst_margin", float("nan"))))
        else:
            kio.save_envelope(path, art)
        written.append(path)
    if failures:
        fail_path = os.path.join(cfg.out_dir, "failures.csv")
        with open(fail_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("artifact,worst_margin\n")
            for name, margin in failures:
                fh.write("%s,%.17g\n" % (name, margin))
        written.append(fail_path)
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.canonical_text(),
        "out_dir_created": created,
        "grid": {
            "resolution": cfg.resolution,
            "eta_resolution": cfg.eta_resolution,
            "n_t": cfg.n_t,
        },
        "tolerances": {
            "fit_residual": cfg.fit_residual,
            "boundary": cfg.tol_bdry,
        },
        "k_list": list(cfg.k_list),
        "wall_times": wall_times,
        "files": [os.path.basename(p) for p in written],
    }
    man_path = os.path.join(cfg.out_dir, "manifest.json")
    kio.save_report(man_path, manifest)
    written.append(man_path)
    return (2 if failures else 0), written
