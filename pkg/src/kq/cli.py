"""Command line entry point: batch experiments driven by INI configs.

Exit codes: 0 on success, 2 when an invariant suite fails (a ``failures.csv``
is written alongside the artifacts) or the configuration is invalid, 3 on a
solver error.
"""

import argparse
import sys

import numpy as np

from . import griffiths as gr
from . import harness, quantize
from .errors import ConfigError, KqError
from .hcma import make_domain, solve_geodesic


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kq",
        description="Envelopes of invariant metric potentials and their "
                    "quantization maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("geodesic", "solve the boundary-value geodesic and write the field"),
        ("quantize", "write the Gram forms of the first boundary potential"),
        ("envelope", "solve the metric and norm envelopes over the base"),
        ("hym", "solve the linear barrier equation and write the potential"),
        ("converge", "run the convergence battery and the joint-psh check"),
        ("certify", "certify negativity of the configured metric family"),
    ):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument("--config", metavar="PATH",
                         help="INI experiment config")
        cmd.add_argument("--default", action="store_true",
                         help="use the packaged default battery")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
        cmd.add_argument("--resolution", type=int, metavar="N",
                         help="base grid resolution (power of two)")
        cmd.add_argument("--k", metavar="LIST",
                         help="comma-separated strictly increasing levels")
    return parser


def _config_from_args(args):
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.resolution:
        overrides["resolution"] = args.resolution
    if args.k:
        overrides["k_list"] = tuple(int(v) for v in args.k.split(","))
    path = None if (args.default or not args.config) else args.config
    cfg = harness.load_config(path, overrides)
    cfg.kind = args.command
    return cfg


def _griffiths_setup(cfg):
    eta = gr.eta_grid(cfg.eta_resolution)
    dom = make_domain(cfg.domain_kind, cfg.n_t)
    f0 = quantize.HermitianForm("dual_sections",
                                log_diag=np.asarray(cfg.log_diag0))
    f1 = quantize.HermitianForm("dual_sections",
                                log_diag=np.asarray(cfg.log_diag1))
    g0 = gr.hermitian_profile(eta, f0)
    g1 = gr.hermitian_profile(eta, f1)
    bg = gr.background_metric(dom, None, cfg.strength, eta)
    return dom, eta, (f0, f1), (g0, g1), bg


def run_command(cfg):
    """Produce the artifact dictionary for one experiment kind."""
    artifacts = {}
    if cfg.kind == "geodesic":
        v0, v1 = cfg.boundary_pair()
        artifacts["geodesic.csv"] = solve_geodesic(v0, v1, cfg.n_t)
    elif cfg.kind == "quantize":
        v0, _ = cfg.boundary_pair()
        for k in cfg.k_list:
            artifacts[f"gram_k{k}.csv"] = quantize.hilbert_map(v0, k)
    elif cfg.kind == "envelope":
        dom, _, _, bdry, bg = _griffiths_setup(cfg)
        artifacts["envelope_m.csv"] = gr.perron_envelope(dom, bdry, bg)
        artifacts["envelope_n.csv"] = gr.perron_envelope_norms(dom, bdry, bg)
    elif cfg.kind == "hym":
        dom, _, _, bdry, bg = _griffiths_setup(cfg)
        env = gr.perron_envelope(dom, bdry, bg)
        artifacts["hym.csv"] = gr.EnvelopeGrid(
            dom, bg, env.barrier, env.barrier, dict(env.info)
        )
    elif cfg.kind == "converge":
        artifacts["convergence.csv"] = harness.run_convergence(cfg)
        artifacts["joint_psh.json"] = harness.run_semiclassical_psh_check(cfg)
        artifacts["joint_psh_control.json"] = harness.run_semiclassical_psh_check(
            cfg, positive_control=True
        )
    elif cfg.kind == "certify":
        dom, eta, forms, _, _ = _griffiths_setup(cfg)
        closed = np.array([
            gr.hermitian_profile(eta, gr.matrix_geodesic(*forms, t)).log_sq
            for t in dom.t
        ])
        cert = gr.certify_griffiths_negative(closed, dom.h_t, eta[1] - eta[0])
        artifacts["certificate.json"] = {
            "margin_total_metric": cert.margin_total_metric,
            "margin_total_log": cert.margin_total_log,
            "margin_chart_log": cert.margin_chart_log,
            "signs": list(cert.signs),
            "passes": bool(cert.negative),
        }
    return artifacts


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        artifacts = run_command(cfg)
        code, written = harness.emit(cfg, artifacts)
    except ConfigError as exc:
        print(f"kq: config error: {exc}", file=sys.stderr)
        return 2
    except KqError as exc:
        print(f"kq: solver error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
