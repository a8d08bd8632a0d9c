"""Command-line interface.

Subcommands:
  run              execute a scenario preset or a single configured run
  validate-mixing  check the mixing assumption for a graph (optionally relaxed)
  bounds           print the stepsize-bound table for an instance

Exit codes: 0 success, 1 validation/configuration error, 2 divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import graph as graphs, harness, mixing, problem as problems
from .certify import CertificateError
from .graph import GraphError
from .harness import ConfigError, RunConfig
from .linalg import SymMatrix
from .mixing import MixingValidationError
from .problem import ProblemError

_VALIDATION_ERRORS = (
    ConfigError, MixingValidationError, CertificateError, ProblemError, GraphError,
    FileNotFoundError, ValueError,
)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=harness.SCENARIOS, help="preset replicating one figure")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--topology", choices=("random", "line", "complete"))
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--mi", type=int)
    p.add_argument("--edge-prob", type=float, dest="edge_prob")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--seed", type=int)
    p.add_argument("--algo", choices=("dgd", "extra", "extra_xy", "nids", "nids_dx"))
    p.add_argument("--alpha", help="numeric stepsize or one of: " + ", ".join(harness.ALPHA_NAMES))
    p.add_argument("--relax-factor", type=float, dest="relax_factor")
    p.add_argument("--theta", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.add_argument("--certify", action="store_true", default=None)
    p.add_argument("--graph-file", dest="graph_file", help="edge-list file ('i j' per line)")
    p.add_argument("--load-problem", dest="problem_file", help="replay a saved problem file")
    p.add_argument("--save-problem", dest="save_problem", help="save the generated problem here")
    p.add_argument("--out", dest="out_path", help="CSV file (single run) or directory (scenario)")


def _flag_overrides(args: argparse.Namespace) -> dict:
    keys = ("topology", "n", "p", "mi", "edge_prob", "noise_std", "seed", "algo",
            "alpha", "relax_factor", "theta", "max_iters", "tol", "certify",
            "graph_file", "problem_file", "out_path")
    out = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "alpha":
            try:
                value = float(value)
            except ValueError:
                pass
        out[key] = value
    return out


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = _flag_overrides(args)
    base: dict = {}
    if args.config:
        if args.scenario:
            raise ConfigError("--config cannot be combined with --scenario")
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    if args.scenario:
        overrides.pop("out_path", None)
        configs = [harness.config_from_dict({**_cfg_dict(cfg), **overrides})
                   for cfg in harness.resolve_scenario(args.scenario)]
    else:
        configs = [harness.config_from_dict({**base, **overrides})]

    out = args.out_path or base.get("out_path")
    if args.scenario and out and not os.path.isdir(out):
        os.makedirs(out, exist_ok=True)

    diverged = False
    for cfg in configs:
        trace = harness.run(cfg)
        if args.save_problem:
            inst = harness.build_instance(cfg)
            problems.save_problem(inst.prob, args.save_problem)
        last = trace.residuals[-1]
        print(f"{cfg.name}: status={trace.status} iterations={trace.ks[-1]} "
              f"alpha={trace.alpha:.6g} final_residual={last:.3e}")
        if trace.certified:
            cert = trace.certificate
            factor = getattr(cert, "rho", None) or getattr(cert, "rho3", None)
            report = trace.audit
            print(f"  certificate: contraction factor {factor:.12g}, "
                  f"audit violations {len(report.violations)}")
            for message in report.violations[:5]:
                print(f"  AUDIT: {message}")
        if out:
            path = os.path.join(out, f"{cfg.name}.csv") if args.scenario else out
            harness.write_csv(trace, path)
            print(f"  wrote {path}")
        diverged = diverged or trace.status == "diverged"
    return 2 if diverged else 0


def _cfg_dict(cfg: RunConfig) -> dict:
    return {k: v for k, v in dataclasses.asdict(cfg).items() if v is not None}


def _cmd_validate_mixing(args: argparse.Namespace) -> int:
    if args.graph_file:
        with open(args.graph_file, encoding="utf-8") as fh:
            g = graphs.from_edge_list_text(fh.read())
    else:
        g = graphs.random_connected(args.n, args.edge_prob, args.seed)
    w = mixing.metropolis(g)
    if args.relax_factor:
        w = mixing.relax(w, args.relax_factor)
    wt = SymMatrix((np.eye(g.n) + w.a) / 2.0, name="w_tilde")
    mp = mixing.validate(w, wt, g, theta=args.theta)
    print(f"mixing pair on {g.n} nodes, {len(g.edges)} edges: PASS")
    print(f"  lambda_min(w) = {mp.lam_min_w:.12g}")
    print(f"  lambda_max(w) = {mp.lam_max_w:.12g}")
    print(f"  lambda_2(w)   = {mp.lam2_w:.12g} (spectral gap beta = {mp.beta:.12g})")
    print(f"  lambda_min(w_tilde) = {mp.lam_min_wt:.12g}")
    print(f"  lambda_min_pos(I - w) = {mp.lam_min_pos_iw:.12g}")
    print(f"  lambda_max(I - w) = {mp.lam_max_iw:.12g}")
    print(f"  theta = {mp.theta:.12g}")
    if args.dump_mixing:
        with open(args.dump_mixing, "w", encoding="utf-8") as fh:
            fh.write(mixing.dump_matrix_text(w))
        print(f"  wrote {args.dump_mixing}")
    return 0


def _cmd_bounds(args: argparse.Namespace) -> int:
    if args.scenario:
        cfg = harness.resolve_scenario(args.scenario)[0]
    else:
        cfg = harness.config_from_dict(_flag_overrides(args))
    inst = harness.build_instance(cfg)
    rows = list(inst.bounds.as_dict().items())
    rows.append(("extra-opt", (5.0 + 3.0 * inst.mp.lam_min_w) / (4.0 * inst.prob.lipschitz
                                                                 + inst.prob.mu_fbar)))
    rows.append(("nids-opt", 2.0 / (inst.prob.lipschitz + inst.prob.mu_fbar)))
    print(f"stepsize bounds (L = {inst.prob.lipschitz:g}, mu_fbar = {inst.prob.mu_fbar:.6g}, "
          f"lambda_min(w) = {inst.mp.lam_min_w:.6g}, theta = {inst.mp.theta:g})")
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"  {name.ljust(width)}  {value:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decon",
        description="Simulate and certify decentralized consensus optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario preset or a single configuration")
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate-mixing", help="validate the mixing assumption on a graph")
    p_val.add_argument("--graph-file", dest="graph_file")
    p_val.add_argument("--n", type=int, default=10)
    p_val.add_argument("--edge-prob", type=float, dest="edge_prob", default=0.5)
    p_val.add_argument("--seed", type=int, default=harness.PRESET_SEED)
    p_val.add_argument("--relax-factor", type=float, dest="relax_factor", default=0.0)
    p_val.add_argument("--theta", type=float, default=None)
    p_val.add_argument("--dump-mixing", dest="dump_mixing",
                       help="write the mixing matrix as plain text rows")
    p_val.set_defaults(func=_cmd_validate_mixing)

    p_bounds = sub.add_parser("bounds", help="print the stepsize-bound table")
    _add_run_flags(p_bounds)
    p_bounds.set_defaults(func=_cmd_bounds)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
