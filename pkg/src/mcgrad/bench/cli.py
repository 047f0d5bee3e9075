"""``mcgrad`` command line.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from ..errors import ConfigError, McgradError
from ..estimators import FLOW_KINDS
from ..flows import div_pu
from ..importance import LDistribution
from .checks import check_reductions, check_transport, check_uniqueness
from .config import FAMILIES, RUN_KINDS, DistSpec, RunConfig, load_config
from .registry import get_phi
from .report import fmt
from .run import run_estimate, run_sweep


def _add_dist_args(p: argparse.ArgumentParser, families=FAMILIES, default="gaussian") -> None:
    g = p.add_argument_group("distribution")
    g.add_argument("--dist", choices=families, default=default)
    g.add_argument("--mu", type=float, default=0.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--delta", type=float, default=1.0, help="uniform half-width")
    g.add_argument("--rate", type=float, default=3.0, help="poisson rate")
    g.add_argument("--ymax", type=int, default=30, help="poisson truncation")
    g.add_argument("--p0", type=float, default=0.5, help="two-point probability of 0")
    g.add_argument("--dim", type=int, default=1, help="diag-gaussian dimension")


def _dist_spec(args) -> DistSpec:
    return DistSpec(args.dist, args.mu, args.sigma, args.delta, args.rate, args.ymax, args.p0, args.dim)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcgrad", description="Monte Carlo gradient estimators and oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run one estimator and write a CSV report")
    est.add_argument("--estimator", choices=RUN_KINDS, required=True)
    _add_dist_args(est)
    est.add_argument("--phi", default="quadratic")
    est.add_argument("--n", type=int, default=200_000)
    est.add_argument("--reps", type=int, default=1)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--k", type=float, default=1.0, help="flow weight (1 = pathwise, 0 = LR)")
    est.add_argument("--flow", choices=FLOW_KINDS, default="reparam")
    est.add_argument("--q-sigma", type=float, default=None, help="sample from N(mu, q_sigma^2) instead of p")
    est.add_argument("--no-jump-correction", action="store_true")
    est.add_argument("--n-boxes", type=int, default=10_000)
    est.add_argument("--dtheta", type=float, default=1e-6)
    est.add_argument("--out", default="-")

    bench = sub.add_parser("bench", help="run every section of a config file")
    bench.add_argument("config")
    bench.add_argument("--out", default="-")

    chk = sub.add_parser("check", help="run an invariant suite")
    chk.add_argument("suite", choices=("transport", "reductions", "uniqueness"))
    _add_dist_args(chk)
    chk.add_argument("--phi", default="quadratic")
    chk.add_argument("--n", type=int, default=None)
    chk.add_argument("--seed", type=int, default=0)

    smp = sub.add_parser("sample", help="emit draws as CSV")
    _add_dist_args(smp, FAMILIES + ("l",), default="l")
    smp.add_argument("--n", type=int, default=1000)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out", default="-")

    ff = sub.add_parser("flowfield", help="emit velocity and divergence on a grid as CSV")
    _add_dist_args(ff, ("gaussian", "uniform"))
    ff.add_argument("--flow", choices=FLOW_KINDS, default="reparam")
    ff.add_argument("--k", type=float, default=1.0)
    ff.add_argument("--points", type=int, default=101)
    ff.add_argument("--span", type=float, default=5.0)
    ff.add_argument("--numeric", action="store_true", help="finite-difference divergence")
    ff.add_argument("--out", default="-")
    return parser


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cmd_estimate(args) -> int:
    cfg = RunConfig(
        estimator=args.estimator,
        dist=_dist_spec(args),
        phi=args.phi,
        n=args.n,
        reps=args.reps,
        seed=args.seed,
        k=args.k,
        flow=args.flow,
        q_sigma=args.q_sigma,
        jump_correction=not args.no_jump_correction,
        n_boxes=args.n_boxes,
        dtheta=args.dtheta,
    ).validate()
    _emit(run_estimate(cfg).to_csv(), args.out)
    return 0


def _cmd_bench(args) -> int:
    runs = load_config(args.config)
    _emit(run_sweep([cfg for _, cfg in runs]).to_csv(), args.out)
    return 0


def _cmd_check(args) -> int:
    dist = _dist_spec(args).build()
    if args.suite == "transport":
        res = check_transport(dist)
    elif args.suite == "reductions":
        res = check_reductions(dist, get_phi(args.phi), n=args.n or 10_000, seed=args.seed)
    else:
        res = check_uniqueness(dist, n=args.n or 200_000, seed=args.seed)
    for line in res.lines:
        print(line)
    print(f"{'PASS' if res.ok else 'FAIL'} {res.name}")
    return 0 if res.ok else 1


def _cmd_sample(args) -> int:
    if args.dist == "l":
        b = LDistribution(args.mu, args.sigma).sample_batch(args.seed, 0, args.n)
        rows = [
            (i, fmt(b.x[i]), fmt(b.eps_x[i]), fmt(b.eps_h[i]), int(b.sign[i])) for i in range(args.n)
        ]
        _emit(_csv(("index", "x", "eps_x", "eps_h", "sign"), rows), args.out)
        return 0
    dist = _dist_spec(args).build()
    x = np.asarray(dist.sample_batch(args.seed, 0, args.n), dtype=float).reshape(args.n, -1)
    header = ("index", "x") if x.shape[1] == 1 else ("index",) + tuple(f"x{j}" for j in range(x.shape[1]))
    _emit(_csv(header, [(i, *map(fmt, x[i])) for i in range(args.n)]), args.out)
    return 0


def _cmd_flowfield(args) -> int:
    from ..estimators import build_flow
    from .checks import transport_grid

    dist = _dist_spec(args).build()
    flow = build_flow(dist, args.flow, args.k)
    x = transport_grid(dist, args.points, args.span)
    u = flow.field(x)
    div = div_pu(dist, flow, x, numeric=args.numeric)
    resid = div + np.asarray(dist.dpdf_dtheta(x))
    rows = []
    for j in range(x.size):
        for i, name in enumerate(dist.params.names):
            rows.append((fmt(x[j]), name, fmt(u[j, i]), fmt(div[j, i]), fmt(resid[j, i])))
    _emit(_csv(("x", "param", "u", "div_pu", "residual"), rows), args.out)
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bench": _cmd_bench,
    "check": _cmd_check,
    "sample": _cmd_sample,
    "flowfield": _cmd_flowfield,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, McgradError, ValueError) as exc:
        print(f"mcgrad: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
