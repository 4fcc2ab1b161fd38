"""Command-line front end.

Subcommands: analyze, characterize, certify, simulate, sweep, reproduce.
Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numerical
failure.  The environment variable NDD_THREADS caps the sweep worker pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config_io import ConfigError, load_config
from .core import NetworkValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _default_workers():
    cap = os.environ.get("NDD_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return min(4, os.cpu_count() or 1)


def _parse_grid_spec(spec: str) -> dict:
    """Grids like "r=5,10,20 w=0,5 eps=0.01,0.001" -> name -> list of floats."""
    grids = {}
    for chunk in spec.split():
        if "=" not in chunk:
            raise ValueError(f"bad grid chunk {chunk!r}; expected name=v1,v2,...")
        name, values = chunk.split("=", 1)
        grids[name.strip()] = [float(v) for v in values.split(",") if v]
    return grids


def _cmd_analyze(args) -> int:
    from .monotone import subsystem_sign_analysis

    net, _ = load_config(args.config)
    for sub in net.subsystems:
        a = subsystem_sign_analysis(sub, reduced=not args.full)
        labels = a.state_labels + a.input_labels
        print(f"subsystem {sub.index} ({sub.kind}{', full' if args.full else ', reduced'}):")
        print(f"  sign pattern over {labels}:")
        for i, lab in enumerate(a.state_labels):
            row = " ".join(f"{v:+d}" if v else " 0" for v in a.pattern.lam[i])
            print(f"    d({lab})/dt: {row}")
        if a.verdict.monotone:
            print(f"  order-preserving: yes  orders (r,w; states) = "
                  f"({a.verdict.sigma_u}; {a.verdict.sigma_x})")
        else:
            print(f"  order-preserving: NO  witness cycle: "
                  + " -> ".join(a.verdict.witness_cycle))
        if a.domain_truncated:
            print("  note: unbounded domain sampled on a truncated log-spaced box;"
                  " verdict is empirical on that region")
    return EXIT_OK


def _cmd_characterize(args) -> int:
    net, _ = load_config(args.config)
    grids = _parse_grid_spec(args.grid)
    rs = grids.get("r", [1.0])
    ws = grids.get("w", [0.0])
    eps_list = grids.get("eps")
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        out.write("subsystem,r,w,epsilon,y,d,residual\n")
        import dataclasses

        from .families import get_family
        from .characteristics import solve_equilibrium

        for sub in net.subsystems:
            for eps in eps_list or [sub.epsilon]:
                s = dataclasses.replace(sub, epsilon=float(eps))
                fam = get_family(s.kind)
                for r in rs:
                    for w in ws:
                        phi = solve_equilibrium(s, r, w)
                        y = fam.output_y(s, phi)
                        d = fam.output_d_full(s, phi)
                        resid = float(np.max(np.abs(fam.rhs_full(s, phi, r, w))))
                        out.write(
                            f"{s.index},{r:.12g},{w:.12g},{eps:.12g},"
                            f"{y:.12g},{d:.12g},{resid:.3g}\n"
                        )
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _cmd_certify(args) -> int:
    from .certify import certify_ndd_detailed
    from .recipes import verdict_doc

    net, _ = load_config(args.config)
    verdict = certify_ndd_detailed(net)
    print(f"certified: {verdict.certified}")
    if verdict.grounds:
        print(f"grounds: {', '.join(verdict.grounds)}")
    print(f"nominal reference: {[round(float(v), 6) for v in verdict.r_star]}")
    for c in verdict.checks:
        mark = "pass" if c.passed else "FAIL"
        detail = f"  [{c.detail}]" if c.detail else ""
        print(f"  {mark}  {c.code}{detail}")
    for eps, rep in verdict.ladder_reports:
        print(f"  dt @ eps={eps:g}: {rep.verdict} ({rep.iterations_used} iterations)")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(verdict_doc(verdict), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"report written to {args.output}")
    # a completed pipeline is a tool success whether or not it certifies
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from .netsim import simulate_to_steady_state

    net, cfg = load_config(args.config)
    traj, y_ss, ok = simulate_to_steady_state(net, cfg, with_delta=not args.no_delta)
    n = net.n
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        header = (
            ["t"]
            + [f"x{j}" for j in range(traj.states.shape[1])]
            + [f"y{i+1}" for i in range(n)]
            + [f"d{i+1}" for i in range(n)]
            + [f"w{i+1}" for i in range(n)]
        )
        out.write(",".join(header) + "\n")
        for k in range(len(traj.times)):
            vals = (
                [traj.times[k]]
                + list(traj.states[k])
                + list(traj.y[k])
                + list(traj.d[k])
                + list(traj.w[k])
            )
            out.write(",".join(f"{v:.12g}" for v in vals) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(
        f"steady state {'reached' if ok else 'NOT reached'}; "
        f"y_ss = {[round(float(v), 6) for v in y_ss]}",
        file=sys.stderr,
    )
    return EXIT_OK if ok else EXIT_NUMERICAL


def _cmd_sweep(args) -> int:
    from .netsim import sweep

    net, cfg = load_config(args.config)
    grid = [float(v) for v in args.grid.split(",") if v]
    res = sweep(net, cfg, args.axis, grid, workers=args.workers or _default_workers())
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        out.write("axis_value,ndd_error,converged,seconds\n")
        for v, e, c, s in zip(res.values, res.errors, res.converged, res.seconds):
            out.write(f"{v:.12g},{e:.12g},{c},{s:.3f}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if all(res.converged) else EXIT_NUMERICAL


def _cmd_reproduce(args) -> int:
    from .recipes import run_recipe

    result = run_recipe(args.recipe, outdir=args.outdir, workers=args.workers or _default_workers())
    print(f"recipe {result.name} artifacts in {result.outdir}/")
    for p in (result.csv_path, result.manifest_path, result.plot_path, result.report_path):
        if p is not None:
            print(f"  {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nddcert", description=__doc__)
    p.add_argument("--version", action="version", version=f"nddcert {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="per-subsystem monotonicity verdicts")
    pa.add_argument("config")
    pa.add_argument("--full", action="store_true", help="analyze the full dynamics, not the reduced model")
    pa.set_defaults(fn=_cmd_analyze)

    pc = sub.add_parser("characterize", help="static equilibrium characteristics on a grid")
    pc.add_argument("config")
    pc.add_argument("--grid", required=True, help='e.g. "r=5,10 w=0,5 eps=0.01"')
    pc.add_argument("-o", "--output", help="CSV path (default stdout)")
    pc.set_defaults(fn=_cmd_characterize)

    pt = sub.add_parser("certify", help="run the network certification pipeline")
    pt.add_argument("config")
    pt.add_argument("-o", "--output", help="JSON report path")
    pt.set_defaults(fn=_cmd_certify)

    ps = sub.add_parser("simulate", help="integrate the network to steady state")
    ps.add_argument("config")
    ps.add_argument("--no-delta", action="store_true", help="disable the unintended map")
    ps.add_argument("-o", "--output", help="trajectory CSV path (default stdout)")
    ps.set_defaults(fn=_cmd_simulate)

    pw = sub.add_parser("sweep", help="steady-state error over a parameter grid")
    pw.add_argument("config")
    pw.add_argument("--axis", required=True,
                    choices=("epsilon", "nu", "epsilon-and-nu", "reference"))
    pw.add_argument("--grid", required=True, help="comma-separated values")
    pw.add_argument("--workers", type=int, help="worker pool size (default NDD_THREADS)")
    pw.add_argument("-o", "--output", help="CSV path (default stdout)")
    pw.set_defaults(fn=_cmd_sweep)

    pr = sub.add_parser("reproduce", help="run a canned experiment recipe")
    pr.add_argument("recipe", choices=("fig2b", "fig4b", "fig4c", "indep-triple", "cascade"))
    pr.add_argument("--outdir", default="out")
    pr.add_argument("--workers", type=int)
    pr.set_defaults(fn=_cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, NetworkValidationError) as exc:
        print(f"validation error:\n{exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_USAGE
    except Exception as exc:  # numerical and runtime failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
